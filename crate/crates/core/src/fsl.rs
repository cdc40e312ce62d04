//! Fock-state lattices: sites, hopping graphs, fluxes and the named
//! experimental configurations.
//!
//! Sites carry 1-based labels. Edge amplitudes are in MHz and the
//! effective Hamiltonian is `H = Σ J_kl e^{iφ_kl} |k⟩⟨l| + h.c.`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceSpec, DriveParams};
use crate::error::{Error, Result};
use crate::floquet::{bessel_j, effective_phase, wilson_loop_flux, wrap_phase, EdgeOrigin, EffectiveEdge};
use crate::hilbert::{FockState, OperatorMatrix};

pub const GRAPH_FORMAT: &str = "fockcage.graph/v1";
pub const DEFAULT_RESONANCE_WINDOW_MHZ: f64 = 1.0;

/// Per-mode ground occupation; each mode's operational pair is
/// `{g, g+1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundPattern {
    pattern: Vec<u8>,
    level_cap: u8,
}

impl GroundPattern {
    pub fn new(pattern: Vec<u8>, level_cap: u8) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::invalid("ground", "pattern must name at least one mode"));
        }
        if let Some(m) = pattern.iter().position(|&g| g + 1 >= level_cap) {
            return Err(Error::invalid(
                "ground",
                format!("mode {} at level {} has no level above it", m + 1, pattern[m]),
            ));
        }
        Ok(Self { pattern, level_cap })
    }

    /// `|0101…01⟩` on `n` qutrits; loops need even `n`.
    pub fn alternating(n: usize) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::invalid("N", format!("an alternating ground on a loop needs even N, got {n}")));
        }
        Self::new((0..n).map(|k| (k % 2) as u8).collect(), 3)
    }

    pub fn num_modes(&self) -> usize {
        self.pattern.len()
    }

    pub fn pattern(&self) -> &[u8] {
        &self.pattern
    }

    /// Operational levels `(lower, upper)` of a 0-based mode.
    pub fn subspace(&self, mode: usize) -> (u8, u8) {
        (self.pattern[mode], self.pattern[mode] + 1)
    }

    /// Ground pattern with the given 1-based modes raised.
    pub fn raise(&self, modes: &[usize]) -> Result<FockState> {
        let mut occ = self.pattern.clone();
        for &m in modes {
            occ[m - 1] += 1;
        }
        FockState::new(occ, self.level_cap)
    }
}

/// Strictly increasing `k`-tuples of `1..=n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut current: Vec<usize> = (1..=k).collect();
    loop {
        out.push(current.clone());
        let Some(pos) = (0..k).rev().find(|&p| current[p] < n - (k - 1 - p)) else {
            return out;
        };
        current[pos] += 1;
        for q in pos + 1..k {
            current[q] = current[q - 1] + 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// All sites with `n_e` distinct modes raised above `ground`, ordered by
/// [`site_index`].
pub fn enumerate_sites(n: usize, n_e: usize, ground: &GroundPattern) -> Result<Vec<FockState>> {
    if ground.num_modes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: ground.num_modes(),
        });
    }
    if n_e == 0 {
        return Err(Error::invalid("N_e", "at least one excitation is required"));
    }
    if n_e > n {
        return Err(Error::invalid("N_e", format!("{n_e} excitations do not fit on {n} modes")));
    }
    combinations(n, n_e).iter().map(|modes| ground.raise(modes)).collect()
}

/// 1-based label of the site whose raised modes are `excited`
/// (lexicographic rank, equal to the pair and triple sum formulas).
pub fn site_index(excited: &[usize], n: usize, n_e: usize) -> Result<usize> {
    let malformed = |why: &str| Error::MalformedTuple(format!("{excited:?}: {why}"));
    if excited.len() != n_e {
        return Err(malformed(&format!("expected {n_e} entries")));
    }
    if n_e == 0 {
        return Err(malformed("empty tuple"));
    }
    if excited.iter().any(|&m| m == 0 || m > n) {
        return Err(malformed(&format!("entries must lie in 1..={n}")));
    }
    if excited.windows(2).any(|w| w[1] <= w[0]) {
        return Err(malformed("entries must be strictly increasing"));
    }
    let mut rank = 0;
    let mut prev = 0;
    for (pos, &m) in excited.iter().enumerate() {
        let remaining = n_e - pos - 1;
        for skipped in prev + 1..m {
            rank += binomial(n - skipped, remaining);
        }
        prev = m;
    }
    Ok(rank + 1)
}

/// Inverse of [`site_index`].
pub fn site_modes(label: usize, n: usize, n_e: usize) -> Result<Vec<usize>> {
    combinations(n, n_e)
        .into_iter()
        .nth(label.wrapping_sub(1))
        .ok_or(Error::UnknownSite(label))
}

/// Synthetic lattice: sites, NN and NNN edges, per-site detunings.
#[derive(Clone, Debug, PartialEq)]
pub struct FslGraph {
    pub name: Option<String>,
    sites: Vec<FockState>,
    nn_edges: Vec<EffectiveEdge>,
    nnn_edges: Vec<EffectiveEdge>,
    detunings_mhz: Vec<f64>,
    /// Visualization metadata with no effect on dynamics.
    pub display_hints: BTreeMap<String, String>,
}

impl FslGraph {
    pub fn new(sites: Vec<FockState>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::EmptySubspace);
        }
        let distinct: BTreeSet<_> = sites.iter().map(FockState::occupations).collect();
        if distinct.len() != sites.len() {
            return Err(Error::invalid("sites", "duplicate Fock state"));
        }
        let modes = sites[0].num_modes();
        if sites.iter().any(|s| s.num_modes() != modes) {
            return Err(Error::invalid("sites", "all sites must have the same number of modes"));
        }
        Ok(Self {
            name: None,
            detunings_mhz: vec![0.0; sites.len()],
            sites,
            nn_edges: Vec::new(),
            nnn_edges: Vec::new(),
            display_hints: BTreeMap::new(),
        })
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn num_modes(&self) -> usize {
        self.sites[0].num_modes()
    }

    pub fn sites(&self) -> &[FockState] {
        &self.sites
    }

    /// Fock state of a 1-based label.
    pub fn site(&self, label: usize) -> Result<&FockState> {
        label
            .checked_sub(1)
            .and_then(|k| self.sites.get(k))
            .ok_or(Error::UnknownSite(label))
    }

    pub fn label_of(&self, state: &FockState) -> Option<usize> {
        self.sites.iter().position(|s| s == state).map(|k| k + 1)
    }

    pub fn nn_edges(&self) -> &[EffectiveEdge] {
        &self.nn_edges
    }

    pub fn nnn_edges(&self) -> &[EffectiveEdge] {
        &self.nnn_edges
    }

    pub fn edges(&self) -> impl Iterator<Item = &EffectiveEdge> {
        self.nn_edges.iter().chain(&self.nnn_edges)
    }

    fn edges_mut(&mut self) -> impl Iterator<Item = &mut EffectiveEdge> {
        self.nn_edges.iter_mut().chain(&mut self.nnn_edges)
    }

    pub fn detunings_mhz(&self) -> &[f64] {
        &self.detunings_mhz
    }

    pub fn set_detuning(&mut self, label: usize, mhz: f64) -> Result<()> {
        self.site(label)?;
        self.detunings_mhz[label - 1] = mhz;
        Ok(())
    }

    /// Add an edge, rejecting unknown sites and duplicate pairs within its
    /// class (NN or NNN).
    pub fn add_edge(&mut self, edge: EffectiveEdge) -> Result<()> {
        self.site(edge.site_from())?;
        self.site(edge.site_to())?;
        let list = if edge.origin().is_nn() {
            &mut self.nn_edges
        } else {
            &mut self.nnn_edges
        };
        if list.iter().any(|e| e.key() == edge.key()) {
            let (a, b) = edge.key();
            return Err(Error::invalid("edges", format!("duplicate edge {a}-{b}")));
        }
        list.push(edge);
        Ok(())
    }

    pub fn remove_nn(&mut self) {
        self.nn_edges.clear();
    }

    pub fn remove_nnn(&mut self) {
        self.nnn_edges.clear();
    }

    /// The edge between two sites, oriented `a → b`.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<EffectiveEdge> {
        let key = (a.min(b), a.max(b));
        self.edges().find(|e| e.key() == key).map(|e| {
            if e.site_from() == a {
                e.clone()
            } else {
                e.reversed()
            }
        })
    }

    pub fn edge_between_mut(&mut self, a: usize, b: usize) -> Option<&mut EffectiveEdge> {
        let key = (a.min(b), a.max(b));
        self.edges_mut().find(|e| e.key() == key)
    }

    /// Set `J e^{iφ}` for the edge `a → b` (stored orientation is kept).
    pub fn set_edge(&mut self, a: usize, b: usize, j_mhz: f64, phi: f64) -> Result<()> {
        let edge = self
            .edge_between_mut(a, b)
            .ok_or_else(|| Error::invalid("edges", format!("no edge {a}-{b}")))?;
        let phi = if edge.site_from() == a { phi } else { -phi };
        edge.set_phi(phi);
        edge.set_j(j_mhz);
        Ok(())
    }

    pub fn degree(&self, label: usize) -> usize {
        self.edges()
            .filter(|e| e.site_from() == label || e.site_to() == label)
            .count()
    }

    /// Oriented edges along a closed path of site labels.
    pub fn cycle(&self, labels: &[usize]) -> Result<Vec<EffectiveEdge>> {
        if labels.len() < 2 {
            return Err(Error::NotACycle("a loop needs at least two sites".into()));
        }
        (0..labels.len())
            .map(|k| {
                let (a, b) = (labels[k], labels[(k + 1) % labels.len()]);
                self.edge_between(a, b)
                    .ok_or_else(|| Error::NotACycle(format!("no edge between sites {a} and {b}")))
            })
            .collect()
    }

    pub fn loop_flux(&self, labels: &[usize]) -> Result<f64> {
        wilson_loop_flux(&self.cycle(labels)?)
    }

    /// `φ_kl → φ_kl + χ_k − χ_l` with `chi` indexed by 0-based site.
    pub fn gauge_transformed(&self, chi: &[f64]) -> Result<Self> {
        if chi.len() != self.num_sites() {
            return Err(Error::DimensionMismatch {
                expected: self.num_sites(),
                found: chi.len(),
            });
        }
        let mut out = self.clone();
        for e in out.edges_mut() {
            let phi = e.phi() + chi[e.site_from() - 1] - chi[e.site_to() - 1];
            e.set_phi(phi);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDocument {
            format: GRAPH_FORMAT.to_string(),
            name: self.name.clone(),
            level_cap: self.sites[0].level_cap(),
            sites: self
                .sites
                .iter()
                .enumerate()
                .map(|(k, s)| SiteRecord {
                    label: k + 1,
                    state: s.occupations().iter().map(|n| n.to_string()).collect(),
                    detuning_mhz: self.detunings_mhz[k],
                })
                .collect(),
            edges: self
                .edges()
                .map(|e| EdgeRecord {
                    from: e.site_from(),
                    to: e.site_to(),
                    j_mhz: e.j_mhz(),
                    phi_rad: e.phi(),
                    class: e.origin().to_string(),
                    mediator: e.mediator().map(|(a, b)| [a, b]),
                    residual_mhz: e.residual_mhz(),
                })
                .collect(),
            display_hints: self.display_hints.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDocument = serde_json::from_str(text).map_err(|e| Error::parse("graph document", e.to_string()))?;
        if doc.format != GRAPH_FORMAT {
            return Err(Error::parse(
                "graph document",
                format!("format `{}` is not `{GRAPH_FORMAT}`", doc.format),
            ));
        }
        for (k, s) in doc.sites.iter().enumerate() {
            if s.label != k + 1 {
                return Err(Error::parse(
                    "graph document",
                    format!("site labels must run 1..N in order; entry {} has label {}", k + 1, s.label),
                ));
            }
        }
        let sites = doc
            .sites
            .iter()
            .map(|s| FockState::parse(&s.state, doc.level_cap))
            .collect::<Result<Vec<_>>>()?;
        let mut graph = FslGraph::new(sites)?;
        graph.name = doc.name;
        graph.display_hints = doc.display_hints;
        for (k, s) in doc.sites.iter().enumerate() {
            graph.detunings_mhz[k] = s.detuning_mhz;
        }
        for e in doc.edges {
            let origin = EdgeOrigin::from_str(&e.class)?;
            let mut edge = EffectiveEdge::new(e.from, e.to, e.j_mhz, e.phi_rad, origin)?.with_residual(e.residual_mhz);
            if let Some([a, b]) = e.mediator {
                edge = edge.with_mediator(a, b);
            }
            graph.add_edge(edge)?;
        }
        Ok(graph)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    format: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default = "default_level_cap")]
    level_cap: u8,
    sites: Vec<SiteRecord>,
    edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    display_hints: BTreeMap<String, String>,
}

fn default_level_cap() -> u8 {
    3
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteRecord {
    label: usize,
    state: String,
    #[serde(default)]
    detuning_mhz: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    from: usize,
    to: usize,
    j_mhz: f64,
    phi_rad: f64,
    class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mediator: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "is_zero")]
    residual_mhz: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Qutrit frequencies and attached drives at which adjacency is decided.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingPoint {
    pub frequencies_ghz: Vec<f64>,
    /// One optional drive per qutrit.
    pub drives: Vec<Option<DriveParams>>,
    pub window_mhz: f64,
}

impl OperatingPoint {
    /// Device operating frequencies, no drives, default window.
    pub fn from_device(device: &DeviceSpec) -> Self {
        Self {
            frequencies_ghz: device.operating_frequencies_ghz(),
            drives: vec![None; device.num_qutrits()],
            window_mhz: DEFAULT_RESONANCE_WINDOW_MHZ,
        }
    }

    pub fn with_drive(mut self, qutrit: usize, drive: DriveParams) -> Self {
        self.drives[qutrit - 1] = Some(drive);
        self
    }

    pub fn with_window(mut self, window_mhz: f64) -> Self {
        self.window_mhz = window_mhz;
        self
    }
}

/// Single hop between two sites: 0-based modes `(up, down)` such that
/// `|k⟩ ∝ a_up† a_down |l⟩`, with the bosonic factor.
fn single_hop(k: &FockState, l: &FockState) -> Option<(usize, usize, f64)> {
    let (a, b) = (k.occupations(), l.occupations());
    let diff: Vec<usize> = (0..a.len()).filter(|&m| a[m] != b[m]).collect();
    if diff.len() != 2 {
        return None;
    }
    let (m0, m1) = (diff[0], diff[1]);
    let (up, down) = if a[m0] == b[m0] + 1 && a[m1] + 1 == b[m1] {
        (m0, m1)
    } else if a[m1] == b[m1] + 1 && a[m0] + 1 == b[m0] {
        (m1, m0)
    } else {
        return None;
    };
    let factor = (f64::from(a[up]) * f64::from(b[down])).sqrt();
    Some((up, down, factor))
}

fn ring_adjacent(i: usize, j: usize, n: usize) -> bool {
    let d = i.abs_diff(j);
    d == 1 || (n > 2 && d == n - 1)
}

fn classify(k: &FockState, l: &FockState, i: usize, j: usize, n: usize) -> EdgeOrigin {
    let doubled = [i, j]
        .iter()
        .any(|&m| k.occupations()[m] >= 2 || l.occupations()[m] >= 2);
    match (ring_adjacent(i, j, n), doubled) {
        (true, true) => EdgeOrigin::Nn1102,
        (true, false) => EdgeOrigin::Nn0110,
        (false, false) => EdgeOrigin::Nnn0110,
        (false, true) => EdgeOrigin::Nnn1102,
    }
}

/// Edges allowed by the lab coupling terms and resonant at the operating
/// point, either directly or through a drive sideband on one of the two
/// qutrits involved. Edges are oriented from the lower label, carry zero
/// phase, and record the detuning left over after the resonance.
pub fn build_adjacency(sites: &[FockState], device: &DeviceSpec, op: &OperatingPoint) -> Result<FslGraph> {
    let n = device.num_qutrits();
    if op.frequencies_ghz.len() != n || op.drives.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: op.frequencies_ghz.len().min(op.drives.len()),
        });
    }
    let mut graph = FslGraph::new(sites.to_vec())?;
    if graph.num_modes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: graph.num_modes(),
        });
    }
    let energies: Vec<f64> = sites
        .iter()
        .map(|s| device.bare_energy_mhz(s.occupations(), &op.frequencies_ghz))
        .collect();
    for k in 0..sites.len() {
        for l in k + 1..sites.len() {
            let Some((up, down, factor)) = single_hop(&sites[k], &sites[l]) else {
                continue;
            };
            let g = device.couplings.get(up, down);
            if g == 0.0 {
                continue;
            }
            let gap = (energies[l] - energies[k]).abs();
            let mut best: Option<(f64, f64)> = (gap <= op.window_mhz).then_some((gap, 1.0));
            for drive in [up, down].iter().filter_map(|&m| op.drives[m].as_ref()) {
                let order = drive.sideband.abs();
                if order == 0 {
                    continue;
                }
                let miss = (gap - f64::from(order) * drive.frequency_mhz).abs();
                if miss <= op.window_mhz && best.is_none_or(|(m, _)| miss < m) {
                    let x = drive.amplitude_mhz / drive.frequency_mhz;
                    best = Some((miss, bessel_j(order, x).abs()));
                }
            }
            let Some((residual, dressing)) = best else {
                continue;
            };
            let (i, j) = (up.min(down), up.max(down));
            let origin = classify(&sites[k], &sites[l], i, j, n);
            let edge = EffectiveEdge::new(k + 1, l + 1, g * factor * dressing, 0.0, origin)?
                .with_mediator(i + 1, j + 1)
                .with_residual(residual);
            graph.add_edge(edge)?;
        }
    }
    Ok(graph)
}

/// How a qutrit pair turns drive phases into an edge phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairPhase {
    /// `effective_phase(φ_plus, φ_minus)`, 1-based qutrits.
    Difference { plus: usize, minus: usize },
    /// Undriven coupling; phase 0.
    Static,
}

/// Mediating-pair table keyed by unordered 1-based qutrit pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FluxMapping {
    pairs: BTreeMap<(usize, usize), PairPhase>,
}

impl FluxMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: usize, b: usize, rule: PairPhase) {
        self.pairs.insert((a.min(b), a.max(b)), rule);
    }

    pub fn get(&self, a: usize, b: usize) -> Option<PairPhase> {
        self.pairs.get(&(a.min(b), a.max(b))).copied()
    }

    /// Four-qutrit table shared by the plaquette and both octahedra:
    /// pair (2,3) → φ₃−φ₂, (3,4) → φ₃−φ₄, (1,4) → φ₁−φ₄, (1,2) → φ₁−φ₂;
    /// the diagonals (1,3), (2,4) are static.
    pub fn four_qutrit() -> Self {
        let mut m = Self::new();
        m.insert(2, 3, PairPhase::Difference { plus: 3, minus: 2 });
        m.insert(3, 4, PairPhase::Difference { plus: 3, minus: 4 });
        m.insert(1, 4, PairPhase::Difference { plus: 1, minus: 4 });
        m.insert(1, 2, PairPhase::Difference { plus: 1, minus: 2 });
        m.insert(1, 3, PairPhase::Static);
        m.insert(2, 4, PairPhase::Static);
        m
    }
}

/// Edge phases from per-qutrit drive phases through the four-qutrit table.
pub fn assign_fluxes(graph: &FslGraph, drive_phases: &[f64]) -> Result<FslGraph> {
    assign_fluxes_with(graph, drive_phases, &FluxMapping::four_qutrit())
}

pub fn assign_fluxes_with(graph: &FslGraph, drive_phases: &[f64], mapping: &FluxMapping) -> Result<FslGraph> {
    if drive_phases.len() != graph.num_modes() {
        return Err(Error::DimensionMismatch {
            expected: graph.num_modes(),
            found: drive_phases.len(),
        });
    }
    let mut out = graph.clone();
    for e in out.edges_mut() {
        let (a, b) = e.mediator().unwrap_or((0, 0));
        let rule = mapping.get(a, b).ok_or(Error::UnmappedEdge {
            from: e.site_from(),
            to: e.site_to(),
            a,
            b,
        })?;
        let phi = match rule {
            PairPhase::Difference { plus, minus } => effective_phase(drive_phases[plus - 1], drive_phases[minus - 1], 1),
            PairPhase::Static => 0.0,
        };
        e.set_phi(phi);
    }
    Ok(out)
}

/// Hermitian site-space Hamiltonian in MHz.
pub fn build_effective_hamiltonian(graph: &FslGraph) -> OperatorMatrix {
    let mut h = OperatorMatrix::from_diagonal(graph.detunings_mhz());
    for e in graph.edges() {
        let z = e.amplitude();
        h.add_to(e.site_from() - 1, e.site_to() - 1, z);
        h.add_to(e.site_to() - 1, e.site_from() - 1, z.conj());
    }
    h
}

/// Named configurations.
pub const CONFIGURATIONS: [&str; 7] = [
    "plaquette-2d",
    "octahedron-pseudo3d",
    "octahedron-3d-skewed",
    "loop6-2exc-fluxI",
    "loop6-2exc-fluxII",
    "loop6-3exc-fluxI",
    "loop6-3exc-fluxII",
];

/// Which hopping regime of a caging experiment to build.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Zero flux.
    #[default]
    FreeWalk,
    /// π flux.
    Localization,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free-walk" => Ok(Regime::FreeWalk),
            "localization" => Ok(Regime::Localization),
            other => Err(Error::invalid("variant", format!("unknown regime `{other}`"))),
        }
    }
}

/// Edge classes kept in the 3D cage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Full,
    NnOnly,
    NnnOnly,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "nn-only" => Ok(Ablation::NnOnly),
            "nnn-only" => Ok(Ablation::NnnOnly),
            other => Err(Error::invalid("ablation", format!("unknown ablation `{other}`"))),
        }
    }
}

/// Knobs for [`named_configuration`]; `None` means the configuration's
/// calibrated value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigParams {
    pub regime: Regime,
    pub j_nn_mhz: Option<f64>,
    /// Strongest NNN hopping; the weaker class is half of it.
    pub j_nnn_mhz: Option<f64>,
    /// Replaces the configuration's drive phases (four-qutrit lattices).
    pub drive_phases: Option<Vec<f64>>,
    pub ablation: Ablation,
}

/// Plaquette sites 1–4.
pub const PLAQUETTE_SITES: [&str; 4] = ["0201", "0111", "0102", "1101"];
/// Octahedron sites 1–6.
pub const OCTAHEDRON_SITES: [&str; 6] = ["0202", "0112", "1201", "1102", "0211", "1111"];

/// Plaquette NN edges `(from, to, mediating pair)`.
const PLAQUETTE_NN: [(usize, usize, (usize, usize)); 4] = [(1, 2, (2, 3)), (2, 3, (3, 4)), (3, 4, (1, 4)), (4, 1, (1, 2))];
/// Octahedron NN edges: xz loop 1-2-6-3, yz loop 1-4-6-5.
const OCTAHEDRON_NN: [(usize, usize, (usize, usize)); 8] = [
    (1, 2, (2, 3)),
    (2, 6, (1, 4)),
    (6, 3, (2, 3)),
    (3, 1, (1, 4)),
    (1, 4, (1, 2)),
    (4, 6, (3, 4)),
    (6, 5, (1, 2)),
    (5, 1, (3, 4)),
];
/// `(from, to, mediating pair, relative strength, origin)`.
type NnnSpec = (usize, usize, (usize, usize), f64, EdgeOrigin);

/// Octahedron NNN edges with their strength relative to the strongest.
const OCTAHEDRON_NNN: [NnnSpec; 4] = [
    (2, 4, (1, 3), 0.5, EdgeOrigin::Nnn0110),
    (3, 5, (1, 3), 0.5, EdgeOrigin::Nnn0110),
    (2, 5, (2, 4), 1.0, EdgeOrigin::Nnn1102),
    (3, 4, (2, 4), 1.0, EdgeOrigin::Nnn1102),
];

pub const PLAQUETTE_J_FREE_WALK: f64 = 18.4;
pub const PLAQUETTE_J_LOCALIZATION: f64 = 17.2;
pub const PSEUDO3D_J_FREE_WALK: f64 = 19.8;
pub const PSEUDO3D_J_LOCALIZATION: f64 = 11.3;
pub const CAGE3D_J_NN: f64 = 11.3;
pub const CAGE3D_J_NNN: f64 = 5.7;
pub const CAGE3D_J_ABLATION: f64 = 2.85;
pub const LOOP6_J: f64 = 5.0;

/// Drive phases giving flux π in every four-site loop.
pub const PI_FLUX_PHASES: [f64; 4] = [0.0, 0.0, FRAC_PI_2, 0.0];

fn parse_sites(labels: &[&str]) -> Result<Vec<FockState>> {
    labels.iter().map(|s| FockState::parse(s, 3)).collect()
}

fn four_qutrit_graph(
    name: &str,
    sites: &[&str],
    nn: &[(usize, usize, (usize, usize))],
    j: f64,
    phases: &[f64],
) -> Result<FslGraph> {
    let mut g = FslGraph::new(parse_sites(sites)?)?.named(name);
    for &(a, b, (p, q)) in nn {
        g.add_edge(EffectiveEdge::new(a, b, j, 0.0, EdgeOrigin::Nn1102)?.with_mediator(p, q))?;
    }
    assign_fluxes(&g, phases)
}

/// Loop of six qutrits with `n_e` excitations; `negative` lists the
/// physical pairs `(q, q+1)` whose hopping is `−J`.
fn loop6_graph(name: &str, n_e: usize, j: f64, negative: &[(usize, usize)]) -> Result<FslGraph> {
    let n = 6;
    let ground = GroundPattern::alternating(n)?;
    let sites = enumerate_sites(n, n_e, &ground)?;
    let mut g = FslGraph::new(sites.clone())?.named(name);
    for k in 0..sites.len() {
        for l in k + 1..sites.len() {
            let Some((up, down, _)) = single_hop(&sites[k], &sites[l]) else {
                continue;
            };
            if !ring_adjacent(up, down, n) {
                continue;
            }
            let pair = if (up + 1) % n == down || (down + 1) % n == up {
                let a = if (up + 1) % n == down { up } else { down };
                (a + 1, (a + 1) % n + 1)
            } else {
                unreachable!("ring-adjacent modes")
            };
            let key = (pair.0.min(pair.1), pair.0.max(pair.1));
            let sign = if negative.iter().any(|&(p, q)| (p.min(q), p.max(q)) == key) {
                -1.0
            } else {
                1.0
            };
            // Positive direction follows the physical loop: the excitation
            // moves from qutrit q to q+1.
            let (from, to) = if sites[l].occupations()[pair.1 - 1] > sites[k].occupations()[pair.1 - 1] {
                (k + 1, l + 1)
            } else {
                (l + 1, k + 1)
            };
            g.add_edge(EffectiveEdge::new(from, to, sign * j, 0.0, EdgeOrigin::Nn1102)?.with_mediator(pair.0, pair.1))?;
        }
    }
    Ok(g)
}

/// The calibrated lattices of the caging experiments.
pub fn named_configuration(name: &str, params: &ConfigParams) -> Result<FslGraph> {
    let localizing = params.regime == Regime::Localization;
    let phases_or = |default: &[f64]| params.drive_phases.clone().unwrap_or_else(|| default.to_vec());
    match name {
        "plaquette-2d" => {
            let j = params.j_nn_mhz.unwrap_or(if localizing {
                PLAQUETTE_J_LOCALIZATION
            } else {
                PLAQUETTE_J_FREE_WALK
            });
            let phases = phases_or(if localizing { &PI_FLUX_PHASES } else { &[0.0; 4] });
            four_qutrit_graph(name, &PLAQUETTE_SITES, &PLAQUETTE_NN, j, &phases)
        }
        "octahedron-pseudo3d" => {
            let j = params.j_nn_mhz.unwrap_or(if localizing {
                PSEUDO3D_J_LOCALIZATION
            } else {
                PSEUDO3D_J_FREE_WALK
            });
            let phases = phases_or(if localizing { &PI_FLUX_PHASES } else { &[0.0; 4] });
            four_qutrit_graph(name, &OCTAHEDRON_SITES, &OCTAHEDRON_NN, j, &phases)
        }
        "octahedron-3d-skewed" => cage_3d(params),
        "loop6-2exc-fluxI" => loop6_graph(name, 2, params.j_nn_mhz.unwrap_or(LOOP6_J), &[(1, 2), (5, 6)]),
        "loop6-2exc-fluxII" => loop6_graph(name, 2, params.j_nn_mhz.unwrap_or(LOOP6_J), &[(1, 2), (3, 4), (5, 6)]),
        "loop6-3exc-fluxI" => loop6_graph(name, 3, params.j_nn_mhz.unwrap_or(LOOP6_J), &[(1, 2), (5, 6)]),
        "loop6-3exc-fluxII" => loop6_graph(name, 3, params.j_nn_mhz.unwrap_or(LOOP6_J), &[(1, 2), (3, 4), (5, 6)]),
        other => Err(Error::UnknownConfiguration(other.to_string())),
    }
}

/// Octahedron with NN legs π on 1-2, 3-6, 1-4, 5-6 and skewed NNN edges.
fn cage_3d(params: &ConfigParams) -> Result<FslGraph> {
    let name = "octahedron-3d-skewed";
    let j_nn = params.j_nn_mhz.unwrap_or(match params.ablation {
        Ablation::NnOnly => CAGE3D_J_ABLATION,
        _ => CAGE3D_J_NN,
    });
    let mut g = FslGraph::new(parse_sites(&OCTAHEDRON_SITES)?)?.named(name);
    for &(a, b, (p, q)) in &OCTAHEDRON_NN {
        g.add_edge(EffectiveEdge::new(a, b, j_nn, 0.0, EdgeOrigin::Nn1102)?.with_mediator(p, q))?;
    }
    g = match (&params.drive_phases, params.ablation) {
        (Some(phases), _) => assign_fluxes(&g, phases)?,
        (None, Ablation::NnOnly) => g,
        (None, _) => {
            for (a, b) in [(1, 2), (3, 6), (1, 4), (5, 6)] {
                g.set_edge(a, b, j_nn, PI)?;
            }
            g
        }
    };
    let j_nnn = params.j_nnn_mhz.unwrap_or(CAGE3D_J_NNN);
    for &(a, b, (p, q), scale, origin) in &OCTAHEDRON_NNN {
        g.add_edge(EffectiveEdge::new(a, b, scale * j_nnn, 0.0, origin)?.with_mediator(p, q))?;
    }
    match params.ablation {
        Ablation::Full => {}
        Ablation::NnOnly => g.remove_nnn(),
        Ablation::NnnOnly => g.remove_nn(),
    }
    g.display_hints.insert("nnn_geometry".into(), "skewed".into());
    Ok(g)
}

/// Open chain of `signs.len() + 1` single-excitation sites with hopping
/// `signs[k]·J` between sites `k+1` and `k+2`.
pub fn chain_graph(signs: &[f64], j_mhz: f64) -> Result<FslGraph> {
    let n = signs.len() + 1;
    let sites = (0..n)
        .map(|k| {
            let mut occ = vec![0; n];
            occ[k] = 1;
            FockState::new(occ, 3)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut g = FslGraph::new(sites)?.named("chain");
    for (k, &s) in signs.iter().enumerate() {
        g.add_edge(EffectiveEdge::new(k + 1, k + 2, s * j_mhz, 0.0, EdgeOrigin::Nn0110)?.with_mediator(k + 1, k + 2))?;
    }
    Ok(g)
}

/// Wrapped phases of the NN legs of the octahedron, keyed `(from, to)`.
pub fn octahedron_leg_phases(graph: &FslGraph) -> Result<BTreeMap<(usize, usize), f64>> {
    OCTAHEDRON_NN
        .iter()
        .map(|&(a, b, _)| {
            graph
                .edge_between(a, b)
                .map(|e| ((a, b), wrap_phase(e.phi())))
                .ok_or_else(|| Error::invalid("edges", format!("no edge {a}-{b}")))
        })
        .collect()
}

/// Coupling amplitude `J e^{iφ}` seen from `a` to `b`, zero if absent.
pub fn hopping(graph: &FslGraph, a: usize, b: usize) -> C64 {
    graph.edge_between(a, b).map_or(C64::default(), |e| e.amplitude())
}
