//! Scenario documents, the built-in registry, the runner and caging
//! metrics.
//!
//! A scenario is a TOML document tagged with [`SCENARIO_SCHEMA`]. Overrides
//! address it with dotted paths, e.g. `disorder.site_detuning.3=10.0`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{DeviceSpec, StaticHamiltonian, MHZ_TO_ANGULAR};
use crate::dynamics::{
    evolve_static, evolve_time_dependent, project_xyz, site_state, time_grid, ProjectedPopulations, Tolerances,
    Trajectory, NORMALIZATION_TOL,
};
use crate::error::{Error, Result};
use crate::floquet::{dominant_frequency_below, SwapExperiment, Transition};
use crate::fsl::{build_effective_hamiltonian, named_configuration, Ablation, ConfigParams, FslGraph, Regime};
use crate::measurement::{sample_shots, frequencies, ReadoutMatrix, SpamCorrector, DEFAULT_CONDITION_BOUND};

pub const SCENARIO_SCHEMA: &str = "fockcage.scenario/v1";
pub const DEFAULT_HORIZON_US: f64 = 0.5;
pub const DEFAULT_SAMPLE_STEP_US: f64 = 0.001;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Exact eigendecomposition of the site-space Hamiltonian.
    #[default]
    EffectiveStatic,
    /// The same Hamiltonian through the adaptive integrator.
    EffectiveOde,
    /// Two driven qutrits under the lab Hamiltonian.
    FullDrive,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSource {
    /// A named configuration, or
    pub configuration: Option<String>,
    /// a graph document, relative to the scenario file.
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub regime: Regime,
    pub j_nn_mhz: Option<f64>,
    pub j_nnn_mhz: Option<f64>,
    pub drive_phases: Option<Vec<f64>>,
    #[serde(default)]
    pub ablation: Ablation,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub site: Option<usize>,
    /// `(label, re, im)` triples; must already be normalized.
    pub superposition: Option<Vec<(usize, f64, f64)>>,
    /// Equal-weight real superposition of the listed sites.
    pub equal_superposition: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDisorder {
    pub seed: u64,
    #[serde(default)]
    pub j_sigma_mhz: f64,
    #[serde(default)]
    pub detuning_sigma_mhz: f64,
    #[serde(default)]
    pub phase_sigma_rad: f64,
}

/// Explicit offsets keyed by site label (`"3"`) or edge (`"1-2"`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disorder {
    #[serde(default)]
    pub site_detuning: BTreeMap<String, f64>,
    #[serde(default)]
    pub edge_j_offset: BTreeMap<String, f64>,
    #[serde(default)]
    pub edge_phase_offset: BTreeMap<String, f64>,
    pub random: Option<RandomDisorder>,
}

impl Disorder {
    pub fn is_empty(&self) -> bool {
        self.site_detuning.is_empty()
            && self.edge_j_offset.is_empty()
            && self.edge_phase_offset.is_empty()
            && self.random.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapConfig {
    pub g_mhz: f64,
    pub omega1_ghz: f64,
    pub delta_12_mhz: f64,
    pub u1_mhz: f64,
    pub u2_mhz: f64,
    pub transition: Transition,
    pub sideband: i32,
    /// `Ω_d / ω_p`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpamConfig {
    /// `four-qutrit-plaquette` or `six-qutrit-loop`.
    pub device: Option<String>,
    /// Readout matrix file, relative to the scenario file.
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub clip: bool,
    pub condition_bound: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricTargets {
    #[serde(default)]
    pub forbidden: Vec<usize>,
    #[serde(default)]
    pub revival: Vec<usize>,
    #[serde(default)]
    pub peaks: Vec<usize>,
    /// Sites inside the expected localization subspace.
    #[serde(default)]
    pub subspace: Vec<usize>,
    /// Metric reported per point by sweeps.
    pub summary: Option<String>,
}

/// Integrator overrides; unset fields keep the engine's preset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_steps: Option<usize>,
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON_US
}

fn default_step() -> f64 {
    DEFAULT_SAMPLE_STEP_US
}

/// Typed scenario. `horizon` and `sample_step` are in µs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// The physical behaviour this scenario reproduces.
    #[serde(default)]
    pub reproduces: String,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub sample_step: f64,
    pub graph: Option<GraphSource>,
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub disorder: Disorder,
    pub swap: Option<SwapConfig>,
    pub spam: Option<SpamConfig>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub metrics: MetricTargets,
    pub tolerances: Option<ToleranceConfig>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(Error::invalid(
                "schema",
                format!("`{}` is not `{SCENARIO_SCHEMA}`", self.schema),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(Error::invalid("name", "must not be empty"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.sample_step > 0.0 && self.sample_step <= self.horizon) {
            return Err(Error::invalid(
                "sample_step",
                format!("must be positive and at most horizon, got {}", self.sample_step),
            ));
        }
        if let Some(t) = self.tolerances {
            for (field, v) in [("tolerances.rel_tol", t.rel_tol), ("tolerances.abs_tol", t.abs_tol)] {
                if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::invalid(field, "must be positive"));
                }
            }
            if t.max_steps == Some(0) {
                return Err(Error::invalid("tolerances.max_steps", "must be at least 1"));
            }
        }
        if self.shots == Some(0) {
            return Err(Error::invalid("shots", "must be at least 1"));
        }
        if self.shots.is_some() && self.seed.is_none() {
            return Err(Error::invalid("seed", "shot sampling needs a seed"));
        }
        match self.engine {
            Engine::FullDrive => {
                let swap = self
                    .swap
                    .as_ref()
                    .ok_or_else(|| Error::invalid("swap", "the full-drive engine needs a [swap] table"))?;
                if !(swap.g_mhz > 0.0) {
                    return Err(Error::invalid("swap.g_mhz", "must be positive"));
                }
                if !(swap.ratio >= 0.0) {
                    return Err(Error::invalid("swap.ratio", "must be non-negative"));
                }
                if self.spam.is_some() || self.shots.is_some() {
                    return Err(Error::invalid("spam", "readout modelling applies to lattice scenarios only"));
                }
            }
            Engine::EffectiveStatic | Engine::EffectiveOde => {
                let graph = self
                    .graph
                    .as_ref()
                    .ok_or_else(|| Error::invalid("graph", "lattice scenarios need a [graph] table"))?;
                if graph.configuration.is_some() == graph.file.is_some() {
                    return Err(Error::invalid("graph", "set exactly one of `configuration` and `file`"));
                }
                let init = self
                    .initial_state
                    .as_ref()
                    .ok_or_else(|| Error::invalid("initial_state", "lattice scenarios need an initial state"))?;
                let set = [
                    init.site.is_some(),
                    init.superposition.is_some(),
                    init.equal_superposition.is_some(),
                ];
                if set.iter().filter(|&&b| b).count() != 1 {
                    return Err(Error::invalid(
                        "initial_state",
                        "set exactly one of `site`, `superposition`, `equal_superposition`",
                    ));
                }
                if let Some(terms) = &init.superposition {
                    let n: f64 = terms.iter().map(|&(_, re, im)| re * re + im * im).sum::<f64>().sqrt();
                    if (n - 1.0).abs() > NORMALIZATION_TOL {
                        return Err(Error::invalid("initial_state.superposition", format!("norm is {n}, not 1")));
                    }
                }
                if let Some(spam) = &self.spam {
                    if spam.device.is_some() == spam.file.is_some() {
                        return Err(Error::invalid("spam", "set exactly one of `device` and `file`"));
                    }
                }
            }
        }
        for key in self.disorder.site_detuning.keys() {
            parse_site_key(key).map_err(|_| Error::invalid(format!("disorder.site_detuning.{key}"), "not a site label"))?;
        }
        for (table, map) in [
            ("edge_j_offset", &self.disorder.edge_j_offset),
            ("edge_phase_offset", &self.disorder.edge_phase_offset),
        ] {
            for key in map.keys() {
                parse_edge_key(key)
                    .map_err(|_| Error::invalid(format!("disorder.{table}.{key}"), "edge keys look like `1-2`"))?;
            }
        }
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        let preset = match self.engine {
            Engine::FullDrive => Tolerances::long_horizon(),
            _ => Tolerances::default(),
        };
        let Some(t) = self.tolerances else {
            return preset;
        };
        Tolerances {
            rel_tol: t.rel_tol.unwrap_or(preset.rel_tol),
            abs_tol: t.abs_tol.unwrap_or(preset.abs_tol),
            max_steps: t.max_steps.unwrap_or(preset.max_steps),
        }
    }

    /// SHA-256 over every field that can change the physics; labels,
    /// descriptions and metric targets are excluded.
    pub fn provenance_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            for key in ["name", "description", "reproduces", "metrics"] {
                map.remove(key);
            }
        }
        let digest = Sha256::digest(serde_json::to_vec(&value).expect("json value serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_site_key(key: &str) -> Result<usize> {
    key.trim()
        .parse()
        .map_err(|_| Error::invalid("disorder", format!("`{key}` is not a site label")))
}

fn parse_edge_key(key: &str) -> Result<(usize, usize)> {
    let (a, b) = key
        .split_once('-')
        .ok_or_else(|| Error::invalid("disorder", format!("`{key}` is not an edge")))?;
    Ok((parse_site_key(a)?, parse_site_key(b)?))
}

/// A scenario as an untyped document, so dotted overrides can be applied
/// before type checking.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioDocument {
    table: toml::Table,
    base_dir: Option<PathBuf>,
}

impl ScenarioDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::parse("scenario", e.to_string()))?;
        Ok(Self { table, base_dir: None })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut doc = Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })?;
        doc.base_dir = path.parent().map(Path::to_path_buf);
        Ok(doc)
    }

    pub fn base_dir(&self) -> Option<&Path> {
        self.base_dir.as_deref()
    }

    /// Set `path` (dotted) to `raw`, parsed as a TOML value when possible
    /// and as a bare string otherwise. Intermediate tables are created.
    pub fn set(&mut self, path: &str, raw: &str) -> Result<()> {
        let bad = |reason: &str| Error::BadOverride {
            path: path.to_string(),
            reason: reason.to_string(),
        };
        let keys: Vec<&str> = path.split('.').map(str::trim).collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(bad("empty path segment"));
        }
        let value = parse_override_value(raw);
        let (last, parents) = keys.split_last().expect("non-empty path");
        let mut table = &mut self.table;
        for key in parents {
            let entry = table
                .entry(key.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| bad(&format!("`{key}` is not a table")))?;
        }
        table.insert(last.to_string(), value);
        Ok(())
    }

    /// Apply `key=value` overrides, type-checking after each one so a
    /// failure names the override that caused it.
    pub fn with_overrides(mut self, overrides: &[String]) -> Result<Self> {
        for item in overrides {
            let (path, raw) = item.split_once('=').ok_or_else(|| Error::BadOverride {
                path: item.clone(),
                reason: "expected key=value".into(),
            })?;
            let path = path.trim();
            self.set(path, raw.trim())?;
            self.typed().map_err(|e| Error::BadOverride {
                path: path.to_string(),
                reason: e.to_string(),
            })?;
        }
        Ok(self)
    }

    fn typed(&self) -> Result<ScenarioConfig> {
        toml::Value::Table(self.table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::parse("scenario", e.message().to_string()))
    }

    /// Type-checked and validated configuration.
    pub fn config(&self) -> Result<ScenarioConfig> {
        let cfg = self.typed()?;
        cfg.validate().map_err(|e| e.in_scenario(&cfg.name))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.table).expect("table serializes")
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrapper {
        v: toml::Value,
    }
    toml::from_str::<Wrapper>(&format!("v = {raw}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

/// Where a run's random numbers and tolerances came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: String,
    pub scenario: String,
    pub config_hash: String,
    pub engine: Engine,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub seed: Option<u64>,
}

/// Readout-processed site populations.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasuredPopulations {
    /// `[t][k]` over the same sites as the trajectory.
    pub populations: Vec<Vec<f64>>,
    pub clipped: bool,
    pub condition_number: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultBundle {
    pub trajectory: Trajectory,
    pub graph: Option<FslGraph>,
    pub projected: Option<ProjectedPopulations>,
    pub measured: Option<MeasuredPopulations>,
    pub metrics: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

/// Caging-metric targets, 1-based labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CagingTargets {
    pub forbidden: Vec<usize>,
    pub revival: Vec<usize>,
    pub peaks: Vec<usize>,
    pub subspace: Vec<usize>,
    /// Sites excluded from `dominant_site`.
    pub initial: Vec<usize>,
}

/// Times of the local maxima above half the series' range, refined by
/// parabolic interpolation. A maximum at the first sample counts.
pub fn peak_times(series: &[f64], times: &[f64]) -> Vec<f64> {
    if series.len() < 3 {
        return Vec::new();
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi - lo < 1e-9 {
        return Vec::new();
    }
    let threshold = lo + 0.5 * (hi - lo);
    let mut out = Vec::new();
    if series[0] >= series[1] && series[0] >= threshold {
        out.push(times[0]);
    }
    for k in 1..series.len() - 1 {
        let (a, b, c) = (series[k - 1], series[k], series[k + 1]);
        if b > a && b >= c && b >= threshold {
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            let dt = times[k + 1] - times[k];
            out.push(times[k] + shift.clamp(-0.5, 0.5) * dt);
        }
    }
    out
}

/// Mean spacing of successive [`peak_times`]; `None` with fewer than two.
pub fn revival_period(series: &[f64], times: &[f64]) -> Option<f64> {
    let peaks = peak_times(series, times);
    (peaks.len() >= 2).then(|| (peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64)
}

/// Pure function of the trajectory:
/// `max_forbidden`, `revival_peak.site_k`, `revival_period_us.site_k`,
/// `peak.site_k`, `dominant_site`, `dominant_peak`,
/// `mean_outside_subspace`, `max_outside_subspace`, `norm_error_max`.
pub fn caging_metrics(traj: &Trajectory, targets: &CagingTargets) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    let pops = traj.populations();
    let times = traj.times();
    m.insert("norm_error_max".into(), traj.max_norm_error());
    if !targets.forbidden.is_empty() {
        let mut worst: f64 = 0.0;
        for &s in &targets.forbidden {
            worst = traj.site(s)?.into_iter().fold(worst, f64::max);
        }
        m.insert("max_forbidden".into(), worst);
    }
    for &s in &targets.revival {
        let series = traj.site(s)?;
        let peak = if series.len() > 1 {
            series[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            series[0]
        };
        m.insert(format!("revival_peak.site_{s}"), peak);
        if let Some(p) = revival_period(&series, times) {
            m.insert(format!("revival_period_us.site_{s}"), p);
        }
    }
    for &s in &targets.peaks {
        let peak = traj.site(s)?.into_iter().fold(0.0, f64::max);
        m.insert(format!("peak.site_{s}"), peak);
    }
    let mut dominant: Option<(usize, f64)> = None;
    for label in 1..=traj.dim() {
        if targets.initial.contains(&label) {
            continue;
        }
        let peak = pops.iter().map(|p| p[label - 1]).fold(0.0, f64::max);
        if dominant.is_none_or(|(_, best)| peak > best) {
            dominant = Some((label, peak));
        }
    }
    if let Some((label, peak)) = dominant {
        m.insert("dominant_site".into(), label as f64);
        m.insert("dominant_peak".into(), peak);
    }
    if !targets.subspace.is_empty() {
        for &s in &targets.subspace {
            traj.site(s)?;
        }
        let outside: Vec<f64> = pops
            .iter()
            .map(|p| {
                (1..=p.len())
                    .filter(|l| !targets.subspace.contains(l))
                    .map(|l| p[l - 1])
                    .sum()
            })
            .collect();
        m.insert(
            "mean_outside_subspace".into(),
            outside.iter().sum::<f64>() / outside.len() as f64,
        );
        m.insert("max_outside_subspace".into(), outside.iter().copied().fold(0.0, f64::max));
    }
    Ok(m)
}

/// Octahedron projections: `max_pz`, `min_pxy`, `desync = max |P_x − P_y|`.
pub fn projection_metrics(p: &ProjectedPopulations) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("max_pz".into(), p.p_z.iter().copied().fold(0.0, f64::max));
    m.insert(
        "min_pxy".into(),
        p.p_x.iter().zip(&p.p_y).map(|(x, y)| x + y).fold(f64::INFINITY, f64::min),
    );
    m.insert(
        "desync".into(),
        p.p_x.iter().zip(&p.p_y).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
    );
    m
}

fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn device_by_name(name: &str) -> Result<DeviceSpec> {
    match name {
        "four-qutrit-plaquette" => Ok(DeviceSpec::four_qutrit_plaquette()),
        "six-qutrit-loop" => Ok(DeviceSpec::six_qutrit_loop()),
        other => Err(Error::invalid("spam.device", format!("unknown device `{other}`"))),
    }
}

/// Graph with explicit and random disorder applied.
pub fn build_graph(cfg: &ScenarioConfig, base: Option<&Path>) -> Result<FslGraph> {
    let src = cfg
        .graph
        .as_ref()
        .ok_or_else(|| Error::invalid("graph", "missing"))?;
    let mut graph = match (&src.configuration, &src.file) {
        (Some(name), None) => named_configuration(
            name,
            &ConfigParams {
                regime: src.regime,
                j_nn_mhz: src.j_nn_mhz,
                j_nnn_mhz: src.j_nnn_mhz,
                drive_phases: src.drive_phases.clone(),
                ablation: src.ablation,
            },
        )?,
        (None, Some(file)) => {
            let path = resolve(base, file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            FslGraph::from_json(&text)?
        }
        _ => return Err(Error::invalid("graph", "set exactly one of `configuration` and `file`")),
    };
    apply_disorder(&mut graph, &cfg.disorder)?;
    Ok(graph)
}

fn apply_disorder(graph: &mut FslGraph, d: &Disorder) -> Result<()> {
    for (key, &mhz) in &d.site_detuning {
        let label = parse_site_key(key)?;
        let base = graph
            .detunings_mhz()
            .get(label.wrapping_sub(1))
            .copied()
            .ok_or(Error::UnknownSite(label))?;
        graph.set_detuning(label, base + mhz)?;
    }
    for (table, map, is_phase) in [
        ("edge_j_offset", &d.edge_j_offset, false),
        ("edge_phase_offset", &d.edge_phase_offset, true),
    ] {
        for (key, &delta) in map {
            let (a, b) = parse_edge_key(key)?;
            let e = graph
                .edge_between(a, b)
                .ok_or_else(|| Error::invalid(format!("disorder.{table}.{key}"), "no such edge"))?;
            if is_phase {
                graph.set_edge(a, b, e.j_mhz(), e.phi() + delta)?;
            } else {
                graph.set_edge(a, b, e.j_mhz() + delta, e.phi())?;
            }
        }
    }
    if let Some(r) = &d.random {
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
        let normal = |sigma: f64| Normal::new(0.0, sigma).map_err(|e| Error::invalid("disorder.random", e.to_string()));
        let (nj, nd, np) = (normal(r.j_sigma_mhz)?, normal(r.detuning_sigma_mhz)?, normal(r.phase_sigma_rad)?);
        let edges: Vec<_> = graph.edges().map(|e| (e.site_from(), e.site_to(), e.j_mhz(), e.phi())).collect();
        for (a, b, j, phi) in edges {
            let dj = nj.sample(&mut rng);
            let dp = np.sample(&mut rng);
            graph.set_edge(a, b, j + dj, phi + dp)?;
        }
        for label in 1..=graph.num_sites() {
            let shift = nd.sample(&mut rng);
            graph.set_detuning(label, graph.detunings_mhz()[label - 1] + shift)?;
        }
    }
    Ok(())
}

fn initial_vector(init: &InitialState, dim: usize) -> Result<Vec<C64>> {
    if let Some(site) = init.site {
        return site_state(dim, site);
    }
    if let Some(terms) = &init.superposition {
        let mut psi = vec![C64::default(); dim];
        for &(label, re, im) in terms {
            if label == 0 || label > dim {
                return Err(Error::UnknownSite(label));
            }
            psi[label - 1] += C64::new(re, im);
        }
        return Ok(psi);
    }
    let sites = init.equal_superposition.as_deref().unwrap_or_default();
    if sites.is_empty() {
        return Err(Error::invalid("initial_state", "no sites given"));
    }
    let amp = C64::new(1.0 / (sites.len() as f64).sqrt(), 0.0);
    let mut psi = vec![C64::default(); dim];
    for &label in sites {
        if label == 0 || label > dim {
            return Err(Error::UnknownSite(label));
        }
        psi[label - 1] += amp;
    }
    Ok(psi)
}

fn initial_labels(init: &InitialState) -> Vec<usize> {
    match (init.site, &init.superposition, &init.equal_superposition) {
        (Some(s), _, _) => vec![s],
        (_, Some(terms), _) => terms.iter().map(|t| t.0).collect(),
        (_, _, Some(sites)) => sites.clone(),
        _ => Vec::new(),
    }
}

/// Computational-basis index of each site, qutrit 1 most significant.
fn site_basis_indices(graph: &FslGraph) -> Vec<usize> {
    graph
        .sites()
        .iter()
        .map(|s| s.occupations().iter().fold(0, |acc, &n| acc * 3 + n as usize))
        .collect()
}

fn measure_populations(
    cfg: &ScenarioConfig,
    graph: &FslGraph,
    traj: &Trajectory,
    base: Option<&Path>,
) -> Result<Option<MeasuredPopulations>> {
    if cfg.spam.is_none() && cfg.shots.is_none() {
        return Ok(None);
    }
    let seed = cfg.seed.unwrap_or(0);
    let Some(spam) = &cfg.spam else {
        // Shot noise on the site populations alone.
        let shots = cfg.shots.expect("checked above");
        let populations = traj
            .populations()
            .iter()
            .enumerate()
            .map(|(k, p)| Ok(frequencies(&sample_shots(&renormalized(p), shots, seed.wrapping_add(k as u64))?)))
            .collect::<Result<_>>()?;
        return Ok(Some(MeasuredPopulations {
            populations,
            clipped: false,
            condition_number: None,
        }));
    };
    let r = match (&spam.device, &spam.file) {
        (Some(name), None) => ReadoutMatrix::from_device(&device_by_name(name)?)?,
        (None, Some(file)) => ReadoutMatrix::load(&resolve(base, file))?,
        _ => return Err(Error::invalid("spam", "set exactly one of `device` and `file`")),
    };
    let expected = 3usize.pow(graph.num_modes() as u32);
    if r.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: r.dim(),
        });
    }
    let corrector = SpamCorrector::new(&r, spam.condition_bound.unwrap_or(DEFAULT_CONDITION_BOUND))?;
    let index = site_basis_indices(graph);
    let mut clipped = false;
    let mut populations = Vec::with_capacity(traj.len());
    for (k, p) in traj.populations().iter().enumerate() {
        let mut full = vec![0.0; r.dim()];
        for (site, &idx) in index.iter().enumerate() {
            full[idx] = p[site];
        }
        let full = renormalized(&full);
        let mut measured = r.apply(&full)?;
        if let Some(shots) = cfg.shots {
            measured = frequencies(&sample_shots(&renormalized(&measured), shots, seed.wrapping_add(k as u64))?);
        }
        let corrected = corrector.correct(&measured, spam.clip)?;
        clipped |= corrected.clipped;
        populations.push(index.iter().map(|&idx| corrected.probs[idx]).collect());
    }
    Ok(Some(MeasuredPopulations {
        populations,
        clipped,
        condition_number: Some(corrector.condition_number()),
    }))
}

/// Absorbs rounding so distribution checks hold exactly.
fn renormalized(p: &[f64]) -> Vec<f64> {
    let clean: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clean.iter().sum();
    clean.iter().map(|x| x / total).collect()
}

/// Run with paths resolved against `base`.
pub fn run_scenario_in(cfg: &ScenarioConfig, base: Option<&Path>) -> Result<ResultBundle> {
    run_inner(cfg, base).map_err(|e| e.in_scenario(&cfg.name))
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultBundle> {
    run_scenario_in(cfg, None)
}

fn run_inner(cfg: &ScenarioConfig, base: Option<&Path>) -> Result<ResultBundle> {
    cfg.validate()?;
    let times = time_grid(cfg.horizon, cfg.sample_step)?;
    let tol = cfg.tolerances();
    let mut provenance = Provenance {
        schema: SCENARIO_SCHEMA.to_string(),
        scenario: cfg.name.clone(),
        config_hash: cfg.provenance_hash(),
        engine: cfg.engine,
        rel_tol: None,
        abs_tol: None,
        seed: cfg.seed,
    };
    if cfg.engine == Engine::FullDrive {
        let s = cfg.swap.as_ref().expect("validated");
        let exp = SwapExperiment::resonant(
            s.g_mhz,
            s.omega1_ghz,
            s.delta_12_mhz,
            s.u1_mhz,
            s.u2_mhz,
            s.transition,
            s.sideband,
            s.ratio,
        )?;
        let (traj, target) = exp.simulate(&times, tol)?;
        let series: Vec<f64> = traj.populations().iter().map(|p| p[target]).collect();
        let band = 3.0 * s.transition.bosonic_factor() * s.g_mhz;
        let measured = match dominant_frequency_below(&series, cfg.sample_step, band) {
            Ok(f) => f / 2.0,
            Err(Error::NoPeak) => 0.0,
            Err(e) => return Err(e),
        };
        let mut metrics = BTreeMap::new();
        metrics.insert("j_measured_mhz".into(), measured);
        metrics.insert("j_predicted_mhz".into(), exp.predicted_mhz()?);
        metrics.insert("ratio".into(), exp.ratio());
        metrics.insert("max_transfer".into(), series.iter().copied().fold(0.0, f64::max));
        metrics.insert("target_index".into(), (target + 1) as f64);
        metrics.insert("norm_error_max".into(), traj.max_norm_error());
        provenance.rel_tol = Some(tol.rel_tol);
        provenance.abs_tol = Some(tol.abs_tol);
        return Ok(ResultBundle {
            trajectory: traj,
            graph: None,
            projected: None,
            measured: None,
            metrics,
            provenance,
        });
    }

    let graph = build_graph(cfg, base)?;
    let h = build_effective_hamiltonian(&graph);
    let init = cfg.initial_state.as_ref().expect("validated");
    let psi0 = initial_vector(init, graph.num_sites())?;
    let traj = match cfg.engine {
        Engine::EffectiveStatic => evolve_static(&h, &psi0, &times)?,
        Engine::EffectiveOde => {
            provenance.rel_tol = Some(tol.rel_tol);
            provenance.abs_tol = Some(tol.abs_tol);
            let factory = StaticHamiltonian::new(h.scaled(MHZ_TO_ANGULAR));
            evolve_time_dependent(&factory, &psi0, &times, tol)?
        }
        Engine::FullDrive => unreachable!("handled above"),
    };
    let targets = CagingTargets {
        forbidden: cfg.metrics.forbidden.clone(),
        revival: cfg.metrics.revival.clone(),
        peaks: cfg.metrics.peaks.clone(),
        subspace: cfg.metrics.subspace.clone(),
        initial: initial_labels(init),
    };
    let mut metrics = caging_metrics(&traj, &targets)?;
    let projected = if graph.num_sites() == 6 && graph.name.as_deref().is_some_and(|n| n.starts_with("octahedron")) {
        let p = project_xyz(&traj)?;
        metrics.extend(projection_metrics(&p));
        Some(p)
    } else {
        None
    };
    let measured = measure_populations(cfg, &graph, &traj, base)?;
    if let Some(m) = &measured {
        metrics.insert("spam_clipped".into(), if m.clipped { 1.0 } else { 0.0 });
        if let Some(c) = m.condition_number {
            metrics.insert("spam_condition".into(), c);
        }
    }
    Ok(ResultBundle {
        trajectory: traj,
        graph: Some(graph),
        projected,
        measured,
        metrics,
        provenance,
    })
}

/// Independent runs of `template` with `axis` set to each value, in input
/// order, on at most `jobs` threads.
pub fn sweep(template: &ScenarioDocument, axis: &str, values: &[f64], jobs: usize) -> Result<Vec<ResultBundle>> {
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|v| {
            let mut doc = template.clone();
            doc.set(axis, &format_axis_value(*v))?;
            let cfg = doc.typed().map_err(|e| Error::BadOverride {
                path: axis.to_string(),
                reason: e.to_string(),
            })?;
            Ok(cfg)
        })
        .collect::<Result<_>>()?;
    if configs.is_empty() {
        return Ok(Vec::new());
    }
    let base = template.base_dir().map(Path::to_path_buf);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| run_scenario_in(cfg, base.as_deref()))
            .collect()
    })
}

/// Axis values keep their float type even when integral.
fn format_axis_value(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// One registered scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct RegistryEntry {
    pub name: String,
    pub description: String,
    pub reproduces: String,
    pub source: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

macro_rules! builtin {
    ($($file:literal),* $(,)?) => {
        [$(include_str!(concat!("../scenarios/", $file, ".toml"))),*]
    };
}

const BUILTIN: [&str; 20] = builtin!(
    "plaquette-2d-flux0",
    "plaquette-2d-fluxpi",
    "plaquette-2d-flux0-disorder",
    "plaquette-2d-fluxpi-spam",
    "pseudo3d-flux0",
    "pseudo3d-fluxpi",
    "pseudo3d-flux0-detuned",
    "3d-cage-superposition",
    "3d-cage-nnn-only",
    "3d-cage-nn-only",
    "loop6-2exc-fluxI-site1",
    "loop6-2exc-fluxI-site15",
    "loop6-2exc-fluxII-site1",
    "loop6-2exc-fluxII-site15",
    "loop6-2exc-fluxI-superposition",
    "loop6-2exc-fluxII-superposition",
    "loop6-3exc-fluxI-site20",
    "loop6-3exc-fluxII-site20",
    "floquet-swap",
    "floquet-node",
);

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for text in BUILTIN {
            reg.register(text).expect("built-in scenarios are valid");
        }
        reg
    }

    /// Add a scenario document; names must be unique.
    pub fn register(&mut self, text: &str) -> Result<()> {
        let cfg = ScenarioDocument::parse(text)?.config()?;
        if self.entries.iter().any(|e| e.name == cfg.name) {
            return Err(Error::invalid("name", format!("`{}` is already registered", cfg.name)));
        }
        self.entries.push(RegistryEntry {
            name: cfg.name,
            description: cfg.description,
            reproduces: cfg.reproduces,
            source: text.to_string(),
        });
        Ok(())
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn document(&self, name: &str) -> Result<ScenarioDocument> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
        ScenarioDocument::parse(&entry.source)
    }

    pub fn get(&self, name: &str) -> Result<ScenarioConfig> {
        self.document(name)?.config()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn builtin(name: &str) -> ScenarioConfig {
        Registry::builtin().get(name).unwrap()
    }

    #[test]
    fn registry_has_unique_valid_entries() {
        let reg = Registry::builtin();
        assert!(reg.len() >= 14);
        for e in reg.entries() {
            assert!(!e.description.is_empty(), "{}", e.name);
            assert!(!e.reproduces.is_empty(), "{}", e.name);
        }
        assert!(matches!(reg.get("nope"), Err(Error::UnknownScenario(_))));
        assert!(Registry::empty().is_empty());
    }

    #[test]
    fn plaquette_transfer_and_caging() {
        let free = run_scenario(&builtin("plaquette-2d-flux0")).unwrap();
        assert!(free.metrics["peak.site_3"] >= 0.999);
        let j = 18.4;
        let period = free.metrics["revival_period_us.site_1"];
        assert!((period - 1.0 / (2.0 * j)).abs() < 1e-5, "{period}");
        let caged = run_scenario(&builtin("plaquette-2d-fluxpi")).unwrap();
        assert!(caged.metrics["max_forbidden"] <= 1e-10);
    }

    #[test]
    fn loop6_flux_one_relocalizes() {
        let r = run_scenario(&builtin("loop6-2exc-fluxI-site1")).unwrap();
        assert!(r.metrics["revival_peak.site_1"] > 0.9);
    }

    #[test]
    fn flat_trajectory_metrics() {
        let mut g = FslGraph::new(vec![crate::hilbert::FockState::parse("01", 3).unwrap(), crate::hilbert::FockState::parse("10", 3).unwrap()]).unwrap();
        g.set_detuning(2, 0.0).unwrap();
        let h = build_effective_hamiltonian(&g);
        let traj = evolve_static(&h, &site_state(2, 1).unwrap(), &time_grid(0.1, 0.001).unwrap()).unwrap();
        let m = caging_metrics(
            &traj,
            &CagingTargets {
                revival: vec![1],
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m["revival_peak.site_1"], 1.0);
        assert!(!m.contains_key("revival_period_us.site_1"));
    }

    #[test]
    fn metrics_are_recomputable() {
        let cfg = builtin("pseudo3d-fluxpi");
        let r = run_scenario(&cfg).unwrap();
        let targets = CagingTargets {
            forbidden: cfg.metrics.forbidden.clone(),
            revival: cfg.metrics.revival.clone(),
            peaks: cfg.metrics.peaks.clone(),
            subspace: cfg.metrics.subspace.clone(),
            initial: vec![1],
        };
        let mut again = caging_metrics(&r.trajectory, &targets).unwrap();
        again.extend(projection_metrics(&project_xyz(&r.trajectory).unwrap()));
        assert_eq!(again, r.metrics);
    }

    #[test]
    fn overrides_type_check_and_name_the_field() {
        let reg = Registry::builtin();
        let doc = reg.document("plaquette-2d-fluxpi").unwrap();
        let bad = doc.clone().with_overrides(&["horizon=0".into()]).unwrap().config();
        let msg = bad.unwrap_err().to_string();
        assert!(msg.contains("horizon"), "{msg}");
        let typo = doc.clone().with_overrides(&["horizn=1.0".into()]);
        assert!(matches!(typo, Err(Error::BadOverride { .. })));
        let wrong_type = doc.clone().with_overrides(&["horizon=\"long\"".into()]);
        assert!(matches!(wrong_type, Err(Error::BadOverride { .. })));
        let ok = doc
            .with_overrides(&["disorder.site_detuning.3=10.0".into()])
            .unwrap()
            .config()
            .unwrap();
        assert_eq!(ok.disorder.site_detuning["3"], 10.0);
    }

    #[test]
    fn provenance_hash_tracks_physics_only() {
        let reg = Registry::builtin();
        let doc = reg.document("plaquette-2d-flux0").unwrap();
        let base = doc.config().unwrap().provenance_hash();
        let renamed = doc
            .clone()
            .with_overrides(&["description=\"other words\"".into(), "metrics.forbidden=[2]".into()])
            .unwrap();
        assert_eq!(renamed.config().unwrap().provenance_hash(), base);
        for o in [
            "horizon=0.4",
            "graph.j_nn_mhz=18.5",
            "disorder.site_detuning.2=0.1",
            "initial_state.site=2",
            "engine=\"effective-ode\"",
        ] {
            let changed = doc.clone().with_overrides(&[o.into()]).unwrap();
            assert_ne!(changed.config().unwrap().provenance_hash(), base, "{o}");
        }
    }

    #[test]
    fn explicit_disorder_changes_the_graph() {
        let reg = Registry::builtin();
        let cfg = reg
            .document("plaquette-2d-flux0")
            .unwrap()
            .with_overrides(&[
                "disorder.edge_j_offset.1-2=0.4".into(),
                "disorder.edge_phase_offset.2-1=0.3".into(),
                "disorder.site_detuning.4=-2.0".into(),
            ])
            .unwrap()
            .config()
            .unwrap();
        let g = build_graph(&cfg, None).unwrap();
        let e = g.edge_between(1, 2).unwrap();
        assert!((e.j_mhz() - 18.8).abs() < 1e-12);
        assert!((e.phi() + 0.3).abs() < 1e-12);
        assert_eq!(g.detunings_mhz()[3], -2.0);
    }

    #[test]
    fn random_disorder_is_seeded() {
        let reg = Registry::builtin();
        let doc = reg.document("plaquette-2d-fluxpi").unwrap();
        let with = |seed: u64| {
            let cfg = doc
                .clone()
                .with_overrides(&[
                    format!("disorder.random.seed={seed}"),
                    "disorder.random.j_sigma_mhz=0.4".into(),
                    "disorder.random.phase_sigma_rad=0.05".into(),
                ])
                .unwrap()
                .config()
                .unwrap();
            build_graph(&cfg, None).unwrap()
        };
        assert_eq!(with(3), with(3));
        assert_ne!(with(3), with(4));
        let flux = with(3).loop_flux(&[1, 2, 3, 4]).unwrap();
        assert!((flux.abs() - PI).abs() < 0.5);
    }

    #[test]
    fn ode_engine_matches_static() {
        let reg = Registry::builtin();
        for name in ["plaquette-2d-fluxpi", "3d-cage-superposition"] {
            let doc = reg.document(name).unwrap();
            let a = run_scenario(&doc.config().unwrap()).unwrap();
            let b = run_scenario(
                &doc.with_overrides(&["engine=\"effective-ode\"".into()])
                    .unwrap()
                    .config()
                    .unwrap(),
            )
            .unwrap();
            for (x, y) in a.trajectory.amplitudes().iter().zip(b.trajectory.amplitudes()) {
                for (p, q) in x.iter().zip(y) {
                    assert!((p - q).norm() < 1e-7, "{name}");
                }
            }
        }
    }

    #[test]
    fn sweep_preserves_order() {
        let reg = Registry::builtin();
        let doc = reg.document("plaquette-2d-flux0").unwrap();
        assert!(sweep(&doc, "graph.j_nn_mhz", &[], 1).unwrap().is_empty());
        let values = [20.0, 10.0, 15.0];
        let out = sweep(&doc, "graph.j_nn_mhz", &values, 2).unwrap();
        for (r, v) in out.iter().zip(values) {
            let j = r.graph.as_ref().unwrap().edge_between(1, 2).unwrap().j_mhz();
            assert_eq!(j, v);
        }
        assert!(matches!(sweep(&doc, "graph.nonsense", &[1.0], 1), Err(Error::BadOverride { .. })));
    }

    #[test]
    fn spam_and_shots_are_deterministic() {
        let cfg = builtin("plaquette-2d-fluxpi-spam");
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.measured, b.measured);
        let m = a.measured.unwrap();
        assert_eq!(m.populations.len(), a.trajectory.len());
        assert!(m.condition_number.unwrap() < DEFAULT_CONDITION_BOUND);
    }

    #[test]
    fn validation_errors_name_fields() {
        let reg = Registry::builtin();
        let doc = reg.document("plaquette-2d-flux0").unwrap();
        for (o, field) in [
            ("sample_step=-1.0", "sample_step"),
            ("shots=0", "shots"),
            ("schema=\"v0\"", "schema"),
            ("graph.file=\"x.json\"", "graph"),
        ] {
            let err = doc.clone().with_overrides(&[o.into()]).unwrap().config().unwrap_err();
            assert!(err.to_string().contains(field), "{o}: {err}");
        }
    }

    #[test]
    fn peak_times_refine_between_samples() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
        let series: Vec<f64> = times.iter().map(|t| (2.0 * PI * t / 0.37).cos().powi(2)).collect();
        let period = revival_period(&series, &times).unwrap();
        assert!((period - 0.37 / 2.0).abs() < 1e-4, "{period}");
    }
}
