//! Physical processor description and the lab-frame Hamiltonian
//!
//! `H(t)/ħ = Σ_i [ω_i(t) n_i + ½ U_i n_i(n_i − 1)] + Σ_{i<j} g_ij (a_i† a_j + a_j† a_i)`
//!
//! Stored frequencies are linear (GHz for qutrit frequencies, MHz for
//! anharmonicities, couplings and drives). The factor 2π is applied once,
//! when a Hamiltonian is assembled, so every operator handed to the
//! integrators is in rad/µs.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{annihilation, Basis, CsrMatrix, OperatorMatrix, Subspace};

/// rad/µs per MHz.
pub const MHZ_TO_ANGULAR: f64 = TAU;
/// rad/µs per GHz.
pub const GHZ_TO_ANGULAR: f64 = TAU * 1000.0;

const TABLE_S1: &str = include_str!("../devices/four_qutrit_plaquette.toml");
const TABLE_S2: &str = include_str!("../devices/six_qutrit_loop.toml");

/// One qutrit's calibration record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QutritParams {
    #[serde(default)]
    pub label: Option<String>,
    pub omega_idle_ghz: f64,
    pub omega_oper_ghz: f64,
    /// Readout frequency; metadata only.
    #[serde(default)]
    pub omega_r_ghz: Option<f64>,
    pub anharmonicity_mhz: f64,
    pub f00: f64,
    pub f11: f64,
    pub f22: f64,
    #[serde(default)]
    pub t1_10_us: Option<f64>,
    #[serde(default)]
    pub t2_10_us: Option<f64>,
    #[serde(default)]
    pub t1_21_us: Option<f64>,
    #[serde(default)]
    pub t2_21_us: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, toml::Value>,
}

impl QutritParams {
    pub fn spam_diag(&self) -> [f64; 3] {
        [self.f00, self.f11, self.f22]
    }

    fn validate(&self, index: usize) -> Result<()> {
        let field = |name: &str| format!("qutrits[{}].{name}", index + 1);
        if !(self.anharmonicity_mhz < 0.0) {
            return Err(Error::invalid(field("anharmonicity_mhz"), "must be negative"));
        }
        for (name, f) in [("f00", self.f00), ("f11", self.f11), ("f22", self.f22)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(field(name), "must lie in [0, 1]"));
            }
        }
        for (name, w) in [("omega_idle_ghz", self.omega_idle_ghz), ("omega_oper_ghz", self.omega_oper_ghz)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(field(name), "must be a positive frequency"));
            }
        }
        Ok(())
    }
}

/// Symmetric coupling map; keys are 0-based `(i, j)` with `i < j`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CouplingGraph {
    g_mhz: BTreeMap<(usize, usize), f64>,
}

impl CouplingGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, i: usize, j: usize, g_mhz: f64) {
        assert_ne!(i, j, "self-coupling");
        let key = (i.min(j), i.max(j));
        if g_mhz == 0.0 {
            self.g_mhz.remove(&key);
        } else {
            self.g_mhz.insert(key, g_mhz);
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g_mhz.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.g_mhz.iter().map(|(&(i, j), &g)| (i, j, g))
    }

    pub fn len(&self) -> usize {
        self.g_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_mhz.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingEntry {
    i: usize,
    j: usize,
    g_mhz: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default = "default_level_cap")]
    level_cap: u8,
    qutrits: Vec<QutritFile>,
    #[serde(default)]
    couplings: Vec<CouplingEntry>,
}

/// Qutrit record as written in files: known fields plus anything else,
/// which is kept as metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct QutritFile {
    #[serde(default)]
    label: Option<String>,
    omega_idle_ghz: f64,
    omega_oper_ghz: f64,
    #[serde(default)]
    omega_r_ghz: Option<f64>,
    anharmonicity_mhz: f64,
    f00: f64,
    f11: f64,
    f22: f64,
    #[serde(default)]
    t1_10_us: Option<f64>,
    #[serde(default)]
    t2_10_us: Option<f64>,
    #[serde(default)]
    t1_21_us: Option<f64>,
    #[serde(default)]
    t2_21_us: Option<f64>,
    #[serde(flatten)]
    extra: BTreeMap<String, toml::Value>,
}

fn default_level_cap() -> u8 {
    3
}

/// Everything the lab Hamiltonian needs about a processor.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceSpec {
    pub name: String,
    pub level_cap: u8,
    pub qutrits: Vec<QutritParams>,
    pub couplings: CouplingGraph,
}

impl DeviceSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: DeviceFile = toml::from_str(text).map_err(|e| Error::parse("device file", e.to_string()))?;
        let qutrits: Vec<QutritParams> = file
            .qutrits
            .into_iter()
            .map(|q| QutritParams {
                label: q.label,
                omega_idle_ghz: q.omega_idle_ghz,
                omega_oper_ghz: q.omega_oper_ghz,
                omega_r_ghz: q.omega_r_ghz,
                anharmonicity_mhz: q.anharmonicity_mhz,
                f00: q.f00,
                f11: q.f11,
                f22: q.f22,
                t1_10_us: q.t1_10_us,
                t2_10_us: q.t2_10_us,
                t1_21_us: q.t1_21_us,
                t2_21_us: q.t2_21_us,
                metadata: q.extra,
            })
            .collect();
        let mut couplings = CouplingGraph::new();
        for (k, c) in file.couplings.iter().enumerate() {
            let n = qutrits.len();
            if c.i == 0 || c.j == 0 || c.i > n || c.j > n || c.i == c.j {
                return Err(Error::invalid(
                    format!("couplings[{}]", k + 1),
                    format!("pair ({}, {}) must name two distinct qutrits in 1..={n}", c.i, c.j),
                ));
            }
            couplings.set(c.i - 1, c.j - 1, c.g_mhz);
        }
        let spec = DeviceSpec {
            name: file.name.unwrap_or_else(|| "device".into()),
            level_cap: file.level_cap,
            qutrits,
            couplings,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = DeviceFile {
            name: Some(self.name.clone()),
            level_cap: self.level_cap,
            qutrits: self
                .qutrits
                .iter()
                .map(|q| QutritFile {
                    label: q.label.clone(),
                    omega_idle_ghz: q.omega_idle_ghz,
                    omega_oper_ghz: q.omega_oper_ghz,
                    omega_r_ghz: q.omega_r_ghz,
                    anharmonicity_mhz: q.anharmonicity_mhz,
                    f00: q.f00,
                    f11: q.f11,
                    f22: q.f22,
                    t1_10_us: q.t1_10_us,
                    t2_10_us: q.t2_10_us,
                    t1_21_us: q.t1_21_us,
                    t2_21_us: q.t2_21_us,
                    extra: q.metadata.clone(),
                })
                .collect(),
            couplings: self
                .couplings
                .iter()
                .map(|(i, j, g)| CouplingEntry { i: i + 1, j: j + 1, g_mhz: g })
                .collect(),
        };
        toml::to_string(&file).expect("device serializes")
    }

    /// Four-qutrit plaquette processor (NN ≈ 14 MHz, NNN ≈ 3.2 MHz).
    pub fn four_qutrit_plaquette() -> Self {
        Self::from_toml_str(TABLE_S1).expect("bundled device file is valid")
    }

    /// Six-qutrit loop processor.
    pub fn six_qutrit_loop() -> Self {
        Self::from_toml_str(TABLE_S2).expect("bundled device file is valid")
    }

    pub fn num_qutrits(&self) -> usize {
        self.qutrits.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.qutrits.is_empty() {
            return Err(Error::invalid("qutrits", "at least one qutrit is required"));
        }
        if self.level_cap < 2 {
            return Err(Error::invalid("level_cap", "must be at least 2"));
        }
        for (k, q) in self.qutrits.iter().enumerate() {
            q.validate(k)?;
        }
        Ok(())
    }

    pub fn operating_frequencies_ghz(&self) -> Vec<f64> {
        self.qutrits.iter().map(|q| q.omega_oper_ghz).collect()
    }

    /// Bare energy of an occupation pattern in MHz at the given frequencies.
    pub fn bare_energy_mhz(&self, occupations: &[u8], frequencies_ghz: &[f64]) -> f64 {
        occupations
            .iter()
            .zip(frequencies_ghz)
            .zip(&self.qutrits)
            .map(|((&n, &w), q)| {
                let n = n as f64;
                1000.0 * w * n + 0.5 * q.anharmonicity_mhz * n * (n - 1.0)
            })
            .sum()
    }
}

/// One qutrit's parametric frequency modulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveParams {
    pub amplitude_mhz: f64,
    pub frequency_mhz: f64,
    #[serde(default)]
    pub phase_rad: f64,
    /// Sideband order the drive is meant to bridge.
    #[serde(default = "default_sideband")]
    pub sideband: i32,
}

fn default_sideband() -> i32 {
    1
}

impl DriveParams {
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.frequency_mhz > 0.0) {
            return Err(Error::invalid(format!("{field}.frequency_mhz"), "must be positive"));
        }
        if !(self.amplitude_mhz >= 0.0) {
            return Err(Error::invalid(format!("{field}.amplitude_mhz"), "must be non-negative"));
        }
        Ok(())
    }
}

/// `ω(t) = ω_oper + Ω_d cos(2π ω_p t + φ)` in GHz, `t` in µs.
pub fn drive_waveform(drive: &DriveParams, omega_oper_ghz: f64, t_us: f64) -> f64 {
    omega_oper_ghz + drive.amplitude_mhz / 1000.0 * (TAU * drive.frequency_mhz * t_us + drive.phase_rad).cos()
}

/// Time profile of one mode's frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrequencyProfile {
    Constant { ghz: f64 },
    Driven { omega_oper_ghz: f64, drive: DriveParams },
}

impl FrequencyProfile {
    pub fn at_ghz(&self, t_us: f64) -> f64 {
        match self {
            FrequencyProfile::Constant { ghz } => *ghz,
            FrequencyProfile::Driven { omega_oper_ghz, drive } => drive_waveform(drive, *omega_oper_ghz, t_us),
        }
    }

    pub fn mean_ghz(&self) -> f64 {
        match self {
            FrequencyProfile::Constant { ghz } => *ghz,
            FrequencyProfile::Driven { omega_oper_ghz, .. } => *omega_oper_ghz,
        }
    }
}

/// A Hamiltonian `H(t)` in rad/µs over some fixed basis.
pub trait HamiltonianFactory: Send + Sync {
    fn dim(&self) -> usize;

    fn matrix_at(&self, t: f64) -> OperatorMatrix;

    /// `out = H(t) psi`; implementors override this to avoid materializing
    /// the matrix on every call.
    fn apply(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        let y = self.matrix_at(t).apply(psi);
        out.copy_from_slice(&y);
    }
}

/// Time-independent factory.
#[derive(Clone, Debug)]
pub struct StaticHamiltonian {
    matrix: OperatorMatrix,
    csr: CsrMatrix,
}

impl StaticHamiltonian {
    pub fn new(matrix: OperatorMatrix) -> Self {
        let csr = matrix.to_csr();
        Self { matrix, csr }
    }
}

impl HamiltonianFactory for StaticHamiltonian {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn matrix_at(&self, _t: f64) -> OperatorMatrix {
        self.matrix.clone()
    }

    fn apply(&self, _t: f64, psi: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::default());
        self.csr.apply_add(psi, out);
    }
}

/// Lab-frame Hamiltonian split into a static part and per-mode number
/// diagonals weighted by the instantaneous mode frequencies.
#[derive(Clone, Debug)]
pub struct LabHamiltonian {
    static_part: OperatorMatrix,
    static_csr: CsrMatrix,
    number_diagonals: Vec<Vec<f64>>,
    profiles: Vec<FrequencyProfile>,
}

/// Assemble the lab-frame Hamiltonian over `basis`.
pub fn lab_hamiltonian(device: &DeviceSpec, profiles: &[FrequencyProfile], basis: &Basis) -> Result<LabHamiltonian> {
    let n = device.num_qutrits();
    if basis.num_modes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: basis.num_modes(),
        });
    }
    if profiles.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: profiles.len(),
        });
    }
    if basis.level_cap() != device.level_cap {
        return Err(Error::invalid(
            "level_cap",
            format!("basis uses {} levels, device {}", basis.level_cap(), device.level_cap),
        ));
    }
    let mut static_part = OperatorMatrix::zeros(basis.len());
    for (k, state) in basis.states().iter().enumerate() {
        let e: f64 = state
            .occupations()
            .iter()
            .zip(&device.qutrits)
            .map(|(&occ, q)| {
                let occ = occ as f64;
                0.5 * q.anharmonicity_mhz * MHZ_TO_ANGULAR * occ * (occ - 1.0)
            })
            .sum();
        static_part.set(k, k, C64::new(e, 0.0));
    }
    let lowering: Vec<OperatorMatrix> = (0..n).map(|m| annihilation(m, basis)).collect::<Result<_>>()?;
    for (i, j, g) in device.couplings.iter() {
        let hop = lowering[i].adjoint().matmul(&lowering[j]);
        static_part = static_part
            .plus(&hop.scaled(g * MHZ_TO_ANGULAR))
            .plus(&hop.adjoint().scaled(g * MHZ_TO_ANGULAR));
    }
    let number_diagonals = (0..n)
        .map(|m| basis.states().iter().map(|s| s.occupations()[m] as f64).collect())
        .collect();
    Ok(LabHamiltonian {
        static_csr: static_part.to_csr(),
        static_part,
        number_diagonals,
        profiles: profiles.to_vec(),
    })
}

impl LabHamiltonian {
    /// Restrict to an invariant subspace (e.g. fixed photon number).
    pub fn restricted(&self, subspace: &Subspace) -> Result<Self> {
        let static_part = subspace.project_operator(&self.static_part)?;
        Ok(Self {
            static_csr: static_part.to_csr(),
            static_part,
            number_diagonals: self.number_diagonals.iter().map(|d| subspace.restrict(d)).collect(),
            profiles: self.profiles.clone(),
        })
    }

    pub fn profiles(&self) -> &[FrequencyProfile] {
        &self.profiles
    }

    fn diagonal_at(&self, t: f64) -> Vec<f64> {
        let mut diag = vec![0.0; self.static_part.dim()];
        for (profile, nd) in self.profiles.iter().zip(&self.number_diagonals) {
            let w = profile.at_ghz(t) * GHZ_TO_ANGULAR;
            for (d, &occ) in diag.iter_mut().zip(nd) {
                *d += w * occ;
            }
        }
        diag
    }
}

impl HamiltonianFactory for LabHamiltonian {
    fn dim(&self) -> usize {
        self.static_part.dim()
    }

    fn matrix_at(&self, t: f64) -> OperatorMatrix {
        self.static_part.plus(&OperatorMatrix::from_diagonal(&self.diagonal_at(t)))
    }

    fn apply(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::default());
        self.static_csr.apply_add(psi, out);
        for (profile, nd) in self.profiles.iter().zip(&self.number_diagonals) {
            let w = profile.at_ghz(t) * GHZ_TO_ANGULAR;
            for ((o, &occ), &p) in out.iter_mut().zip(nd).zip(psi) {
                if occ != 0.0 {
                    *o += p * (w * occ);
                }
            }
        }
    }
}

/// `H'(t) = V† H V − i V† dV/dt` with `V = exp(−i Σ ω_i n_i t)`.
#[derive(Clone, Debug)]
pub struct RotatingFrame<H> {
    inner: H,
    energies: Vec<f64>,
}

/// Move `inner` into the frame rotating at constant per-mode frequencies.
///
/// `basis` must index the same states as `inner` (pass the sub-basis when
/// `inner` was restricted).
pub fn rotating_frame<H: HamiltonianFactory>(inner: H, frame_ghz: &[f64], basis: &Basis) -> Result<RotatingFrame<H>> {
    if basis.len() != inner.dim() {
        return Err(Error::DimensionMismatch {
            expected: inner.dim(),
            found: basis.len(),
        });
    }
    if frame_ghz.len() != basis.num_modes() {
        return Err(Error::DimensionMismatch {
            expected: basis.num_modes(),
            found: frame_ghz.len(),
        });
    }
    let energies = basis
        .states()
        .iter()
        .map(|s| {
            s.occupations()
                .iter()
                .zip(frame_ghz)
                .map(|(&n, &w)| n as f64 * w * GHZ_TO_ANGULAR)
                .sum()
        })
        .collect();
    Ok(RotatingFrame { inner, energies })
}

impl<H> RotatingFrame<H> {
    /// Frame energy of each basis state in rad/µs.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn inner(&self) -> &H {
        &self.inner
    }

    /// Map a rotating-frame state back to the lab frame at time `t`.
    pub fn to_lab(&self, t: f64, psi: &[C64]) -> Vec<C64> {
        psi.iter()
            .zip(&self.energies)
            .map(|(&p, &e)| p * C64::from_polar(1.0, -e * t))
            .collect()
    }
}

impl<H: HamiltonianFactory> HamiltonianFactory for RotatingFrame<H> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matrix_at(&self, t: f64) -> OperatorMatrix {
        let inner = self.inner.matrix_at(t);
        let mut out = OperatorMatrix::zeros(inner.dim());
        for (r, c, v) in inner.iter() {
            let phase = C64::from_polar(1.0, (self.energies[r] - self.energies[c]) * t);
            out.add_to(r, c, v * phase);
        }
        for (k, &e) in self.energies.iter().enumerate() {
            out.add_to(k, k, C64::new(-e, 0.0));
        }
        out
    }

    fn apply(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        let rotated = self.to_lab(t, psi);
        self.inner.apply(t, &rotated, out);
        for ((o, &e), &p) in out.iter_mut().zip(&self.energies).zip(psi) {
            *o = *o * C64::from_polar(1.0, e * t) - p * e;
        }
    }
}
