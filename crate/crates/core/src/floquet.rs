//! Parametric-drive layer: Bessel-dressed hopping amplitudes, drive-phase
//! to edge-phase law, and FFT extraction of swap rates.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::device::{
    lab_hamiltonian, rotating_frame, CouplingGraph, DeviceSpec, DriveParams, FrequencyProfile, QutritParams,
};
use crate::dynamics::{evolve_time_dependent, site_state, time_grid, Tolerances, Trajectory};
use crate::error::{Error, Result};
use crate::hilbert::{build_basis, project_subspace, SubspaceRule};

/// Wrap an angle into (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Two-level channel driven by a parametric tone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "01-10")]
    OneZero,
    #[serde(rename = "20-11")]
    TwoZeroOneOne,
    #[serde(rename = "11-02")]
    OneOneZeroTwo,
}

impl Transition {
    /// Matrix-element enhancement relative to the bare `g`.
    pub fn bosonic_factor(self) -> f64 {
        match self {
            Transition::OneZero => 1.0,
            Transition::TwoZeroOneOne | Transition::OneOneZeroTwo => std::f64::consts::SQRT_2,
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transition::OneZero => "01-10",
            Transition::TwoZeroOneOne => "20-11",
            Transition::OneOneZeroTwo => "11-02",
        })
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "01-10" | "10-01" => Ok(Transition::OneZero),
            "20-11" | "11-20" => Ok(Transition::TwoZeroOneOne),
            "11-02" | "02-11" => Ok(Transition::OneOneZeroTwo),
            other => Err(Error::invalid("transition", format!("unknown transition `{other}`"))),
        }
    }
}

/// Origin class of an FSL edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeOrigin {
    #[serde(rename = "NN-1102")]
    Nn1102,
    #[serde(rename = "NN-0110")]
    Nn0110,
    #[serde(rename = "NNN-0110")]
    Nnn0110,
    #[serde(rename = "NNN-1102")]
    Nnn1102,
}

impl EdgeOrigin {
    pub fn is_nn(self) -> bool {
        matches!(self, EdgeOrigin::Nn1102 | EdgeOrigin::Nn0110)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeOrigin::Nn1102 => "NN-1102",
            EdgeOrigin::Nn0110 => "NN-0110",
            EdgeOrigin::Nnn0110 => "NNN-0110",
            EdgeOrigin::Nnn1102 => "NNN-1102",
        }
    }
}

impl fmt::Display for EdgeOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeOrigin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NN-1102" => Ok(EdgeOrigin::Nn1102),
            "NN-0110" => Ok(EdgeOrigin::Nn0110),
            "NNN-0110" => Ok(EdgeOrigin::Nnn0110),
            "NNN-1102" => Ok(EdgeOrigin::Nnn1102),
            other => Err(Error::invalid("class", format!("unknown edge class `{other}`"))),
        }
    }
}

/// Directed hopping `J e^{iφ} |from⟩⟨to|` between 1-based FSL sites.
///
/// Invariants: `j_mhz ≥ 0`, `phi ∈ (−π, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveEdge {
    site_from: usize,
    site_to: usize,
    j_mhz: f64,
    phi: f64,
    origin: EdgeOrigin,
    /// 1-based qutrit pair whose coupling generates the edge.
    mediator: Option<(usize, usize)>,
    /// Detuning left after the chosen resonance, MHz. An error budget; it is
    /// never folded into `phi`.
    residual_mhz: f64,
}

impl EffectiveEdge {
    /// A negative `j_mhz` is stored as `|J|` with an extra phase π.
    pub fn new(site_from: usize, site_to: usize, j_mhz: f64, phi: f64, origin: EdgeOrigin) -> Result<Self> {
        if site_from == site_to {
            return Err(Error::invalid("edge", format!("self-loop on site {site_from}")));
        }
        if !j_mhz.is_finite() || !phi.is_finite() {
            return Err(Error::invalid("edge", "J and phi must be finite"));
        }
        let (j, extra) = if j_mhz < 0.0 { (-j_mhz, PI) } else { (j_mhz, 0.0) };
        Ok(Self {
            site_from,
            site_to,
            j_mhz: j,
            phi: wrap_phase(phi + extra),
            origin,
            mediator: None,
            residual_mhz: 0.0,
        })
    }

    pub fn with_mediator(mut self, a: usize, b: usize) -> Self {
        self.mediator = Some((a, b));
        self
    }

    pub fn with_residual(mut self, residual_mhz: f64) -> Self {
        self.residual_mhz = residual_mhz;
        self
    }

    pub fn residual_mhz(&self) -> f64 {
        self.residual_mhz
    }

    pub fn site_from(&self) -> usize {
        self.site_from
    }

    pub fn site_to(&self) -> usize {
        self.site_to
    }

    pub fn j_mhz(&self) -> f64 {
        self.j_mhz
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn origin(&self) -> EdgeOrigin {
        self.origin
    }

    pub fn mediator(&self) -> Option<(usize, usize)> {
        self.mediator
    }

    /// Complex amplitude `J e^{iφ}` in MHz.
    pub fn amplitude(&self) -> C64 {
        C64::from_polar(self.j_mhz, self.phi)
    }

    pub fn set_phi(&mut self, phi: f64) {
        self.phi = wrap_phase(phi);
    }

    pub fn set_j(&mut self, j_mhz: f64) {
        let (j, extra) = if j_mhz < 0.0 { (-j_mhz, PI) } else { (j_mhz, 0.0) };
        self.j_mhz = j;
        self.phi = wrap_phase(self.phi + extra);
    }

    /// Same edge traversed the other way: `(J, −φ)`.
    pub fn reversed(&self) -> Self {
        Self {
            site_from: self.site_to,
            site_to: self.site_from,
            j_mhz: self.j_mhz,
            phi: wrap_phase(-self.phi),
            origin: self.origin,
            mediator: self.mediator,
            residual_mhz: self.residual_mhz,
        }
    }

    /// Unordered endpoint pair.
    pub fn key(&self) -> (usize, usize) {
        (self.site_from.min(self.site_to), self.site_from.max(self.site_to))
    }
}

/// Bessel function of the first kind `J_n(x)` by Miller's backward
/// recurrence normalized with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let order = n as usize;
    let span = (order as f64).max(x);
    let mut start = (span + 30.0 + 10.0 * span.sqrt()) as usize;
    start += start % 2;
    let (mut above, mut current) = (0.0_f64, 1e-300_f64);
    let mut norm = 0.0;
    let mut result = 0.0;
    for k in (1..=start).rev() {
        let below = 2.0 * k as f64 / x * current - above;
        above = current;
        current = below;
        if (k - 1) == order {
            result = current;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * current;
        }
        if current.abs() > 1e250 {
            current *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
            result *= 1e-250;
        }
    }
    norm += current;
    result / norm
}

/// `g |J_n(Ω_d/ω_p)|`, with the √2 enhancement for the channels that
/// involve a doubly occupied level.
pub fn bessel_amplitude(g_mhz: f64, omega_d_mhz: f64, omega_p_mhz: f64, n: i32, transition: Transition) -> Result<f64> {
    if !(omega_p_mhz > 0.0) {
        return Err(Error::invalid("omega_p", "drive frequency must be positive"));
    }
    Ok(transition.bosonic_factor() * g_mhz * bessel_j(n, omega_d_mhz / omega_p_mhz).abs())
}

/// Offset `c` in the rotating exponent `n ω_p − c` of each channel.
fn sideband_offset(delta_12: f64, u1: f64, u2: f64, transition: Transition) -> f64 {
    match transition {
        Transition::OneZero => delta_12,
        Transition::TwoZeroOneOne => delta_12 + u2,
        Transition::OneOneZeroTwo => delta_12 - u1,
    }
}

/// Sideband order that brings the channel closest to resonance, with the
/// leftover detuning `n ω_p − c` in MHz. Ties go to the smaller `|n|`.
pub fn resonance_sideband(delta_12: f64, u1: f64, u2: f64, omega_p: f64, transition: Transition) -> Result<(i32, f64)> {
    if !(omega_p > 0.0) {
        return Err(Error::invalid("omega_p", "drive frequency must be positive"));
    }
    let c = sideband_offset(delta_12, u1, u2, transition);
    let ratio = c / omega_p;
    let lo = ratio.floor() as i32;
    let best = [lo, lo + 1]
        .into_iter()
        .min_by(|&a, &b| {
            let ra = (a as f64 * omega_p - c).abs();
            let rb = (b as f64 * omega_p - c).abs();
            ra.total_cmp(&rb).then(a.abs().cmp(&b.abs()))
        })
        .expect("two candidates");
    Ok((best, best as f64 * omega_p - c))
}

/// Edge phase transferred from drive phases `φ_a`, `φ_b` on the mediating
/// pair: `wrap(φ_a − φ_b)`. The sideband order does not rescale the phase;
/// callers that need `n φ` pass pre-scaled phases.
pub fn effective_phase(phi_a: f64, phi_b: f64, _n: i32) -> f64 {
    wrap_phase(phi_a - phi_b)
}

/// Above this ratio the first-order sideband picture is unreliable.
pub const RWA_LIMIT: f64 = 0.1;

/// Warning text when `J_eff > ω_p / 10`.
pub fn rwa_warning(j_eff_mhz: f64, omega_p_mhz: f64) -> Option<String> {
    (j_eff_mhz > RWA_LIMIT * omega_p_mhz).then(|| {
        format!("effective hopping {j_eff_mhz:.3} MHz exceeds a tenth of the drive frequency {omega_p_mhz:.3} MHz")
    })
}

/// Half the dominant oscillation frequency of a swap population, in MHz.
///
/// The mean is removed, a Hann window applied and the record zero-padded
/// 16×; the discrete maximum is refined by a parabola through its
/// neighbours. Bins below two raw resolution cells are skipped to stay
/// clear of the window's DC lobe.
pub fn extract_hopping_fft(populations: &[f64], sample_step_us: f64) -> Result<f64> {
    let f = dominant_frequency(populations, sample_step_us)?;
    Ok(f / 2.0)
}

/// Dominant nonzero frequency of a uniformly sampled real series, in MHz.
pub fn dominant_frequency(series: &[f64], sample_step_us: f64) -> Result<f64> {
    spectral_peak(series, sample_step_us, None)
}

fn spectral_peak(series: &[f64], sample_step_us: f64, f_max: Option<f64>) -> Result<f64> {
    if !(sample_step_us > 0.0) {
        return Err(Error::invalid("sample_step", "must be positive"));
    }
    let len = series.len();
    if len < 8 {
        return Err(Error::invalid("populations", "at least 8 samples are required"));
    }
    let mean = series.iter().sum::<f64>() / len as f64;
    let spread = series.iter().map(|p| (p - mean).abs()).fold(0.0, f64::max);
    if spread < 1e-9 {
        return Err(Error::NoPeak);
    }
    let padded = (16 * len).next_power_of_two();
    let mut buf: Vec<C64> = series
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let w = 0.5 - 0.5 * (TAU * k as f64 / (len - 1) as f64).cos();
            C64::new((p - mean) * w, 0.0)
        })
        .collect();
    buf.resize(padded, C64::default());
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let mut top = padded / 2;
    if let Some(f) = f_max {
        top = top.min(((f * padded as f64 * sample_step_us).ceil() as usize + 2).max(1));
    }
    let mags: Vec<f64> = buf[..top].iter().map(|z| z.norm()).collect();
    let first = (2 * padded).div_ceil(len).max(1);
    if first + 2 >= mags.len() {
        return Err(Error::NoPeak);
    }
    let (k, peak) = mags
        .iter()
        .enumerate()
        .skip(first)
        .fold((first, 0.0), |acc, (k, &m)| if m > acc.1 { (k, m) } else { acc });
    let floor = 1e-6 * len as f64 * spread;
    if peak <= floor {
        return Err(Error::NoPeak);
    }
    let shift = if k + 1 < mags.len() && k > 0 {
        let (a, b, c) = (mags[k - 1], mags[k], mags[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 0.0 {
            0.5 * (a - c) / denom
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(((k as f64 + shift) / (padded as f64 * sample_step_us)).max(0.0))
}

/// Total flux `Σ φ` along a closed cycle of oriented edges, wrapped.
pub fn wilson_loop_flux(edges: &[EffectiveEdge]) -> Result<f64> {
    let first = edges.first().ok_or_else(|| Error::NotACycle("no edges".into()))?;
    for pair in edges.windows(2) {
        if pair[0].site_to != pair[1].site_from {
            return Err(Error::NotACycle(format!(
                "edge {}->{} is followed by {}->{}",
                pair[0].site_from, pair[0].site_to, pair[1].site_from, pair[1].site_to
            )));
        }
    }
    let last = edges.last().expect("non-empty");
    if last.site_to != first.site_from {
        return Err(Error::NotACycle(format!(
            "path ends at site {} instead of {}",
            last.site_to, first.site_from
        )));
    }
    Ok(wrap_phase(edges.iter().map(|e| e.phi).sum()))
}

/// Two coupled qutrits with one parametric tone on the first, used to
/// check the Bessel law against the full lab Hamiltonian.
///
/// Kets are `|n₁ n₂⟩`. The channel is named by its sideband offset:
/// `01-10` swaps `|10⟩ ↔ |01⟩`, `11-02` swaps `|11⟩ ↔ |20⟩` (offset
/// `Δ₁₂ − U₁`) and `20-11` swaps `|11⟩ ↔ |02⟩` (offset `Δ₁₂ + U₂`), where
/// `Δ₁₂ = ω₂ − ω₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct SwapExperiment {
    pub g_mhz: f64,
    pub omega1_ghz: f64,
    pub delta_12_mhz: f64,
    pub u1_mhz: f64,
    pub u2_mhz: f64,
    pub transition: Transition,
    pub drive: DriveParams,
}

/// Outcome of one full-drive swap run.
#[derive(Clone, Debug, PartialEq)]
pub struct SwapMeasurement {
    pub ratio: f64,
    pub predicted_mhz: f64,
    pub measured_mhz: f64,
    pub max_transfer: f64,
    pub horizon_us: f64,
}

impl SwapMeasurement {
    /// 5% relative agreement above 0.5 MHz, 0.3 MHz absolute below.
    pub fn agrees(&self) -> bool {
        let diff = (self.measured_mhz - self.predicted_mhz).abs();
        if self.predicted_mhz >= 0.5 {
            diff <= 0.05 * self.predicted_mhz
        } else {
            diff <= 0.3
        }
    }
}

impl SwapExperiment {
    /// Drive at the frequency that puts sideband `n` exactly on resonance,
    /// with amplitude `ratio · ω_p`.
    #[allow(clippy::too_many_arguments)]
    pub fn resonant(
        g_mhz: f64,
        omega1_ghz: f64,
        delta_12_mhz: f64,
        u1_mhz: f64,
        u2_mhz: f64,
        transition: Transition,
        n: i32,
        ratio: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("sideband", "a parametric swap needs n != 0"));
        }
        let c = sideband_offset(delta_12_mhz, u1_mhz, u2_mhz, transition);
        let omega_p = c / n as f64;
        if !(omega_p > 0.0) {
            return Err(Error::invalid(
                "sideband",
                format!("order {n} cannot reach offset {c} MHz with a positive frequency"),
            ));
        }
        Ok(Self {
            g_mhz,
            omega1_ghz,
            delta_12_mhz,
            u1_mhz,
            u2_mhz,
            transition,
            drive: DriveParams {
                amplitude_mhz: ratio * omega_p,
                frequency_mhz: omega_p,
                phase_rad: 0.0,
                sideband: n,
            },
        })
    }

    pub fn ratio(&self) -> f64 {
        self.drive.amplitude_mhz / self.drive.frequency_mhz
    }

    pub fn with_ratio(&self, ratio: f64) -> Self {
        let mut next = self.clone();
        next.drive.amplitude_mhz = ratio * self.drive.frequency_mhz;
        next
    }

    pub fn predicted_mhz(&self) -> Result<f64> {
        let (n, _) = resonance_sideband(
            self.delta_12_mhz,
            self.u1_mhz,
            self.u2_mhz,
            self.drive.frequency_mhz,
            self.transition,
        )?;
        bessel_amplitude(self.g_mhz, self.drive.amplitude_mhz, self.drive.frequency_mhz, n, self.transition)
    }

    /// Initial and target occupations.
    pub fn endpoints(&self) -> ([u8; 2], [u8; 2]) {
        match self.transition {
            Transition::OneZero => ([1, 0], [0, 1]),
            Transition::OneOneZeroTwo => ([1, 1], [2, 0]),
            Transition::TwoZeroOneOne => ([1, 1], [0, 2]),
        }
    }

    fn device(&self) -> DeviceSpec {
        let qutrit = |w: f64, u: f64, label: &str| QutritParams {
            label: Some(label.into()),
            omega_idle_ghz: w,
            omega_oper_ghz: w,
            omega_r_ghz: None,
            anharmonicity_mhz: u,
            f00: 1.0,
            f11: 1.0,
            f22: 1.0,
            t1_10_us: None,
            t2_10_us: None,
            t1_21_us: None,
            t2_21_us: None,
            metadata: Default::default(),
        };
        let mut couplings = CouplingGraph::new();
        couplings.set(0, 1, self.g_mhz);
        DeviceSpec {
            name: "driven-pair".into(),
            level_cap: 3,
            qutrits: vec![
                qutrit(self.omega1_ghz, self.u1_mhz, "Q1"),
                qutrit(self.omega2_ghz(), self.u2_mhz, "Q2"),
            ],
            couplings,
        }
    }

    pub fn omega2_ghz(&self) -> f64 {
        self.omega1_ghz + self.delta_12_mhz / 1000.0
    }

    /// Full time-dependent evolution in the frame rotating at the mean
    /// qutrit frequencies, restricted to the relevant photon number.
    /// Returns the trajectory and the target index inside it.
    pub fn simulate(&self, times: &[f64], tol: Tolerances) -> Result<(Trajectory, usize)> {
        self.drive.validate("drive")?;
        let device = self.device();
        let basis = build_basis(2, 3)?;
        let (start, target) = self.endpoints();
        let photons = u32::from(start[0] + start[1]);
        let sub = project_subspace(&basis, &SubspaceRule::TotalPhotons(photons))?;
        let profiles = [
            FrequencyProfile::Driven {
                omega_oper_ghz: self.omega1_ghz,
                drive: self.drive,
            },
            FrequencyProfile::Constant { ghz: self.omega2_ghz() },
        ];
        let lab = lab_hamiltonian(&device, &profiles, &basis)?.restricted(&sub)?;
        let frame = rotating_frame(lab, &[self.omega1_ghz, self.omega2_ghz()], sub.basis())?;
        let start_idx = sub
            .basis()
            .index_of_occupations(&start)
            .ok_or_else(|| Error::invalid("transition", "initial state outside the subspace"))?;
        let target_idx = sub
            .basis()
            .index_of_occupations(&target)
            .ok_or_else(|| Error::invalid("transition", "target state outside the subspace"))?;
        let psi0 = site_state(sub.dim(), start_idx + 1)?;
        let traj = evolve_time_dependent(&frame, &psi0, times, tol)?;
        Ok((traj, target_idx))
    }

    /// Simulate long enough for about twelve swap periods (1 µs to 10 µs)
    /// and extract the hopping rate from the target population.
    pub fn measure(&self, sample_step_us: f64, tol: Tolerances) -> Result<SwapMeasurement> {
        let predicted = self.predicted_mhz()?;
        let horizon = (6.0 / predicted.max(1e-9)).clamp(1.0, 10.0);
        let times = time_grid(horizon, sample_step_us)?;
        let (traj, target) = self.simulate(&times, tol)?;
        let series: Vec<f64> = traj.populations().iter().map(|p| p[target]).collect();
        let max_transfer = series.iter().copied().fold(0.0, f64::max);
        // 2J can never exceed twice the undressed channel strength.
        let band = 3.0 * self.transition.bosonic_factor() * self.g_mhz;
        let measured = match dominant_frequency_below(&series, sample_step_us, band) {
            Ok(f) => f / 2.0,
            Err(Error::NoPeak) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(SwapMeasurement {
            ratio: self.ratio(),
            predicted_mhz: predicted,
            measured_mhz: measured,
            max_transfer,
            horizon_us: horizon,
        })
    }
}

/// [`dominant_frequency`] restricted to frequencies below `f_max`.
pub fn dominant_frequency_below(series: &[f64], sample_step_us: f64, f_max: f64) -> Result<f64> {
    spectral_peak(series, sample_step_us, Some(f_max))
}
