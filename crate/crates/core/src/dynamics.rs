//! Closed-system time evolution.
//!
//! Static effective Hamiltonians are given in MHz and evolved exactly,
//! `ψ(t) = exp(−i 2π H t) ψ₀`. Time-dependent factories are in rad/µs and
//! go through an adaptive Dormand–Prince 5(4) integrator. Times are µs.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::device::HamiltonianFactory;
use crate::error::{Error, Result};
use crate::hilbert::OperatorMatrix;

/// Allowed `|‖ψ₀‖ − 1|`.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Allowed norm drift of the adaptive engine over a full horizon.
pub const NORM_DRIFT_TOL: f64 = 1e-6;
/// Relative Hermiticity tolerance for static Hamiltonians.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Amplitudes and populations sampled at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    amplitudes: Vec<Vec<C64>>,
    populations: Vec<Vec<f64>>,
}

impl Trajectory {
    fn new(times: Vec<f64>, amplitudes: Vec<Vec<C64>>) -> Self {
        let populations = amplitudes
            .iter()
            .map(|psi| psi.iter().map(|z| z.norm_sqr()).collect())
            .collect();
        Self {
            times,
            amplitudes,
            populations,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn amplitudes(&self) -> &[Vec<C64>] {
        &self.amplitudes
    }

    /// `populations()[t][k] = |ψ_k(t)|²`.
    pub fn populations(&self) -> &[Vec<f64>] {
        &self.populations
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.first().map_or(0, Vec::len)
    }

    /// Population series of one 1-based site label.
    pub fn site(&self, label: usize) -> Result<Vec<f64>> {
        if label == 0 || label > self.dim() {
            return Err(Error::UnknownSite(label));
        }
        Ok(self.populations.iter().map(|p| p[label - 1]).collect())
    }

    /// Largest `|Σ_k P_k(t) − 1|` over the record.
    pub fn max_norm_error(&self) -> f64 {
        self.populations
            .iter()
            .map(|p| (p.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Every `stride`-th record, starting with the first.
    pub fn subsample(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let pick = |k: &usize| k.is_multiple_of(stride);
        Self {
            times: self.times.iter().enumerate().filter(|(k, _)| pick(k)).map(|(_, &t)| t).collect(),
            amplitudes: self
                .amplitudes
                .iter()
                .enumerate()
                .filter(|(k, _)| pick(k))
                .map(|(_, a)| a.clone())
                .collect(),
            populations: self
                .populations
                .iter()
                .enumerate()
                .filter(|(k, _)| pick(k))
                .map(|(_, p)| p.clone())
                .collect(),
        }
    }
}

/// Populations of the selected 1-based labels, one series per label.
pub fn populations(traj: &Trajectory, selection: &[usize]) -> Result<Vec<Vec<f64>>> {
    selection.iter().map(|&l| traj.site(l)).collect()
}

/// Octahedron axis populations: `P_x = P₂+P₃`, `P_y = P₄+P₅`, `P_z = P₁+P₆`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPopulations {
    pub p_x: Vec<f64>,
    pub p_y: Vec<f64>,
    pub p_z: Vec<f64>,
}

pub fn project_xyz(traj: &Trajectory) -> Result<ProjectedPopulations> {
    if traj.dim() != 6 {
        return Err(Error::DimensionMismatch {
            expected: 6,
            found: traj.dim(),
        });
    }
    let pick = |a: usize, b: usize| traj.populations().iter().map(|p| p[a - 1] + p[b - 1]).collect();
    Ok(ProjectedPopulations {
        p_x: pick(2, 3),
        p_y: pick(4, 5),
        p_z: pick(1, 6),
    })
}

/// Evenly spaced grid `0, step, …` up to and including `horizon`.
pub fn time_grid(horizon: f64, step: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    if !(step > 0.0 && step <= horizon) {
        return Err(Error::invalid("sample_step", "must be positive and not exceed the horizon"));
    }
    let count = (horizon / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| k as f64 * step).collect())
}

/// Basis vector of a 1-based site.
pub fn site_state(dim: usize, label: usize) -> Result<Vec<C64>> {
    if label == 0 || label > dim {
        return Err(Error::UnknownSite(label));
    }
    let mut psi = vec![C64::default(); dim];
    psi[label - 1] = C64::new(1.0, 0.0);
    Ok(psi)
}

/// Normalized superposition of 1-based sites with the given weights.
pub fn superposition(dim: usize, terms: &[(usize, C64)]) -> Result<Vec<C64>> {
    let mut psi = vec![C64::default(); dim];
    for &(label, amp) in terms {
        if label == 0 || label > dim {
            return Err(Error::UnknownSite(label));
        }
        psi[label - 1] += amp;
    }
    let norm = norm(&psi);
    if norm == 0.0 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(psi.into_iter().map(|z| z / norm).collect())
}

pub fn norm(psi: &[C64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn check_normalized(psi: &[C64]) -> Result<()> {
    let n = norm(psi);
    if (n - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { norm: n });
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("times", "at least one output time is required"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("times", "must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("times", "must be strictly increasing"));
    }
    Ok(())
}

/// Eigen-decomposition of a Hermitian matrix given in MHz.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending eigenvalues in MHz.
    pub values: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn new(h_mhz: &OperatorMatrix) -> Result<Self> {
        let scale = h_mhz.max_abs().max(1.0);
        let deviation = h_mhz.hermitian_deviation();
        if deviation > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { deviation });
        }
        let dim = h_mhz.dim();
        let dense = DMatrix::from_fn(dim, dim, |r, c| h_mhz.get(r, c));
        let eig = SymmetricEigen::new(dense);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `exp(−i 2π H t) ψ₀` for every `t`; `t = 0` returns `ψ₀` exactly.
    pub fn evolve(&self, psi0: &[C64], times: &[f64]) -> Vec<Vec<C64>> {
        let psi = DVector::from_column_slice(psi0);
        let coeffs = self.vectors.adjoint() * psi;
        times
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    return psi0.to_vec();
                }
                let phased = DVector::from_iterator(
                    coeffs.len(),
                    coeffs
                        .iter()
                        .zip(&self.values)
                        .map(|(&c, &e)| c * C64::from_polar(1.0, -TAU * e * t)),
                );
                (&self.vectors * phased).iter().copied().collect()
            })
            .collect()
    }
}

/// Exact evolution under a static Hamiltonian in MHz.
pub fn evolve_static(h_mhz: &OperatorMatrix, psi0: &[C64], times: &[f64]) -> Result<Trajectory> {
    if psi0.len() != h_mhz.dim() {
        return Err(Error::DimensionMismatch {
            expected: h_mhz.dim(),
            found: psi0.len(),
        });
    }
    check_normalized(psi0)?;
    check_times(times)?;
    let spectrum = Spectrum::new(h_mhz)?;
    Ok(Trajectory::new(times.to_vec(), spectrum.evolve(psi0, times)))
}

/// Error control for [`evolve_time_dependent`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Hard cap on attempted steps across the whole horizon.
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_steps: 50_000_000,
        }
    }
}

impl Tolerances {
    /// Tighter control for records of several µs, where the default
    /// tolerances let the norm drift approach the failure threshold.
    pub fn long_horizon() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            ..Self::default()
        }
    }
}

/// Step counts of an adaptive run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<'a, H: ?Sized> {
    h: &'a H,
    k: [Vec<C64>; 7],
    stage: Vec<C64>,
    scratch: Vec<C64>,
}

impl<'a, H: HamiltonianFactory + ?Sized> Stepper<'a, H> {
    fn new(h: &'a H, dim: usize) -> Self {
        let z = vec![C64::default(); dim];
        Self {
            h,
            k: std::array::from_fn(|_| z.clone()),
            stage: z.clone(),
            scratch: z,
        }
    }

    /// `out = −i H(t) y`.
    fn rhs(h: &H, t: f64, y: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        h.apply(t, y, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = C64::new(s.im, -s.re);
        }
    }

    fn prime(&mut self, t: f64, y: &[C64]) {
        let (k0, _) = self.k.split_at_mut(1);
        Self::rhs(self.h, t, y, &mut k0[0], &mut self.scratch);
    }

    /// One trial step; writes the 5th-order solution to `y_new` and returns
    /// the scaled error norm. `k[0]` must hold `f(t, y)`.
    fn trial(&mut self, t: f64, dt: f64, y: &[C64], y_new: &mut [C64], tol: &Tolerances) -> f64 {
        let n = y.len();
        let stages: [(f64, &[f64]); 5] = [
            (C2, &[A21]),
            (C3, &[A31, A32]),
            (C4, &[A41, A42, A43]),
            (C5, &[A51, A52, A53, A54]),
            (1.0, &[A61, A62, A63, A64, A65]),
        ];
        for (s, (c, row)) in stages.iter().enumerate() {
            for i in 0..n {
                let mut acc = C64::default();
                for (j, &a) in row.iter().enumerate() {
                    acc += self.k[j][i] * a;
                }
                self.stage[i] = y[i] + acc * dt;
            }
            let (_, rest) = self.k.split_at_mut(s + 1);
            Self::rhs(self.h, t + c * dt, &self.stage, &mut rest[0], &mut self.scratch);
        }
        for i in 0..n {
            y_new[i] = y[i]
                + (self.k[0][i] * B1 + self.k[2][i] * B3 + self.k[3][i] * B4 + self.k[4][i] * B5 + self.k[5][i] * B6)
                    * dt;
        }
        let (_, rest) = self.k.split_at_mut(6);
        Self::rhs(self.h, t + dt, y_new, &mut rest[0], &mut self.scratch);
        let mut sum = 0.0;
        for i in 0..n {
            let err = (self.k[0][i] * E1
                + self.k[2][i] * E3
                + self.k[3][i] * E4
                + self.k[4][i] * E5
                + self.k[5][i] * E6
                + self.k[6][i] * E7)
                * dt;
            let scale = tol.abs_tol + tol.rel_tol * y[i].norm().max(y_new[i].norm());
            sum += (err.norm() / scale).powi(2);
        }
        (sum / n as f64).sqrt()
    }

    /// FSAL: the last stage becomes the first of the next step.
    fn accept(&mut self) {
        self.k.swap(0, 6);
    }
}

/// Adaptive integration of `i dψ/dt = H(t) ψ` with `H` in rad/µs.
///
/// Steps are clipped so every requested time is hit exactly. The run fails
/// rather than renormalizes when the norm drifts by more than
/// [`NORM_DRIFT_TOL`].
pub fn evolve_time_dependent<H: HamiltonianFactory + ?Sized>(
    h: &H,
    psi0: &[C64],
    times: &[f64],
    tol: Tolerances,
) -> Result<Trajectory> {
    evolve_time_dependent_with_stats(h, psi0, times, tol).map(|(t, _)| t)
}

pub fn evolve_time_dependent_with_stats<H: HamiltonianFactory + ?Sized>(
    h: &H,
    psi0: &[C64],
    times: &[f64],
    tol: Tolerances,
) -> Result<(Trajectory, StepStats)> {
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: psi0.len(),
        });
    }
    if !(tol.rel_tol > 0.0 && tol.abs_tol > 0.0) {
        return Err(Error::invalid("tolerances", "rel_tol and abs_tol must be positive"));
    }
    check_normalized(psi0)?;
    check_times(times)?;

    let dim = psi0.len();
    let mut stepper = Stepper::new(h, dim);
    let mut y = psi0.to_vec();
    let mut y_new = vec![C64::default(); dim];
    let mut t = 0.0;
    let mut stats = StepStats::default();
    let mut out = Vec::with_capacity(times.len());

    stepper.prime(t, &y);
    let rate = norm(&stepper.k[0]).max(1e-12);
    let mut dt = (0.01 / rate).min(times[times.len() - 1].max(1e-6));

    for &target in times {
        while t < target {
            let remaining = target - t;
            let clipped = dt >= remaining;
            let step = if clipped { remaining } else { dt };
            if step < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { time: t });
            }
            if stats.accepted + stats.rejected >= tol.max_steps {
                return Err(Error::Integration(format!(
                    "step budget of {} exhausted at t = {t:.9} us",
                    tol.max_steps
                )));
            }
            let err = stepper.trial(t, step, &y, &mut y_new, &tol);
            if err.is_nan() || y_new.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::Integration(format!("non-finite state at t = {t:.9} us")));
            }
            if err <= 1.0 {
                t = if clipped { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                stepper.accept();
                stats.accepted += 1;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // A clipped step says nothing about the natural step size.
                if !clipped || step * grow > dt {
                    dt = step * grow;
                }
            } else {
                stats.rejected += 1;
                let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                dt = step * shrink;
            }
        }
        let drift = (norm(&y) - 1.0).abs();
        if drift > NORM_DRIFT_TOL {
            return Err(Error::NormDrift { drift, time: t });
        }
        out.push(y.clone());
    }
    Ok((Trajectory::new(times.to_vec(), out), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::StaticHamiltonian;
    use crate::device::MHZ_TO_ANGULAR;
    use std::f64::consts::{PI, SQRT_2};

    fn pair(j: f64) -> OperatorMatrix {
        let mut h = OperatorMatrix::zeros(2);
        h.set(0, 1, C64::new(j, 0.0));
        h.set(1, 0, C64::new(j, 0.0));
        h
    }

    fn ring(j: f64, phases: &[f64]) -> OperatorMatrix {
        let n = phases.len();
        let mut h = OperatorMatrix::zeros(n);
        for (k, &phi) in phases.iter().enumerate() {
            let z = C64::from_polar(j, phi);
            h.add_to(k, (k + 1) % n, z);
            h.add_to((k + 1) % n, k, z.conj());
        }
        h
    }

    #[test]
    fn zero_time_is_identity() {
        let psi = superposition(2, &[(1, C64::new(0.6, 0.0)), (2, C64::new(0.0, 0.8))]).unwrap();
        let traj = evolve_static(&pair(3.0), &psi, &[0.0]).unwrap();
        for (a, b) in traj.amplitudes()[0].iter().zip(&psi) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn rabi_formula() {
        let j = 7.3;
        let times = time_grid(0.3, 0.001).unwrap();
        let traj = evolve_static(&pair(j), &site_state(2, 1).unwrap(), &times).unwrap();
        for (t, p) in times.iter().zip(traj.site(2).unwrap()) {
            assert!((p - (TAU * j * t).sin().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn plaquette_oracles() {
        let j = 18.4;
        let times = time_grid(0.2, 0.0005).unwrap();
        let flat = evolve_static(&ring(j, &[0.0; 4]), &site_state(4, 1).unwrap(), &times).unwrap();
        for (t, p) in times.iter().zip(flat.site(3).unwrap()) {
            assert!((p - (TAU * j * t).sin().powi(4)).abs() < 1e-10);
        }
        let caged = evolve_static(&ring(j, &[PI / 2.0, PI / 2.0, 0.0, 0.0]), &site_state(4, 1).unwrap(), &times).unwrap();
        let p1 = caged.site(1).unwrap();
        for (k, (t, p3)) in times.iter().zip(caged.site(3).unwrap()).enumerate() {
            assert!(p3 < 1e-12);
            assert!((p1[k] - (TAU * SQRT_2 * j * t).cos().powi(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_is_conserved() {
        let h = ring(4.0, &[0.3, -1.1, 2.0, 0.4, 0.0]);
        let psi = superposition(5, &[(1, C64::new(1.0, 0.0)), (3, C64::new(0.2, -0.7))]).unwrap();
        let times = time_grid(1.0, 0.01).unwrap();
        let traj = evolve_static(&h, &psi, &times).unwrap();
        let energy = |psi: &[C64]| -> f64 {
            let hp = h.apply(psi);
            psi.iter().zip(&hp).map(|(a, b)| (a.conj() * b).re).sum()
        };
        let e0 = energy(&psi);
        for amps in traj.amplitudes() {
            assert!((energy(amps) - e0).abs() < 1e-8);
        }
        assert!(traj.max_norm_error() < 1e-12);
    }

    #[test]
    fn input_validation() {
        let h = pair(1.0);
        let bad = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(matches!(evolve_static(&h, &bad, &[0.0]), Err(Error::NotNormalized { .. })));
        let psi = site_state(2, 1).unwrap();
        assert!(evolve_static(&h, &psi, &[0.2, 0.1]).is_err());
        let mut skew = OperatorMatrix::zeros(2);
        skew.set(0, 1, C64::new(1.0, 0.0));
        assert!(matches!(evolve_static(&skew, &psi, &[0.0]), Err(Error::NotHermitian { .. })));
        assert!(matches!(site_state(2, 3), Err(Error::UnknownSite(3))));
    }

    #[test]
    fn engines_agree_on_static_hamiltonian() {
        let h = ring(6.0, &[0.5, 0.0, PI, -0.2, 1.0, 0.0]);
        let psi = site_state(6, 2).unwrap();
        let times = time_grid(0.5, 0.01).unwrap();
        let exact = evolve_static(&h, &psi, &times).unwrap();
        let factory = StaticHamiltonian::new(h.scaled(MHZ_TO_ANGULAR));
        let (numeric, stats) = evolve_time_dependent_with_stats(&factory, &psi, &times, Tolerances::default()).unwrap();
        assert!(stats.accepted > 0);
        for (a, b) in exact.amplitudes().iter().zip(numeric.amplitudes()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).norm() < 1e-7);
            }
        }
    }

    struct Chirp;

    impl HamiltonianFactory for Chirp {
        fn dim(&self) -> usize {
            2
        }

        fn matrix_at(&self, t: f64) -> OperatorMatrix {
            let mut h = OperatorMatrix::zeros(2);
            h.set(0, 0, C64::new(40.0 * t, 0.0));
            h.set(1, 1, C64::new(-40.0 * t, 0.0));
            h.set(0, 1, C64::new(3.0, 0.0));
            h.set(1, 0, C64::new(3.0, 0.0));
            h
        }
    }

    #[test]
    fn adaptive_run_conserves_norm() {
        let times = time_grid(2.0, 0.05).unwrap();
        let traj = evolve_time_dependent(&Chirp, &site_state(2, 1).unwrap(), &times, Tolerances::default()).unwrap();
        assert!(traj.max_norm_error() < 2.0 * NORM_DRIFT_TOL);
    }

    #[test]
    fn step_budget_and_underflow_are_reported() {
        let tight = Tolerances {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_steps: 10,
        };
        let res = evolve_time_dependent(&Chirp, &site_state(2, 1).unwrap(), &[0.0, 2.0], tight);
        assert!(matches!(res, Err(Error::Integration(_))));

        let impossible = Tolerances {
            rel_tol: 1e-300,
            abs_tol: 1e-300,
            max_steps: usize::MAX,
        };
        match evolve_time_dependent(&Chirp, &site_state(2, 1).unwrap(), &[0.0, 1.0], impossible) {
            Err(Error::StepSizeUnderflow { time }) => assert!((0.0..1.0).contains(&time)),
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn xyz_projection() {
        let times = [0.0];
        let h = OperatorMatrix::zeros(6);
        let one = evolve_static(&h, &site_state(6, 1).unwrap(), &times).unwrap();
        let p = project_xyz(&one).unwrap();
        assert_eq!((p.p_x[0], p.p_y[0], p.p_z[0]), (0.0, 0.0, 1.0));
        let x = superposition(6, &[(2, C64::new(1.0, 0.0)), (3, C64::new(1.0, 0.0))]).unwrap();
        let p = project_xyz(&evolve_static(&h, &x, &times).unwrap()).unwrap();
        assert!((p.p_x[0] - 1.0).abs() < 1e-15);
        let four = evolve_static(&OperatorMatrix::zeros(4), &site_state(4, 1).unwrap(), &times).unwrap();
        assert!(project_xyz(&four).is_err());
    }

    #[test]
    fn grid_includes_horizon() {
        let g = time_grid(0.5, 0.001).unwrap();
        assert_eq!(g.len(), 501);
        assert!((g[500] - 0.5).abs() < 1e-12);
        assert!(time_grid(0.0, 0.1).is_err());
    }
}
