//! Readout (SPAM) error model: confusion matrices, their action on
//! probability vectors, inversion, and shot sampling.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::device::DeviceSpec;
use crate::error::{Error, Result};

pub const STOCHASTIC_TOL: f64 = 1e-6;
pub const DEFAULT_CONDITION_BOUND: f64 = 1e6;
const HEADER: &str = "# fockcage readout matrix v1";

pub type ConfusionBlock = [[f64; 3]; 3];

/// Column-stochastic `R[measured][prepared]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutMatrix {
    matrix: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL || p.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(what, format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn check_stochastic(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some(x) = m.iter().find(|&&x| !(-1e-12..=1.0 + 1e-12).contains(&x)) {
        return Err(Error::NotStochastic(format!("{what}: entry {x} outside [0, 1]")));
    }
    for (c, col) in m.column_iter().enumerate() {
        let s = col.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic(format!("{what}: column {c} sums to {s}")));
        }
    }
    Ok(())
}

/// 3×3 block with the given diagonal fidelities; each column's missing
/// probability is split evenly over the other two outcomes.
pub fn confusion_block(f00: f64, f11: f64, f22: f64) -> ConfusionBlock {
    let f = [f00, f11, f22];
    let mut b = [[0.0; 3]; 3];
    for (c, &fc) in f.iter().enumerate() {
        for (r, row) in b.iter_mut().enumerate() {
            row[c] = if r == c { fc } else { 0.5 * (1.0 - fc) };
        }
    }
    b
}

impl ReadoutMatrix {
    pub fn new(matrix: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("readout", "matrix must be square and non-empty"));
        }
        if let Some(l) = &labels {
            if l.len() != matrix.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.nrows(),
                    found: l.len(),
                });
            }
        }
        check_stochastic(&matrix, "readout matrix")?;
        Ok(Self { matrix, labels })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            labels: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, measured: usize, prepared: usize) -> f64 {
        self.matrix[(measured, prepared)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Independent-readout model: tensor product of per-qutrit blocks,
    /// qutrit 1 most significant. Basis labels are occupation strings.
    pub fn synthesize_from_fidelities(blocks: &[ConfusionBlock]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("blocks", "at least one qutrit is required"));
        }
        let mut r = DMatrix::from_element(1, 1, 1.0);
        for (q, b) in blocks.iter().enumerate() {
            let block = DMatrix::from_fn(3, 3, |i, j| b[i][j]);
            check_stochastic(&block, &format!("qutrit {} block", q + 1))?;
            r = r.kronecker(&block);
        }
        let n = blocks.len();
        let labels = (0..r.nrows())
            .map(|mut k| {
                let mut digits = vec![b'0'; n];
                for d in digits.iter_mut().rev() {
                    *d += (k % 3) as u8;
                    k /= 3;
                }
                String::from_utf8(digits).expect("ascii digits")
            })
            .collect();
        Ok(Self {
            matrix: r,
            labels: Some(labels),
        })
    }

    /// Blocks from each qutrit's `F00, F11, F22`.
    pub fn from_device(device: &DeviceSpec) -> Result<Self> {
        let blocks: Vec<_> = device
            .qutrits
            .iter()
            .map(|q| {
                let [a, b, c] = q.spam_diag();
                confusion_block(a, b, c)
            })
            .collect();
        Self::synthesize_from_fidelities(&blocks)
    }

    /// `R · p`.
    pub fn apply(&self, true_probs: &[f64]) -> Result<Vec<f64>> {
        if true_probs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: true_probs.len(),
            });
        }
        check_distribution(true_probs, "true_probs")?;
        Ok((&self.matrix * DVector::from_column_slice(true_probs)).as_slice().to_vec())
    }

    /// Text form: header, `dim K`, optional `labels …`, then K rows.
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\ndim {}\n", self.dim());
        if let Some(l) = &self.labels {
            writeln!(out, "labels {}", l.join(" ")).expect("string write");
        }
        for row in self.matrix.row_iter() {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            writeln!(out, "{}", cells.join(" ")).expect("string write");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::parse("readout matrix", m);
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let dim: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("dim "))
            .ok_or_else(|| bad("missing `dim K` line".into()))?
            .trim()
            .parse()
            .map_err(|e| bad(format!("dim: {e}")))?;
        let mut labels = None;
        let mut values = Vec::with_capacity(dim * dim);
        for (n, line) in lines.enumerate() {
            if let Some(rest) = line.strip_prefix("labels") {
                labels = Some(rest.split_whitespace().map(String::from).collect());
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", n + 1)))?;
            if row.len() != dim {
                return Err(bad(format!("row {} has {} values, expected {dim}", n + 1, row.len())));
            }
            values.extend(row);
        }
        if values.len() != dim * dim {
            return Err(bad(format!("expected {dim} rows, found {}", values.len() / dim.max(1))));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, &values), labels)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_text(&text)
    }
}

/// Forward SPAM model.
pub fn apply_spam(true_probs: &[f64], r: &ReadoutMatrix) -> Result<Vec<f64>> {
    r.apply(true_probs)
}

/// Corrected quasi-distribution and whether clipping changed it.
#[derive(Clone, Debug, PartialEq)]
pub struct Corrected {
    pub probs: Vec<f64>,
    pub clipped: bool,
}

/// Factorized `R⁻¹`, valid only when the condition number is within bound.
#[derive(Clone, Debug)]
pub struct SpamCorrector {
    inverse: DMatrix<f64>,
    condition: f64,
}

impl SpamCorrector {
    pub fn new(r: &ReadoutMatrix, bound: f64) -> Result<Self> {
        let sv = r.matrix.clone().svd(false, false).singular_values;
        let (max, min) = sv.iter().fold((0.0_f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= bound) {
            return Err(Error::IllConditioned { condition, bound });
        }
        let inverse = r
            .matrix
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::IllConditioned { condition, bound })?;
        Ok(Self { inverse, condition })
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `R⁻¹ · measured`; with `clip`, negatives go to 0 and the vector is
    /// renormalized.
    pub fn correct(&self, measured: &[f64], clip: bool) -> Result<Corrected> {
        if measured.len() != self.inverse.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.inverse.nrows(),
                found: measured.len(),
            });
        }
        let mut probs = (&self.inverse * DVector::from_column_slice(measured)).as_slice().to_vec();
        let mut clipped = false;
        if clip && probs.iter().any(|&p| p < 0.0) {
            clipped = true;
            probs.iter_mut().for_each(|p| *p = p.max(0.0));
            let total: f64 = probs.iter().sum();
            if total > 0.0 {
                probs.iter_mut().for_each(|p| *p /= total);
            }
        }
        Ok(Corrected { probs, clipped })
    }

    /// One-sigma uncertainty of each corrected entry when `measured` is a
    /// frequency estimate from `shots` multinomial draws.
    pub fn corrected_sigma(&self, measured: &[f64], shots: u64) -> Vec<f64> {
        let n = shots as f64;
        let m = DVector::from_column_slice(measured);
        let cov = (DMatrix::from_diagonal(&m) - &m * m.transpose()) / n;
        let prop = &self.inverse * cov * self.inverse.transpose();
        prop.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// `R⁻¹ · measured` under the default condition bound.
pub fn correct_spam(measured: &[f64], r: &ReadoutMatrix, clip: bool) -> Result<Corrected> {
    SpamCorrector::new(r, DEFAULT_CONDITION_BOUND)?.correct(measured, clip)
}

/// Multinomial counts by sequential conditional binomials on ChaCha8.
pub fn sample_shots(probs: &[f64], n_shots: u64, seed: u64) -> Result<Vec<u64>> {
    if n_shots == 0 {
        return Err(Error::invalid("shots", "at least one shot is required"));
    }
    if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid("probs", "probabilities must be finite and non-negative"));
    }
    check_distribution(probs, "probs")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = n_shots;
    let mut mass: f64 = probs.iter().sum();
    let mut counts = Vec::with_capacity(probs.len());
    for &p in probs {
        let k = if remaining == 0 || p <= 0.0 {
            0
        } else if p >= mass {
            remaining
        } else {
            Binomial::new(remaining, (p / mass).min(1.0))
                .map_err(|e| Error::invalid("probs", e.to_string()))?
                .sample(&mut rng)
        };
        counts.push(k);
        remaining -= k;
        mass -= p;
    }
    Ok(counts)
}

pub fn frequencies(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}
