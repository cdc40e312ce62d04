//! Truncated multi-mode bosonic Hilbert spaces.
//!
//! A [`Basis`] enumerates every occupation pattern of `N` modes, each truncated
//! to `d` levels, in lexicographic order (mode 0 is the most significant
//! digit). Operators are stored sparsely in an ordered map so that iteration
//! order, and therefore every floating-point reduction built on it, is the
//! same on every run.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Default upper bound on the number of basis states.
pub const DEFAULT_BASIS_CAP: usize = 10_000_000;

/// Entries with magnitude at or below this are never stored.
pub const ZERO_CUTOFF: f64 = 1e-15;

/// Occupation-number state of `N` truncated bosonic modes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState {
    occupations: Vec<u8>,
    level_cap: u8,
}

impl FockState {
    pub fn new(occupations: Vec<u8>, level_cap: u8) -> Result<Self> {
        if level_cap < 2 {
            return Err(Error::invalid("level_cap", "must be at least 2"));
        }
        if let Some(bad) = occupations.iter().find(|&&n| n >= level_cap) {
            return Err(Error::invalid(
                "occupations",
                format!("occupation {bad} exceeds level cap {level_cap}"),
            ));
        }
        Ok(Self {
            occupations,
            level_cap,
        })
    }

    /// Parse an occupation string such as `"0201"` (or `"|0201>"`).
    pub fn parse(text: &str, level_cap: u8) -> Result<Self> {
        let digits = text.trim().trim_start_matches('|').trim_end_matches(['>', '⟩']);
        let occupations = digits
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::parse("fock state", format!("bad digit `{c}` in `{text}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if occupations.is_empty() {
            return Err(Error::parse("fock state", "empty occupation string"));
        }
        Self::new(occupations, level_cap)
    }

    pub fn occupations(&self) -> &[u8] {
        &self.occupations
    }

    pub fn level_cap(&self) -> u8 {
        self.level_cap
    }

    pub fn num_modes(&self) -> usize {
        self.occupations.len()
    }

    pub fn total(&self) -> u32 {
        self.occupations.iter().map(|&n| n as u32).sum()
    }

    /// Occupations as a compact digit string, e.g. `0201`.
    pub fn label(&self) -> String {
        self.occupations.iter().map(|n| char::from(b'0' + n)).collect()
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}⟩", self.label())
    }
}

/// Ordered list of Fock states with a reverse lookup.
#[derive(Clone, Debug)]
pub struct Basis {
    num_modes: usize,
    level_cap: u8,
    states: Vec<FockState>,
    index: HashMap<Vec<u8>, usize>,
}

impl Basis {
    fn from_states(num_modes: usize, level_cap: u8, states: Vec<FockState>) -> Self {
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.occupations.clone(), i))
            .collect();
        Self {
            num_modes,
            level_cap,
            states,
            index,
        }
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn level_cap(&self) -> u8 {
        self.level_cap
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &FockState {
        &self.states[i]
    }

    pub fn index_of(&self, state: &FockState) -> Option<usize> {
        self.index_of_occupations(state.occupations())
    }

    pub fn index_of_occupations(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }
}

/// Enumerate the full truncated space with the default size cap.
pub fn build_basis(num_modes: usize, level_cap: u8) -> Result<Basis> {
    build_basis_capped(num_modes, level_cap, DEFAULT_BASIS_CAP)
}

pub fn build_basis_capped(num_modes: usize, level_cap: u8, cap: usize) -> Result<Basis> {
    if num_modes == 0 {
        return Err(Error::invalid("num_modes", "must be at least 1"));
    }
    if level_cap < 2 {
        return Err(Error::invalid("level_cap", "must be at least 2"));
    }
    let requested = (level_cap as u128).checked_pow(num_modes as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::BasisTooLarge { requested, cap });
    }
    let size = requested as usize;
    let d = level_cap as usize;
    let states = (0..size)
        .map(|mut k| {
            let mut occ = vec![0u8; num_modes];
            for slot in occ.iter_mut().rev() {
                *slot = (k % d) as u8;
                k /= d;
            }
            FockState {
                occupations: occ,
                level_cap,
            }
        })
        .collect();
    Ok(Basis::from_states(num_modes, level_cap, states))
}

/// Sparse complex square matrix with deterministic (row-major) iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    entries: BTreeMap<(usize, usize), C64>,
}

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, C64::new(v, 0.0));
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries.get(&(row, col)).copied().unwrap_or_default()
    }

    /// Overwrite an entry; values at or below [`ZERO_CUTOFF`] remove it.
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        assert!(row < self.dim && col < self.dim, "entry ({row}, {col}) outside {0}x{0}", self.dim);
        if value.norm() <= ZERO_CUTOFF {
            self.entries.remove(&(row, col));
        } else {
            self.entries.insert((row, col), value);
        }
    }

    pub fn add_to(&mut self, row: usize, col: usize, value: C64) {
        let v = self.get(row, col) + value;
        self.set(row, col, v);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.entries.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for (r, c, v) in self.iter() {
            out.set(c, r, v.conj());
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = Self::zeros(self.dim);
        for (r, c, v) in self.iter() {
            out.set(r, c, v * factor);
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (r, c, v) in other.iter() {
            out.add_to(r, c, v);
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    /// Sparse matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut by_row: Vec<Vec<(usize, C64)>> = vec![Vec::new(); other.dim];
        for (r, c, v) in other.iter() {
            by_row[r].push((c, v));
        }
        let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (r, k, a) in self.iter() {
            for &(c, b) in &by_row[k] {
                *acc.entry((r, c)).or_default() += a * b;
            }
        }
        let mut out = Self::zeros(self.dim);
        for ((r, c), v) in acc {
            out.set(r, c, v);
        }
        out
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).minus(&other.matmul(self))
    }

    /// `y = self * x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![C64::default(); self.dim];
        for (r, c, v) in self.iter() {
            y[r] += v * x[c];
        }
        y
    }

    /// Largest `|H_ij - conj(H_ji)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        self.iter()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().map(|(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    /// Hermiticity within a tolerance relative to the largest entry.
    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermitian_deviation() <= rel_tol * self.max_abs().max(1.0)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let mut out = Self::zeros(m.nrows());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.set(r, c, m[(r, c)]);
            }
        }
        out
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from(self)
    }
}

/// Compressed-row copy of an [`OperatorMatrix`] for repeated products.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl From<&OperatorMatrix> for CsrMatrix {
    fn from(m: &OperatorMatrix) -> Self {
        let mut row_ptr = vec![0usize; m.dim + 1];
        let mut cols = Vec::with_capacity(m.nnz());
        let mut vals = Vec::with_capacity(m.nnz());
        for (r, c, v) in m.iter() {
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..m.dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            dim: m.dim,
            row_ptr,
            cols,
            vals,
        }
    }
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `y += self * x`.
    pub fn apply_add(&self, x: &[C64], y: &mut [C64]) {
        for r in 0..self.dim {
            let mut acc = C64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] += acc;
        }
    }
}

fn check_mode(mode: usize, basis: &Basis) -> Result<()> {
    if mode >= basis.num_modes() {
        return Err(Error::ModeOutOfRange {
            mode,
            num_modes: basis.num_modes(),
        });
    }
    Ok(())
}

/// Truncated annihilation operator `a_mode`.
pub fn annihilation(mode: usize, basis: &Basis) -> Result<OperatorMatrix> {
    check_mode(mode, basis)?;
    let mut op = OperatorMatrix::zeros(basis.len());
    let mut target = vec![0u8; basis.num_modes()];
    for (col, state) in basis.states().iter().enumerate() {
        let n = state.occupations[mode];
        if n == 0 {
            continue;
        }
        target.copy_from_slice(&state.occupations);
        target[mode] = n - 1;
        if let Some(row) = basis.index_of_occupations(&target) {
            op.set(row, col, C64::new((n as f64).sqrt(), 0.0));
        }
    }
    Ok(op)
}

pub fn creation(mode: usize, basis: &Basis) -> Result<OperatorMatrix> {
    Ok(annihilation(mode, basis)?.adjoint())
}

/// Number operator `n_mode`, built directly as a diagonal.
pub fn number(mode: usize, basis: &Basis) -> Result<OperatorMatrix> {
    check_mode(mode, basis)?;
    let diag: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| s.occupations[mode] as f64)
        .collect();
    Ok(OperatorMatrix::from_diagonal(&diag))
}

/// Selection rules for [`project_subspace`].
#[derive(Clone, Debug, PartialEq)]
pub enum SubspaceRule {
    /// Fixed total photon number.
    TotalPhotons(u32),
    /// Exactly `count` modes raised by one level above `ground`, all others
    /// at their ground occupation.
    ExcitationsAbove { ground: Vec<u8>, count: usize },
}

impl SubspaceRule {
    pub fn accepts(&self, state: &FockState) -> bool {
        match self {
            SubspaceRule::TotalPhotons(n) => state.total() == *n,
            SubspaceRule::ExcitationsAbove { ground, count } => {
                if ground.len() != state.num_modes() {
                    return false;
                }
                let mut raised = 0;
                for (&n, &g) in state.occupations().iter().zip(ground) {
                    match n.checked_sub(g) {
                        Some(0) => {}
                        Some(1) => raised += 1,
                        _ => return false,
                    }
                }
                raised == *count
            }
        }
    }
}

/// A sub-basis together with its embedding into the parent basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    basis: Basis,
    embedding: Vec<usize>,
    parent_dim: usize,
}

impl Subspace {
    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Parent index of each sub-basis state.
    pub fn embedding(&self) -> &[usize] {
        &self.embedding
    }

    pub fn dim(&self) -> usize {
        self.embedding.len()
    }

    pub fn parent_dim(&self) -> usize {
        self.parent_dim
    }

    /// Compress a parent-space operator onto the subspace: `P^T O P`.
    pub fn project_operator(&self, op: &OperatorMatrix) -> Result<OperatorMatrix> {
        if op.dim() != self.parent_dim {
            return Err(Error::DimensionMismatch {
                expected: self.parent_dim,
                found: op.dim(),
            });
        }
        let mut inverse = vec![usize::MAX; self.parent_dim];
        for (sub, &parent) in self.embedding.iter().enumerate() {
            inverse[parent] = sub;
        }
        let mut out = OperatorMatrix::zeros(self.dim());
        for (r, c, v) in op.iter() {
            let (sr, sc) = (inverse[r], inverse[c]);
            if sr != usize::MAX && sc != usize::MAX {
                out.set(sr, sc, v);
            }
        }
        Ok(out)
    }

    /// Lift a subspace vector into the parent space (zeros elsewhere).
    pub fn embed<T: Copy + Default>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); self.parent_dim];
        for (&parent, &x) in self.embedding.iter().zip(v) {
            out[parent] = x;
        }
        out
    }

    /// Keep only the subspace components of a parent vector.
    pub fn restrict<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.embedding.iter().map(|&p| v[p]).collect()
    }
}

pub fn project_subspace(basis: &Basis, rule: &SubspaceRule) -> Result<Subspace> {
    project_subspace_with(basis, |s| rule.accepts(s))
}

/// Project with an arbitrary predicate on occupations.
pub fn project_subspace_with(basis: &Basis, keep: impl Fn(&FockState) -> bool) -> Result<Subspace> {
    let embedding: Vec<usize> = (0..basis.len()).filter(|&i| keep(basis.state(i))).collect();
    if embedding.is_empty() {
        return Err(Error::EmptySubspace);
    }
    let states = embedding.iter().map(|&i| basis.state(i).clone()).collect();
    Ok(Subspace {
        basis: Basis::from_states(basis.num_modes(), basis.level_cap(), states),
        embedding,
        parent_dim: basis.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn basis_sizes_and_order() {
        assert_eq!(build_basis(4, 3).unwrap().len(), 81);
        assert_eq!(build_basis(6, 3).unwrap().len(), 729);
        let single = build_basis(1, 3).unwrap();
        let labels: Vec<_> = single.states().iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["0", "1", "2"]);
        let two = build_basis(2, 3).unwrap();
        assert_eq!(two.state(1).label(), "01");
        assert_eq!(two.state(3).label(), "10");
    }

    #[test]
    fn basis_rejects_bad_sizes() {
        assert!(matches!(build_basis(0, 3), Err(Error::InvalidParameter { .. })));
        assert!(matches!(build_basis(3, 1), Err(Error::InvalidParameter { .. })));
        assert!(matches!(build_basis(15, 3), Err(Error::BasisTooLarge { .. })));
        assert!(matches!(
            build_basis_capped(4, 3, 80),
            Err(Error::BasisTooLarge { requested: 81, cap: 80 })
        ));
    }

    #[test]
    fn annihilation_matrix_elements() {
        let b = build_basis(1, 3).unwrap();
        let a = annihilation(0, &b).unwrap();
        let out = a.apply(&[c(0.0), c(0.0), c(1.0)]);
        assert!((out[1].re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(out[0], C64::default());
        let vac = a.apply(&[c(1.0), c(0.0), c(0.0)]);
        assert!(vac.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn hopping_element_carries_sqrt_two() {
        let b = build_basis(2, 3).unwrap();
        let hop = creation(0, &b).unwrap().matmul(&annihilation(1, &b).unwrap());
        let row = b.index_of(&FockState::parse("11", 3).unwrap()).unwrap();
        let col = b.index_of(&FockState::parse("02", 3).unwrap()).unwrap();
        assert!((hop.get(row, col).re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mode_out_of_range() {
        let b = build_basis(2, 3).unwrap();
        assert!(matches!(annihilation(2, &b), Err(Error::ModeOutOfRange { mode: 2, .. })));
    }

    #[test]
    fn truncated_commutator_is_exact() {
        let b = build_basis(3, 3).unwrap();
        for mode in 0..3 {
            let a = annihilation(mode, &b).unwrap();
            let comm = a.commutator(&a.adjoint());
            for (i, s) in b.states().iter().enumerate() {
                let expected = if s.occupations()[mode] == 2 { -2.0 } else { 1.0 };
                assert!((comm.get(i, i).re - expected).abs() < 1e-14, "mode {mode} state {s}");
            }
            assert!(comm.iter().all(|(r, c, _)| r == c));
        }
    }

    #[test]
    fn distinct_modes_commute() {
        let b = build_basis(3, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let ai = annihilation(i, &b).unwrap();
                let aj = annihilation(j, &b).unwrap();
                assert!(ai.commutator(&aj).max_abs() < 1e-14);
                assert!(ai.commutator(&aj.adjoint()).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn number_is_adag_a() {
        let b = build_basis(3, 3).unwrap();
        for mode in 0..3 {
            let a = annihilation(mode, &b).unwrap();
            let n = number(mode, &b).unwrap();
            assert!(a.adjoint().matmul(&a).minus(&n).max_abs() < 1e-14);
        }
    }

    #[test]
    fn three_photon_subspace_contains_plaquette_sites() {
        let b = build_basis(4, 3).unwrap();
        let sub = project_subspace(&b, &SubspaceRule::TotalPhotons(3)).unwrap();
        for label in ["0201", "0111", "0102", "1101"] {
            let s = FockState::parse(label, 3).unwrap();
            assert!(sub.basis().index_of(&s).is_some(), "{label}");
        }
        let vac = project_subspace(&b, &SubspaceRule::TotalPhotons(0)).unwrap();
        assert_eq!(vac.dim(), 1);
        assert_eq!(vac.basis().state(0).label(), "0000");
        assert!(matches!(
            project_subspace(&b, &SubspaceRule::TotalPhotons(9)),
            Err(Error::EmptySubspace)
        ));
    }

    #[test]
    fn two_excitations_above_staggered_ground() {
        let b = build_basis(6, 3).unwrap();
        let rule = SubspaceRule::ExcitationsAbove {
            ground: vec![0, 1, 0, 1, 0, 1],
            count: 2,
        };
        assert_eq!(project_subspace(&b, &rule).unwrap().dim(), 15);
    }

    #[test]
    fn embed_then_restrict_is_identity() {
        let b = build_basis(4, 3).unwrap();
        let sub = project_subspace(&b, &SubspaceRule::TotalPhotons(3)).unwrap();
        let v: Vec<C64> = (0..sub.dim()).map(|i| C64::new(i as f64, -(i as f64))).collect();
        assert_eq!(sub.restrict(&sub.embed(&v)), v);
        let n0 = number(0, &b).unwrap();
        let projected = sub.project_operator(&n0).unwrap();
        for (i, s) in sub.basis().states().iter().enumerate() {
            assert_eq!(projected.get(i, i).re, s.occupations()[0] as f64);
        }
    }

    #[test]
    fn explicit_zeros_are_not_stored() {
        let mut m = OperatorMatrix::zeros(2);
        m.set(0, 1, C64::new(1e-16, 0.0));
        assert_eq!(m.nnz(), 0);
        m.set(0, 1, c(1.0));
        m.add_to(0, 1, c(-1.0));
        assert_eq!(m.nnz(), 0);
    }
}
