//! Dense complex-matrix kernel for small Hilbert spaces.
//!
//! Everything here is sized for `2 <= n <= ~10`: matrices are stored
//! row-major in a flat `Vec`, products allocate, and the Hermitian
//! eigensolver uses a closed form for `n = 2` and cyclic complex Jacobi
//! rotations above that.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

/// Hermiticity tolerance shared by the kernel's preconditions.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Unitarity tolerance shared by the kernel's preconditions.
pub const UNITARY_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as one degenerate block.
pub const DEGENERACY_GAP: f64 = 1e-10;
/// Smallest pivot norm accepted by [`gram_schmidt`].
pub const PIVOT_TOL: f64 = 1e-10;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}x{0} vs {1}x{1}")]
    DimensionMismatch(usize, usize),

    #[error("expected {expected} entries for a square matrix, got {got}")]
    BadShape { expected: usize, got: usize },

    #[error("matrix is not Hermitian (residual {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (residual {0:e})")]
    NotUnitary(f64),

    #[error("Jacobi diagonalization did not converge after {sweeps} sweeps (off-diagonal mass {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("vector {index} is linearly dependent on its predecessors (pivot norm {pivot:e})")]
    DependentVectors { index: usize, pivot: f64 },

    #[error("empty input")]
    Empty,
}

pub type LinalgResult<T> = std::result::Result<T, LinalgError>;

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn new(dim: usize, data: Vec<C64>) -> LinalgResult<Self> {
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != dim * dim {
            return Err(LinalgError::BadShape {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from nested rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> LinalgResult<Self> {
        let dim = rows.len();
        let data: Vec<C64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(LinalgError::BadShape {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Self::new(dim, data)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> LinalgResult<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// `|psi><psi|`.
    pub fn projector(psi: &[C64]) -> Self {
        Self::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj())
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).expect("2x2")
    }

    pub fn pauli_y() -> Self {
        let z = C64::new(0.0, 0.0);
        Self {
            dim: 2,
            data: vec![z, C64::new(0.0, -1.0), C64::new(0.0, 1.0), z],
        }
    }

    pub fn pauli_z() -> Self {
        Self::from_real_diag(&[1.0, -1.0])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_c(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm of the strictly off-diagonal part.
    pub fn offdiag_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j {
                    acc += self[(i, j)].norm_sqr();
                }
            }
        }
        acc.sqrt()
    }

    /// Largest entrywise deviation `|a_ij - conj(a_ji)|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol
    }

    /// Largest entrywise deviation of `U^dagger U` from the identity.
    pub fn unitarity_residual(&self) -> f64 {
        let g = &self.adjoint() * self;
        let id = Self::identity(self.dim);
        g.data
            .iter()
            .zip(&id.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_residual() <= tol
    }

    /// `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    fn check_same_dim(&self, other: &Self) -> LinalgResult<()> {
        if self.dim != other.dim {
            Err(LinalgError::DimensionMismatch(self.dim, other.dim))
        } else {
            Ok(())
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{}) [", self.dim, self.dim)?;
        for row in self.data.chunks(self.dim) {
            write!(f, "  ")?;
            for z in row {
                write!(f, "{:>10.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// The operator impls panic on dimension mismatch, like ndarray. The
// checked public operations below return `LinalgError` instead.

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix product dimension mismatch");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix sum dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix difference dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;

    fn neg(self) -> CMatrix {
        self.map(|z| -z)
    }
}

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .data
            .chunks(self.dim)
            .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        CMatrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    /// Real eigenvalues, descending.
    pub values: Vec<f64>,
    /// Unitary matrix whose column `j` is the eigenvector of `values[j]`.
    pub basis: CMatrix,
}

impl EigenPair {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, j: usize) -> Vec<C64> {
        self.basis.column(j)
    }

    /// `B diag(f(values)) B^dagger`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.dim();
        let b = &self.basis;
        let w: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        CMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| b[(i, k)] * w[k] * b[(j, k)].conj()).sum()
        })
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.reconstruct_with(|l| C64::new(l, 0.0))
    }

    /// `exp(sign * i * A * t)` from the cached decomposition.
    pub fn exp_i(&self, t: f64, sign: ExpSign) -> CMatrix {
        let s = sign.factor();
        self.reconstruct_with(|l| C64::from_polar(1.0, s * l * t))
    }

    /// Smallest gap between consecutive eigenvalues (infinite for n = 1).
    pub fn min_gap(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sign of the exponent in [`expm_i_hermitian`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpSign {
    Plus,
    Minus,
}

impl ExpSign {
    pub fn factor(self) -> f64 {
        match self {
            ExpSign::Plus => 1.0,
            ExpSign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            ExpSign::Plus => ExpSign::Minus,
            ExpSign::Minus => ExpSign::Plus,
        }
    }
}

/// `AB - BA`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> LinalgResult<CMatrix> {
    a.check_same_dim(b)?;
    Ok(&(a * b) - &(b * a))
}

/// `tr(AB)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> LinalgResult<C64> {
    a.check_same_dim(b)?;
    Ok(trace_product_unchecked(a, b))
}

pub(crate) fn trace_product_unchecked(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.dim;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a.data[i * n + j] * b.data[j * n + i];
        }
    }
    acc
}

/// `||A - B||_F^2 = tr((A-B)^dagger (A-B))`.
pub fn frobenius_distance_sq(a: &CMatrix, b: &CMatrix) -> LinalgResult<f64> {
    a.check_same_dim(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum())
}

/// `U A U^dagger`; `u` must be unitary.
pub fn unitary_conjugate(u: &CMatrix, a: &CMatrix) -> LinalgResult<CMatrix> {
    u.check_same_dim(a)?;
    let r = u.unitarity_residual();
    if r > UNITARY_TOL {
        return Err(LinalgError::NotUnitary(r));
    }
    Ok(conjugate_unchecked(u, a))
}

/// `U A U^dagger` for a `u` already known to be unitary.
pub(crate) fn conjugate_unchecked(u: &CMatrix, a: &CMatrix) -> CMatrix {
    &(u * a) * &u.adjoint()
}

/// `exp(sign * i * h * t)` via the eigen-decomposition of `h`.
pub fn expm_i_hermitian(h: &CMatrix, t: f64, sign: ExpSign) -> LinalgResult<CMatrix> {
    Ok(eig_hermitian(h)?.exp_i(t, sign))
}

/// `<a|b>`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
///
/// The first output is the normalized first input. Fails when a pivot
/// norm drops to [`PIVOT_TOL`] or below.
pub fn gram_schmidt(vectors: &[Vec<C64>]) -> LinalgResult<Vec<Vec<C64>>> {
    let first = vectors.first().ok_or(LinalgError::Empty)?;
    let n = first.len();
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(vectors.len());
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != n {
            return Err(LinalgError::DimensionMismatch(n, v.len()));
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = inner(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let pivot = vec_norm(&w);
        if pivot <= PIVOT_TOL {
            return Err(LinalgError::DependentVectors { index, pivot });
        }
        w.iter_mut().for_each(|z| *z /= pivot);
        out.push(w);
    }
    Ok(out)
}

/// Rotates `v` so its largest-magnitude component is real and positive.
///
/// Near-ties go to the lowest index.
pub fn fix_phase(v: &mut [C64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .expect("nonempty");
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
    v[pivot] = C64::new(v[pivot].re, 0.0);
}

/// Hermitian eigen-decomposition with descending eigenvalues and
/// phase-fixed eigenvectors.
pub fn eig_hermitian(a: &CMatrix) -> LinalgResult<EigenPair> {
    let r = a.hermiticity_residual();
    if r > HERMITIAN_TOL {
        return Err(LinalgError::NotHermitian(r));
    }
    let a = a.hermitian_part();
    let (values, basis) = match a.dim {
        1 => (vec![a[(0, 0)].re], CMatrix::identity(1)),
        2 => eig2(&a),
        _ => jacobi(&a)?,
    };
    Ok(canonicalize(values, basis))
}

fn eig2(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (p, q, b) = (a[(0, 0)].re, a[(1, 1)].re, a[(0, 1)]);
    let mean = 0.5 * (p + q);
    let half = 0.5 * (p - q);
    let radius = half.hypot(b.norm());
    let (hi, lo) = (mean + radius, mean - radius);
    let scale = p.abs().max(q.abs()).max(b.norm()).max(f64::MIN_POSITIVE);
    if b.norm() <= 1e-15 * scale {
        // Already diagonal; canonicalize sorts.
        return (vec![p, q], CMatrix::identity(2));
    }
    // Two null vectors of (A - hi I); keep the better conditioned one.
    let u1 = [b, C64::new(hi - p, 0.0)];
    let u2 = [C64::new(hi - q, 0.0), b.conj()];
    let u = if vec_norm(&u1) >= vec_norm(&u2) { u1 } else { u2 };
    let nu = vec_norm(&u);
    let v0 = [u[0] / nu, u[1] / nu];
    let v1 = [-v0[1].conj(), v0[0].conj()];
    let basis = CMatrix::new(2, vec![v0[0], v1[0], v0[1], v1[1]]).expect("2x2");
    (vec![hi, lo], basis)
}

fn jacobi(a: &CMatrix) -> LinalgResult<(Vec<f64>, CMatrix)> {
    let n = a.dim;
    let mut m = a.clone();
    let mut v = CMatrix::identity(n);
    let scale = m.frobenius_norm();
    if scale == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    let tol = JACOBI_TOL * scale;
    let mut off = m.offdiag_norm();
    let mut sweeps = 0;
    while off >= tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps, off });
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                jacobi_rotate(&mut m, &mut v, p, q);
            }
        }
        sweeps += 1;
        off = m.offdiag_norm();
    }
    Ok(((0..n).map(|i| m[(i, i)].re).collect(), v))
}

/// Zeroes `m[p][q]` with the unitary `V = diag(1, e^{-i phi}) R(theta)`
/// acting on the `(p, q)` plane, and accumulates `V` into `vecs`.
fn jacobi_rotate(m: &mut CMatrix, vecs: &mut CMatrix, p: usize, q: usize) {
    let n = m.dim;
    let apq = m[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let phase = apq / r;
    let tau = (m[(q, q)].re - m[(p, p)].re) / (2.0 * r);
    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let e = phase.conj();

    let rotate_cols = |x: &mut CMatrix| {
        for k in 0..n {
            let (xp, xq) = (x[(k, p)], x[(k, q)]);
            x[(k, p)] = xp * c - xq * e * s;
            x[(k, q)] = xp * s + xq * e * c;
        }
    };
    rotate_cols(m);
    rotate_cols(vecs);
    for k in 0..n {
        let (xp, xq) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = xp * c - xq * phase * s;
        m[(q, k)] = xp * s + xq * phase * c;
    }
    m[(p, q)] = C64::new(0.0, 0.0);
    m[(q, p)] = C64::new(0.0, 0.0);
    m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
    m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
}

/// Sorts descending, re-orthonormalizes degenerate blocks, fixes phases.
fn canonicalize(values: Vec<f64>, basis: CMatrix) -> EigenPair {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut cols: Vec<Vec<C64>> = order.iter().map(|&i| basis.column(i)).collect();

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sorted[end - 1] - sorted[end] < DEGENERACY_GAP {
            end += 1;
        }
        if end - start > 1 {
            if let Ok(block) = gram_schmidt(&cols[start..end]) {
                cols.splice(start..end, block);
            }
        }
        start = end;
    }
    for c in cols.iter_mut() {
        fix_phase(c);
    }
    let basis = CMatrix::from_fn(n, |i, j| cols[j][i]);
    EigenPair {
        values: sorted,
        basis,
    }
}
