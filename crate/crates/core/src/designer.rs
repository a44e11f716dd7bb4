//! Construction of the virtual observable `P` and the certificate that the
//! closed loop converges to the target rather than another limit state.
//!
//! Two target classes are covered: a pure superposition target (`P` built
//! on an orthonormal completion of `psi_f`) and a target that is diagonal
//! in the working frame (`P` diagonal and anti-ordered against it).

// Negated comparisons below are deliberate: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::{Deserialize, Serialize};

use crate::hermat::{self, gram_schmidt, CMatrix, C64};
use crate::lyapunov::{Provenance, VirtualObservable};
use crate::model::DensityMatrix;
use crate::verify::{self, AssumptionReport};
use crate::{Error, Result};

/// Largest dimension for which limit states are enumerated (`n!` of them).
pub const MAX_ENUM_DIM: usize = 8;
/// Smallest admissible gap between eigenvalues of `P`.
pub const COLLISION_GAP: f64 = 1e-9;
/// Smallest admissible difference between two weights.
pub const WEIGHT_GAP: f64 = 1e-6;
/// Overlaps at or below this make the weight bound undefined.
pub const OVERLAP_FLOOR: f64 = 1e-12;
/// States closer than this (squared Frobenius) to the target count as the
/// target.
pub const SAME_STATE_TOL: f64 = 1e-8;

const DIAGONAL_STEP: f64 = 0.1;
const RAISE_FACTOR: f64 = 1.5;
const MAX_RAISES: usize = 60;

/// Parameters of a superposition design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    /// Smallest eigenvalue of `P`, attached to the target.
    pub p1: f64,
    /// `g_2..g_n`; the other eigenvalues are `g_k p1`.
    pub weights: Vec<f64>,
    /// Vectors completing `psi_f` to a basis. When absent, standard basis
    /// vectors are picked greedily.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<Vec<Vec<C64>>>,
}

/// `max{(1 - tr(rho_f rho0)) / tr(rho_k rho0), 1}`.
pub fn weight_bound(rho_f: &CMatrix, rho0: &CMatrix, rho_k: &CMatrix) -> Result<f64> {
    let overlap = hermat::trace_product(rho_k, rho0)?.re;
    if overlap <= OVERLAP_FLOOR {
        return Err(Error::UndefinedBound { index: 0, overlap });
    }
    let target = hermat::trace_product(rho_f, rho0)?.re;
    Ok(((1.0 - target) / overlap).max(1.0))
}

/// Standard basis vectors with the largest residual against the current
/// span, ties to the lowest index.
fn greedy_completion(psi_f: &[C64]) -> Vec<Vec<C64>> {
    let n = psi_f.len();
    let mut span = vec![psi_f.iter().map(|z| z / hermat::vec_norm(psi_f)).collect::<Vec<_>>()];
    let mut chosen = Vec::with_capacity(n - 1);
    let mut used = vec![false; n];
    while span.len() < n {
        let mut best: Option<(usize, f64, Vec<C64>)> = None;
        for (e, _) in used.iter().enumerate().filter(|(_, u)| !**u) {
            let mut w = vec![C64::new(0.0, 0.0); n];
            w[e] = C64::new(1.0, 0.0);
            for q in &span {
                let c = hermat::inner(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
            let r = hermat::vec_norm(&w);
            if best.as_ref().is_none_or(|(_, b, _)| r > *b + 1e-12) {
                best = Some((e, r, w));
            }
        }
        let (e, r, w) = best.expect("fewer than n vectors chosen");
        used[e] = true;
        span.push(w.iter().map(|z| z / r).collect());
        let mut basis = vec![C64::new(0.0, 0.0); n];
        basis[e] = C64::new(1.0, 0.0);
        chosen.push(basis);
    }
    chosen
}

/// `P = p1 |s_1><s_1| + sum_k g_k p1 |s_k><s_k|` with `s_1 = psi_f` and the
/// remaining `s_k` from Gram-Schmidt on the completion.
///
/// Fails unless every weight exceeds its [`weight_bound`], the weights are
/// pairwise distinct, and `p1 <= tr(P rho0) < g_k p1` holds for every k
/// (equality on the left only when `rho0` is the target).
pub fn design_superposition_p(
    psi_f: &[C64],
    rho0: &DensityMatrix,
    params: &DesignParams,
) -> Result<VirtualObservable> {
    let n = psi_f.len();
    if rho0.dim() != n {
        return Err(hermat::LinalgError::DimensionMismatch(n, rho0.dim()).into());
    }
    let norm = hermat::vec_norm(psi_f);
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!("target ket has norm {norm}")));
    }
    if !(params.p1 > 0.0 && params.p1.is_finite()) {
        return Err(Error::Precondition(format!("p1 = {} must be positive", params.p1)));
    }
    if params.weights.len() != n - 1 {
        return Err(Error::LengthMismatch {
            expected: n - 1,
            got: params.weights.len(),
        });
    }
    let completion = match &params.completion {
        Some(c) => {
            if c.len() != n - 1 {
                return Err(Error::LengthMismatch {
                    expected: n - 1,
                    got: c.len(),
                });
            }
            c.clone()
        }
        None => greedy_completion(psi_f),
    };
    let mut vectors = vec![psi_f.to_vec()];
    vectors.extend(completion);
    let basis = gram_schmidt(&vectors)?;

    let rho_f = CMatrix::projector(&basis[0]);
    let projectors: Vec<CMatrix> = basis.iter().map(|s| CMatrix::projector(s)).collect();
    for (j, &g) in params.weights.iter().enumerate() {
        let k = j + 2;
        let bound = weight_bound(&rho_f, rho0.matrix(), &projectors[j + 1]).map_err(|e| match e {
            Error::UndefinedBound { overlap, .. } => Error::UndefinedBound { index: k, overlap },
            e => e,
        })?;
        if !(g > bound) {
            return Err(Error::WeightBelowBound {
                index: k,
                weight: g,
                bound,
            });
        }
    }
    for a in 0..params.weights.len() {
        for b in a + 1..params.weights.len() {
            if (params.weights[a] - params.weights[b]).abs() <= WEIGHT_GAP {
                return Err(Error::WeightsNotDistinct {
                    first: a + 2,
                    second: b + 2,
                });
            }
        }
    }

    let eigenvalues: Vec<f64> = std::iter::once(params.p1)
        .chain(params.weights.iter().map(|g| g * params.p1))
        .collect();
    let mut p = CMatrix::zeros(n);
    for (proj, &pk) in projectors.iter().zip(&eigenvalues) {
        p = &p + &proj.scale(pk);
    }
    let obs = VirtualObservable::new(p, Provenance::SuperpositionDesign)?;
    let gap = obs.eig().min_gap();
    if gap < COLLISION_GAP {
        return Err(Error::EigenvalueCollision(gap));
    }

    let v0 = hermat::trace_product(obs.matrix(), rho0.matrix())?.re;
    let at_target = hermat::frobenius_distance_sq(&rho_f, rho0.matrix())? < SAME_STATE_TOL;
    let lower_ok = if at_target { v0 >= params.p1 - 1e-12 } else { v0 > params.p1 };
    let upper = eigenvalues[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    if !lower_ok || !(v0 < upper) {
        return Err(Error::ChainViolated(format!(
            "need {} < {v0} < {upper}",
            params.p1
        )));
    }
    Ok(obs)
}

/// Diagonal `P` anti-ordered against the diagonal target `d_f`, tuned until
/// `tr(P d_f) < tr(P rho0) < tr(P rho_s)` holds for every permutation
/// state `rho_s` of the target spectrum.
///
/// Starts from `p_k = (r_k + 1) * 0.1` where `r_k` is the descending rank of
/// `(d_f)_kk`. While the order fails, the entry `k` maximizing
/// `(rho0)_kk - (d_f)_kk` over those with `(d_f)_kk < (rho0)_kk` is raised
/// by half, skipping entries whose raise would break anti-ordering.
///
/// `u_equiv` must carry `d_f` onto `rho0` to within `10 tol`; the spectra of
/// the two states must agree within `tol`.
pub fn design_diagonal_p(
    d_f: &DensityMatrix,
    rho0: &DensityMatrix,
    u_equiv: &CMatrix,
    tol: f64,
) -> Result<VirtualObservable> {
    let n = d_f.dim();
    if n > MAX_ENUM_DIM {
        return Err(Error::TooLarge { n, max: MAX_ENUM_DIM });
    }
    if rho0.dim() != n || u_equiv.dim() != n {
        return Err(hermat::LinalgError::DimensionMismatch(n, rho0.dim().max(u_equiv.dim())).into());
    }
    let off = d_f.matrix().offdiag_norm();
    if off > 1e-10 {
        return Err(Error::Precondition(format!("target is not diagonal (off-diagonal norm {off:e})")));
    }
    let lambda: Vec<f64> = d_f.matrix().diagonal().iter().map(|z| z.re).collect();
    let mut sorted = lambda.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let gap = sorted.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    if gap <= COLLISION_GAP {
        return Err(Error::DegenerateTarget(gap));
    }
    let equiv = verify::unitary_equivalent(rho0.matrix(), d_f.matrix(), tol)?;
    if !equiv.ok {
        return Err(Error::NotEquivalent(equiv.mismatch));
    }
    let moved = hermat::unitary_conjugate(u_equiv, d_f.matrix())?;
    let residual = (&moved - rho0.matrix()).frobenius_norm();
    if residual > 10.0 * tol.max(1e-12) {
        return Err(Error::Precondition(format!(
            "u_equiv does not carry the target onto rho0 (residual {residual:e})"
        )));
    }

    let r0: Vec<f64> = rho0.matrix().diagonal().iter().map(|z| z.re).collect();
    let mut p: Vec<f64> = lambda
        .iter()
        .map(|l| (sorted.iter().position(|s| s == l).expect("present") + 1) as f64 * DIAGONAL_STEP)
        .collect();

    let states = permutation_diagonals(&lambda);
    let mut witness = Vec::new();
    for _ in 0..=MAX_RAISES {
        match diagonal_chain_failure(&p, &lambda, &r0, &states) {
            None => {
                return VirtualObservable::new(CMatrix::from_real_diag(&p), Provenance::DiagonalDesign);
            }
            Some(w) => witness = w,
        }
        let mut candidates: Vec<usize> = (0..n).filter(|&k| lambda[k] < r0[k]).collect();
        candidates.sort_by(|&a, &b| (r0[b] - lambda[b]).total_cmp(&(r0[a] - lambda[a])).then(a.cmp(&b)));
        let raised = candidates.into_iter().find(|&k| {
            let new = raise(p[k]);
            (0..n).all(|j| j == k || (lambda[k] - lambda[j]) * (new - p[j]) < 0.0)
        });
        match raised {
            Some(k) => p[k] = raise(p[k]),
            None => break,
        }
    }
    Err(Error::NoValidP {
        iterations: MAX_RAISES,
        witness,
    })
}

fn raise(p: f64) -> f64 {
    if p == 0.0 {
        DIAGONAL_STEP
    } else {
        p * RAISE_FACTOR
    }
}

/// Diagonals of all distinct permutations of `lambda`, paired with the
/// permutation that produced them.
fn permutation_diagonals(lambda: &[f64]) -> Vec<(Vec<usize>, Vec<f64>)> {
    let mut idx: Vec<usize> = (0..lambda.len()).collect();
    let mut out = Vec::new();
    loop {
        out.push((idx.clone(), idx.iter().map(|&i| lambda[i]).collect()));
        if !next_permutation(&mut idx) {
            break;
        }
    }
    out
}

/// The first permutation (other than the identity) whose state is not
/// strictly above `rho0`, or `[]` when `rho0` is not strictly above the
/// target.
fn diagonal_chain_failure(
    p: &[f64],
    lambda: &[f64],
    r0: &[f64],
    states: &[(Vec<usize>, Vec<f64>)],
) -> Option<Vec<usize>> {
    let dot = |d: &[f64]| p.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
    let vf = dot(lambda);
    let v0 = dot(r0);
    let at_target = lambda.iter().zip(r0).all(|(a, b)| (a - b).abs() < 1e-10);
    if !at_target && !(vf < v0) {
        return Some(Vec::new());
    }
    states
        .iter()
        .filter(|(perm, _)| perm.iter().enumerate().any(|(i, &j)| i != j))
        .find(|(_, d)| !(v0 < dot(d)))
        .map(|(perm, _)| perm.clone())
}

/// Lexicographic successor of a sequence; false at the last one.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// States `sum_k spectrum[pi(k)] |psi_k><psi_k|` over the distinct
/// rearrangements `pi` of `spectrum`, on the eigenbasis of `P`.
///
/// Repeated spectrum values collapse the list, so a pure spectrum yields
/// the `n` eigenprojectors. The order is lexicographic in the value ranks,
/// starting with the largest value on the largest eigenvalue of `P`.
pub fn enumerate_limit_states(p: &VirtualObservable, spectrum: &[f64]) -> Result<Vec<DensityMatrix>> {
    let n = p.dim();
    if spectrum.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: spectrum.len(),
        });
    }
    if n > MAX_ENUM_DIM {
        return Err(Error::TooLarge { n, max: MAX_ENUM_DIM });
    }
    let gap = p.eig().min_gap();
    if gap < COLLISION_GAP {
        return Err(Error::EigenvalueCollision(gap));
    }
    let total: f64 = spectrum.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::TraceNotOne(total));
    }
    if let Some(&neg) = spectrum.iter().find(|l| **l < -1e-10) {
        return Err(Error::NegativeEigenvalue(neg));
    }
    let mut values = spectrum.to_vec();
    values.sort_by(|a, b| b.total_cmp(a));
    let mut groups: Vec<f64> = Vec::new();
    let mut ranks: Vec<usize> = Vec::with_capacity(n);
    for &v in &values {
        match groups.last() {
            Some(&g) if (g - v).abs() <= 1e-12 => {}
            _ => groups.push(v),
        }
        ranks.push(groups.len() - 1);
    }
    let projectors: Vec<CMatrix> = (0..n).map(|k| CMatrix::projector(&p.eig().vector(k))).collect();
    let mut out = Vec::new();
    loop {
        let mut rho = CMatrix::zeros(n);
        for (proj, &r) in projectors.iter().zip(&ranks) {
            rho = &rho + &proj.scale(groups[r]);
        }
        out.push(DensityMatrix::new_unchecked(rho.hermitian_part()));
        if !next_permutation(&mut ranks) {
            break;
        }
    }
    Ok(out)
}

/// The convergence order `V(target) < V(rho0) < V(other)` for every other
/// limit state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderCheck {
    pub v_target: f64,
    pub v_initial: f64,
    pub v_others: Vec<(String, f64)>,
    /// Smallest gap in the chain; negative when it fails.
    pub margin: f64,
    pub ok: bool,
}

/// Others within [`SAME_STATE_TOL`] of the target are dropped. When `rho0`
/// is itself the target only `V(rho0) < V(other)` is required.
pub fn check_convergence_order(
    p: &VirtualObservable,
    rho_f: &CMatrix,
    rho0: &CMatrix,
    others: &[DensityMatrix],
) -> Result<OrderCheck> {
    let v = |m: &CMatrix| -> Result<f64> { Ok(hermat::trace_product(p.matrix(), m)?.re) };
    let v_target = v(rho_f)?;
    let v_initial = v(rho0)?;
    let mut v_others = Vec::new();
    for (i, s) in others.iter().enumerate() {
        if hermat::frobenius_distance_sq(s.matrix(), rho_f)? < SAME_STATE_TOL {
            continue;
        }
        v_others.push((format!("s{}", i + 1), v(s.matrix())?));
    }
    let at_target = hermat::frobenius_distance_sq(rho0, rho_f)? < SAME_STATE_TOL;
    let lower = v_initial - v_target;
    let upper = v_others.iter().map(|(_, x)| x - v_initial).fold(f64::INFINITY, f64::min);
    let (margin, ok) = match (at_target, upper.is_finite()) {
        (true, true) => (upper, upper > 0.0),
        (true, false) => (0.0, true),
        (false, true) => (lower.min(upper), lower > 0.0 && upper > 0.0),
        (false, false) => (lower, lower > 0.0),
    };
    Ok(OrderCheck {
        v_target,
        v_initial,
        v_others,
        margin,
        ok,
    })
}

/// Rank of the off-diagonal block of the adjoint map of `P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCheck {
    pub rank: usize,
    pub required: usize,
    pub ok: bool,
}

/// Traceless Hermitian basis, normalized to `tr(G_a G_b) = 2 delta_ab`:
/// for each pair `j < k` the symmetric then the antisymmetric generator,
/// then the `n - 1` diagonal generators.
pub fn traceless_basis(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(n * n - 1);
    for j in 0..n {
        for k in j + 1..n {
            let mut s = CMatrix::zeros(n);
            s[(j, k)] = C64::new(1.0, 0.0);
            s[(k, j)] = C64::new(1.0, 0.0);
            out.push(s);
            let mut a = CMatrix::zeros(n);
            a[(j, k)] = C64::new(0.0, -1.0);
            a[(k, j)] = C64::new(0.0, 1.0);
            out.push(a);
        }
    }
    for l in 1..n {
        let c = (2.0 / (l * (l + 1)) as f64).sqrt();
        let d: Vec<f64> = (0..n)
            .map(|i| match i.cmp(&l) {
                std::cmp::Ordering::Less => c,
                std::cmp::Ordering::Equal => -(l as f64) * c,
                std::cmp::Ordering::Greater => 0.0,
            })
            .collect();
        out.push(CMatrix::from_real_diag(&d));
    }
    out
}

/// Matrix `A[a][b]` of `X -> -i [X, P]` in [`traceless_basis`] coordinates.
pub fn adjoint_matrix(p: &CMatrix) -> Vec<Vec<f64>> {
    let basis = traceless_basis(p.dim());
    let images: Vec<CMatrix> = basis
        .iter()
        .map(|g| (&(g * p) - &(p * g)).scale_c(C64::new(0.0, -1.0)))
        .collect();
    basis
        .iter()
        .map(|ga| {
            images
                .iter()
                .map(|img| 0.5 * hermat::trace_product_unchecked(ga, img).re)
                .collect()
        })
        .collect()
}

/// Rank of `rows` by Gaussian elimination with full pivoting. Pivots at or
/// below `tol` times the largest entry are treated as zero.
pub fn matrix_rank(rows: &[Vec<f64>], tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let m = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let scale = a.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut used_cols = vec![false; cols];
    for r in 0..m {
        let mut best = (0.0, 0, 0);
        for (i, row) in a.iter().enumerate().skip(r) {
            for (j, x) in row.iter().enumerate() {
                if !used_cols[j] && x.abs() > best.0 {
                    best = (x.abs(), i, j);
                }
            }
        }
        if best.0 <= tol * scale {
            break;
        }
        let (_, pi, pj) = best;
        a.swap(r, pi);
        used_cols[pj] = true;
        let pivot = a[r][pj];
        for i in r + 1..m {
            let f = a[i][pj] / pivot;
            if f != 0.0 {
                for j in 0..cols {
                    a[i][j] -= f * a[r][j];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Rank of the first `n^2 - n` rows of [`adjoint_matrix`].
pub fn rank_condition(p: &VirtualObservable) -> RankCheck {
    let n = p.dim();
    let required = n * n - n;
    let a = adjoint_matrix(p.matrix());
    let rank = matrix_rank(&a[..required], hermat::PIVOT_TOL);
    RankCheck {
        rank,
        required,
        ok: rank == required,
    }
}

/// Frobenius norms of the off-diagonal part of `[rho, P]` and of all of it.
pub fn limit_set_residual(p: &VirtualObservable, rho: &CMatrix) -> Result<(f64, f64)> {
    let c = hermat::commutator(rho, p.matrix())?;
    Ok((c.offdiag_norm(), c.frobenius_norm()))
}

/// Signs of `(l_i - l_j)(p_i - p_j)` in the common eigenbasis. `None` when
/// the target does not commute with `P` or its spectrum is degenerate.
pub fn anti_ordered(p: &VirtualObservable, rho_f: &CMatrix) -> Result<Option<bool>> {
    let (_, full) = limit_set_residual(p, rho_f)?;
    if full > 1e-8 {
        return Ok(None);
    }
    let n = p.dim();
    let lambda: Vec<f64> = (0..n)
        .map(|k| {
            let v = p.eig().vector(k);
            hermat::inner(&v, &rho_f.matvec(&v)).re
        })
        .collect();
    let mut sorted = lambda.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.windows(2).any(|w| w[0] - w[1] <= COLLISION_GAP) {
        return Ok(None);
    }
    let pv = &p.eig().values;
    Ok(Some((0..n).all(|i| {
        (0..n).all(|j| i == j || (lambda[i] - lambda[j]) * (pv[i] - pv[j]) < 0.0)
    })))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub v_target: f64,
    pub v_initial: f64,
    pub v_others: Vec<(String, f64)>,
    pub margin: f64,
    pub chain_ok: bool,
    /// Absent when the target spectrum is degenerate, e.g. pure targets
    /// with n > 2.
    pub lemma2_ok: Option<bool>,
    pub rank: usize,
    pub rank_ok: bool,
    /// `|[rho, P]|_F` for the target and then each enumerated limit state.
    pub limit_residuals: Vec<f64>,
    pub assumptions: [bool; 3],
    pub passed: bool,
}

/// Certifies `p` for a target and initial state given in the working frame.
pub fn certify(
    p: &VirtualObservable,
    rho_f: &DensityMatrix,
    rho0: &DensityMatrix,
    assumptions: &AssumptionReport,
) -> Result<ConvergenceCertificate> {
    let spectrum = rho_f.spectrum();
    let states = enumerate_limit_states(p, &spectrum)?;
    let order = check_convergence_order(p, rho_f.matrix(), rho0.matrix(), &states)?;
    let lemma2_ok = anti_ordered(p, rho_f.matrix())?;
    let rank = rank_condition(p);
    let mut limit_residuals = vec![limit_set_residual(p, rho_f.matrix())?.1];
    for s in &states {
        limit_residuals.push(limit_set_residual(p, s.matrix())?.1);
    }
    let flags = assumptions.flags();
    let passed = order.ok && lemma2_ok != Some(false) && rank.ok && flags.iter().all(|b| *b);
    Ok(ConvergenceCertificate {
        v_target: order.v_target,
        v_initial: order.v_initial,
        v_others: order.v_others,
        margin: order.margin,
        chain_ok: order.ok,
        lemma2_ok,
        rank: rank.rank,
        rank_ok: rank.ok,
        limit_residuals,
        assumptions: flags,
        passed,
    })
}
