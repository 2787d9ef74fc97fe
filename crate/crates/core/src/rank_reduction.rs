//! Rank reduction of feasible relaxed solutions.
//!
//! [`reduce_rank`] moves along a direction `Y` in the nullspace of the
//! constraint-plus-objective system until the Gram matrix has rank `k` with
//! `t(k) ≤ n + 1`, leaving the objective and the unit diagonal untouched.
//! [`reduce_to_rank_of_a`] goes further when `A` itself has low rank, at the
//! price of rows that may end up shorter than unit.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, TAU_RANK};
use crate::linalg::SortedEigen;
use crate::sdp::FactoredSolution;

/// Relative residual allowed for the nullspace direction.
pub const NULLSPACE_TOL: f64 = 1e-8;

/// `t(k) = k(k+1)/2`, the dimension of the symmetric `k × k` matrices.
pub const fn triangular(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Largest `k` with `t(k) ≤ n + 1`.
pub fn max_rank_bound(n: usize) -> usize {
    let mut k = 0;
    while triangular(k + 1) <= n + 1 {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReductionReport {
    pub rank_before: usize,
    pub rank_after: usize,
    pub steps: usize,
    pub objective_before: f64,
    pub objective_after: f64,
    /// `|after - before| / max(1, |before|)`.
    pub objective_drift: f64,
    /// `max_i |S'_ii - S_ii|`, measured before any row renormalization.
    pub diag_drift: f64,
    pub subunit: bool,
    /// Some eigenvalue of `XᵀAX` sat within a factor 10 of the zero threshold.
    pub rank_ambiguous: bool,
    /// Objective after rescaling rows to unit norm, when that was requested.
    pub renormalized_objective: Option<f64>,
}

fn relative_drift(before: f64, after: f64) -> f64 {
    (after - before).abs() / before.abs().max(1.0)
}

fn squared_row_norms(x: &DMatrix<f64>) -> Vec<f64> {
    x.row_iter().map(|r| r.norm_squared()).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Re-factors `XXᵀ` to its numerical rank through the small Gram `XᵀX`.
///
/// Same output as `gram_to_factor(XXᵀ)` up to column signs, at `O(nk²)` cost.
fn refactor(x: &DMatrix<f64>, tau_rank: f64) -> DMatrix<f64> {
    let eig = SortedEigen::new(&(x.transpose() * x));
    let top = eig.max();
    let kept = if top > 0.0 {
        eig.values.iter().take_while(|&&v| v > tau_rank * top).count()
    } else {
        0
    };
    if kept == 0 {
        return DMatrix::zeros(x.nrows(), 1);
    }
    x * eig.vectors.columns(0, kept)
}

/// Numerical rank of `XXᵀ`.
fn factor_rank(x: &DMatrix<f64>, tau_rank: f64) -> usize {
    crate::linalg::numerical_rank(&(x.transpose() * x), tau_rank)
}

/// Index of the pair `(a, b)`, `a ≤ b`, in the packed upper triangle.
#[inline]
fn packed(a: usize, b: usize, k: usize) -> usize {
    a * k - a * (a + 1) / 2 + b
}

/// Packs a symmetric matrix so that the vector dot product equals the trace inner product.
fn pack_symmetric(m: &DMatrix<f64>) -> Vec<f64> {
    let k = m.nrows();
    let mut out = vec![0.0; triangular(k)];
    for a in 0..k {
        out[packed(a, a, k)] = m[(a, a)];
        for b in a + 1..k {
            out[packed(a, b, k)] = std::f64::consts::SQRT_2 * m[(a, b)];
        }
    }
    out
}

fn unpack_symmetric(v: &[f64], k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        m[(a, a)] = v[packed(a, a, k)];
        for b in a + 1..k {
            let off = v[packed(a, b, k)] / std::f64::consts::SQRT_2;
            m[(a, b)] = off;
            m[(b, a)] = off;
        }
    }
    m
}

/// Coefficient matrix of `tr(X_iᵀX_i Y) = 0` (rows `0..n`) and `tr(XᵀAX Y) = 0` (row `n`).
fn constraint_system(x: &DMatrix<f64>, inst: &ProblemInstance) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let t = triangular(k);
    let mut m = DMatrix::zeros(n + 1, t);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..k {
            m[(i, packed(a, a, k))] = row[a] * row[a];
            for b in a + 1..k {
                m[(i, packed(a, b, k))] = std::f64::consts::SQRT_2 * row[a] * row[b];
            }
        }
    }
    let xax = x.transpose() * inst.matrix() * x;
    let packed_obj = pack_symmetric(&xax);
    let scale = packed_obj.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale > 0.0 {
        for (c, v) in packed_obj.iter().enumerate() {
            m[(n, c)] = v / scale;
        }
    }
    m
}

/// A unit vector orthogonal to the row space of `m` (which has fewer rows than columns).
///
/// The coordinate axis with the largest component outside the row space is
/// projected onto its orthogonal complement; the result is checked against `m`.
fn null_vector(m: &DMatrix<f64>, step: usize) -> Result<DVector<f64>> {
    let t = m.ncols();
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma_max = svd.singular_values.max();
    let basis: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&r| svd.singular_values[r] > 1e-13 * sigma_max.max(f64::MIN_POSITIVE))
        .collect();

    let outside = |j: usize| 1.0 - basis.iter().map(|&r| v_t[(r, j)].powi(2)).sum::<f64>();
    let axis = (0..t)
        .max_by(|&a, &b| outside(a).total_cmp(&outside(b)))
        .expect("nonempty system");

    let mut y = DVector::zeros(t);
    y[axis] = 1.0;
    // Two projection passes keep the result orthogonal to working precision.
    for _ in 0..2 {
        for &r in &basis {
            let row = v_t.row(r);
            let coeff = row.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>();
            for c in 0..t {
                y[c] -= coeff * row[c];
            }
        }
    }
    let norm = y.norm();
    if norm == 0.0 {
        return Err(Error::NumericalNullspaceFailure {
            step,
            residual: f64::INFINITY,
        });
    }
    y /= norm;
    let residual = (m * &y).norm() / m.norm().max(f64::MIN_POSITIVE);
    if residual.is_nan() || residual > NULLSPACE_TOL {
        return Err(Error::NumericalNullspaceFailure { step, residual });
    }
    Ok(y)
}

fn step_factor(x: &DMatrix<f64>, inst: &ProblemInstance, step: usize) -> Result<DMatrix<f64>> {
    let (n, k) = x.shape();
    if triangular(k) <= n + 1 {
        return Err(Error::PreconditionViolated(format!(
            "t({k}) = {} is not above n + 1 = {}",
            triangular(k),
            n + 1
        )));
    }
    let system = constraint_system(x, inst);
    let y_packed = null_vector(&system, step)?;
    let mut y = unpack_symmetric(y_packed.as_slice(), k);

    // Flip so the dominant eigenvalue is positive, then scale it to one; the
    // eigenvalues of U = I - Y then lie in [0, 2] with at least one zero.
    let eig = SortedEigen::new(&y);
    let (top, bottom) = (eig.max(), eig.min());
    let lead = if top >= -bottom { top } else { bottom };
    y /= lead;

    let u = DMatrix::identity(k, k) - y;
    let w = crate::sdp::gram_to_factor(&u, TAU_RANK)?;
    Ok(refactor(&(x * w), TAU_RANK))
}

/// One reduction step. Requires `t(k) > n + 1`; the returned solution has width below `k`.
pub fn reduce_rank_step(sol: &FactoredSolution, inst: &ProblemInstance) -> Result<FactoredSolution> {
    check_dims(sol, inst)?;
    let x = step_factor(sol.factor(), inst, 0)?;
    FactoredSolution::new(inst, x)
}

fn check_dims(sol: &FactoredSolution, inst: &ProblemInstance) -> Result<()> {
    if sol.n() != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            actual: sol.n(),
        });
    }
    Ok(())
}

/// Repeats [`reduce_rank_step`] until `t(k) ≤ n + 1`, then rescales rows to exact unit norm.
pub fn reduce_rank(
    sol: &FactoredSolution,
    inst: &ProblemInstance,
) -> Result<(FactoredSolution, RankReductionReport)> {
    check_dims(sol, inst)?;
    if sol.is_subunit() {
        return Err(Error::PreconditionViolated(
            "rank reduction expects unit rows".into(),
        ));
    }
    let n = inst.n();
    let bound = max_rank_bound(n);
    let rank_before = factor_rank(sol.factor(), TAU_RANK);
    let objective_before = sol.objective();
    let diag_before = squared_row_norms(sol.factor());

    if sol.k() <= bound {
        let report = RankReductionReport {
            rank_before,
            rank_after: rank_before,
            steps: 0,
            objective_before,
            objective_after: objective_before,
            objective_drift: 0.0,
            diag_drift: 0.0,
            subunit: false,
            rank_ambiguous: false,
            renormalized_objective: None,
        };
        return Ok((sol.clone(), report));
    }

    let mut x = refactor(sol.factor(), TAU_RANK);
    let max_steps = x.ncols().saturating_sub(bound);
    let mut steps = 0;
    while x.ncols() > bound {
        if steps >= max_steps {
            return Err(Error::NumericalNullspaceFailure {
                step: steps,
                residual: f64::NAN,
            });
        }
        let next = step_factor(&x, inst, steps)?;
        debug_assert!(next.ncols() < x.ncols());
        x = next;
        steps += 1;
    }
    let diag_drift = max_diff(&squared_row_norms(&x), &diag_before);

    let mut out = FactoredSolution::subunit(inst, x)
        .and_then(|s| s.renormalized(inst))?;
    if let Some(info) = sol.solver_info() {
        out = out.with_solver_info(*info);
    }
    let report = RankReductionReport {
        rank_before,
        rank_after: factor_rank(out.factor(), TAU_RANK),
        steps,
        objective_before,
        objective_after: out.objective(),
        objective_drift: relative_drift(objective_before, out.objective()),
        diag_drift,
        subunit: false,
        rank_ambiguous: false,
        renormalized_objective: None,
    };
    Ok((out, report))
}

/// Projects the factor onto the range of `XᵀAX`, so the new Gram matrix has
/// rank at most `rank(A)`. Rows may shrink below unit norm.
///
/// With `renormalize`, rows are rescaled to unit norm afterwards and both
/// objectives are reported.
pub fn reduce_to_rank_of_a(
    sol: &FactoredSolution,
    inst: &ProblemInstance,
    tau_rank: f64,
    renormalize: bool,
) -> Result<(FactoredSolution, RankReductionReport)> {
    check_dims(sol, inst)?;
    let r = inst.rank(tau_rank);
    let k = sol.k();
    if k <= r {
        return Err(Error::PreconditionViolated(format!(
            "factor width {k} does not exceed rank(A) = {r}"
        )));
    }
    let x = sol.factor();
    let rank_before = factor_rank(x, tau_rank);
    let objective_before = sol.objective();

    let xax = crate::linalg::symmetrize(&(x.transpose() * inst.matrix() * x));
    let eig = SortedEigen::new(&xax);
    let threshold = tau_rank * eig.max_abs();
    let rank_ambiguous = eig
        .values
        .iter()
        .any(|v| v.abs() > threshold / 10.0 && v.abs() <= threshold * 10.0);
    // U = I - Y is the projector onto the eigenvectors with nonzero eigenvalue.
    let kept: Vec<usize> = (0..k).filter(|&j| eig.values[j].abs() > threshold).collect();
    let w = eig.vectors.select_columns(&kept);
    let reduced = if kept.is_empty() {
        DMatrix::zeros(x.nrows(), 1)
    } else {
        refactor(&(x * w), tau_rank)
    };
    let diag_drift = max_diff(&squared_row_norms(&reduced), &squared_row_norms(x));

    let projected = FactoredSolution::subunit(inst, reduced)?;
    let objective_after = projected.objective();
    let (out, renormalized_objective) = if renormalize {
        let unit = projected.renormalized(inst)?;
        let value = unit.objective();
        (unit, Some(value))
    } else {
        (projected, None)
    };
    let report = RankReductionReport {
        rank_before,
        rank_after: factor_rank(out.factor(), tau_rank),
        steps: 1,
        objective_before,
        objective_after,
        objective_drift: relative_drift(objective_before, objective_after),
        diag_drift,
        subunit: !renormalize,
        rank_ambiguous,
        renormalized_objective,
    };
    Ok((out, report))
}
