//! The relaxation `max tr(AS)` subject to `S ⪰ 0`, `diag(S) = 1`, solved in
//! factored form `S = XXᵀ` by block-coordinate ascent over the rows of `X`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, TAU_PSD};
use crate::linalg::SortedEigen;
use crate::rank_reduction::max_rank_bound;
use crate::rng;

/// Tolerance on `| ‖X_i‖ - 1 |` for a row to count as unit.
pub const TAU_FEAS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorWidth {
    /// `min(n, max_rank_bound(n) + 1)`.
    Auto,
    Fixed(usize),
}

impl FactorWidth {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            FactorWidth::Auto => n.min(max_rank_bound(n) + 1),
            FactorWidth::Fixed(k) => k,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub factor_width: FactorWidth,
    /// Stop once a full sweep improves the objective by less than this, relatively.
    pub tol_obj: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            factor_width: FactorWidth::Auto,
            tol_obj: 1e-9,
            max_sweeps: 10_000,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.tol_obj.is_nan() || self.tol_obj <= 0.0 {
            return Err(Error::PreconditionViolated("tol_obj must be positive".into()));
        }
        if self.max_sweeps < 1 {
            return Err(Error::PreconditionViolated("max_sweeps must be at least 1".into()));
        }
        if let FactorWidth::Fixed(0) = self.factor_width {
            return Err(Error::PreconditionViolated("factor width must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub sweeps: usize,
    /// False when the sweep budget ran out first; the solution is still the best found.
    pub converged: bool,
    pub seed: u64,
}

/// A relaxed solution `X` (n × k) with `S = XXᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredSolution {
    x: DMatrix<f64>,
    objective: f64,
    subunit: bool,
    solver: Option<SolverInfo>,
}

impl FactoredSolution {
    /// Wraps a factor whose rows must be unit within [`TAU_FEAS`].
    pub fn new(inst: &ProblemInstance, x: DMatrix<f64>) -> Result<Self> {
        let mut sol = Self::subunit(inst, x)?;
        let residual = sol.norm_deviation();
        if residual > TAU_FEAS {
            return Err(Error::SubunitState { residual });
        }
        sol.subunit = false;
        Ok(sol)
    }

    /// Wraps a factor whose rows may be shorter than unit (norms in `[0, 1 + TAU_FEAS]`).
    pub fn subunit(inst: &ProblemInstance, x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != inst.n() {
            return Err(Error::DimensionMismatch {
                expected: inst.n(),
                actual: x.nrows(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::PreconditionViolated("factor width must be at least 1".into()));
        }
        if let Some(i) = row_norms(&x).iter().position(|&r| r > 1.0 + TAU_FEAS) {
            return Err(Error::PreconditionViolated(format!(
                "row {i} has norm greater than one"
            )));
        }
        let objective = objective_of(inst, &x);
        Ok(Self {
            x,
            objective,
            subunit: true,
            solver: None,
        })
    }

    /// Factor of an explicit Gram matrix, e.g. one computed by an external solver.
    pub fn from_gram(inst: &ProblemInstance, s: &DMatrix<f64>, tau_rank: f64) -> Result<Self> {
        let x = gram_to_factor(s, tau_rank)?;
        Self::new(inst, x)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn is_subunit(&self) -> bool {
        self.subunit
    }

    pub fn solver_info(&self) -> Option<&SolverInfo> {
        self.solver.as_ref()
    }

    pub fn with_solver_info(mut self, info: SolverInfo) -> Self {
        self.solver = Some(info);
        self
    }

    pub fn gram(&self) -> DMatrix<f64> {
        &self.x * self.x.transpose()
    }

    pub fn feasibility_residual(&self) -> f64 {
        feasibility_residual(&self.x)
    }

    /// `max_i | ‖X_i‖ - 1 |`.
    pub fn norm_deviation(&self) -> f64 {
        row_norms(&self.x)
            .iter()
            .fold(0.0, |acc, r| acc.max((r - 1.0).abs()))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        crate::linalg::row_vec(&self.x, i)
    }

    /// Rescales every nonzero row to unit norm and recomputes the objective.
    pub fn renormalized(&self, inst: &ProblemInstance) -> Result<Self> {
        let mut x = self.x.clone();
        for (i, norm) in row_norms(&self.x).into_iter().enumerate() {
            if norm == 0.0 {
                return Err(Error::PreconditionViolated(format!(
                    "row {i} is zero and cannot be renormalized"
                )));
            }
            x.row_mut(i).unscale_mut(norm);
        }
        let mut sol = Self::new(inst, x)?;
        sol.solver = self.solver;
        Ok(sol)
    }

    pub fn to_dump(&self) -> SolutionDump {
        SolutionDump {
            n: self.n(),
            k: self.k(),
            objective: self.objective,
            feasibility_residual: self.feasibility_residual(),
            subunit: self.subunit,
            rows: (0..self.n()).map(|i| self.row(i)).collect(),
            solver: self.solver,
        }
    }

    /// Rebuilds a solution from its JSON dump; the objective is recomputed against `inst`.
    pub fn from_dump(inst: &ProblemInstance, dump: &SolutionDump) -> Result<Self> {
        if dump.rows.len() != dump.n {
            return Err(Error::DimensionMismatch {
                expected: dump.n,
                actual: dump.rows.len(),
            });
        }
        if let Some(bad) = dump.rows.iter().find(|r| r.len() != dump.k) {
            return Err(Error::DimensionMismatch {
                expected: dump.k,
                actual: bad.len(),
            });
        }
        let flat: Vec<f64> = dump.rows.iter().flatten().copied().collect();
        let x = DMatrix::from_row_slice(dump.n, dump.k, &flat);
        let mut sol = if dump.subunit {
            Self::subunit(inst, x)?
        } else {
            Self::new(inst, x)?
        };
        sol.solver = dump.solver;
        Ok(sol)
    }
}

/// JSON shape of a [`FactoredSolution`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDump {
    pub n: usize,
    pub k: usize,
    pub objective: f64,
    pub feasibility_residual: f64,
    #[serde(default)]
    pub subunit: bool,
    pub rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub solver: Option<SolverInfo>,
}

fn row_norms(x: &DMatrix<f64>) -> Vec<f64> {
    x.row_iter().map(|r| r.norm()).collect()
}

fn objective_of(inst: &ProblemInstance, x: &DMatrix<f64>) -> f64 {
    (inst.matrix() * x).component_mul(x).sum()
}

/// `tr(A XXᵀ) = Σ_ij A_ij (X_i · X_j)`.
pub fn objective(inst: &ProblemInstance, sol: &FactoredSolution) -> Result<f64> {
    if sol.n() != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            actual: sol.n(),
        });
    }
    Ok(objective_of(inst, sol.factor()))
}

/// `max_i | ‖X_i‖² - 1 |`.
pub fn feasibility_residual(x: &DMatrix<f64>) -> f64 {
    x.row_iter()
        .fold(0.0, |acc, r| acc.max((r.norm_squared() - 1.0).abs()))
}

/// Factors a PSD Gram matrix as `X = Q diag(√λ)` over eigenvalues above `tau_rank * λ_max`.
pub fn gram_to_factor(s: &DMatrix<f64>, tau_rank: f64) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::NotSquare {
            rows: s.nrows(),
            cols: s.ncols(),
        });
    }
    let eig = SortedEigen::new(&crate::linalg::symmetrize(s));
    let top = eig.max();
    if eig.min() < -TAU_PSD * eig.max_abs() {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min(),
        });
    }
    let n = s.nrows();
    if top <= 0.0 {
        return Ok(DMatrix::zeros(n, 1));
    }
    let kept = eig.values.iter().take_while(|&&v| v > tau_rank * top).count();
    let mut x = DMatrix::zeros(n, kept);
    for c in 0..kept {
        let scale = eig.values[c].sqrt();
        x.set_column(c, &(eig.vectors.column(c) * scale));
    }
    Ok(x)
}

/// Random unit rows in row-major layout.
fn initial_rows(n: usize, k: usize, seed: u64) -> Vec<f64> {
    let mut g = rng::seeded(seed);
    let mut rows = Vec::with_capacity(n * k);
    for _ in 0..n {
        rows.extend(rng::unit_vector(&mut g, k));
    }
    rows
}

fn objective_rows(inst: &ProblemInstance, rows: &[f64], k: usize) -> f64 {
    let n = inst.n();
    let mut total = 0.0;
    for i in 0..n {
        let a_i = inst.column(i);
        let xi = &rows[i * k..(i + 1) * k];
        for (j, &aij) in a_i.iter().enumerate() {
            if aij != 0.0 {
                total += aij * crate::linalg::dot(xi, &rows[j * k..(j + 1) * k]);
            }
        }
    }
    total
}

/// Block-coordinate ascent: each sweep sets `X_i ← g_i / ‖g_i‖` with
/// `g_i = Σ_{j≠i} A_ij X_j`, for `i = 0..n` in order.
///
/// Running out of sweeps is not an error; check [`SolverInfo::converged`].
pub fn solve_relaxation(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<FactoredSolution> {
    cfg.check()?;
    let n = inst.n();
    let k = cfg.factor_width.resolve(n);
    let mut rows = initial_rows(n, k, cfg.seed);
    let mut current = objective_rows(inst, &rows, k);
    let mut grad = vec![0.0; k];
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < cfg.max_sweeps {
        for i in 0..n {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (j, &aij) in inst.column(i).iter().enumerate() {
                if j == i || aij == 0.0 {
                    continue;
                }
                let xj = &rows[j * k..(j + 1) * k];
                grad.iter_mut().zip(xj).for_each(|(g, x)| *g += aij * x);
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > 0.0 {
                rows[i * k..(i + 1) * k]
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(x, g)| *x = g / norm);
            }
        }
        sweeps += 1;
        let next = objective_rows(inst, &rows, k);
        let gain = (next - current) / current.abs().max(f64::MIN_POSITIVE);
        current = next;
        if gain < cfg.tol_obj {
            converged = true;
            break;
        }
    }

    let x = DMatrix::from_row_slice(n, k, &rows);
    Ok(FactoredSolution::new(inst, x)?.with_solver_info(SolverInfo {
        sweeps,
        converged,
        seed: cfg.seed,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_random_gram, TAU_RANK};

    fn inst(rows: usize, data: &[f64]) -> ProblemInstance {
        ProblemInstance::new(DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    #[test]
    fn objective_examples() {
        let i2 = inst(2, &[1.0, 0.0, 0.0, 1.0]);
        let sol = FactoredSolution::new(&i2, DMatrix::identity(2, 2)).unwrap();
        assert_eq!(objective(&i2, &sol).unwrap(), 2.0);

        let a = inst(2, &[2.0, 1.0, 1.0, 2.0]);
        let same = FactoredSolution::new(&a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(objective(&a, &same).unwrap(), 6.0);
        let ident = FactoredSolution::new(&a, DMatrix::identity(2, 2)).unwrap();
        assert_eq!(objective(&a, &ident).unwrap(), 4.0);

        let i3 = inst(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(objective(&i3, &sol), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn feasibility_residual_examples() {
        assert_eq!(feasibility_residual(&DMatrix::identity(3, 3)), 0.0);
        let mut x = DMatrix::identity(3, 3);
        x[(1, 1)] = 1.1;
        assert!((feasibility_residual(&x) - 0.21).abs() < 1e-15);
        x[(2, 2)] = 0.0;
        assert_eq!(feasibility_residual(&x), 1.0);
    }

    #[test]
    fn gram_to_factor_examples() {
        let x = gram_to_factor(&DMatrix::identity(3, 3), TAU_RANK).unwrap();
        assert_eq!(x.ncols(), 3);
        assert!(crate::linalg::max_abs_diff(&(&x * x.transpose()), &DMatrix::identity(3, 3)) < 1e-14);

        let ones = DMatrix::from_element(4, 4, 1.0);
        let x = gram_to_factor(&ones, TAU_RANK).unwrap();
        assert_eq!(x.ncols(), 1);
        for i in 0..4 {
            assert!((x[(i, 0)] - x[(0, 0)]).abs() < 1e-14);
            assert!((x[(i, 0)].abs() - 1.0).abs() < 1e-14);
        }

        let k2 = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let x = gram_to_factor(&k2, TAU_RANK).unwrap();
        assert_eq!(x.ncols(), 1);
        assert!((x[(0, 0)] + x[(1, 0)]).abs() < 1e-14);
        assert!((x[(0, 0)].abs() - 1.0).abs() < 1e-14);

        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(gram_to_factor(&bad, TAU_RANK), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn identity_objective_is_n() {
        let a = ProblemInstance::new(DMatrix::identity(5, 5)).unwrap();
        let sol = solve_relaxation(&a, &SolverConfig::default()).unwrap();
        assert!((sol.objective() - 5.0).abs() < 1e-12);
        assert!(sol.solver_info().unwrap().converged);
    }

    #[test]
    fn two_by_two_optima() {
        // Brute force over the angle between two unit vectors in the plane:
        // tr(AS) = a11 + a22 + 2 a12 cos θ.
        for data in [[1.0, -1.0, -1.0, 1.0], [1.0, 1.0, 1.0, 1.0]] {
            let a = inst(2, &data);
            let best = (0..=3600)
                .map(|t| {
                    let theta = std::f64::consts::PI * t as f64 / 3600.0;
                    data[0] + data[3] + 2.0 * data[1] * theta.cos()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((best - 4.0).abs() < 1e-12);
            let sol = solve_relaxation(&a, &SolverConfig::default()).unwrap();
            assert!((sol.objective() - best).abs() < 1e-9, "{}", sol.objective());
        }
    }

    #[test]
    fn sweep_budget_exhaustion_is_flagged() {
        let a = gen_random_gram(30, 30, 1).unwrap();
        let cfg = SolverConfig {
            max_sweeps: 1,
            ..SolverConfig::default()
        };
        let sol = solve_relaxation(&a, &cfg).unwrap();
        let info = sol.solver_info().unwrap();
        assert_eq!(info.sweeps, 1);
        assert!(!info.converged);
        assert!(sol.feasibility_residual() < 1e-12);
    }

    #[test]
    fn bad_config_is_rejected() {
        let a = gen_random_gram(3, 3, 1).unwrap();
        for cfg in [
            SolverConfig { tol_obj: 0.0, ..Default::default() },
            SolverConfig { max_sweeps: 0, ..Default::default() },
            SolverConfig { factor_width: FactorWidth::Fixed(0), ..Default::default() },
        ] {
            assert!(solve_relaxation(&a, &cfg).is_err());
        }
    }

    #[test]
    fn auto_width() {
        assert_eq!(FactorWidth::Auto.resolve(1), 1);
        assert_eq!(FactorWidth::Auto.resolve(4), 3);
        assert_eq!(FactorWidth::Auto.resolve(50), 10);
    }

    #[test]
    fn dump_round_trip() {
        let a = gen_random_gram(6, 2, 9).unwrap();
        let sol = solve_relaxation(&a, &SolverConfig::with_seed(4)).unwrap();
        let json = serde_json::to_string(&sol.to_dump()).unwrap();
        let dump: SolutionDump = serde_json::from_str(&json).unwrap();
        let back = FactoredSolution::from_dump(&a, &dump).unwrap();
        assert_eq!(back, sol);
    }

    #[test]
    fn non_unit_rows_are_rejected() {
        let a = gen_random_gram(2, 2, 9).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        assert!(matches!(FactoredSolution::new(&a, x.clone()), Err(Error::SubunitState { .. })));
        assert!(FactoredSolution::subunit(&a, x).unwrap().is_subunit());
    }
}
