//! Hyperplane rounding of a factored solution and the ratio it is guaranteed to reach.
//!
//! For unit rows, `E[sgn(X_i·g) sgn(X_j·g)] = (2/π) arcsin(X_i·X_j)` over a
//! uniform direction `g`, which gives the expected rounded value in closed
//! form. Rounding from a width-`k` factor keeps at least `2/(π γ(k))` of the
//! relaxed objective in expectation.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::rng::{self, Rng};
use crate::sdp::{FactoredSolution, TAU_FEAS};

/// A point of `{-1, +1}ⁿ` together with `xᵀAx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignVector {
    pub x: Vec<i8>,
    pub value: f64,
}

impl SignVector {
    pub fn new(inst: &ProblemInstance, x: Vec<i8>) -> Result<Self> {
        if x.len() != inst.n() {
            return Err(Error::DimensionMismatch {
                expected: inst.n(),
                actual: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::BadEntries {
                index,
                value: x[index] as f64,
            });
        }
        let value = signed_value(inst, &x);
        Ok(Self { x, value })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `Σ_ij A_ij x_i x_j` for entries known to be ±1.
pub(crate) fn signed_value(inst: &ProblemInstance, x: &[i8]) -> f64 {
    let mut total = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        let col = inst.column(j);
        let mut inner = 0.0;
        for (aij, &xi) in col.iter().zip(x) {
            inner += if xi > 0 { *aij } else { -*aij };
        }
        total += if xj > 0 { inner } else { -inner };
    }
    total
}

/// `xᵀAx` for a vector whose entries must all be exactly ±1.
pub fn iqp_value(inst: &ProblemInstance, x: &[f64]) -> Result<f64> {
    if x.len() != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            actual: x.len(),
        });
    }
    let signs = x
        .iter()
        .enumerate()
        .map(|(index, &v)| match v {
            1.0 => Ok(1),
            -1.0 => Ok(-1),
            value => Err(Error::BadEntries { index, value }),
        })
        .collect::<Result<Vec<i8>>>()?;
    Ok(signed_value(inst, &signs))
}

/// `sign(X g)` with `sign(0) = +1`.
pub fn signs_for_direction(x: &DMatrix<f64>, g: &[f64]) -> Vec<i8> {
    let mut proj = vec![0.0; x.nrows()];
    for (c, &gc) in g.iter().enumerate() {
        for (p, &v) in proj.iter_mut().zip(x.column(c).iter()) {
            *p += v * gc;
        }
    }
    proj.into_iter().map(|p| if p >= 0.0 { 1 } else { -1 }).collect()
}

/// One rounding: a uniform direction `g` on the unit sphere and `x = sign(Xg)`.
pub fn round_once(sol: &FactoredSolution, inst: &ProblemInstance, rng: &mut Rng) -> SignVector {
    let g = rng::unit_vector(rng, sol.k());
    let x = signs_for_direction(sol.factor(), &g);
    let value = signed_value(inst, &x);
    SignVector { x, value }
}

fn require_unit_rows(sol: &FactoredSolution) -> Result<()> {
    let residual = sol.norm_deviation();
    if residual > TAU_FEAS {
        return Err(Error::SubunitState { residual });
    }
    Ok(())
}

/// Exact `E_g[xᵀAx]` for `x = sign(Xg)`: `Σ_ij A_ij (2/π) arcsin(X_i·X_j)`.
pub fn expected_value_exact(sol: &FactoredSolution, inst: &ProblemInstance) -> Result<f64> {
    if sol.n() != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            actual: sol.n(),
        });
    }
    require_unit_rows(sol)?;
    let arcsin = arcsin_gram(sol);
    Ok(inst
        .matrix()
        .iter()
        .zip(arcsin.iter())
        .map(|(a, s)| a * FRAC_2_PI * s)
        .sum())
}

/// `arcsin(X_i·X_j)` for unit rows, as `π/2 - ∠(X_i, X_j)`.
///
/// The angle comes from `2 atan2(‖u - v‖, ‖u + v‖)`, which stays accurate where
/// `arcsin` of a rounded dot product near ±1 would not; the diagonal is exactly `π/2`.
fn arcsin_gram(sol: &FactoredSolution) -> DMatrix<f64> {
    let n = sol.n();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| sol.row(i)).collect();
    let mut out = DMatrix::from_element(n, n, FRAC_PI_2);
    for i in 0..n {
        for j in 0..i {
            let (mut diff, mut sum) = (0.0, 0.0);
            for (a, b) in rows[i].iter().zip(&rows[j]) {
                diff += (a - b) * (a - b);
                sum += (a + b) * (a + b);
            }
            let angle = 2.0 * diff.sqrt().atan2(sum.sqrt());
            let value = FRAC_PI_2 - angle;
            out[(i, j)] = value;
            out[(j, i)] = value;
        }
    }
    out
}

/// `ln Γ((k+1)/2) - ln Γ(k/2)`.
pub(crate) fn half_gamma_log_ratio(k: usize) -> f64 {
    let k = k as f64;
    ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0)
}

/// `γ(k) = (2/k) (Γ((k+1)/2) / Γ(k/2))²`, increasing from `2/π` at `k = 1` towards one.
pub fn gamma(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::BadK(k));
    }
    Ok(2.0 / k as f64 * (2.0 * half_gamma_log_ratio(k)).exp())
}

/// `2 / (π γ(k))`: one at `k = 1`, decreasing towards `2/π`.
pub fn guaranteed_ratio(k: usize) -> Result<f64> {
    Ok(2.0 / (PI * gamma(k)?))
}

/// `Y_ij = f(X_i·X_j)` with `f(t) = (2/π)(arcsin t - t/γ(k))`, which is positive semidefinite.
pub fn positive_type_matrix(sol: &FactoredSolution) -> Result<DMatrix<f64>> {
    require_unit_rows(sol)?;
    let g = gamma(sol.k())?;
    let gram = sol.gram();
    let arcsin = arcsin_gram(sol);
    Ok(DMatrix::from_fn(sol.n(), sol.n(), |i, j| {
        let t = if i == j { 1.0 } else { gram[(i, j)].clamp(-1.0, 1.0) };
        FRAC_2_PI * (arcsin[(i, j)] - t / g)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingSummary {
    pub trials: usize,
    pub workers: usize,
    pub seed: u64,
    pub mean_value: f64,
    pub std_error: f64,
    pub best: SignVector,
    /// `None` when the rows are not unit, where the guarantee does not apply.
    pub guaranteed_ratio: Option<f64>,
    /// `mean_value / objective`.
    pub achieved_ratio: f64,
}

/// Per-worker running statistics (Welford).
#[derive(Debug, Clone)]
struct Partial {
    count: usize,
    mean: f64,
    m2: f64,
    best: Option<SignVector>,
}

impl Partial {
    fn empty() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            best: None,
        }
    }

    fn push(&mut self, s: SignVector) {
        self.count += 1;
        let delta = s.value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (s.value - self.mean);
        if self.best.as_ref().is_none_or(|b| s.value > b.value) {
            self.best = Some(s);
        }
    }

    fn merge(mut self, other: Partial) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
        if let Some(b) = other.best {
            if self.best.as_ref().is_none_or(|cur| b.value > cur.value) {
                self.best = Some(b);
            }
        }
        self
    }
}

/// Repeated rounding split over `workers` independent substreams of `seed`.
///
/// Partial results are merged in worker order, so the summary depends only on
/// `(seed, trials, workers)`, never on scheduling.
pub fn monte_carlo_round(
    sol: &FactoredSolution,
    inst: &ProblemInstance,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<RoundingSummary> {
    if trials < 1 {
        return Err(Error::PreconditionViolated("trials must be at least 1".into()));
    }
    if sol.n() != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            actual: sol.n(),
        });
    }
    let workers = workers.clamp(1, trials);
    let base = trials / workers;
    let extra = trials % workers;
    let partials = crate::par::map_indexed(workers, |w| {
        let count = base + usize::from(w < extra);
        let mut g = rng::substream(seed, w as u64);
        let mut part = Partial::empty();
        for _ in 0..count {
            part.push(round_once(sol, inst, &mut g));
        }
        part
    });
    let total = partials.into_iter().fold(Partial::empty(), Partial::merge);
    let variance = if total.count > 1 {
        total.m2 / (total.count - 1) as f64
    } else {
        0.0
    };
    let guaranteed = if sol.norm_deviation() <= TAU_FEAS {
        Some(guaranteed_ratio(sol.k())?)
    } else {
        None
    };
    Ok(RoundingSummary {
        trials,
        workers,
        seed,
        mean_value: total.mean,
        std_error: (variance / total.count as f64).sqrt(),
        best: total.best.expect("at least one trial"),
        guaranteed_ratio: guaranteed,
        achieved_ratio: total.mean / sol.objective(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_random_gram;

    fn inst(rows: usize, data: &[f64]) -> ProblemInstance {
        ProblemInstance::new(DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    /// `Γ((k+1)/2)/Γ(k/2)` by the recurrence `r(k) r(k+1) = k/2`, `r(1) = 1/√π`.
    fn gamma_by_recurrence(k: usize) -> f64 {
        let mut r = 1.0 / PI.sqrt();
        for j in 1..k {
            r = j as f64 / (2.0 * r);
        }
        2.0 / k as f64 * r * r
    }

    #[test]
    fn iqp_examples() {
        let i2 = inst(2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(iqp_value(&i2, &[1.0, -1.0]).unwrap(), 2.0);
        let a = inst(2, &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(iqp_value(&a, &[1.0, 1.0]).unwrap(), 6.0);
        let l = inst(2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(iqp_value(&l, &[1.0, -1.0]).unwrap(), 4.0);
        assert!(matches!(
            iqp_value(&l, &[1.0, 0.5]),
            Err(Error::BadEntries { index: 1, .. })
        ));
        assert!(SignVector::new(&l, vec![1, 0]).is_err());
    }

    #[test]
    fn gamma_closed_forms() {
        assert!((gamma(1).unwrap() - 2.0 / PI).abs() < 1e-12);
        assert!((gamma(2).unwrap() - PI / 4.0).abs() < 1e-12);
        assert!((gamma(3).unwrap() - 8.0 / (3.0 * PI)).abs() < 1e-12);
        assert!(matches!(gamma(0), Err(Error::BadK(0))));
        assert!((guaranteed_ratio(1).unwrap() - 1.0).abs() < 1e-12);
        assert!((guaranteed_ratio(2).unwrap() - 8.0 / (PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn gamma_matches_recurrence() {
        for k in 1..=300 {
            let lhs = gamma(k).unwrap();
            let rhs = gamma_by_recurrence(k);
            assert!((lhs - rhs).abs() < 1e-12, "k = {k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn ratio_is_decreasing_towards_two_over_pi() {
        let mut prev = guaranteed_ratio(1).unwrap();
        for k in 2..5000 {
            let cur = guaranteed_ratio(k).unwrap();
            assert!(cur < prev && cur > FRAC_2_PI, "k = {k}");
            prev = cur;
        }
        for k in 8..=4096 {
            let scaled = k as f64 * (guaranteed_ratio(k).unwrap() - FRAC_2_PI);
            assert!((0.9 / PI..=1.1 / PI).contains(&scaled), "k = {k}: {scaled}");
        }
    }

    #[test]
    fn direction_rounding_examples() {
        let x = DMatrix::identity(2, 2);
        assert_eq!(signs_for_direction(&x, &[0.6, -0.8]), vec![1, -1]);
        let with_zero = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(signs_for_direction(&with_zero, &[-0.6, 0.8]), vec![1, -1]);
        // Scale invariance.
        let a = gen_random_gram(6, 3, 1).unwrap();
        let sol = crate::sdp::solve_relaxation(&a, &Default::default()).unwrap();
        let g = rng::standard_normal(&mut rng::seeded(3), sol.k());
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit: Vec<f64> = g.iter().map(|v| v / norm).collect();
        assert_eq!(
            signs_for_direction(sol.factor(), &g),
            signs_for_direction(sol.factor(), &unit)
        );
    }

    #[test]
    fn identical_rows_round_deterministically() {
        let a = gen_random_gram(5, 5, 2).unwrap();
        let x = DMatrix::from_fn(5, 3, |_, c| if c == 1 { 1.0 } else { 0.0 });
        let sol = FactoredSolution::new(&a, x).unwrap();
        let total: f64 = a.matrix().iter().sum();
        let mut g = rng::seeded(1);
        for _ in 0..10 {
            let s = round_once(&sol, &a, &mut g);
            assert!(s.x.iter().all(|&v| v == s.x[0]));
            assert!((s.value - total).abs() < 1e-12 * total.abs());
        }
        assert!((expected_value_exact(&sol, &a).unwrap() - total).abs() < 1e-12 * total.abs());
        let summary = monte_carlo_round(&sol, &a, 1000, 5, 4).unwrap();
        assert_eq!(summary.std_error, 0.0);
        assert!((summary.mean_value - summary.best.value).abs() < 1e-9);
    }

    #[test]
    fn expected_value_examples() {
        let a = gen_random_gram(4, 4, 6).unwrap();
        let sol = FactoredSolution::new(&a, DMatrix::identity(4, 4)).unwrap();
        let exact = expected_value_exact(&sol, &a).unwrap();
        assert!((exact - a.matrix().trace()).abs() < 1e-12);

        let b = inst(2, &[2.0, 1.0, 1.0, 2.0]);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 3f64.sqrt() / 2.0]);
        let sol = FactoredSolution::new(&b, x).unwrap();
        let exact = expected_value_exact(&sol, &b).unwrap();
        assert!((exact - (4.0 + 2.0 / 3.0)).abs() < 1e-12, "{exact}");

        let short = FactoredSolution::subunit(&b, DMatrix::from_row_slice(2, 1, &[0.5, 1.0])).unwrap();
        assert!(matches!(expected_value_exact(&short, &b), Err(Error::SubunitState { .. })));
        assert!(matches!(positive_type_matrix(&short), Err(Error::SubunitState { .. })));
        let summary = monte_carlo_round(&short, &b, 10, 0, 1).unwrap();
        assert_eq!(summary.guaranteed_ratio, None);
    }

    #[test]
    fn positive_type_examples() {
        let a = gen_random_gram(3, 3, 1).unwrap();
        let signs = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 1.0]);
        let y = positive_type_matrix(&FactoredSolution::new(&a, signs).unwrap()).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-15));

        let n = 6;
        let b = gen_random_gram(n, n, 1).unwrap();
        let y = positive_type_matrix(&FactoredSolution::new(&b, DMatrix::identity(n, n)).unwrap()).unwrap();
        let diag = FRAC_2_PI * (PI / 2.0 - 1.0 / gamma(n).unwrap());
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { diag } else { 0.0 };
                assert!((y[(i, j)] - expect).abs() < 1e-15);
            }
        }
        assert!(diag >= 0.0);
    }

    #[test]
    fn summary_is_deterministic() {
        let a = gen_random_gram(10, 4, 3).unwrap();
        let sol = crate::sdp::solve_relaxation(&a, &Default::default()).unwrap();
        let s1 = monte_carlo_round(&sol, &a, 5000, 9, 3).unwrap();
        let s2 = monte_carlo_round(&sol, &a, 5000, 9, 3).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.best.value >= s1.mean_value - 1e-12);
        assert!(matches!(
            monte_carlo_round(&sol, &a, 0, 9, 3),
            Err(Error::PreconditionViolated(_))
        ));
    }
}
