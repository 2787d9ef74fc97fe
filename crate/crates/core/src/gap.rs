//! Random instances `A_ij = (1/n) v_i·v_j` with `v_i` uniform on the sphere in
//! `p` dimensions, and the empirical ratio between their discrete optimum and
//! their relaxation value.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{validate, ProblemInstance, TAU_PSD};
use crate::oracle::{brute_force_max, DEFAULT_N_LIMIT};
use crate::rounding::{half_gamma_log_ratio, signed_value, SignVector};
use crate::rng;
use crate::sdp::{solve_relaxation, SolverConfig};

/// Maximum refinement iterations per sampled direction.
const REFINE_LIMIT: usize = 100;

pub const DEFAULT_DIRECTIONS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapMethod {
    /// Exhaustive enumeration: the discrete value is exact.
    Oracle,
    /// Sampled directions with refinement: the discrete value is a lower bound.
    Heuristic,
}

impl fmt::Display for GapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GapMethod::Oracle => "oracle",
            GapMethod::Heuristic => "heuristic",
        })
    }
}

/// One experiment cell. Field order matches the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    pub sdp_value: f64,
    pub discrete_value: f64,
    pub ratio: f64,
    pub method: GapMethod,
}

/// Draws `n` unit vectors in `p` dimensions and builds `A = VVᵀ / n`.
pub fn gen_gap_instance(p: usize, n: usize, seed: u64) -> Result<(ProblemInstance, DMatrix<f64>)> {
    if p < 1 {
        return Err(Error::BadP(p));
    }
    if n < 1 {
        return Err(Error::PreconditionViolated("n must be at least 1".into()));
    }
    let mut g = rng::seeded(seed);
    let mut flat = Vec::with_capacity(n * p);
    for _ in 0..n {
        flat.extend(rng::unit_vector(&mut g, p));
    }
    let v = DMatrix::from_row_slice(n, p, &flat);
    let mut a = (&v * v.transpose()) / n as f64;
    for i in 0..n {
        a[(i, i)] = 1.0 / n as f64;
    }
    Ok((validate(&a, TAU_PSD)?, v))
}

/// `E|v·c|` for `v` uniform on the unit sphere in `p` dimensions and a fixed unit `c`:
/// `Γ(p/2) / (√π Γ((p+1)/2))`.
pub fn expected_abs_projection(p: usize) -> Result<f64> {
    if p < 1 {
        return Err(Error::BadP(p));
    }
    Ok((-half_gamma_log_ratio(p)).exp() / std::f64::consts::PI.sqrt())
}

fn signs_along(v: &DMatrix<f64>, c: &[f64]) -> Vec<i8> {
    crate::rounding::signs_for_direction(v, c)
}

/// `Σ_i x_i v_i`.
fn accumulate(v: &DMatrix<f64>, x: &[i8]) -> Vec<f64> {
    (0..v.ncols())
        .map(|c| {
            v.column(c)
                .iter()
                .zip(x)
                .map(|(val, &s)| if s > 0 { *val } else { -*val })
                .sum()
        })
        .collect()
}

/// Best cut found from `directions` random directions, each refined by
/// alternating `c ← Σ x_i v_i` and `x ← sign(V c)` until it stops changing.
///
/// Candidates are ranked by `‖Σ x_i v_i‖²`, which orders them like `xᵀAx` for
/// `A ∝ VVᵀ`; the winner's value is computed against `inst`.
pub fn heuristic_best_cut(
    vectors: &DMatrix<f64>,
    inst: &ProblemInstance,
    directions: usize,
    seed: u64,
) -> Result<SignVector> {
    if directions < 1 {
        return Err(Error::PreconditionViolated("directions must be at least 1".into()));
    }
    if vectors.nrows() != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            actual: vectors.nrows(),
        });
    }
    let p = vectors.ncols();
    let candidates = crate::par::map_indexed(directions, |d| {
        let mut g = rng::substream(seed, d as u64);
        let mut x = signs_along(vectors, &rng::unit_vector(&mut g, p));
        let mut c = accumulate(vectors, &x);
        for _ in 0..REFINE_LIMIT {
            if c.iter().all(|&v| v == 0.0) {
                break;
            }
            let next = signs_along(vectors, &c);
            if next == x {
                break;
            }
            x = next;
            c = accumulate(vectors, &x);
        }
        let score: f64 = c.iter().map(|v| v * v).sum();
        (score, x)
    });
    let (_, x) = candidates
        .into_iter()
        .reduce(|best, cand| if cand.0 > best.0 { cand } else { best })
        .expect("at least one direction");
    let value = signed_value(inst, &x);
    Ok(SignVector { x, value })
}

/// `tr(A VVᵀ)`: the relaxation value of the Gram point built from the vectors themselves.
pub fn gram_point_value(inst: &ProblemInstance, vectors: &DMatrix<f64>) -> f64 {
    let s = vectors * vectors.transpose();
    inst.matrix().component_mul(&s).sum()
}

/// Builds the instance, bounds its relaxation from below by the best of the
/// solver's value, the Gram point `VVᵀ` and the rank-one point of the best
/// discrete solution, and compares with the best discrete value.
///
/// `n = None` uses `n = p³`.
pub fn empirical_gap(
    p: usize,
    n: Option<usize>,
    seed: u64,
    cfg: &SolverConfig,
    directions: usize,
) -> Result<GapRecord> {
    let n = n.unwrap_or(p * p * p);
    let (inst, vectors) = gen_gap_instance(p, n, seed)?;
    let solved = solve_relaxation(
        &inst,
        &SolverConfig {
            seed,
            ..cfg.clone()
        },
    )?;
    let (best, method) = if n <= DEFAULT_N_LIMIT {
        (brute_force_max(&inst, DEFAULT_N_LIMIT)?, GapMethod::Oracle)
    } else {
        (
            heuristic_best_cut(&vectors, &inst, directions, seed)?,
            GapMethod::Heuristic,
        )
    };
    // Every candidate is a feasible relaxation point, so the largest is the
    // best available lower bound on the relaxation optimum. The rank-one point
    // x xᵀ covers solver runs that stop just short of a tight optimum.
    let sdp_value = solved
        .objective()
        .max(gram_point_value(&inst, &vectors))
        .max(best.value);
    Ok(GapRecord {
        p,
        n,
        seed,
        sdp_value,
        discrete_value: best.value,
        ratio: best.value / sdp_value,
        method,
    })
}

/// Runs `empirical_gap` for every `(p, seed)` cell; records come back in
/// `p`-major, seed-minor order.
pub fn gap_sweep(
    ps: &[usize],
    n: Option<usize>,
    seeds: &[u64],
    cfg: &SolverConfig,
    directions: usize,
) -> Result<Vec<GapRecord>> {
    let cells: Vec<(usize, u64)> = ps
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    crate::par::map_indexed(cells.len(), |c| {
        let (p, seed) = cells[c];
        empirical_gap(p, n, seed, cfg, directions)
    })
    .into_iter()
    .collect()
}
