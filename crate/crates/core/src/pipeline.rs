//! End-to-end run: relax, reduce rank, round.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::{ProblemInstance, TAU_RANK};
use crate::oracle::brute_force_max;
use crate::rank_reduction::{reduce_rank, reduce_to_rank_of_a, RankReductionReport};
use crate::rounding::{expected_value_exact, guaranteed_ratio, monte_carlo_round, RoundingSummary};
use crate::sdp::{solve_relaxation, FactoredSolution, SolverConfig, SolverInfo};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub solver: SolverConfig,
    pub trials: usize,
    pub workers: usize,
    /// Seed for rounding; the solver uses `solver.seed`.
    pub seed: u64,
    pub exploit_rank_a: bool,
    /// Run the exhaustive oracle when `n` is at most this.
    pub oracle_limit: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            trials: 100_000,
            workers: 1,
            seed: 0,
            exploit_rank_a: false,
            oracle_limit: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineResult {
    pub n: usize,
    pub rank_after_reduction: usize,
    pub sdp_value: f64,
    pub solver: SolverInfo,
    pub reduction: RankReductionReport,
    pub low_rank_reduction: Option<RankReductionReport>,
    /// Closed-form expected rounded value; `None` for subunit solutions.
    pub expected_value: Option<f64>,
    pub rounding: RoundingSummary,
    /// `2 / (π γ(rank_after_reduction))`.
    pub guaranteed_ratio: f64,
    /// False when the final rows are not unit, where the guarantee is not claimed.
    pub bound_applicable: bool,
    pub oracle_value: Option<f64>,
    /// Seconds per stage. Everything else is deterministic for fixed inputs.
    pub wall_times: BTreeMap<String, f64>,
}

/// Output of a run: the summary and the final factored solution.
pub struct PipelineRun {
    pub result: PipelineResult,
    pub solution: FactoredSolution,
}

pub fn run_pipeline(inst: &ProblemInstance, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let mut wall_times = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, times: &mut BTreeMap<String, f64>| {
        times.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let solved = solve_relaxation(inst, &cfg.solver)?;
    let solver = *solved.solver_info().expect("solver attaches its info");
    lap("solve", &mut wall_times);

    let (mut sol, reduction) = reduce_rank(&solved, inst)?;
    lap("reduce", &mut wall_times);

    let mut low_rank_reduction = None;
    if cfg.exploit_rank_a && inst.rank(TAU_RANK) < sol.k() {
        let (reduced, report) = reduce_to_rank_of_a(&sol, inst, TAU_RANK, false)?;
        sol = reduced;
        low_rank_reduction = Some(report);
        lap("reduce_rank_of_a", &mut wall_times);
    }

    let rounding = monte_carlo_round(&sol, inst, cfg.trials, cfg.seed, cfg.workers)?;
    lap("round", &mut wall_times);

    let bound_applicable = rounding.guaranteed_ratio.is_some();
    let expected_value = if bound_applicable {
        Some(expected_value_exact(&sol, inst)?)
    } else {
        None
    };

    let oracle_value = match cfg.oracle_limit {
        Some(limit) if inst.n() <= limit => {
            let v = brute_force_max(inst, limit)?.value;
            lap("oracle", &mut wall_times);
            Some(v)
        }
        _ => None,
    };

    let result = PipelineResult {
        n: inst.n(),
        rank_after_reduction: sol.k(),
        sdp_value: solved.objective(),
        solver,
        reduction,
        low_rank_reduction,
        expected_value,
        rounding,
        guaranteed_ratio: guaranteed_ratio(sol.k())?,
        bound_applicable,
        oracle_value,
        wall_times,
    };
    Ok(PipelineRun {
        result,
        solution: sol,
    })
}
