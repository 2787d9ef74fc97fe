use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gk", version, about = "Approximate the PSD Grothendieck problem max xᵀAx over x ∈ {-1,+1}ⁿ")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Seed for the solver initialization and for rounding. 0 is a valid seed.
    #[arg(long, global = true, env = "GK_DEFAULT_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Rounding trials.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub trials: usize,

    /// Worker substreams for Monte Carlo rounding (fixes the result for a given seed).
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    /// Relative per-sweep improvement below which the solver stops.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol_obj: f64,

    #[arg(long, global = true, default_value_t = 10_000)]
    pub max_sweeps: usize,

    /// Treat solver non-convergence as fatal (exit 3).
    #[arg(long, global = true)]
    pub strict: bool,

    /// After the generic reduction, project onto rank(A) when that is smaller.
    #[arg(long, global = true)]
    pub exploit_rank_a: bool,

    /// Output format; `gap` defaults to csv, everything else to json.
    #[arg(long, global = true, value_enum)]
    pub output: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a matrix file holds a PSD instance and print what was found.
    Validate { file: PathBuf },

    /// Solve the relaxation and print the factored solution.
    Solve {
        file: PathBuf,
        /// Factor width; defaults to min(n, max_rank_bound(n) + 1).
        #[arg(long)]
        width: Option<usize>,
    },

    /// Reduce the rank of a solution. Takes a matrix file (solved first) or a
    /// solution JSON together with --instance.
    Reduce {
        input: PathBuf,
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Factor width used when the input is a matrix file.
        #[arg(long)]
        width: Option<usize>,
        /// Rescale rows to unit norm after the rank(A) projection.
        #[arg(long)]
        renormalize: bool,
    },

    /// Monte Carlo hyperplane rounding of a solution JSON.
    Round {
        solution: PathBuf,
        #[arg(long)]
        instance: PathBuf,
    },

    /// Exact optimum by enumeration.
    Oracle {
        file: PathBuf,
        #[arg(long, default_value_t = 24)]
        n_limit: usize,
    },

    /// Integrality-gap experiment on random instances A_ij = v_i·v_j / n.
    Gap {
        #[arg(long)]
        p: usize,
        /// Instance size; defaults to p³.
        #[arg(long)]
        n: Option<usize>,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Sampled directions for instances too large for the oracle.
        #[arg(long, default_value_t = gk_core::gap::DEFAULT_DIRECTIONS)]
        directions: usize,
    },

    /// Solve, reduce, round, and report the guarantee.
    Pipeline {
        file: PathBuf,
        /// Also compute the exact optimum when n is at most this.
        #[arg(long)]
        oracle_limit: Option<usize>,
    },
}
