mod args;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use gk_core::instance::{parse_matrix_text, validate_with_report};
use gk_core::sdp::SolutionDump;
use gk_core::{
    brute_force_max, gap_sweep, monte_carlo_round, reduce_rank, reduce_to_rank_of_a, run_pipeline,
    solve_relaxation, Error, FactorWidth, FactoredSolution, PipelineConfig, ProblemInstance,
    SolverConfig, TAU_PSD, TAU_RANK,
};
use serde::Serialize;

use args::{Cli, Command, GlobalOpts, OutputFormat};

/// A failure with its process exit code: 1 for I/O and parsing, 2 for
/// invalid input, 3 for numerical failure.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl fmt::Display) -> Self {
        Self { code: 1, message: message.to_string() }
    }

    fn numerical(message: impl fmt::Display) -> Self {
        Self { code: 3, message: message.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Io(_) | Error::Parse { .. } => 1,
            Error::NumericalNullspaceFailure { .. } => 3,
            _ => 2,
        };
        Self { code, message: err.to_string() }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_instance(path: &Path) -> CliResult<ProblemInstance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let m = parse_matrix_text(&text).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })?;
    Ok(ProblemInstance::new(m)?)
}

fn read_solution(path: &Path, inst: &ProblemInstance) -> CliResult<FactoredSolution> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let dump: SolutionDump = serde_json::from_str(&text)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    Ok(FactoredSolution::from_dump(inst, &dump)?)
}

fn solver_config(g: &GlobalOpts, width: Option<usize>) -> SolverConfig {
    SolverConfig {
        factor_width: width.map_or(FactorWidth::Auto, FactorWidth::Fixed),
        tol_obj: g.tol_obj,
        max_sweeps: g.max_sweeps,
        seed: g.seed,
    }
}

fn solve(inst: &ProblemInstance, g: &GlobalOpts, width: Option<usize>) -> CliResult<FactoredSolution> {
    let sol = solve_relaxation(inst, &solver_config(g, width))?;
    check_converged(&sol, g)?;
    Ok(sol)
}

fn check_converged(sol: &FactoredSolution, g: &GlobalOpts) -> CliResult<()> {
    if let Some(info) = sol.solver_info().filter(|i| !i.converged) {
        let msg = format!("solver did not converge within {} sweeps", info.sweeps);
        if g.strict {
            return Err(Failure::numerical(msg));
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::io)?;
    write_stdout(&text)
}

fn write_stdout(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(Failure::io),
    }
}

fn json_only(g: &GlobalOpts, command: &str) -> CliResult<()> {
    if g.output == Some(OutputFormat::Csv) {
        return Err(Failure::io(format!("csv output is not available for `{command}`")));
    }
    Ok(())
}

#[derive(Serialize)]
struct ReduceOutput {
    report: gk_core::RankReductionReport,
    low_rank_report: Option<gk_core::RankReductionReport>,
    solution: SolutionDump,
}

#[derive(Serialize)]
struct OracleOutput {
    value: f64,
    x: Vec<i8>,
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match cli.command {
        Command::Validate { file } => {
            json_only(g, "validate")?;
            let text = std::fs::read_to_string(&file)
                .map_err(|e| Failure::io(format!("{}: {e}", file.display())))?;
            let m = parse_matrix_text(&text)?;
            let (_, report) = validate_with_report(&m, TAU_PSD)?;
            print_json(&report)
        }
        Command::Solve { file, width } => {
            json_only(g, "solve")?;
            let inst = read_instance(&file)?;
            print_json(&solve(&inst, g, width)?.to_dump())
        }
        Command::Reduce {
            input,
            instance,
            width,
            renormalize,
        } => {
            json_only(g, "reduce")?;
            let (inst, sol) = match instance {
                Some(path) => {
                    let inst = read_instance(&path)?;
                    let sol = read_solution(&input, &inst)?;
                    (inst, sol)
                }
                None => {
                    let inst = read_instance(&input)?;
                    let sol = solve(&inst, g, width)?;
                    (inst, sol)
                }
            };
            let (mut sol, report) = reduce_rank(&sol, &inst)?;
            let mut low_rank_report = None;
            if g.exploit_rank_a && inst.rank(TAU_RANK) < sol.k() {
                let (reduced, rep) = reduce_to_rank_of_a(&sol, &inst, TAU_RANK, renormalize)?;
                sol = reduced;
                low_rank_report = Some(rep);
            }
            print_json(&ReduceOutput {
                report,
                low_rank_report,
                solution: sol.to_dump(),
            })
        }
        Command::Round { solution, instance } => {
            json_only(g, "round")?;
            let inst = read_instance(&instance)?;
            let sol = read_solution(&solution, &inst)?;
            print_json(&monte_carlo_round(&sol, &inst, g.trials, g.seed, g.workers)?)
        }
        Command::Oracle { file, n_limit } => {
            json_only(g, "oracle")?;
            let inst = read_instance(&file)?;
            let best = brute_force_max(&inst, n_limit)?;
            print_json(&OracleOutput {
                value: best.value,
                x: best.x,
            })
        }
        Command::Gap {
            p,
            n,
            seeds,
            directions,
        } => {
            let seed_list: Vec<u64> = (0..seeds).map(|s| g.seed + s).collect();
            let records = gap_sweep(&[p], n, &seed_list, &solver_config(g, None), directions)?;
            match g.output.unwrap_or(OutputFormat::Csv) {
                OutputFormat::Json => print_json(&records),
                OutputFormat::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for rec in &records {
                        w.serialize(rec).map_err(Failure::io)?;
                    }
                    let bytes = w.into_inner().map_err(Failure::io)?;
                    write_stdout(String::from_utf8_lossy(&bytes).trim_end())
                }
            }
        }
        Command::Pipeline { file, oracle_limit } => {
            json_only(g, "pipeline")?;
            let inst = read_instance(&file)?;
            let cfg = PipelineConfig {
                solver: solver_config(g, None),
                trials: g.trials,
                workers: g.workers,
                seed: g.seed,
                exploit_rank_a: g.exploit_rank_a,
                oracle_limit,
            };
            let run = run_pipeline(&inst, &cfg)?;
            if !run.result.solver.converged {
                let msg = format!(
                    "solver did not converge within {} sweeps",
                    run.result.solver.sweeps
                );
                if g.strict {
                    return Err(Failure::numerical(msg));
                }
                eprintln!("warning: {msg}");
            }
            print_json(&run.result)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = writeln!(std::io::stderr(), "error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
