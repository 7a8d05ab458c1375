use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wplap_cli::run::{self, fmt_f64, Prepared, RunError};

#[derive(Parser)]
#[command(name = "wplap", version, about = "Weighted p-Laplace regularized elliptic solver with measure data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the eps continuation and write solution, diagnostics and summary.
    Solve { config: PathBuf },
    /// Run the schedule on every configured refinement and write a study table.
    Sweep { config: PathBuf },
    /// Re-run the diagnostics on a stored solution CSV.
    Check { config: PathBuf, solution: PathBuf },
    /// Print psi, psi', psi_p, psi_p', chi_tilde and alpha on a log grid.
    TabulateKernel {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 121)]
        points: usize,
        #[arg(long, default_value_t = 1e6)]
        s_max: f64,
        /// Write to this file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<i32, RunError> {
    match cli.command {
        Command::Solve { config } => {
            let prepared = Prepared::from_file(&config)?;
            let out = run::run_solve(&prepared)?;
            for s in &out.steps {
                let r = &s.report;
                eprintln!(
                    "eps {:<10} converged {:<5} outer {:>3} residual {:.3e} diagnostics {}",
                    fmt_f64(s.eps),
                    r.converged,
                    r.outer_iters,
                    r.final_residual,
                    if r.diagnostics.as_ref().is_some_and(|d| d.passed) { "pass" } else { "FAIL" },
                );
                for h in &r.hints {
                    eprintln!("  hint: {h}");
                }
            }
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            Ok(out.outcome.exit_code())
        }
        Command::Sweep { config } => {
            let prepared = Prepared::from_file(&config)?;
            let out = run::run_sweep(&prepared)?;
            for r in &out.rows {
                eprintln!(
                    "n {:<4} eps {:<10} converged {:<5} diff {:<24} diagnostics {}",
                    r.refinement,
                    fmt_f64(r.eps),
                    r.converged,
                    r.successive_diff.map(fmt_f64).unwrap_or_else(|| "-".into()),
                    if r.diagnostics_passed { "pass" } else { "FAIL" },
                );
            }
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            Ok(out.outcome.exit_code())
        }
        Command::Check { config, solution } => {
            let prepared = Prepared::from_file(&config)?;
            let (outcome, table) = run::run_check(&prepared, &solution)?;
            print!("{table}");
            Ok(outcome.exit_code())
        }
        Command::TabulateKernel { p, points, s_max, output } => {
            let table = run::tabulate_kernel(p, points, s_max)?;
            match output {
                Some(path) => std::fs::write(&path, table).map_err(|source| RunError::Io { path, source })?,
                None => print!("{table}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
