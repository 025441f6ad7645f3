//! `minimax-fold <study> [--config FILE] [overrides]`

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use minimax_fold::harness::{run, Overrides, RunConfig, Study};

#[derive(Parser)]
#[command(name = "minimax-fold", version, about = "Minimax fold values of positone elliptic systems")]
struct Cli {
    #[command(subcommand)]
    study: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the discrete max-min problem and write a certificate.
    Solve(Common),
    /// Mesh refinement study (at least three sizes).
    Refine(Common),
    /// Perturbation sandwich and kappa sweep (scalar_power only).
    Perturb(Common),
    /// Sample the structural hypotheses and interpolation rates.
    Check(Common),
    /// Compare against pseudo-arclength continuation.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Element count; repeat or separate by commas for several sizes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with code 4 when a sampled hypothesis fails.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Ok(t) = std::env::var("MF_THREADS") {
        match t.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: MF_THREADS must be a positive integer, got `{t}`");
                return ExitCode::from(2);
            }
        }
    }
    let (study, c) = match cli.study {
        Command::Solve(c) => (Study::Solve, c),
        Command::Refine(c) => (Study::Refine, c),
        Command::Perturb(c) => (Study::Perturb, c),
        Command::Check(c) => (Study::Check, c),
        Command::Oracle(c) => (Study::Oracle, c),
    };
    let ov = Overrides {
        study: Some(study),
        problem: c.problem,
        q: c.q,
        gamma: c.gamma,
        n: c.n,
        seed: c.seed,
        out: c.out,
        strict: c.strict,
    };
    let result = RunConfig::load(c.config.as_deref(), &ov).and_then(|cfg| run(&cfg));
    match result {
        Ok(out) => {
            // a closed pipe must not turn a finished run into a panic
            let mut so = std::io::stdout().lock();
            let _ = writeln!(so, "{}", out.summary);
            for f in &out.files {
                let _ = writeln!(so, "  wrote {}", f.display());
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
