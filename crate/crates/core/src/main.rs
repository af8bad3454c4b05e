use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use stiga::study::{emit_results, run_study, StudyConfig};

#[derive(Parser)]
#[command(name = "stiga", version, about = "Space-time isogeometric convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write a CSV table plus a JSON sidecar.
    Study(StudyArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// key = value file; flags given here override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// example1 (unit square) or example2 (quarter annulus)
    #[arg(long)]
    problem: Option<String>,
    /// comma-separated spline degrees
    #[arg(long)]
    degrees: Option<String>,
    /// comma-separated element counts per direction
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// fail unless the finest-pair rates fall inside the expected windows
    #[arg(long)]
    check_rates: bool,
    /// also compute the discrete inf-sup constant on small cells
    #[arg(long)]
    infsup: bool,
    /// write the univariate and spatial factor matrices into DIR
    #[arg(long, value_name = "DIR")]
    dump_matrices: Option<PathBuf>,
    /// Gauss points per knot span for assembly
    #[arg(long, value_name = "N")]
    quad_points: Option<usize>,
    /// refuse cells whose block system exceeds M unknowns
    #[arg(long, value_name = "M")]
    max_dof: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl StudyArgs {
    fn into_config(self) -> stiga::Result<StudyConfig> {
        let mut cfg = match &self.config {
            Some(path) => StudyConfig::from_file(path)?,
            None => StudyConfig::default(),
        };
        let mut set = |key: &str, value: Option<String>| match value {
            Some(v) => cfg.set(key, &v),
            None => Ok(()),
        };
        set("problem", self.problem)?;
        set("degrees", self.degrees)?;
        set("levels", self.levels)?;
        set("tol", self.tol.map(|v| v.to_string()))?;
        set("max-iter", self.max_iter.map(|v| v.to_string()))?;
        set("out", self.out.map(|p| p.display().to_string()))?;
        set("dump-matrices", self.dump_matrices.map(|p| p.display().to_string()))?;
        set("quad-points", self.quad_points.map(|v| v.to_string()))?;
        set("max-dof", self.max_dof.map(|v| v.to_string()))?;
        set("threads", self.threads.map(|v| v.to_string()))?;
        if self.check_rates {
            cfg.check_rates = true;
        }
        if self.infsup {
            cfg.infsup = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn study(args: StudyArgs) -> stiga::Result<bool> {
    let cfg = args.into_config()?;
    let result = run_study(&cfg)?;
    emit_results(&result, &cfg.out)?;
    println!("wrote {}", cfg.out.display());
    let mut ok = result.all_succeeded();
    for cell in result.cells.iter().filter(|c| !c.succeeded()) {
        println!("FAILED p = {} h = 1/{}: {}", cell.p, cell.elements, cell.failure.as_deref().unwrap_or(""));
    }
    if cfg.check_rates {
        for check in result.rate_checks() {
            let rate = check.rate.map_or("n/a".to_string(), |r| format!("{r:.3}"));
            let verdict = if check.passed { "ok" } else { "OUT OF WINDOW" };
            println!(
                "p = {} {}: rate {rate} in [{:.2}, {:.2}] {verdict}",
                check.p, check.measure, check.window.0, check.window.1
            );
            ok &= check.passed;
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Study(args) => study(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
