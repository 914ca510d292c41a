use clap::{Parser, Subcommand};
use hadamard_flow::harness::config::bundled;
use hadamard_flow::harness::{export, run_scenario, verify, ExportFormat, Scenario, Suite, Verdict};
use hadamard_flow::parallel::init_workers;
use hadamard_flow::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hadamard-flow", version, about = "Hadamard parametrices and their regularization on curved patches")]
struct Cli {
    /// Worker threads for the data-parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides the scenario's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write coefficient tables, cone tables, reports and a manifest.
    Run { scenario: PathBuf },
    /// Run one verification suite (or `all`) and print the verdicts.
    Verify {
        suite: String,
        /// Scenario file; defaults to a bundled one.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Copy a cached artifact such as `coeff/b0/X0` into `<out>/export/`.
    Export {
        artifact: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: ExportFormat,
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::from_path(path)
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        println!("{} {} [{}]", if v.passed { "PASS" } else { "FAIL" }, v.suite, v.scenario);
        for c in &v.checks {
            println!(
                "  {} {:<48} {:.3e} {:?} {:.3e}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.measured,
                c.relation,
                c.tolerance
            );
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { scenario } => {
            let s = load(scenario)?;
            let m = run_scenario(&s, cli.out.as_deref())?;
            print_verdicts(&m.verdicts);
            println!("cache {:?}, {} artifacts, hash {}", m.cache, m.artifacts.len(), m.scenario_hash);
            Ok(m.passed())
        }
        Command::Verify { suite, scenario } => {
            let suite: Suite = suite.parse()?;
            let s = match scenario {
                Some(path) => load(path)?,
                None if suite == Suite::DiracSymmetry => bundled("minkowski_dirac")?,
                None => bundled("minkowski_kg")?,
            };
            let (verdicts, _) = verify(&s, suite)?;
            print_verdicts(&verdicts);
            Ok(verdicts.iter().all(|v| v.passed))
        }
        Command::Export {
            artifact,
            format,
            scenario,
        } => {
            let s = load(scenario)?;
            for path in export(&s, artifact, *format, cli.out.as_deref())? {
                println!("{}", path.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    init_workers(cli.workers);
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
