use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use drmmd::harness::{self, output, ExperimentConfig, Scenario};
use drmmd::{Algorithm, Error, KernelSpec};

#[derive(Parser)]
#[command(name = "drmmd", version, about = "DrMMD particle descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flows of an experiment configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AlgoFilter::Both)]
        algo: AlgoFilter,
        #[arg(long)]
        quiet: bool,
    },
    /// Sample a scenario's point cloud to CSV.
    GenData {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Role::Target)]
        role: Role,
    },
    /// Compare two CSV point clouds; prints `{"mmd2": .., "w2": ..}`.
    Eval {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum)]
        kernel: KernelArg,
        #[arg(long, default_value_t = 1.0)]
        bandwidth: f64,
        #[arg(long, default_value_t = 1.0)]
        offset: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoFilter {
    Drmmd,
    Mmd,
    Both,
}

impl AlgoFilter {
    fn keeps(self, a: Algorithm) -> bool {
        match self {
            AlgoFilter::Drmmd => a == Algorithm::DrMmd,
            AlgoFilter::Mmd => a == Algorithm::MmdFlow,
            AlgoFilter::Both => true,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Target,
    Source,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    Imq,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Numerical(_) => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("drmmd: {e}");
        return ExitCode::from(1);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drmmd: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("DRMMD_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("DRMMD_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("DRMMD_THREADS must be a positive integer, got `0`".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn execute(cmd: Command) -> drmmd::Result<()> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            algo,
            quiet,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.algorithms.retain(|a| algo.keeps(a.kind));
            if cfg.algorithms.is_empty() {
                return Err(Error::Config(
                    "no configured algorithm matches --algo".into(),
                ));
            }
            harness::run_experiment_with(&cfg, |run| {
                if !quiet {
                    let first = run.record.first();
                    let last = run.record.last();
                    eprintln!(
                        "{}: {} iterations, mmd2 {:.4e} -> {:.4e}, written to {}",
                        run.name,
                        last.iteration,
                        first.mmd2,
                        last.mmd2,
                        run.dir.display()
                    );
                }
            })?;
            Ok(())
        }
        Command::GenData {
            scenario,
            n,
            seed,
            out,
            role,
        } => {
            let scenario = Scenario::parse(&scenario)?;
            let mut cfg = match scenario {
                Scenario::StudentTeacher => ExperimentConfig::student_teacher_default(),
                _ => ExperimentConfig::three_rings_default(),
            };
            cfg.scenario = scenario;
            cfg.n = n;
            cfg.m = n;
            cfg.seed = seed;
            cfg.validate()?;
            let problem = harness::build_problem(&cfg)?;
            let points = match role {
                Role::Target => problem.target,
                Role::Source => problem.init,
            };
            output::write_points(&out, &points)
        }
        Command::Eval {
            a,
            b,
            kernel,
            bandwidth,
            offset,
        } => {
            let a = output::read_points(&a)?;
            let b = output::read_points(&b)?;
            let kernel = match kernel {
                KernelArg::Gaussian => KernelSpec::gaussian(bandwidth)?,
                KernelArg::Imq => KernelSpec::inverse_multiquadric(bandwidth, offset)?,
            };
            let report = drmmd::report(&a, &b, &kernel, 0)?;
            let json = serde_json::json!({ "mmd2": report.mmd2, "w2": report.w2 });
            println!("{json}");
            Ok(())
        }
    }
}
