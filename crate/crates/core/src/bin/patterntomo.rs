use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use patterntomo::experiment::{
    run_experiment, simulate, sweep_purity, write_purity_csv, write_reconstruction_outputs,
    write_simulation_outputs, ExperimentConfig, ExperimentError, PatternDir,
};
use patterntomo::quantum::fock_mixture;
use patterntomo::solver::{solve, SolverOptions};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "patterntomo", version, about = "Data-pattern homodyne tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate signal and probe histograms.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit patterns read from a `simulate` output directory.
    Reconstruct(ReconstructArgs),
    /// Simulate and reconstruct for every probe count.
    Study {
        #[command(flatten)]
        common: Common,
        /// Comma-separated probe counts, overriding the config.
        #[arg(long, value_delimiter = ',')]
        probe_counts: Option<Vec<usize>>,
    },
    /// Mean fidelity across the vacuum/one-photon coherence family.
    PuritySweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    patterns: PathBuf,
    /// Fock dimension; read from simulation.json when omitted.
    #[arg(long)]
    dimension: Option<usize>,
    /// Use the first N probes; all of them when omitted.
    #[arg(long)]
    probe_count: Option<usize>,
    /// TOML file with solver options.
    #[arg(long)]
    solver_opts: Option<PathBuf>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = if e.is_config() { EXIT_CONFIG } else { EXIT_FAILURE };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn require_out(cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    cfg.output_dir
        .clone()
        .ok_or_else(|| config_error("no output directory: pass --out or set output_dir"))
}

fn run_simulate(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let out = require_out(&cfg)?;
    let data = simulate(&cfg)?;
    let paths = write_simulation_outputs(&out, &cfg, &data)?;
    println!("wrote {} files to {}", paths.len(), out.display());
    Ok(())
}

fn solver_options(args: &ReconstructArgs) -> Result<SolverOptions, Failure> {
    let mut opts = match &args.solver_opts {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => SolverOptions::default(),
    };
    if let Some(v) = args.mu0 {
        opts.mu0 = v;
    }
    if let Some(v) = args.beta {
        opts.beta = v;
    }
    if args.m.is_some() {
        opts.m = args.m;
    }
    if let Some(v) = args.max_iterations {
        opts.max_iterations = v;
    }
    Ok(opts)
}

fn run_reconstruct(args: &ReconstructArgs) -> Result<(), Failure> {
    let opts = solver_options(args)?;
    let data = PatternDir::load(&args.patterns, args.dimension)?;
    opts.barrier_exponent(data.dimension)
        .map_err(|e| config_error(e.to_string()))?;
    let n = args.probe_count.unwrap_or(data.amplitudes.len());
    let (probes, patterns) = data.prefix(n)?;
    let solution = solve(&patterns, &probes, &opts).map_err(|e| Failure {
        code: EXIT_SOLVER,
        message: e.to_string(),
    })?;
    let true_rho = match &data.true_state {
        Some(spec) => Some(
            fock_mixture(spec, data.dimension)
                .map_err(|e| config_error(format!("recorded true state: {e}")))?,
        ),
        None => None,
    };
    println!(
        "N={n} status={} iterations={} F={:.6e} residual={:.3e}",
        solution.status, solution.iterations, solution.objective, solution.residual
    );
    let out = args.out.clone().unwrap_or_else(|| args.patterns.join("reconstruction"));
    write_reconstruction_outputs(&out, &solution, true_rho.as_ref())?;
    println!("wrote reconstruction to {}", out.display());
    Ok(())
}

fn run_study(common: &Common, probe_counts: &Option<Vec<usize>>) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    if let Some(counts) = probe_counts {
        cfg.probe_counts = counts.clone();
    }
    require_out(&cfg)?;
    let report = run_experiment(&cfg)?;
    println!("{:>4} {:>10} {:>10} {:>15} {:>6}", "N", "W(0)", "fidelity", "status", "iter");
    for r in &report.records {
        match &r.error {
            None => println!(
                "{:>4} {:>10.5} {:>10.6} {:>15} {:>6}",
                r.probe_count,
                r.wigner_origin.unwrap_or(f64::NAN),
                r.fidelity.unwrap_or(f64::NAN),
                r.status.map(|s| s.to_string()).unwrap_or_default(),
                r.iterations
            ),
            Some(e) => println!("{:>4} failed: {e}", r.probe_count),
        }
    }
    if report.all_failed() {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: "every reconstruction failed".into(),
        });
    }
    Ok(())
}

fn run_purity(common: &Common, gammas: &[f64], runs: usize) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    cfg.validate()?;
    if runs == 0 {
        return Err(config_error("--runs must be positive"));
    }
    let rows = sweep_purity(&cfg, gammas, runs).map_err(|e| match e {
        ExperimentError::Quantum(q) => config_error(format!("gamma outside [0, 0.5]: {q}")),
        other => other.into(),
    })?;
    match &cfg.output_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(ExperimentError::from)?;
            let path = dir.join("purity_sweep.csv");
            let file = std::fs::File::create(&path).map_err(ExperimentError::from)?;
            write_purity_csv(file, &rows).map_err(ExperimentError::from)?;
            println!("wrote {}", path.display());
        }
        None => write_purity_csv(std::io::stdout(), &rows).map_err(ExperimentError::from)?,
    }
    if rows.iter().all(|r| r.failures == r.runs) {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: "every reconstruction failed".into(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common } => run_simulate(common),
        Command::Reconstruct(args) => run_reconstruct(args),
        Command::Study {
            common,
            probe_counts,
        } => run_study(common, probe_counts),
        Command::PuritySweep {
            common,
            gammas,
            runs,
        } => run_purity(common, gammas, *runs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
