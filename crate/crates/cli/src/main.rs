use std::path::PathBuf;
use std::process::ExitCode;

use adapt_core::harness::experiments::{fits_of, fits_table, medians_from_table, run_experiment};
use adapt_core::harness::io::{fmt_f64, Table};
use adapt_core::harness::{Experiment, ExperimentSpec, DEFAULT_FAILURE_THRESHOLD, DEFAULT_SEED, MAX_N, MIN_N};
use adapt_core::losses::LossKind;
use adapt_core::model::{ProblemInstance, DEFAULT_BETA};
use adapt_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "thermal-adapt", version, about = "Adaptive variational thermal-state preparation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write random problem instances as JSON files.
    Gen(GenArgs),
    /// ADAPT and fixed-ansatz loss curves on one instance.
    LossCurves(RunArgs),
    /// Worst-case infidelity against parameter count.
    SizeScan(RunArgs),
    /// Largest pool gradient at the reference state, with decay fits.
    GradScan(RunArgs),
    /// Initial pool gradient against reference-target fidelity.
    FidelityScan(RunArgs),
    /// Pool gradient against completion fraction of converged runs.
    Completion(RunArgs),
    /// Fit `a * b^-n` to the medians of a gradient-scan CSV.
    Fit(FitArgs),
}

#[derive(Args)]
struct GenArgs {
    /// System sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// System sizes, comma separated; the experiment's default when omitted.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// overlap, gibbs or renyi; repeat for several. All three by default.
    #[arg(long = "loss", value_parser = parse_loss)]
    losses: Vec<LossKind>,
    #[arg(long, default_value_t = adapt_core::adapt::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    max_params: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Allow the slow sizes (full ADAPT above n = 3, scans at n = 6).
    #[arg(long)]
    expensive: bool,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct FitArgs {
    /// grad-scan CSV (raw rows or medians).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FAILURE_THRESHOLD)]
    threshold: f64,
    /// Write the fits here as CSV as well as printing them.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    fn spec(self, experiment: Experiment) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(experiment);
        if let Some(n) = self.n {
            spec.n_range = n;
        }
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        if !self.losses.is_empty() {
            let mut losses = Vec::new();
            for l in self.losses {
                if !losses.contains(&l) {
                    losses.push(l);
                }
            }
            spec.losses = losses;
        }
        spec.base_seed = self.seed;
        spec.beta = self.beta;
        spec.epsilon = self.epsilon;
        spec.max_params = self.max_params;
        spec.output_dir = Some(self.out);
        spec.threads = self.threads;
        spec.expensive = self.expensive;
        spec.plot = self.plot;
        spec
    }
}

fn gen(args: GenArgs) -> Result<u8, Error> {
    if args.trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    if let Some(&n) = args.n.iter().find(|n| !(MIN_N..=MAX_N).contains(*n)) {
        return Err(Error::Parameter(format!("system size {n} outside [{MIN_N}, {MAX_N}]")));
    }
    std::fs::create_dir_all(&args.out)?;
    for &n in &args.n {
        for t in 0..args.trials as u64 {
            let inst = ProblemInstance::generate(n, args.beta, args.seed, t)?;
            let path = args.out.join(format!("instance_n{n}_trial{t}.json"));
            inst.save(&path)?;
            println!("{}", path.display());
        }
    }
    Ok(0)
}

fn run(args: RunArgs, experiment: Experiment) -> Result<u8, Error> {
    let spec = args.spec(experiment);
    let outcome = run_experiment(&spec)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    if outcome.failures.is_empty() {
        return Ok(0);
    }
    for f in &outcome.failures {
        eprintln!("trial failed: {}", f.describe());
    }
    Ok(EXIT_PARTIAL)
}

fn fit(args: FitArgs) -> Result<u8, Error> {
    if !(args.threshold > 0.0) {
        return Err(Error::Parameter(format!("threshold must be positive, got {}", args.threshold)));
    }
    let table = Table::read(&args.input)?;
    let medians = medians_from_table(&table)?;
    let fits = fits_of(&medians, args.threshold);
    if fits.is_empty() {
        return Err(Error::Parameter("no loss has medians at three or more sizes".into()));
    }
    println!("loss\ta\tb\tresidual\tpredicted_failure_n");
    for f in &fits {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            f.loss_kind.map(|l| l.name()).unwrap_or("-"),
            fmt_f64(f.a),
            fmt_f64(f.b),
            fmt_f64(f.residual),
            f.predicted_failure_n.map(|n| n.to_string()).unwrap_or_else(|| "none".into())
        );
    }
    if let Some(out) = args.out {
        fits_table(&fits).write(&out)?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::LossCurves(a) => run(a, Experiment::LossCurves),
        Command::SizeScan(a) => run(a, Experiment::SizeScan),
        Command::GradScan(a) => run(a, Experiment::GradScan),
        Command::FidelityScan(a) => run(a, Experiment::FidelityScan),
        Command::Completion(a) => run(a, Experiment::Completion),
        Command::Fit(a) => fit(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
