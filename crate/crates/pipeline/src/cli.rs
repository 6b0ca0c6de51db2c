//! The `mrccc` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use mrccc_core::baselines::{fit_method, Method};
use mrccc_core::bench::{run_grid, GridSpec};
use mrccc_core::gibbs::{Hyperparams, McmcSettings};
use mrccc_core::model::center_dataset;
use mrccc_core::sim::{generate_dataset, Scenario, SimConfig};

use crate::dataset_io::{
    bench_cells_to_csv_string, dataset_to_csv_string, method_result_to_csv_row,
    read_dataset_csv, truth_to_csv_string, METHOD_RESULT_HEADER,
};
use crate::error::PipelineError;
use crate::screen::{outcomes_to_csv_string, run_screen};

/// Environment variable supplying the default worker count.
pub const JOBS_ENV: &str = "MRCCC_JOBS";

#[derive(Parser)]
#[command(
    name = "mrccc",
    about = "Bayesian MR screening of receptor-modulated cell-cell communication",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate benchmark replicates to dataset + truth CSV files
    Simulate(SimulateArgs),
    /// Fit one method to a dataset CSV and emit a result row
    Fit(FitArgs),
    /// Screen every ligand-receptor-pathway triplet in a manifest
    Screen(ScreenArgs),
    /// Run the scenario x sample-size x method benchmark grid
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario: S1, S2, or S3
    #[arg(long)]
    scenario: String,
    /// Donor count
    #[arg(long)]
    n: usize,
    /// Number of replicates to write
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV (donor,g*,h*,v*,x,z,y)
    #[arg(long)]
    data: PathBuf,
    /// Method: ols, mvmr, mrbma, or mrccc
    #[arg(long)]
    method: String,
    /// MR-CCC chain length
    #[arg(long, default_value_t = 20_000)]
    iterations: usize,
    /// MR-CCC burn-in
    #[arg(long = "burn-in", default_value_t = 2_000)]
    burn_in: usize,
    /// MR-CCC thinning factor
    #[arg(long, default_value_t = 5)]
    thin: usize,
    /// MR-CCC chain seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScreenArgs {
    /// Screening manifest (JSON)
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: MRCCC_JOBS or all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Master seed
    #[arg(long)]
    seed: u64,
    /// Comma-separated sample sizes
    #[arg(long = "n-list", default_value = "500,1000", value_delimiter = ',')]
    n_list: Vec<usize>,
    /// Replicates per cell
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    /// Comma-separated scenarios (default: all)
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<String>>,
    /// Comma-separated methods (default: all)
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// MR-CCC chain length
    #[arg(long, default_value_t = 20_000)]
    iterations: usize,
    /// MR-CCC burn-in
    #[arg(long = "burn-in", default_value_t = 2_000)]
    burn_in: usize,
    /// MR-CCC thinning factor
    #[arg(long, default_value_t = 5)]
    thin: usize,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: MRCCC_JOBS or all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

/// Parses and runs; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Fit(args) => run_fit(args),
        Command::Screen(args) => run_screen_cmd(args),
        Command::Benchmark(args) => run_benchmark(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, PipelineError> {
    Scenario::parse(s)
        .ok_or_else(|| PipelineError::Manifest(format!("unknown scenario '{s}' (want S1, S2, or S3)")))
}

fn parse_method(s: &str) -> Result<Method, PipelineError> {
    Method::parse(s).ok_or_else(|| {
        PipelineError::Manifest(format!(
            "unknown method '{s}' (want ols, mvmr, mrbma, or mrccc)"
        ))
    })
}

fn jobs_or_env(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var(JOBS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
    })
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), PipelineError> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| PipelineError::io(path, e)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run_simulate(args: SimulateArgs) -> Result<(), PipelineError> {
    let scenario = parse_scenario(&args.scenario)?;
    std::fs::create_dir_all(&args.out).map_err(|e| PipelineError::io(&args.out, e))?;
    for rep in 0..args.replicates.max(1) {
        let draw = generate_dataset(&SimConfig {
            scenario,
            n: args.n,
            replicate_index: rep,
            master_seed: args.seed,
        })?;
        let stem = format!("{}_n{}_r{:03}", scenario.id(), args.n, rep);
        let data_path = args.out.join(format!("{stem}.csv"));
        std::fs::write(&data_path, dataset_to_csv_string(&draw.data, None))
            .map_err(|e| PipelineError::io(&data_path, e))?;
        let truth_path = args.out.join(format!("{stem}_truth.csv"));
        std::fs::write(
            &truth_path,
            truth_to_csv_string(&draw.truth, scenario, args.n, rep, args.seed),
        )
        .map_err(|e| PipelineError::io(&truth_path, e))?;
    }
    Ok(())
}

fn run_fit(args: FitArgs) -> Result<(), PipelineError> {
    let method = parse_method(&args.method)?;
    let (data, _donors) = read_dataset_csv(&args.data)?;
    let (centered, _) = center_dataset(&data);
    let hyper = Hyperparams::for_sample_size(centered.n());
    let mcmc = McmcSettings {
        iterations: args.iterations,
        burn_in: args.burn_in,
        thin: args.thin,
        seed: args.seed,
        keep_draws: false,
    };
    let result = fit_method(method, &centered, &hyper, &mcmc)?;
    let content = format!("{METHOD_RESULT_HEADER}\n{}\n", method_result_to_csv_row(&result));
    write_or_print(args.out.as_deref(), &content)
}

fn run_screen_cmd(args: ScreenArgs) -> Result<(), PipelineError> {
    let outcomes = run_screen(&args.manifest, jobs_or_env(args.jobs))?;
    write_or_print(args.out.as_deref(), &outcomes_to_csv_string(&outcomes))
}

fn run_benchmark(args: BenchmarkArgs) -> Result<(), PipelineError> {
    let scenarios = match &args.scenarios {
        Some(list) => list
            .iter()
            .map(|s| parse_scenario(s))
            .collect::<Result<Vec<_>, _>>()?,
        None => Scenario::ALL.to_vec(),
    };
    let methods = match &args.methods {
        Some(list) => list
            .iter()
            .map(|m| parse_method(m))
            .collect::<Result<Vec<_>, _>>()?,
        None => Method::ALL.to_vec(),
    };
    let spec = GridSpec {
        scenarios,
        ns: args.n_list.clone(),
        methods,
        replicates: args.replicates,
        master_seed: args.seed,
        mcmc_iterations: args.iterations,
        mcmc_burn_in: args.burn_in,
        mcmc_thin: args.thin,
    };
    let run = || run_grid(&spec);
    let cells = match jobs_or_env(args.jobs) {
        Some(j) if j > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .expect("thread pool")
            .install(run),
        _ => run(),
    }?;
    write_or_print(args.out.as_deref(), &bench_cells_to_csv_string(&cells))
}
