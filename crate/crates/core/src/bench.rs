//! Replicate aggregation and the scenario x sample-size x method grid.
//!
//! Every method in a cell fits the identical simulated dataset (paired
//! comparison); aggregation is a deterministic reduce over replicate index,
//! so results do not depend on worker scheduling.

use thiserror::Error;

use crate::baselines::{fit_method, BaselineError, Method, MethodResult};
use crate::gibbs::{Hyperparams, McmcSettings};
use crate::model::{center_dataset, StructuralParams};
use crate::sim::{derive_seed, generate_dataset, Scenario, SimConfig, SimError};

/// Seed-domain tag separating chain seeds from simulation streams.
const CHAIN_SEED_TAG: u64 = 0xC0FF_EE00;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot summarize an empty result set")]
    EmptyResults,
    #[error("mixed methods in one cell: {0} and {1}")]
    MixedMethods(Method, Method),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One benchmark table cell: score mean (sd), rejection rate, and signed /
/// absolute deviation of the point estimates from truth, over replicates
/// that fit successfully.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub scenario: Scenario,
    pub n: usize,
    pub method: Method,
    pub score_mean: f64,
    pub score_sd: f64,
    pub rejection_rate: f64,
    pub bias_beta_x: f64,
    pub mad_beta_x: f64,
    /// Absent for methods that do not estimate the interaction.
    pub bias_beta_xz: Option<f64>,
    pub mad_beta_xz: Option<f64>,
    pub replicates: usize,
    pub failures: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample sd over replicates (denominator R-1); a single replicate reports 0.
fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Aggregates one method's replicate results against the generative truth.
pub fn summarize_cell(
    scenario: Scenario,
    n: usize,
    results: &[MethodResult],
    truth: &StructuralParams,
    failures: usize,
) -> Result<BenchCell, BenchError> {
    let first = results.first().ok_or(BenchError::EmptyResults)?;
    let method = first.method;
    if let Some(other) = results.iter().find(|r| r.method != method) {
        return Err(BenchError::MixedMethods(method, other.method));
    }

    let scores: Vec<f64> = results.iter().map(|r| r.score).collect();
    let rejection_rate =
        results.iter().filter(|r| r.decision).count() as f64 / results.len() as f64;

    let dev_x: Vec<f64> = results.iter().map(|r| r.beta_x_hat - truth.beta_x).collect();
    let (bias_beta_xz, mad_beta_xz) = if results.iter().all(|r| r.beta_xz_hat.is_some()) {
        let dev: Vec<f64> = results
            .iter()
            .map(|r| r.beta_xz_hat.unwrap() - truth.beta_xz)
            .collect();
        (
            Some(mean(&dev)),
            Some(mean(&dev.iter().map(|d| d.abs()).collect::<Vec<_>>())),
        )
    } else {
        (None, None)
    };

    Ok(BenchCell {
        scenario,
        n,
        method,
        score_mean: mean(&scores),
        score_sd: sd(&scores),
        rejection_rate,
        bias_beta_x: mean(&dev_x),
        mad_beta_x: mean(&dev_x.iter().map(|d| d.abs()).collect::<Vec<_>>()),
        bias_beta_xz,
        mad_beta_xz,
        replicates: results.len(),
        failures,
    })
}

/// Grid request. MCMC lengths apply to the MR-CCC fits only.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub scenarios: Vec<Scenario>,
    pub ns: Vec<usize>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub master_seed: u64,
    pub mcmc_iterations: usize,
    pub mcmc_burn_in: usize,
    pub mcmc_thin: usize,
}

impl GridSpec {
    pub fn new(ns: Vec<usize>, master_seed: u64) -> Self {
        GridSpec {
            scenarios: Scenario::ALL.to_vec(),
            ns,
            methods: Method::ALL.to_vec(),
            replicates: crate::sim::BENCHMARK_REPLICATES,
            master_seed,
            mcmc_iterations: 20_000,
            mcmc_burn_in: 2_000,
            mcmc_thin: 5,
        }
    }
}

/// Chain seed for one replicate fit, stable across grid compositions.
pub fn chain_seed(master_seed: u64, scenario: Scenario, n: usize, replicate: usize) -> u64 {
    derive_seed(master_seed, scenario, n, replicate, CHAIN_SEED_TAG)
}

type RepOutcome = Vec<Result<MethodResult, BaselineError>>;

fn run_replicate(spec: &GridSpec, scenario: Scenario, n: usize, rep: usize) -> Result<RepOutcome, SimError> {
    let draw = generate_dataset(&SimConfig {
        scenario,
        n,
        replicate_index: rep,
        master_seed: spec.master_seed,
    })?;
    // one shared, centered dataset for every method (paired comparison)
    let (data, _) = center_dataset(&draw.data);
    let hyper = Hyperparams::for_sample_size(n);
    let mcmc = McmcSettings {
        iterations: spec.mcmc_iterations,
        burn_in: spec.mcmc_burn_in,
        thin: spec.mcmc_thin,
        seed: chain_seed(spec.master_seed, scenario, n, rep),
        keep_draws: false,
    };
    Ok(spec
        .methods
        .iter()
        .map(|&m| fit_method(m, &data, &hyper, &mcmc))
        .collect())
}

#[cfg(feature = "parallel")]
fn replicate_outcomes(spec: &GridSpec, scenario: Scenario, n: usize) -> Result<Vec<RepOutcome>, SimError> {
    use rayon::prelude::*;
    (0..spec.replicates)
        .into_par_iter()
        .map(|rep| run_replicate(spec, scenario, n, rep))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn replicate_outcomes(spec: &GridSpec, scenario: Scenario, n: usize) -> Result<Vec<RepOutcome>, SimError> {
    (0..spec.replicates)
        .map(|rep| run_replicate(spec, scenario, n, rep))
        .collect()
}

/// Runs the full grid. Cell order is scenario-major, then sample size, then
/// method, matching the reported tables. Failed fits are excluded from the
/// summary statistics and surface in the `failures` count.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<BenchCell>, BenchError> {
    let mut cells = Vec::with_capacity(spec.scenarios.len() * spec.ns.len() * spec.methods.len());
    for &scenario in &spec.scenarios {
        let truth = crate::sim::fixed_params(scenario);
        for &n in &spec.ns {
            let outcomes = replicate_outcomes(spec, scenario, n)?;
            for (m_idx, &method) in spec.methods.iter().enumerate() {
                let mut ok = Vec::with_capacity(spec.replicates);
                let mut failures = 0usize;
                for rep in &outcomes {
                    match &rep[m_idx] {
                        Ok(r) => ok.push(r.clone()),
                        Err(_) => failures += 1,
                    }
                }
                let cell = if ok.is_empty() {
                    // a cell where every replicate failed still appears in the
                    // output with NaN summaries and a full failure count
                    BenchCell {
                        scenario,
                        n,
                        method,
                        score_mean: f64::NAN,
                        score_sd: f64::NAN,
                        rejection_rate: f64::NAN,
                        bias_beta_x: f64::NAN,
                        mad_beta_x: f64::NAN,
                        bias_beta_xz: None,
                        mad_beta_xz: None,
                        replicates: 0,
                        failures,
                    }
                } else {
                    summarize_cell(scenario, n, &ok, &truth, failures)?
                };
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}
