//! Causal cell--cell communication screening via Bayesian Mendelian
//! randomization with a receptor-modulated interaction term.
//!
//! The crate is organized around a single data contract ([`model::Dataset`]):
//! donor-level instrument dosages for a ligand gene (`G`) and a receptor gene
//! (`H`), observed covariates (`V`), and the three phenotype vectors
//! (ligand expression `x`, receptor expression `z`, pathway activity `y`).
//!
//! * [`model`] — domain types, centering, standardized effects, sign-reversal
//!   thresholds, and receptor-modulated effect curves.
//! * [`sim`] — the structural-model simulator for the three benchmark
//!   scenarios with deterministic per-block RNG streams.
//! * [`gibbs`] — the spike-and-slab Gibbs sampler producing posterior
//!   inclusion probabilities and posterior-mean effects.
//! * [`baselines`] — competing estimators (naive OLS with a joint F-test,
//!   two-stage MVMR, summary-statistic MR-BMA) on a common result contract.
//! * [`bench`] — replicate aggregation (bias / MAD / rejection rate) and the
//!   scenario x sample-size x method benchmark grid.
//! * [`linalg`] — ridge-regularized symmetric solves shared by the sampler.
//! * [`verify`] — independent completing-the-square posteriors used by the
//!   test suites to cross-check every closed-form conditional.

pub mod baselines;
pub mod bench;
pub mod gibbs;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod verify;

pub use baselines::{Method, MethodResult};
pub use bench::BenchCell;
pub use gibbs::{Hyperparams, McmcSettings, PosteriorSummary};
pub use model::{Dataset, EffectSummary, SignReversal, StructuralParams};
pub use sim::{Scenario, SimConfig};
