//! Spike-and-slab Gibbs sampler for the instrumented working model.
//!
//! One sweep performs the thirteen closed-form updates in fixed order:
//! ligand exposure block (pi_x, alpha_x, sigma2_x), receptor exposure block
//! (pi_z, alpha_z, sigma2_z), plug-in recomputation of X*, Z* and the
//! communication design X_beta = [X* | X* .* Z*], outcome nuisance block
//! (mu, alpha_y, beta_z, sigma2_y), and finally the communication block
//! (beta | gamma, gamma, rho). Every matrix inverse is a ridge-regularized
//! Cholesky solve.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma, StandardNormal};
use thiserror::Error;

use crate::linalg::{ridge_cholesky, LinalgError};
use crate::model::Dataset;

/// Column-mean tolerance for the "data must be centered" precondition.
const CENTERED_TOL: f64 = 1e-6;

/// Prior constants of the sampler. Defaults follow the reference analysis:
/// every g equals `min(n, 100)`, IG(3, 2) on variances, Beta(3, 1) on the
/// inclusion probability, spike scale `1e-4`, ridge `1e-6`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub g_g: f64,
    pub g_h: f64,
    pub g_v: f64,
    pub g_z: f64,
    pub g_beta: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_rho: f64,
    pub b_rho: f64,
    pub nu_1: f64,
    pub ridge_lambda: f64,
}

impl Hyperparams {
    /// Defaults for a dataset with `n` donors.
    pub fn for_sample_size(n: usize) -> Self {
        let g = (n as f64).min(100.0);
        Hyperparams {
            g_g: g,
            g_h: g,
            g_v: g,
            g_z: g,
            g_beta: g,
            a_sigma: 3.0,
            b_sigma: 2.0,
            a_rho: 3.0,
            b_rho: 1.0,
            nu_1: 1e-4,
            ridge_lambda: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<(), GibbsError> {
        let positives = [
            ("g_g", self.g_g),
            ("g_h", self.g_h),
            ("g_v", self.g_v),
            ("g_z", self.g_z),
            ("g_beta", self.g_beta),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_rho", self.a_rho),
            ("b_rho", self.b_rho),
            ("nu_1", self.nu_1),
            ("ridge_lambda", self.ridge_lambda),
        ];
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(GibbsError::InvalidHyperparam {
                    name,
                    value: v,
                    requirement: "strictly positive",
                });
            }
        }
        if self.nu_1 > 0.01 {
            return Err(GibbsError::InvalidHyperparam {
                name: "nu_1",
                value: self.nu_1,
                requirement: "spike scale must be << 1 (at most 0.01)",
            });
        }
        Ok(())
    }
}

/// Chain length controls. `benchmark_defaults` thins by 5, the screening
/// configuration thins by 10; both run 20,000 sweeps with 2,000 burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Retain per-draw (beta_x, beta_xz, beta_z, gamma) in the summary.
    pub keep_draws: bool,
}

impl McmcSettings {
    pub fn benchmark_defaults(seed: u64) -> Self {
        McmcSettings {
            iterations: 20_000,
            burn_in: 2_000,
            thin: 5,
            seed,
            keep_draws: false,
        }
    }

    pub fn screening_defaults(seed: u64) -> Self {
        McmcSettings {
            iterations: 20_000,
            burn_in: 2_000,
            thin: 10,
            seed,
            keep_draws: false,
        }
    }

    pub fn validate(&self) -> Result<(), GibbsError> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(GibbsError::InvalidSettings(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(GibbsError::InvalidSettings(
                "thinning factor must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The sweep steps, used to label failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    PiX,
    AlphaX,
    Sigma2X,
    PiZ,
    AlphaZ,
    Sigma2Z,
    Mu,
    AlphaY,
    BetaZ,
    Sigma2Y,
    Beta,
    Gamma,
    Rho,
    Init,
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Step::PiX => "step 1 (pi_x)",
            Step::AlphaX => "step 2 (alpha_x)",
            Step::Sigma2X => "step 3 (sigma2_x)",
            Step::PiZ => "step 4 (pi_z)",
            Step::AlphaZ => "step 5 (alpha_z)",
            Step::Sigma2Z => "step 6 (sigma2_z)",
            Step::Mu => "step 7 (mu)",
            Step::AlphaY => "step 8 (alpha_y)",
            Step::BetaZ => "step 9 (beta_z)",
            Step::Sigma2Y => "step 10 (sigma2_y)",
            Step::Beta => "step 11 (beta)",
            Step::Gamma => "step 12 (gamma)",
            Step::Rho => "step 13 (rho)",
            Step::Init => "initialization",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum GibbsError {
    #[error("dataset must be centered before sampling (column mean exceeds {CENTERED_TOL:e})")]
    NotCentered,
    #[error("hyperparameter {name} = {value} invalid: {requirement}")]
    InvalidHyperparam {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("invalid MCMC settings: {0}")]
    InvalidSettings(String),
    #[error("{step} failed at iteration {iteration}: {source}")]
    Solve {
        step: Step,
        iteration: usize,
        source: LinalgError,
    },
    #[error("{step} at iteration {iteration}: inverse-gamma scale {scale} is not positive (corrupted residuals)")]
    NonPositiveScale {
        step: Step,
        iteration: usize,
        scale: f64,
    },
    #[error("{step} at iteration {iteration}: quadratic form Q = {q} is negative")]
    NegativeQuadraticForm {
        step: Step,
        iteration: usize,
        q: f64,
    },
}

/// Current values of every sampled quantity plus the plug-in designs.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub pi_x: DVector<f64>,
    pub alpha_x: DVector<f64>,
    pub sigma2_x: f64,
    pub pi_z: DVector<f64>,
    pub alpha_z: DVector<f64>,
    pub sigma2_z: f64,
    pub mu: f64,
    pub alpha_y: DVector<f64>,
    pub beta_z: f64,
    pub sigma2_y: f64,
    /// (beta_x, beta_xz)
    pub beta: DVector<f64>,
    pub gamma: bool,
    pub rho: f64,
    pub x_star: DVector<f64>,
    pub z_star: DVector<f64>,
    /// n x 2 design [X* | X* .* Z*], kept in lock-step with the plug-ins.
    pub x_beta: DMatrix<f64>,
}

impl ChainState {
    /// Slab multiplier for the current inclusion state.
    pub fn s_gamma(&self, hyper: &Hyperparams) -> f64 {
        if self.gamma {
            1.0
        } else {
            hyper.nu_1
        }
    }
}

/// A Gaussian full conditional in precision form: `theta ~ N(P^-1 rhs, P^-1)`.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub precision: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl GaussianConditional {
    pub fn mean(&self) -> Result<DVector<f64>, LinalgError> {
        let chol = ridge_cholesky(&self.precision, 0.0, Some("conditional mean"))?;
        Ok(chol.solve(&self.rhs))
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>, LinalgError> {
        let chol = ridge_cholesky(&self.precision, 0.0, Some("conditional covariance"))?;
        Ok(chol.inverse())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Result<DVector<f64>, LinalgError> {
        let chol = ridge_cholesky(&self.precision, 0.0, Some("conditional draw"))?;
        let mean = chol.solve(&self.rhs);
        let z = DVector::from_fn(self.rhs.len(), |_, _| rng.sample(StandardNormal));
        // P = LL', so L^-T z has covariance P^-1
        let upper = chol.l().transpose();
        let perturbation = upper
            .solve_upper_triangular(&z)
            .ok_or(LinalgError::NotPositiveDefinite {
                context: Some("triangular backsolve"),
            })?;
        Ok(mean + perturbation)
    }
}

/// Inverse-gamma full conditional parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgParams {
    pub shape: f64,
    pub scale: f64,
}

/// Per-draw record retained when `keep_draws` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub beta_x: f64,
    pub beta_xz: f64,
    pub beta_z: f64,
    pub gamma: bool,
}

/// Posterior summaries over the kept draws. Point estimates are
/// model-averaged: means are taken over all kept draws regardless of gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    /// Pr(gamma = 1 | data): fraction of kept draws with the indicator on.
    pub pip: f64,
    pub mean_beta_x: f64,
    pub mean_beta_xz: f64,
    pub mean_beta_z: f64,
    pub n_kept: usize,
    pub draws: Option<Vec<Draw>>,
}

/// Precomputed Gram blocks of the fixed design matrices.
struct Precomputed {
    gram_g: DMatrix<f64>,
    gram_h: DMatrix<f64>,
    gram_v: DMatrix<f64>,
    gtv: DMatrix<f64>,
    htv: DMatrix<f64>,
    gtx: DVector<f64>,
    htz: DVector<f64>,
    vtx: DVector<f64>,
    vtz: DVector<f64>,
}

/// The sampler owns its RNG and mutable state; the dataset is shared and
/// immutable, so independent chains can run concurrently on one dataset.
pub struct GibbsSampler<'a> {
    data: &'a Dataset,
    hyper: Hyperparams,
    pre: Precomputed,
    pub state: ChainState,
    rng: ChaCha8Rng,
    iteration: usize,
}

/// Which exposure block a mirrored update acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureSide {
    Ligand,
    Receptor,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(data: &'a Dataset, hyper: Hyperparams, seed: u64) -> Result<Self, GibbsError> {
        if !data.is_centered(CENTERED_TOL) {
            return Err(GibbsError::NotCentered);
        }
        let pre = Precomputed {
            gram_g: data.g.transpose() * &data.g,
            gram_h: data.h.transpose() * &data.h,
            gram_v: data.v.transpose() * &data.v,
            gtv: data.g.transpose() * &data.v,
            htv: data.h.transpose() * &data.v,
            gtx: data.g.transpose() * &data.x,
            htz: data.h.transpose() * &data.z,
            vtx: data.v.transpose() * &data.x,
            vtz: data.v.transpose() * &data.z,
        };
        let state = Self::initial_state(data, &hyper, &pre)?;
        Ok(GibbsSampler {
            data,
            hyper,
            pre,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            iteration: 0,
        })
    }

    /// Starting point: g-prior-shrunk least squares for the exposure
    /// coefficients, a null communication effect with the indicator on, the
    /// prior-mean inclusion probability, and unit variances.
    fn initial_state(
        data: &Dataset,
        hyper: &Hyperparams,
        pre: &Precomputed,
    ) -> Result<ChainState, GibbsError> {
        let solve_side = |gram_d: &DMatrix<f64>,
                          dtv: &DMatrix<f64>,
                          dtr: &DVector<f64>,
                          vtr: &DVector<f64>,
                          g_d: f64|
         -> Result<(DVector<f64>, DVector<f64>), GibbsError> {
            let p_d = gram_d.nrows();
            let p_v = pre.gram_v.nrows();
            let dim = p_d + p_v;
            let mut joint = DMatrix::zeros(dim, dim);
            joint
                .view_mut((0, 0), (p_d, p_d))
                .copy_from(&(gram_d * (1.0 + 1.0 / g_d)));
            joint.view_mut((0, p_d), (p_d, p_v)).copy_from(dtv);
            joint
                .view_mut((p_d, 0), (p_v, p_d))
                .copy_from(&dtv.transpose());
            joint
                .view_mut((p_d, p_d), (p_v, p_v))
                .copy_from(&(&pre.gram_v * (1.0 + 1.0 / hyper.g_v)));
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, p_d).copy_from(dtr);
            rhs.rows_mut(p_d, p_v).copy_from(vtr);
            let chol = ridge_cholesky(&joint, hyper.ridge_lambda, Some("initialization"))
                .map_err(|source| GibbsError::Solve {
                    step: Step::Init,
                    iteration: 0,
                    source,
                })?;
            let sol = chol.solve(&rhs);
            Ok((
                DVector::from(sol.rows(0, p_d)),
                DVector::from(sol.rows(p_d, p_v)),
            ))
        };

        let (pi_x, alpha_x) = solve_side(&pre.gram_g, &pre.gtv, &pre.gtx, &pre.vtx, hyper.g_g)?;
        let (pi_z, alpha_z) = solve_side(&pre.gram_h, &pre.htv, &pre.htz, &pre.vtz, hyper.g_h)?;

        let mut state = ChainState {
            pi_x,
            alpha_x,
            sigma2_x: 1.0,
            pi_z,
            alpha_z,
            sigma2_z: 1.0,
            mu: 0.0,
            alpha_y: DVector::zeros(data.p_v()),
            beta_z: 0.0,
            sigma2_y: 1.0,
            beta: DVector::zeros(2),
            gamma: true,
            rho: hyper.a_rho / (hyper.a_rho + hyper.b_rho),
            x_star: DVector::zeros(data.n()),
            z_star: DVector::zeros(data.n()),
            x_beta: DMatrix::zeros(data.n(), 2),
        };
        refresh_plugins(data, &mut state);
        Ok(state)
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    /// X* = G pi_x + V alpha_x, Z* = H pi_z + V alpha_z, X_beta = [X* | X*.*Z*].
    pub fn recompute_plugins(&mut self) {
        refresh_plugins(self.data, &mut self.state);
    }

    /// w_x = beta_x 1 + beta_xz Z* (ligand) or w_z = beta_z 1 + beta_xz X*
    /// (receptor): the working-model weight on the side's own plug-in.
    fn side_weight(&self, side: ExposureSide) -> DVector<f64> {
        let s = &self.state;
        match side {
            ExposureSide::Ligand => {
                DVector::from_fn(self.data.n(), |i, _| s.beta[0] + s.beta[1] * s.z_star[i])
            }
            ExposureSide::Receptor => {
                DVector::from_fn(self.data.n(), |i, _| s.beta_z + s.beta[1] * s.x_star[i])
            }
        }
    }

    /// y - mu - (other side's main-effect term) - V alpha_y; the part of the
    /// outcome explained by this side is (own plug-in) .* w.
    fn side_partial(&self, side: ExposureSide) -> DVector<f64> {
        let s = &self.state;
        let d = self.data;
        let mut partial = &d.y - &d.v * &s.alpha_y;
        partial.add_scalar_mut(-s.mu);
        match side {
            ExposureSide::Ligand => partial - &s.z_star * s.beta_z,
            ExposureSide::Receptor => partial - &s.x_star * s.beta[0],
        }
    }

    fn side_blocks(
        &self,
        side: ExposureSide,
    ) -> (
        &DMatrix<f64>,
        &DVector<f64>,
        &DMatrix<f64>,
        &DVector<f64>,
        &DMatrix<f64>,
        f64,
        f64,
    ) {
        match side {
            ExposureSide::Ligand => (
                &self.data.g,
                &self.data.x,
                &self.pre.gram_g,
                &self.pre.gtx,
                &self.pre.gtv,
                self.hyper.g_g,
                self.state.sigma2_x,
            ),
            ExposureSide::Receptor => (
                &self.data.h,
                &self.data.z,
                &self.pre.gram_h,
                &self.pre.htz,
                &self.pre.htv,
                self.hyper.g_h,
                self.state.sigma2_z,
            ),
        }
    }

    /// Instrument-coefficient conditional (steps 1 and 4).
    pub fn pi_conditional(&self, side: ExposureSide) -> GaussianConditional {
        let (design, _, gram, dtr, dtv, g_d, sigma2_d) = self.side_blocks(side);
        let s = &self.state;
        let alpha_own = match side {
            ExposureSide::Ligand => &s.alpha_x,
            ExposureSide::Receptor => &s.alpha_z,
        };
        let w = self.side_weight(side);
        let dw = scale_rows(design, &w);
        let v_alpha = &self.data.v * alpha_own;
        let r = self.side_partial(side) - v_alpha.component_mul(&w);

        let mut precision = gram * ((1.0 + 1.0 / g_d) / sigma2_d);
        precision += dw.transpose() * &dw / s.sigma2_y;
        add_ridge(&mut precision, self.hyper.ridge_lambda);
        let rhs = (dtr - dtv * alpha_own) / sigma2_d + dw.transpose() * r / s.sigma2_y;
        GaussianConditional { precision, rhs }
    }

    /// Covariate-coefficient conditional (steps 2 and 5); `None` without
    /// covariates.
    pub fn alpha_conditional(&self, side: ExposureSide) -> Option<GaussianConditional> {
        if self.data.p_v() == 0 {
            return None;
        }
        let (design, response, _, _, _, _, sigma2_d) = self.side_blocks(side);
        let s = &self.state;
        let pi_own = match side {
            ExposureSide::Ligand => &s.pi_x,
            ExposureSide::Receptor => &s.pi_z,
        };
        let g_v = self.hyper.g_v;
        let w = self.side_weight(side);
        let vw = scale_rows(&self.data.v, &w);
        let d_pi = design * pi_own;
        let r = self.side_partial(side) - d_pi.component_mul(&w);

        let mut precision = &self.pre.gram_v * ((1.0 + 1.0 / g_v) / sigma2_d);
        precision += vw.transpose() * &vw / s.sigma2_y;
        add_ridge(&mut precision, self.hyper.ridge_lambda);
        let rhs = self.data.v.transpose() * (response - d_pi) / sigma2_d
            + vw.transpose() * r / s.sigma2_y;
        Some(GaussianConditional { precision, rhs })
    }

    /// Exposure noise-variance conditional (steps 3 and 6).
    pub fn sigma2_exposure_conditional(&self, side: ExposureSide) -> IgParams {
        let (design, response, gram, _, _, g_d, _) = self.side_blocks(side);
        let s = &self.state;
        let (pi_own, alpha_own) = match side {
            ExposureSide::Ligand => (&s.pi_x, &s.alpha_x),
            ExposureSide::Receptor => (&s.pi_z, &s.alpha_z),
        };
        let res = response - design * pi_own - &self.data.v * alpha_own;
        let pi_quad = (pi_own.transpose() * gram * pi_own)[(0, 0)] / g_d;
        let alpha_quad = if self.data.p_v() == 0 {
            0.0
        } else {
            (alpha_own.transpose() * &self.pre.gram_v * alpha_own)[(0, 0)] / self.hyper.g_v
        };
        let n = self.data.n() as f64;
        let p_d = design.ncols() as f64;
        let p_v = self.data.p_v() as f64;
        IgParams {
            shape: self.hyper.a_sigma + (n + p_d + p_v) / 2.0,
            scale: self.hyper.b_sigma + 0.5 * (res.norm_squared() + pi_quad + alpha_quad),
        }
    }

    /// Intercept conditional (step 7): the diffuse N(0, n sigma_y^2) prior
    /// gives denominator n + 1/n.
    pub fn intercept_conditional(&self) -> GaussianConditional {
        let s = &self.state;
        let r = self.outcome_residual(true, true, true, true);
        let n = self.data.n() as f64;
        let denom = n + 1.0 / n;
        GaussianConditional {
            precision: DMatrix::from_element(1, 1, denom / s.sigma2_y),
            rhs: DVector::from_element(1, r.sum() / s.sigma2_y),
        }
    }

    /// Outcome covariate conditional (step 8); `None` without covariates.
    pub fn alpha_y_conditional(&self) -> Option<GaussianConditional> {
        if self.data.p_v() == 0 {
            return None;
        }
        let s = &self.state;
        let r = self.outcome_residual(false, true, true, false);
        let c_v = self.hyper.g_v / (1.0 + self.hyper.g_v);
        let mut gram = self.pre.gram_v.clone();
        add_ridge(&mut gram, self.hyper.ridge_lambda);
        Some(GaussianConditional {
            precision: gram / (c_v * s.sigma2_y),
            rhs: self.data.v.transpose() * r / s.sigma2_y,
        })
    }

    /// Receptor main-effect conditional (step 9); the plug-in Gram scalar is
    /// regularized as Z*'Z* + lambda.
    pub fn beta_z_conditional(&self) -> GaussianConditional {
        let s = &self.state;
        let r = self.outcome_residual(false, true, false, true);
        let c_z = self.hyper.g_z / (1.0 + self.hyper.g_z);
        let denom = s.z_star.norm_squared() + self.hyper.ridge_lambda;
        GaussianConditional {
            precision: DMatrix::from_element(1, 1, denom / (c_z * s.sigma2_y)),
            rhs: DVector::from_element(1, s.z_star.dot(&r) / s.sigma2_y),
        }
    }

    /// Outcome variance conditional (step 10): five-term scale including the
    /// diffuse-intercept and g-prior penalties.
    pub fn sigma2_y_conditional(&self) -> IgParams {
        let s = &self.state;
        let e = self.outcome_residual(false, true, true, true);
        let n = self.data.n() as f64;
        let p_v = self.data.p_v() as f64;
        let s_gamma = s.s_gamma(&self.hyper);
        let beta_quad = {
            let m = s.x_beta.transpose() * &s.x_beta;
            (s.beta.transpose() * m * &s.beta)[(0, 0)] / (self.hyper.g_beta * s_gamma)
        };
        let beta_z_quad = s.beta_z * s.beta_z * s.z_star.norm_squared() / self.hyper.g_z;
        let alpha_y_quad = if self.data.p_v() == 0 {
            0.0
        } else {
            (s.alpha_y.transpose() * &self.pre.gram_v * &s.alpha_y)[(0, 0)] / self.hyper.g_v
        };
        IgParams {
            shape: self.hyper.a_sigma + (n + p_v + 4.0) / 2.0,
            scale: self.hyper.b_sigma
                + 0.5
                    * (e.norm_squared()
                        + s.mu * s.mu / n
                        + beta_quad
                        + beta_z_quad
                        + alpha_y_quad),
        }
    }

    /// Communication-effect conditional (step 11): shrinkage
    /// c_gamma = g_beta s_gamma / (1 + g_beta s_gamma) on the ridge-solved
    /// least-squares fit of the working residual on X_beta.
    pub fn beta_conditional(&self) -> GaussianConditional {
        let s = &self.state;
        let r = self.outcome_residual(false, false, true, true);
        let gs = self.hyper.g_beta * s.s_gamma(&self.hyper);
        let c_gamma = gs / (1.0 + gs);
        let mut m = s.x_beta.transpose() * &s.x_beta;
        add_ridge(&mut m, self.hyper.ridge_lambda);
        GaussianConditional {
            precision: m / (c_gamma * s.sigma2_y),
            rhs: s.x_beta.transpose() * r / s.sigma2_y,
        }
    }

    /// Inclusion probability for step 12, evaluated in log space with the
    /// max-subtraction trick.
    pub fn gamma_probability(&self) -> Result<f64, GibbsError> {
        let s = &self.state;
        let m = s.x_beta.transpose() * &s.x_beta;
        let q = (s.beta.transpose() * m * &s.beta)[(0, 0)];
        if q < -1e-9 {
            return Err(GibbsError::NegativeQuadraticForm {
                step: Step::Gamma,
                iteration: self.iteration,
                q,
            });
        }
        let q = q.max(0.0);
        let rho = s.rho.clamp(1e-300, 1.0 - 1e-16);
        let log_a = -0.5 * q / (self.hyper.g_beta * s.sigma2_y) + rho.ln();
        let log_b = -0.5 * q / (self.hyper.g_beta * self.hyper.nu_1 * s.sigma2_y)
            + (1.0 - rho).ln()
            - self.hyper.nu_1.ln();
        Ok(sigmoid(log_a - log_b))
    }

    /// Residual of the working model with selected terms removed. Flags name
    /// the terms to KEEP OUT of the residual subtraction:
    /// `y - [mu] - [X_beta beta] - [beta_z Z*] - [V alpha_y]` where each
    /// bracketed term is subtracted only when its flag is true.
    fn outcome_residual(
        &self,
        skip_mu: bool,
        sub_beta: bool,
        sub_beta_z: bool,
        sub_alpha_y: bool,
    ) -> DVector<f64> {
        let s = &self.state;
        let d = self.data;
        let mut r = d.y.clone();
        if !skip_mu {
            r.add_scalar_mut(-s.mu);
        }
        if sub_beta {
            r -= &s.x_beta * &s.beta;
        }
        if sub_beta_z {
            r -= &s.z_star * s.beta_z;
        }
        if sub_alpha_y {
            r -= &d.v * &s.alpha_y;
        }
        r
    }

    fn draw_gaussian(
        &mut self,
        cond: &GaussianConditional,
        step: Step,
    ) -> Result<DVector<f64>, GibbsError> {
        cond.sample(&mut self.rng).map_err(|source| GibbsError::Solve {
            step,
            iteration: self.iteration,
            source,
        })
    }

    fn draw_inverse_gamma(&mut self, ig: IgParams, step: Step) -> Result<f64, GibbsError> {
        if !(ig.scale > 0.0) || !ig.scale.is_finite() {
            return Err(GibbsError::NonPositiveScale {
                step,
                iteration: self.iteration,
                scale: ig.scale,
            });
        }
        let gamma = Gamma::new(ig.shape, 1.0).expect("shape is positive");
        Ok(ig.scale / gamma.sample(&mut self.rng))
    }

    /// One full systematic scan in the fixed step order.
    pub fn sweep(&mut self) -> Result<(), GibbsError> {
        self.iteration += 1;

        // ligand exposure block
        let cond = self.pi_conditional(ExposureSide::Ligand);
        self.state.pi_x = self.draw_gaussian(&cond, Step::PiX)?;
        if let Some(cond) = self.alpha_conditional(ExposureSide::Ligand) {
            self.state.alpha_x = self.draw_gaussian(&cond, Step::AlphaX)?;
        }
        let ig = self.sigma2_exposure_conditional(ExposureSide::Ligand);
        self.state.sigma2_x = self.draw_inverse_gamma(ig, Step::Sigma2X)?;

        // receptor exposure block
        let cond = self.pi_conditional(ExposureSide::Receptor);
        self.state.pi_z = self.draw_gaussian(&cond, Step::PiZ)?;
        if let Some(cond) = self.alpha_conditional(ExposureSide::Receptor) {
            self.state.alpha_z = self.draw_gaussian(&cond, Step::AlphaZ)?;
        }
        let ig = self.sigma2_exposure_conditional(ExposureSide::Receptor);
        self.state.sigma2_z = self.draw_inverse_gamma(ig, Step::Sigma2Z)?;

        self.recompute_plugins();

        // outcome nuisance block
        let cond = self.intercept_conditional();
        self.state.mu = self.draw_gaussian(&cond, Step::Mu)?[0];
        if let Some(cond) = self.alpha_y_conditional() {
            self.state.alpha_y = self.draw_gaussian(&cond, Step::AlphaY)?;
        }
        let cond = self.beta_z_conditional();
        self.state.beta_z = self.draw_gaussian(&cond, Step::BetaZ)?[0];
        let ig = self.sigma2_y_conditional();
        self.state.sigma2_y = self.draw_inverse_gamma(ig, Step::Sigma2Y)?;

        // communication block
        let cond = self.beta_conditional();
        self.state.beta = self.draw_gaussian(&cond, Step::Beta)?;
        let p = self.gamma_probability()?;
        self.state.gamma = self.rng.random_bool(p);
        let (a, b) = (
            self.hyper.a_rho + if self.state.gamma { 1.0 } else { 0.0 },
            self.hyper.b_rho + if self.state.gamma { 0.0 } else { 1.0 },
        );
        let beta_dist = BetaDist::new(a, b).expect("Beta parameters are positive");
        self.state.rho = beta_dist.sample(&mut self.rng);

        Ok(())
    }
}

fn refresh_plugins(data: &Dataset, state: &mut ChainState) {
    state.x_star = &data.g * &state.pi_x + &data.v * &state.alpha_x;
    state.z_star = &data.h * &state.pi_z + &data.v * &state.alpha_z;
    let mut xb = DMatrix::zeros(data.n(), 2);
    xb.set_column(0, &state.x_star);
    xb.set_column(1, &state.x_star.component_mul(&state.z_star));
    state.x_beta = xb;
}

/// diag(w) * m: row i scaled by w_i.
fn scale_rows(m: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut row, wi) in out.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    out
}

fn add_ridge(m: &mut DMatrix<f64>, lambda: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += lambda;
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Runs a single chain and summarizes the kept draws. Sweep `t` is kept when
/// `t > burn_in` and `(t - burn_in)` is a multiple of the thinning factor.
pub fn run_chain(
    data: &Dataset,
    hyper: &Hyperparams,
    mcmc: &McmcSettings,
) -> Result<PosteriorSummary, GibbsError> {
    hyper.validate()?;
    mcmc.validate()?;
    let mut sampler = GibbsSampler::new(data, hyper.clone(), mcmc.seed)?;

    let capacity = (mcmc.iterations - mcmc.burn_in) / mcmc.thin + 1;
    let mut kept: Vec<Draw> = Vec::with_capacity(capacity);
    for t in 1..=mcmc.iterations {
        sampler.sweep()?;
        if t > mcmc.burn_in && (t - mcmc.burn_in) % mcmc.thin == 0 {
            kept.push(Draw {
                beta_x: sampler.state.beta[0],
                beta_xz: sampler.state.beta[1],
                beta_z: sampler.state.beta_z,
                gamma: sampler.state.gamma,
            });
        }
    }

    let n_kept = kept.len();
    let nf = n_kept as f64;
    let pip = kept.iter().filter(|d| d.gamma).count() as f64 / nf;
    let mean_beta_x = kept.iter().map(|d| d.beta_x).sum::<f64>() / nf;
    let mean_beta_xz = kept.iter().map(|d| d.beta_xz).sum::<f64>() / nf;
    let mean_beta_z = kept.iter().map(|d| d.beta_z).sum::<f64>() / nf;
    Ok(PosteriorSummary {
        pip,
        mean_beta_x,
        mean_beta_xz,
        mean_beta_z,
        n_kept,
        draws: mcmc.keep_draws.then_some(kept),
    })
}
