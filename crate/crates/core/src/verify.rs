//! Brute-force conjugate posteriors used to cross-check the sampler's
//! closed-form conditionals.
//!
//! Everything here goes through explicit matrix inversion and literal
//! accumulation of quadratic forms, deliberately avoiding the factorized
//! update paths in [`crate::gibbs`]. The test suites compare both routes on
//! random inputs.

use nalgebra::{DMatrix, DVector};

/// One Gaussian likelihood contribution: `response = design * theta + noise`,
/// noise i.i.d. with variance `noise_var`.
pub struct GaussianTerm {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub noise_var: f64,
}

/// Posterior mean and covariance of `theta ~ N(0, prior_cov)` after
/// conditioning on independent [`GaussianTerm`]s, by completing the square
/// with explicit inverses.
pub fn conjugate_posterior(
    prior_cov: &DMatrix<f64>,
    terms: &[GaussianTerm],
) -> (DVector<f64>, DMatrix<f64>) {
    let p = prior_cov.nrows();
    assert_eq!(p, prior_cov.ncols(), "prior covariance must be square");
    let mut precision = prior_cov
        .clone()
        .try_inverse()
        .expect("prior covariance must be invertible");
    let mut rhs = DVector::zeros(p);
    for t in terms {
        assert_eq!(t.design.ncols(), p, "design width must match theta");
        precision += t.design.transpose() * &t.design / t.noise_var;
        rhs += t.design.transpose() * &t.response / t.noise_var;
    }
    let cov = precision
        .try_inverse()
        .expect("posterior precision must be invertible");
    let mean = &cov * rhs;
    (mean, cov)
}

/// A coefficient block whose prior covariance is `variance * cov_factor`,
/// contributing `coef' cov_factor^{-1} coef` to the variance conditional.
pub struct ScaledCoefBlock {
    pub coef: DVector<f64>,
    pub cov_factor: DMatrix<f64>,
}

/// Inverse-gamma full conditional `IG(shape, scale)` for a variance with
/// prior `IG(a, b)`, given residual vectors carrying that variance and
/// coefficient blocks scaled by it.
pub fn inverse_gamma_conditional(
    a: f64,
    b: f64,
    residuals: &[DVector<f64>],
    blocks: &[ScaledCoefBlock],
) -> (f64, f64) {
    let mut shape = a;
    let mut scale = b;
    for r in residuals {
        shape += r.len() as f64 / 2.0;
        scale += 0.5 * r.norm_squared();
    }
    for blk in blocks {
        let dim = blk.coef.len();
        if dim == 0 {
            continue;
        }
        shape += dim as f64 / 2.0;
        let inv = blk
            .cov_factor
            .clone()
            .try_inverse()
            .expect("prior covariance factor must be invertible");
        scale += 0.5 * (blk.coef.transpose() * inv * &blk.coef)[(0, 0)];
    }
    (shape, scale)
}

pub use suite::{check_gibbs_conditionals, SuiteReport};

/// Randomized self-check of every sampler conditional against the explicit
/// completing-the-square route above. Kept out of production code paths;
/// the unit and acceptance suites drive it.
mod suite {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::{conjugate_posterior, inverse_gamma_conditional, GaussianTerm, ScaledCoefBlock};
    use crate::gibbs::{ExposureSide, GaussianConditional, GibbsSampler, Hyperparams, IgParams};
    use crate::model::{center_dataset, Dataset};

    const N: usize = 20;
    /// Tiny ridge keeps the implementation's regularized solves within the
    /// comparison tolerance of the unregularized oracle.
    const RIDGE: f64 = 1e-12;

    /// Worst absolute deviations observed across the suite.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct SuiteReport {
        pub instances: u64,
        pub max_gaussian_err: f64,
        pub max_ig_err: f64,
    }

    struct StateSpec {
        pi_x: DVector<f64>,
        alpha_x: DVector<f64>,
        sigma2_x: f64,
        pi_z: DVector<f64>,
        alpha_z: DVector<f64>,
        sigma2_z: f64,
        mu: f64,
        alpha_y: DVector<f64>,
        beta_z: f64,
        sigma2_y: f64,
        beta: DVector<f64>,
        gamma: bool,
        rho: f64,
    }

    fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
    }

    fn normal_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
    }

    fn unif(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * rng.random::<f64>()
    }

    fn build_instance(seed: u64) -> (Dataset, Hyperparams, StateSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p_g = 2 + (rng.random::<u32>() % 3) as usize;
        let p_h = 2 + (rng.random::<u32>() % 2) as usize;
        let p_v = 1 + (rng.random::<u32>() % 3) as usize;

        let g = normal_matrix(&mut rng, N, p_g, 1.0);
        let h = normal_matrix(&mut rng, N, p_h, 1.0);
        let v = normal_matrix(&mut rng, N, p_v, 1.0);
        let x = normal_vector(&mut rng, N, 1.0);
        let z = normal_vector(&mut rng, N, 1.0);
        let y = normal_vector(&mut rng, N, 1.5);
        let data = Dataset::new(g, h, v, x, z, y).expect("valid random dataset");
        let (data, _) = center_dataset(&data);

        let hyper = Hyperparams {
            g_g: unif(&mut rng, 5.0, 100.0),
            g_h: unif(&mut rng, 5.0, 100.0),
            g_v: unif(&mut rng, 5.0, 100.0),
            g_z: unif(&mut rng, 5.0, 100.0),
            g_beta: unif(&mut rng, 5.0, 100.0),
            a_sigma: 3.0,
            b_sigma: 2.0,
            a_rho: 3.0,
            b_rho: 1.0,
            nu_1: 1e-4,
            ridge_lambda: RIDGE,
        };
        let state = StateSpec {
            pi_x: normal_vector(&mut rng, p_g, 0.6),
            alpha_x: normal_vector(&mut rng, p_v, 0.5),
            sigma2_x: unif(&mut rng, 0.5, 2.0),
            pi_z: normal_vector(&mut rng, p_h, 0.6),
            alpha_z: normal_vector(&mut rng, p_v, 0.5),
            sigma2_z: unif(&mut rng, 0.5, 2.0),
            mu: unif(&mut rng, -0.5, 0.5),
            alpha_y: normal_vector(&mut rng, p_v, 0.5),
            beta_z: unif(&mut rng, -0.8, 0.8),
            sigma2_y: unif(&mut rng, 0.5, 2.0),
            beta: DVector::from_vec(vec![unif(&mut rng, -0.8, 0.8), unif(&mut rng, -0.8, 0.8)]),
            gamma: rng.random::<f64>() < 0.5,
            rho: unif(&mut rng, 0.1, 0.9),
        };
        (data, hyper, state)
    }

    fn apply_state(sampler: &mut GibbsSampler<'_>, st: &StateSpec) {
        sampler.state.pi_x = st.pi_x.clone();
        sampler.state.alpha_x = st.alpha_x.clone();
        sampler.state.sigma2_x = st.sigma2_x;
        sampler.state.pi_z = st.pi_z.clone();
        sampler.state.alpha_z = st.alpha_z.clone();
        sampler.state.sigma2_z = st.sigma2_z;
        sampler.state.mu = st.mu;
        sampler.state.alpha_y = st.alpha_y.clone();
        sampler.state.beta_z = st.beta_z;
        sampler.state.sigma2_y = st.sigma2_y;
        sampler.state.beta = st.beta.clone();
        sampler.state.gamma = st.gamma;
        sampler.state.rho = st.rho;
        sampler.recompute_plugins();
    }

    fn scale_rows(m: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for (mut row, wi) in out.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        out
    }

    fn compare_gaussian(
        cond: &GaussianConditional,
        oracle: (DVector<f64>, DMatrix<f64>),
        tol: f64,
        what: &str,
        seed: u64,
        worst: &mut f64,
    ) -> Result<(), String> {
        let mean = cond.mean().map_err(|e| e.to_string())?;
        let cov = cond.covariance().map_err(|e| e.to_string())?;
        for i in 0..mean.len() {
            let err = (mean[i] - oracle.0[i]).abs();
            *worst = worst.max(err);
            if err > tol {
                return Err(format!(
                    "{what} mean[{i}]: impl {} vs oracle {} (seed {seed})",
                    mean[i], oracle.0[i]
                ));
            }
        }
        for r in 0..cov.nrows() {
            for c in 0..cov.ncols() {
                let err = (cov[(r, c)] - oracle.1[(r, c)]).abs();
                *worst = worst.max(err);
                if err > tol {
                    return Err(format!(
                        "{what} cov[{r},{c}]: impl {} vs oracle {} (seed {seed})",
                        cov[(r, c)],
                        oracle.1[(r, c)]
                    ));
                }
            }
        }
        Ok(())
    }

    fn compare_ig(
        ig: IgParams,
        oracle: (f64, f64),
        tol: f64,
        what: &str,
        seed: u64,
        worst: &mut f64,
    ) -> Result<(), String> {
        for (name, got, want) in [("shape", ig.shape, oracle.0), ("scale", ig.scale, oracle.1)] {
            let err = (got - want).abs();
            *worst = worst.max(err);
            if err > tol {
                return Err(format!(
                    "{what} {name}: impl {got} vs oracle {want} (seed {seed})"
                ));
            }
        }
        Ok(())
    }

    /// Compares all eight Gaussian and three inverse-gamma conditionals to
    /// the explicit-inverse oracle on `instances` random problems.
    pub fn check_gibbs_conditionals(
        instances: u64,
        gauss_tol: f64,
        ig_tol: f64,
    ) -> Result<SuiteReport, String> {
        let mut report = SuiteReport {
            instances,
            ..Default::default()
        };
        for seed in 0..instances {
            let (data, hyper, st) = build_instance(seed);
            let mut sampler =
                GibbsSampler::new(&data, hyper.clone(), 0).map_err(|e| e.to_string())?;
            apply_state(&mut sampler, &st);

            let d = &data;
            let hy = &hyper;
            let x_star = &d.g * &st.pi_x + &d.v * &st.alpha_x;
            let z_star = &d.h * &st.pi_z + &d.v * &st.alpha_z;
            let mut x_beta = DMatrix::zeros(N, 2);
            x_beta.set_column(0, &x_star);
            x_beta.set_column(1, &x_star.component_mul(&z_star));

            let gram_g = d.g.transpose() * &d.g;
            let gram_h = d.h.transpose() * &d.h;
            let gram_v = d.v.transpose() * &d.v;
            let inv = |m: &DMatrix<f64>| m.clone().try_inverse().expect("invertible gram");
            let v_alpha_y = &d.v * &st.alpha_y;
            let gw = &mut report.max_gaussian_err;

            // step 1: pi_x
            {
                let w = DVector::from_fn(N, |i, _| st.beta[0] + st.beta[1] * z_star[i]);
                let v_alpha_x = &d.v * &st.alpha_x;
                let mut r = &d.y - &z_star * st.beta_z - &v_alpha_y - v_alpha_x.component_mul(&w);
                r.add_scalar_mut(-st.mu);
                let oracle = conjugate_posterior(
                    &(inv(&gram_g) * st.sigma2_x * hy.g_g),
                    &[
                        GaussianTerm {
                            design: d.g.clone(),
                            response: &d.x - &v_alpha_x,
                            noise_var: st.sigma2_x,
                        },
                        GaussianTerm {
                            design: scale_rows(&d.g, &w),
                            response: r,
                            noise_var: st.sigma2_y,
                        },
                    ],
                );
                compare_gaussian(
                    &sampler.pi_conditional(ExposureSide::Ligand),
                    oracle,
                    gauss_tol,
                    "pi_x",
                    seed,
                    gw,
                )?;
            }

            // step 2: alpha_x
            {
                let w = DVector::from_fn(N, |i, _| st.beta[0] + st.beta[1] * z_star[i]);
                let g_pi = &d.g * &st.pi_x;
                let mut r = &d.y - &z_star * st.beta_z - &v_alpha_y - g_pi.component_mul(&w);
                r.add_scalar_mut(-st.mu);
                let oracle = conjugate_posterior(
                    &(inv(&gram_v) * st.sigma2_x * hy.g_v),
                    &[
                        GaussianTerm {
                            design: d.v.clone(),
                            response: &d.x - &g_pi,
                            noise_var: st.sigma2_x,
                        },
                        GaussianTerm {
                            design: scale_rows(&d.v, &w),
                            response: r,
                            noise_var: st.sigma2_y,
                        },
                    ],
                );
                compare_gaussian(
                    &sampler
                        .alpha_conditional(ExposureSide::Ligand)
                        .expect("p_v >= 1"),
                    oracle,
                    gauss_tol,
                    "alpha_x",
                    seed,
                    gw,
                )?;
            }

            // step 3: sigma2_x
            {
                let res = &d.x - &d.g * &st.pi_x - &d.v * &st.alpha_x;
                let oracle = inverse_gamma_conditional(
                    hy.a_sigma,
                    hy.b_sigma,
                    &[res],
                    &[
                        ScaledCoefBlock {
                            coef: st.pi_x.clone(),
                            cov_factor: inv(&gram_g) * hy.g_g,
                        },
                        ScaledCoefBlock {
                            coef: st.alpha_x.clone(),
                            cov_factor: inv(&gram_v) * hy.g_v,
                        },
                    ],
                );
                compare_ig(
                    sampler.sigma2_exposure_conditional(ExposureSide::Ligand),
                    oracle,
                    ig_tol,
                    "sigma2_x",
                    seed,
                    &mut report.max_ig_err,
                )?;
            }

            // step 4: pi_z
            {
                let w = DVector::from_fn(N, |i, _| st.beta_z + st.beta[1] * x_star[i]);
                let v_alpha_z = &d.v * &st.alpha_z;
                let mut r = &d.y - &x_star * st.beta[0] - &v_alpha_y - v_alpha_z.component_mul(&w);
                r.add_scalar_mut(-st.mu);
                let oracle = conjugate_posterior(
                    &(inv(&gram_h) * st.sigma2_z * hy.g_h),
                    &[
                        GaussianTerm {
                            design: d.h.clone(),
                            response: &d.z - &v_alpha_z,
                            noise_var: st.sigma2_z,
                        },
                        GaussianTerm {
                            design: scale_rows(&d.h, &w),
                            response: r,
                            noise_var: st.sigma2_y,
                        },
                    ],
                );
                compare_gaussian(
                    &sampler.pi_conditional(ExposureSide::Receptor),
                    oracle,
                    gauss_tol,
                    "pi_z",
                    seed,
                    gw,
                )?;
            }

            // step 5: alpha_z
            {
                let w = DVector::from_fn(N, |i, _| st.beta_z + st.beta[1] * x_star[i]);
                let h_pi = &d.h * &st.pi_z;
                let mut r = &d.y - &x_star * st.beta[0] - &v_alpha_y - h_pi.component_mul(&w);
                r.add_scalar_mut(-st.mu);
                let oracle = conjugate_posterior(
                    &(inv(&gram_v) * st.sigma2_z * hy.g_v),
                    &[
                        GaussianTerm {
                            design: d.v.clone(),
                            response: &d.z - &h_pi,
                            noise_var: st.sigma2_z,
                        },
                        GaussianTerm {
                            design: scale_rows(&d.v, &w),
                            response: r,
                            noise_var: st.sigma2_y,
                        },
                    ],
                );
                compare_gaussian(
                    &sampler
                        .alpha_conditional(ExposureSide::Receptor)
                        .expect("p_v >= 1"),
                    oracle,
                    gauss_tol,
                    "alpha_z",
                    seed,
                    gw,
                )?;
            }

            // step 6: sigma2_z
            {
                let res = &d.z - &d.h * &st.pi_z - &d.v * &st.alpha_z;
                let oracle = inverse_gamma_conditional(
                    hy.a_sigma,
                    hy.b_sigma,
                    &[res],
                    &[
                        ScaledCoefBlock {
                            coef: st.pi_z.clone(),
                            cov_factor: inv(&gram_h) * hy.g_h,
                        },
                        ScaledCoefBlock {
                            coef: st.alpha_z.clone(),
                            cov_factor: inv(&gram_v) * hy.g_v,
                        },
                    ],
                );
                compare_ig(
                    sampler.sigma2_exposure_conditional(ExposureSide::Receptor),
                    oracle,
                    ig_tol,
                    "sigma2_z",
                    seed,
                    &mut report.max_ig_err,
                )?;
            }

            // step 7: mu
            {
                let r = &d.y - &x_beta * &st.beta - &z_star * st.beta_z - &v_alpha_y;
                let oracle = conjugate_posterior(
                    &DMatrix::from_element(1, 1, N as f64 * st.sigma2_y),
                    &[GaussianTerm {
                        design: DMatrix::from_element(N, 1, 1.0),
                        response: r,
                        noise_var: st.sigma2_y,
                    }],
                );
                compare_gaussian(
                    &sampler.intercept_conditional(),
                    oracle,
                    gauss_tol,
                    "mu",
                    seed,
                    gw,
                )?;
            }

            // step 8: alpha_y
            {
                let mut r = &d.y - &x_beta * &st.beta - &z_star * st.beta_z;
                r.add_scalar_mut(-st.mu);
                let oracle = conjugate_posterior(
                    &(inv(&gram_v) * st.sigma2_y * hy.g_v),
                    &[GaussianTerm {
                        design: d.v.clone(),
                        response: r,
                        noise_var: st.sigma2_y,
                    }],
                );
                compare_gaussian(
                    &sampler.alpha_y_conditional().expect("p_v >= 1"),
                    oracle,
                    gauss_tol,
                    "alpha_y",
                    seed,
                    gw,
                )?;
            }

            // step 9: beta_z
            {
                let mut r = &d.y - &x_beta * &st.beta - &v_alpha_y;
                r.add_scalar_mut(-st.mu);
                let zz = z_star.norm_squared();
                let oracle = conjugate_posterior(
                    &DMatrix::from_element(1, 1, st.sigma2_y * hy.g_z / zz),
                    &[GaussianTerm {
                        design: DMatrix::from_column_slice(N, 1, z_star.as_slice()),
                        response: r,
                        noise_var: st.sigma2_y,
                    }],
                );
                compare_gaussian(
                    &sampler.beta_z_conditional(),
                    oracle,
                    gauss_tol,
                    "beta_z",
                    seed,
                    gw,
                )?;
            }

            // step 10: sigma2_y
            {
                let s_gamma = if st.gamma { 1.0 } else { hy.nu_1 };
                let mut e = &d.y - &x_beta * &st.beta - &z_star * st.beta_z - &v_alpha_y;
                e.add_scalar_mut(-st.mu);
                let m_beta = x_beta.transpose() * &x_beta;
                let zz = z_star.norm_squared();
                let oracle = inverse_gamma_conditional(
                    hy.a_sigma,
                    hy.b_sigma,
                    &[e],
                    &[
                        ScaledCoefBlock {
                            coef: DVector::from_element(1, st.mu),
                            cov_factor: DMatrix::from_element(1, 1, N as f64),
                        },
                        ScaledCoefBlock {
                            coef: st.beta.clone(),
                            cov_factor: inv(&m_beta) * hy.g_beta * s_gamma,
                        },
                        ScaledCoefBlock {
                            coef: DVector::from_element(1, st.beta_z),
                            cov_factor: DMatrix::from_element(1, 1, hy.g_z / zz),
                        },
                        ScaledCoefBlock {
                            coef: st.alpha_y.clone(),
                            cov_factor: inv(&gram_v) * hy.g_v,
                        },
                    ],
                );
                compare_ig(
                    sampler.sigma2_y_conditional(),
                    oracle,
                    ig_tol,
                    "sigma2_y",
                    seed,
                    &mut report.max_ig_err,
                )?;
            }

            // step 11: beta
            {
                let s_gamma = if st.gamma { 1.0 } else { hy.nu_1 };
                let mut r = &d.y - &z_star * st.beta_z - &v_alpha_y;
                r.add_scalar_mut(-st.mu);
                let m_beta = x_beta.transpose() * &x_beta;
                let oracle = conjugate_posterior(
                    &(inv(&m_beta) * st.sigma2_y * hy.g_beta * s_gamma),
                    &[GaussianTerm {
                        design: x_beta.clone(),
                        response: r,
                        noise_var: st.sigma2_y,
                    }],
                );
                compare_gaussian(&sampler.beta_conditional(), oracle, gauss_tol, "beta", seed, gw)?;
            }
        }
        Ok(report)
    }
}
