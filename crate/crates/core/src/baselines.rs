//! Competing estimators on a common result contract: naive OLS with a joint
//! F-test, two-stage MVMR, and summary-statistic MR-BMA, plus the sampler
//! wrapped to the same interface.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

use crate::gibbs::{run_chain, GibbsError, Hyperparams, McmcSettings};
use crate::linalg::ridge_cholesky;
use crate::model::Dataset;

/// Frequentist rejection level; ties (p exactly 0.05) reject.
const ALPHA: f64 = 0.05;

/// Bayesian declaration threshold; ties (score exactly 0.5) do not declare.
const BAYES_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("design is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("MR-BMA needs at least 2 instruments, got {0}")]
    TooFewInstruments(usize),
    #[error("zero-variance column '{0}' in per-instrument summaries")]
    ZeroVarianceColumn(String),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
}

/// The four benchmarked methods, ordered as reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ols,
    Mvmr,
    MrBma,
    MrCcc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ols, Method::Mvmr, Method::MrBma, Method::MrCcc];

    /// CLI / CSV token.
    pub fn token(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Mvmr => "mvmr",
            Method::MrBma => "mrbma",
            Method::MrCcc => "mrccc",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ols" => Some(Method::Ols),
            "mvmr" => Some(Method::Mvmr),
            "mrbma" | "mr-bma" => Some(Method::MrBma),
            "mrccc" | "mr-ccc" => Some(Method::MrCcc),
            _ => None,
        }
    }

    /// Bayesian methods declare on score > 0.5, frequentist on p <= 0.05.
    pub fn is_bayesian(self) -> bool {
        matches!(self, Method::MrBma | Method::MrCcc)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Per-method, per-dataset output: a communication score on [0, 1], the
/// declaration under the method's rule, point estimates, and method-specific
/// extras (p-values, inclusion probabilities, model-averaged effects).
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub score: f64,
    pub decision: bool,
    pub beta_x_hat: f64,
    /// Absent for MVMR and MR-BMA, which do not model the interaction.
    pub beta_xz_hat: Option<f64>,
    pub extras: BTreeMap<String, f64>,
}

/// score = 1 - p, rejection at p <= 0.05.
pub fn frequentist_decision(p: f64) -> (f64, bool) {
    (1.0 - p, p <= ALPHA)
}

/// score is already a posterior probability; declare at score > 0.5.
pub fn bayesian_decision(score: f64) -> bool {
    score > BAYES_THRESHOLD
}

/// Plain least squares with enough byproducts for Wald tests.
struct OlsFit {
    coef: DVector<f64>,
    /// (X'X)^-1, unscaled by the residual variance.
    gram_inv: DMatrix<f64>,
    s2: f64,
    df: usize,
}

fn ols_fit(design: &DMatrix<f64>, y: &DVector<f64>, labels: &[&str]) -> Result<OlsFit, BaselineError> {
    let collinear = detect_collinear(design, labels);
    if !collinear.is_empty() {
        return Err(BaselineError::RankDeficient(collinear));
    }
    let gram = design.transpose() * design;
    let chol = ridge_cholesky(&gram, 0.0, Some("OLS"))
        .map_err(|_| BaselineError::RankDeficient(vec!["(unidentified)".to_string()]))?;
    let coef = chol.solve(&(design.transpose() * y));
    let resid = y - design * &coef;
    let df = design.nrows() - design.ncols();
    let s2 = resid.norm_squared() / df as f64;
    Ok(OlsFit {
        coef,
        gram_inv: chol.inverse(),
        s2,
        df,
    })
}

/// Names the columns that are (numerically) linear combinations of earlier
/// ones, by sequential orthogonal projection.
fn detect_collinear(design: &DMatrix<f64>, labels: &[&str]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut collinear = Vec::new();
    for (k, col) in design.column_iter().enumerate() {
        let mut r = col.into_owned();
        for b in &basis {
            let c = b.dot(&r);
            r -= b * c;
        }
        // re-orthogonalize once; plain Gram-Schmidt loses accuracy
        for b in &basis {
            let c = b.dot(&r);
            r -= b * c;
        }
        let scale = col.norm();
        if r.norm() <= 1e-10 * scale.max(1.0) {
            collinear.push(labels.get(k).copied().unwrap_or("?").to_string());
        } else {
            let norm = r.norm();
            basis.push(r / norm);
        }
    }
    collinear
}

fn ols_labels(p_v: usize) -> Vec<String> {
    let mut labels = vec![
        "intercept".to_string(),
        "x".to_string(),
        "z".to_string(),
        "x*z".to_string(),
    ];
    for k in 0..p_v {
        labels.push(format!("v{}", k + 1));
    }
    labels
}

/// Naive regression of y on (1, x, z, x*z, V) with the joint F-test of
/// H0: beta_x = beta_xz = 0 as the communication score.
pub fn fit_ols(d: &Dataset) -> Result<MethodResult, BaselineError> {
    let n = d.n();
    let p = 4 + d.p_v();
    let mut design = DMatrix::zeros(n, p);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = d.x[i];
        design[(i, 2)] = d.z[i];
        design[(i, 3)] = d.x[i] * d.z[i];
        for k in 0..d.p_v() {
            design[(i, 4 + k)] = d.v[(i, k)];
        }
    }
    let labels = ols_labels(d.p_v());
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let fit = ols_fit(&design, &d.y, &label_refs)?;

    // contrast picks (beta_x, beta_xz) = coefficients 1 and 3
    let cb = DVector::from_vec(vec![fit.coef[1], fit.coef[3]]);
    let cvc = DMatrix::from_fn(2, 2, |r, c| {
        let (i, j) = ([1usize, 3][r], [1usize, 3][c]);
        fit.s2 * fit.gram_inv[(i, j)]
    });
    let cvc_inv = cvc
        .try_inverse()
        .ok_or_else(|| BaselineError::RankDeficient(vec!["x".into(), "x*z".into()]))?;
    let f_stat = 0.5 * (cb.transpose() * cvc_inv * &cb)[(0, 0)];
    let f_dist = FisherSnedecor::new(2.0, fit.df as f64).expect("valid F dof");
    let p_f = 1.0 - f_dist.cdf(f_stat);
    let (score, decision) = frequentist_decision(p_f);

    let mut extras = BTreeMap::new();
    extras.insert("p_f".into(), p_f);
    extras.insert("f_stat".into(), f_stat);
    extras.insert("beta_z_hat".into(), fit.coef[2]);
    extras.insert("intercept".into(), fit.coef[0]);
    Ok(MethodResult {
        method: Method::Ols,
        score,
        decision,
        beta_x_hat: fit.coef[1],
        beta_xz_hat: Some(fit.coef[3]),
        extras,
    })
}

/// Two-stage multivariable MR: both exposures regressed on the full
/// instrument set [G, H, V], then y on (1, x_hat, z_hat, V); the score is the
/// t-test on the instrumented ligand effect.
pub fn fit_mvmr(d: &Dataset) -> Result<MethodResult, BaselineError> {
    let n = d.n();
    let p1 = d.p_g() + d.p_h() + d.p_v();
    let mut stage1 = DMatrix::zeros(n, p1);
    stage1.view_mut((0, 0), (n, d.p_g())).copy_from(&d.g);
    stage1.view_mut((0, d.p_g()), (n, d.p_h())).copy_from(&d.h);
    stage1
        .view_mut((0, d.p_g() + d.p_h()), (n, d.p_v()))
        .copy_from(&d.v);
    let mut labels1: Vec<String> = Vec::new();
    for k in 0..d.p_g() {
        labels1.push(format!("g{}", k + 1));
    }
    for k in 0..d.p_h() {
        labels1.push(format!("h{}", k + 1));
    }
    for k in 0..d.p_v() {
        labels1.push(format!("v{}", k + 1));
    }
    let refs1: Vec<&str> = labels1.iter().map(String::as_str).collect();
    let fit_x = ols_fit(&stage1, &d.x, &refs1)?;
    let fit_z = ols_fit(&stage1, &d.z, &refs1)?;
    let x_hat = &stage1 * &fit_x.coef;
    let z_hat = &stage1 * &fit_z.coef;

    let p2 = 3 + d.p_v();
    let mut stage2 = DMatrix::zeros(n, p2);
    for i in 0..n {
        stage2[(i, 0)] = 1.0;
        stage2[(i, 1)] = x_hat[i];
        stage2[(i, 2)] = z_hat[i];
        for k in 0..d.p_v() {
            stage2[(i, 3 + k)] = d.v[(i, k)];
        }
    }
    let mut labels2 = vec!["intercept".to_string(), "x_hat".to_string(), "z_hat".to_string()];
    for k in 0..d.p_v() {
        labels2.push(format!("v{}", k + 1));
    }
    let refs2: Vec<&str> = labels2.iter().map(String::as_str).collect();
    let fit = ols_fit(&stage2, &d.y, &refs2)?;

    let beta_x = fit.coef[1];
    let se = (fit.s2 * fit.gram_inv[(1, 1)]).sqrt();
    let t_stat = beta_x / se;
    let t_dist = StudentsT::new(0.0, 1.0, fit.df as f64).expect("valid t dof");
    let p_t = 2.0 * (1.0 - t_dist.cdf(t_stat.abs()));
    let (score, decision) = frequentist_decision(p_t);

    let mut extras = BTreeMap::new();
    extras.insert("p_t".into(), p_t);
    extras.insert("t_stat".into(), t_stat);
    extras.insert("beta_z_hat".into(), fit.coef[2]);
    Ok(MethodResult {
        method: Method::Mvmr,
        score,
        decision,
        beta_x_hat: beta_x,
        beta_xz_hat: None,
        extras,
    })
}

/// Knobs for the summary-statistic MR-BMA implementation. The g-prior scale
/// defaults to min(J^2, 100) for J instruments; per-instrument regressions
/// exclude covariates unless `adjust_covariates` is set.
#[derive(Debug, Clone, Copy)]
pub struct MrBmaOptions {
    pub adjust_covariates: bool,
    pub g_prior: Option<f64>,
}

impl Default for MrBmaOptions {
    fn default() -> Self {
        MrBmaOptions {
            adjust_covariates: false,
            g_prior: None,
        }
    }
}

struct InstrumentSummary {
    beta_x: f64,
    beta_z: f64,
    beta_y: f64,
    se_y: f64,
}

/// Slope and standard error of `response` on a single instrument column
/// (plus intercept, plus covariates when requested).
fn simple_summary(
    col: &DVector<f64>,
    response: &DVector<f64>,
    v: &DMatrix<f64>,
    adjust: bool,
    name: &str,
) -> Result<(f64, f64), BaselineError> {
    let n = col.len();
    let p_v = if adjust { v.ncols() } else { 0 };
    let p = 2 + p_v;
    let mut design = DMatrix::zeros(n, p);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = col[i];
        for k in 0..p_v {
            design[(i, 2 + k)] = v[(i, k)];
        }
    }
    let mean = col.mean();
    if col.iter().all(|&x| (x - mean).abs() < 1e-14) {
        return Err(BaselineError::ZeroVarianceColumn(name.to_string()));
    }
    let fit = ols_fit(&design, response, &[name, name])?;
    let se = (fit.s2 * fit.gram_inv[(1, 1)]).sqrt();
    Ok((fit.coef[1], se))
}

/// Summary-statistic Bayesian model averaging over the four exposure
/// inclusion models on {ligand, receptor}, scored by g-prior Bayes factors
/// on the inverse-variance-weighted regression of the outcome associations.
pub fn fit_mrbma(d: &Dataset) -> Result<MethodResult, BaselineError> {
    fit_mrbma_with(d, MrBmaOptions::default())
}

pub fn fit_mrbma_with(d: &Dataset, opts: MrBmaOptions) -> Result<MethodResult, BaselineError> {
    let j = d.p_g() + d.p_h();
    if j < 2 {
        return Err(BaselineError::TooFewInstruments(j));
    }

    let mut summaries = Vec::with_capacity(j);
    for (idx, source) in (0..d.p_g())
        .map(|k| (format!("g{}", k + 1), d.g.column(k).into_owned()))
        .chain((0..d.p_h()).map(|k| (format!("h{}", k + 1), d.h.column(k).into_owned())))
        .enumerate()
    {
        let (name, col) = source;
        let _ = idx;
        let (bx, _) = simple_summary(&col, &d.x, &d.v, opts.adjust_covariates, &name)?;
        let (bz, _) = simple_summary(&col, &d.z, &d.v, opts.adjust_covariates, &name)?;
        let (by, se_y) = simple_summary(&col, &d.y, &d.v, opts.adjust_covariates, &name)?;
        summaries.push(InstrumentSummary {
            beta_x: bx,
            beta_z: bz,
            beta_y: by,
            se_y,
        });
    }

    // symmetric-evidence degenerate case: no instrument predicts the outcome,
    // all four models tie, MIP_X = 0.5 under the uniform model prior
    if summaries.iter().all(|s| s.beta_y == 0.0) {
        let probs = [0.25; 4];
        return Ok(assemble_mrbma(probs, [0.0, 0.0], [0.5, 0.5]));
    }
    for (k, s) in summaries.iter().enumerate() {
        if !(s.se_y > 0.0) || !s.se_y.is_finite() {
            return Err(BaselineError::ZeroVarianceColumn(format!(
                "se(beta_y) for instrument {}",
                k + 1
            )));
        }
    }

    // inverse-variance weighting: scale each row by 1/se
    let w: Vec<f64> = summaries.iter().map(|s| 1.0 / s.se_y).collect();
    let yw = DVector::from_fn(j, |k, _| summaries[k].beta_y * w[k]);
    let dx = DVector::from_fn(j, |k, _| summaries[k].beta_x * w[k]);
    let dz = DVector::from_fn(j, |k, _| summaries[k].beta_z * w[k]);
    let yty = yw.norm_squared();

    let g = opts
        .g_prior
        .unwrap_or_else(|| ((j * j) as f64).min(100.0));
    let shrink = g / (1.0 + g);

    // models: {}, {X}, {Z}, {X, Z}
    let mut log_ml = [0.0f64; 4];
    let mut coef_x = [0.0f64; 4];
    let mut coef_z = [0.0f64; 4];
    for (m, cols) in [
        (0usize, vec![]),
        (1, vec![("x", &dx)]),
        (2, vec![("z", &dz)]),
        (3, vec![("x", &dx), ("z", &dz)]),
    ] {
        let p_m = cols.len();
        if p_m == 0 {
            log_ml[m] = -(j as f64 / 2.0) * yty.ln();
            continue;
        }
        let mut design = DMatrix::zeros(j, p_m);
        for (c, (_, col)) in cols.iter().enumerate() {
            design.set_column(c, col);
        }
        let gram = design.transpose() * &design;
        let chol = ridge_cholesky(&gram, 0.0, Some("MR-BMA model fit")).map_err(|_| {
            BaselineError::ZeroVarianceColumn(
                cols.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","),
            )
        })?;
        let theta = chol.solve(&(design.transpose() * &yw));
        let fitted_ss = (design.transpose() * &yw).dot(&theta);
        let resid_term = yty - shrink * fitted_ss;
        log_ml[m] = -(p_m as f64 / 2.0) * (1.0 + g).ln() - (j as f64 / 2.0) * resid_term.ln();
        let shrunk = &theta * shrink;
        for (c, (nm, _)) in cols.iter().enumerate() {
            if *nm == "x" {
                coef_x[m] = shrunk[c];
            } else {
                coef_z[m] = shrunk[c];
            }
        }
    }

    let max = log_ml.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_ml.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    let probs = [
        unnorm[0] / total,
        unnorm[1] / total,
        unnorm[2] / total,
        unnorm[3] / total,
    ];

    let mace_x = probs[1] * coef_x[1] + probs[3] * coef_x[3];
    let mace_z = probs[2] * coef_z[2] + probs[3] * coef_z[3];
    Ok(assemble_mrbma(probs, [mace_x, mace_z], [probs[1] + probs[3], probs[2] + probs[3]]))
}

fn assemble_mrbma(probs: [f64; 4], mace: [f64; 2], mip: [f64; 2]) -> MethodResult {
    let (mip_x, mip_z) = (mip[0], mip[1]);
    let mut extras = BTreeMap::new();
    extras.insert("mip_x".into(), mip_x);
    extras.insert("mip_z".into(), mip_z);
    extras.insert("mace_x".into(), mace[0]);
    extras.insert("mace_z".into(), mace[1]);
    extras.insert("p_null".into(), probs[0]);
    extras.insert("p_x".into(), probs[1]);
    extras.insert("p_z".into(), probs[2]);
    extras.insert("p_xz".into(), probs[3]);
    MethodResult {
        method: Method::MrBma,
        score: mip_x,
        decision: bayesian_decision(mip_x),
        beta_x_hat: mace[0],
        beta_xz_hat: None,
        extras,
    }
}

/// The sampler under the common contract: score = PIP, declaration at
/// PIP > 0.5, model-averaged posterior means as point estimates.
pub fn fit_mrccc(
    d: &Dataset,
    hyper: &Hyperparams,
    mcmc: &McmcSettings,
) -> Result<MethodResult, BaselineError> {
    let summary = run_chain(d, hyper, mcmc)?;
    let mut extras = BTreeMap::new();
    extras.insert("pip".into(), summary.pip);
    extras.insert("beta_z_hat".into(), summary.mean_beta_z);
    extras.insert("n_kept".into(), summary.n_kept as f64);
    Ok(MethodResult {
        method: Method::MrCcc,
        score: summary.pip,
        decision: bayesian_decision(summary.pip),
        beta_x_hat: summary.mean_beta_x,
        beta_xz_hat: Some(summary.mean_beta_xz),
        extras,
    })
}

/// Dispatch by method; MR-CCC settings are required only for that method.
pub fn fit_method(
    method: Method,
    d: &Dataset,
    hyper: &Hyperparams,
    mcmc: &McmcSettings,
) -> Result<MethodResult, BaselineError> {
    match method {
        Method::Ols => fit_ols(d),
        Method::Mvmr => fit_mvmr(d),
        Method::MrBma => fit_mrbma(d),
        Method::MrCcc => fit_mrccc(d, hyper, mcmc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::center_dataset;
    use crate::sim::{generate_dataset, generate_dataset_with_params, Scenario, SimConfig};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise_matrix(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    fn noise_vector(seed: u64, n: usize) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn ols_noiseless_is_exact() {
        let n = 60;
        let x = noise_vector(1, n);
        let z = noise_vector(2, n);
        let y = &x * 0.3 + &z * 0.5 + x.component_mul(&z) * 0.3;
        let d = Dataset::new(
            noise_matrix(3, n, 2),
            noise_matrix(4, n, 2),
            DMatrix::zeros(n, 0),
            x,
            z,
            y,
        )
        .unwrap();
        let r = fit_ols(&d).unwrap();
        assert_abs_diff_eq!(r.beta_x_hat, 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(r.beta_xz_hat.unwrap(), 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(r.extras["beta_z_hat"], 0.5, epsilon = 1e-10);
        assert!(r.extras["p_f"] < 1e-12);
        assert!(r.decision);
    }

    #[test]
    fn ols_f_matches_rss_comparison_oracle() {
        // Wald form vs (RSS_restricted - RSS_full) / 2 / s2_full
        let draw = generate_dataset(&SimConfig {
            scenario: Scenario::S2,
            n: 200,
            replicate_index: 0,
            master_seed: 17,
        })
        .unwrap();
        let d = center_dataset(&draw.data).0;
        let r = fit_ols(&d).unwrap();

        let n = d.n();
        let p_full = 4 + d.p_v();
        let mut full = DMatrix::zeros(n, p_full);
        let mut restricted = DMatrix::zeros(n, p_full - 2);
        for i in 0..n {
            full[(i, 0)] = 1.0;
            full[(i, 1)] = d.x[i];
            full[(i, 2)] = d.z[i];
            full[(i, 3)] = d.x[i] * d.z[i];
            restricted[(i, 0)] = 1.0;
            restricted[(i, 1)] = d.z[i];
            for k in 0..d.p_v() {
                full[(i, 4 + k)] = d.v[(i, k)];
                restricted[(i, 2 + k)] = d.v[(i, k)];
            }
        }
        let rss = |m: &DMatrix<f64>| {
            let gram = m.transpose() * m;
            let coef = gram.cholesky().unwrap().solve(&(m.transpose() * &d.y));
            (&d.y - m * coef).norm_squared()
        };
        let (rss_full, rss_restr) = (rss(&full), rss(&restricted));
        let s2 = rss_full / (n - p_full) as f64;
        let f_oracle = (rss_restr - rss_full) / 2.0 / s2;
        assert_abs_diff_eq!(r.extras["f_stat"], f_oracle, epsilon = 1e-9);
    }

    #[test]
    fn ols_p_invariant_to_positive_rescaling() {
        let draw = generate_dataset(&SimConfig {
            scenario: Scenario::S3,
            n: 150,
            replicate_index: 1,
            master_seed: 23,
        })
        .unwrap();
        let d = center_dataset(&draw.data).0;
        let base = fit_ols(&d).unwrap();

        let mut scaled = d.clone();
        scaled.x *= 3.7;
        scaled.z *= 0.2;
        scaled.y *= 11.0;
        let re = fit_ols(&scaled).unwrap();
        assert_abs_diff_eq!(base.extras["p_f"], re.extras["p_f"], epsilon = 1e-10);
    }

    #[test]
    fn ols_names_collinear_columns() {
        let n = 40;
        let x = noise_vector(5, n);
        let z = x.clone(); // z duplicates x
        let y = noise_vector(6, n);
        let d = Dataset::new(
            noise_matrix(7, n, 1),
            noise_matrix(8, n, 1),
            DMatrix::zeros(n, 0),
            x,
            z,
            y,
        )
        .unwrap();
        match fit_ols(&d) {
            Err(BaselineError::RankDeficient(cols)) => {
                assert!(cols.contains(&"z".to_string()), "collinear set: {cols:?}");
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn mvmr_consistent_without_confounding() {
        // strong instruments, y = 0.3 x + noise, no confounder
        let params = crate::model::StructuralParams {
            pi_x: DVector::from_element(5, 0.5),
            pi_z: DVector::from_element(5, 0.5),
            alpha_x: DVector::from_element(3, 0.3),
            alpha_z: DVector::from_element(3, 0.3),
            alpha_y: DVector::from_element(3, 0.3),
            lambda_x: 0.0,
            lambda_z: 0.0,
            lambda_y: 0.0,
            beta_x: 0.3,
            beta_z: 0.0,
            beta_xz: 0.0,
            sigma2_x: 1.0,
            sigma2_z: 1.0,
            sigma2_y: 1.0,
            gamma: true,
        };
        let draw = generate_dataset_with_params(
            &SimConfig {
                scenario: Scenario::S3,
                n: 30_000,
                replicate_index: 0,
                master_seed: 31,
            },
            &params,
        )
        .unwrap();
        let d = center_dataset(&draw.data).0;
        let r = fit_mvmr(&d).unwrap();
        assert!(
            (r.beta_x_hat - 0.3).abs() < 0.02,
            "beta_x_hat = {}",
            r.beta_x_hat
        );
        assert!(r.beta_xz_hat.is_none());
    }

    #[test]
    fn mvmr_matches_qr_oracle() {
        let draw = generate_dataset(&SimConfig {
            scenario: Scenario::S2,
            n: 120,
            replicate_index: 2,
            master_seed: 37,
        })
        .unwrap();
        let d = center_dataset(&draw.data).0;
        let r = fit_mvmr(&d).unwrap();

        // independent QR route for the same two stages
        let n = d.n();
        let p1 = d.p_g() + d.p_h() + d.p_v();
        let mut s1 = DMatrix::zeros(n, p1);
        s1.view_mut((0, 0), (n, d.p_g())).copy_from(&d.g);
        s1.view_mut((0, d.p_g()), (n, d.p_h())).copy_from(&d.h);
        s1.view_mut((0, d.p_g() + d.p_h()), (n, d.p_v())).copy_from(&d.v);
        let qr1 = s1.clone().qr();
        let solve_qr = |m: &DMatrix<f64>, rhs: &DVector<f64>| {
            let qr = m.clone().qr();
            let qty = qr.q().transpose() * rhs;
            qr.r().solve_upper_triangular(&qty).unwrap()
        };
        let _ = qr1;
        let xh = &s1 * solve_qr(&s1, &d.x);
        let zh = &s1 * solve_qr(&s1, &d.z);
        let mut s2 = DMatrix::zeros(n, 3 + d.p_v());
        for i in 0..n {
            s2[(i, 0)] = 1.0;
            s2[(i, 1)] = xh[i];
            s2[(i, 2)] = zh[i];
            for k in 0..d.p_v() {
                s2[(i, 3 + k)] = d.v[(i, k)];
            }
        }
        let coef = solve_qr(&s2, &d.y);
        assert_abs_diff_eq!(r.beta_x_hat, coef[1], epsilon = 1e-9);
    }

    #[test]
    fn mvmr_orthogonal_fitted_exposure_gives_zero() {
        // Frisch-Waugh: beta_x = 0 exactly when x_hat residualized on
        // (1, z_hat, V) is orthogonal to y; build y that way and check
        let n = 80;
        let g = noise_matrix(41, n, 2);
        let h = noise_matrix(42, n, 2);
        let x = noise_vector(43, n);
        let z = noise_vector(44, n);
        let d0 = Dataset::new(g, h, DMatrix::zeros(n, 0), x, z, noise_vector(45, n)).unwrap();
        let d0 = center_dataset(&d0).0;

        // fitted exposures from stage 1 (no intercept, same as fit_mvmr)
        let mut s1 = DMatrix::zeros(n, 4);
        s1.view_mut((0, 0), (n, 2)).copy_from(&d0.g);
        s1.view_mut((0, 2), (n, 2)).copy_from(&d0.h);
        let gram = s1.transpose() * &s1;
        let chol = gram.cholesky().unwrap();
        let xh = &s1 * chol.solve(&(s1.transpose() * &d0.x));
        let zh = &s1 * chol.solve(&(s1.transpose() * &d0.z));

        // residualize x_hat on the remaining stage-2 columns (1, z_hat)
        let mut d2 = DMatrix::zeros(n, 2);
        for i in 0..n {
            d2[(i, 0)] = 1.0;
            d2[(i, 1)] = zh[i];
        }
        let g2 = d2.transpose() * &d2;
        let c2 = g2.cholesky().unwrap();
        let x_tilde = &xh - &d2 * c2.solve(&(d2.transpose() * &xh));

        // shift y along x_hat so that x_tilde . y = 0
        let c = x_tilde.dot(&d0.y) / x_tilde.dot(&xh);
        let mut d = d0.clone();
        d.y = &d0.y - &xh * c;
        let r = fit_mvmr(&d).unwrap();
        assert_abs_diff_eq!(r.beta_x_hat, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn mrbma_symmetric_evidence_ties() {
        // beta_y_j = 0 for every instrument: equal model probabilities and
        // MIP_X exactly 0.5
        let n = 50;
        let g = noise_matrix(51, n, 2);
        let h = noise_matrix(52, n, 2);
        let x = noise_vector(53, n);
        let z = noise_vector(54, n);
        let d = Dataset::new(g, h, DMatrix::zeros(n, 0), x, z, DVector::zeros(n)).unwrap();
        let r = fit_mrbma(&d).unwrap();
        assert_eq!(r.score, 0.5);
        assert_eq!(r.extras["p_null"], 0.25);
        assert!(!r.decision, "ties resolve to no communication");
    }

    #[test]
    fn mrbma_probabilities_sum_to_one() {
        let draw = generate_dataset(&SimConfig {
            scenario: Scenario::S2,
            n: 300,
            replicate_index: 0,
            master_seed: 61,
        })
        .unwrap();
        let d = center_dataset(&draw.data).0;
        let r = fit_mrbma(&d).unwrap();
        let total = r.extras["p_null"] + r.extras["p_x"] + r.extras["p_z"] + r.extras["p_xz"];
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            r.extras["mip_x"],
            r.extras["p_x"] + r.extras["p_xz"],
            epsilon = 1e-12
        );
        assert!(r.score >= 0.0 && r.score <= 1.0);
    }

    #[test]
    fn mrbma_rejects_constant_instrument() {
        let n = 40;
        let mut g = noise_matrix(71, n, 2);
        for i in 0..n {
            g[(i, 1)] = 2.0;
        }
        let d = Dataset::new(
            g,
            noise_matrix(72, n, 2),
            DMatrix::zeros(n, 0),
            noise_vector(73, n),
            noise_vector(74, n),
            noise_vector(75, n),
        )
        .unwrap();
        assert!(matches!(
            fit_mrbma(&d),
            Err(BaselineError::ZeroVarianceColumn(_))
        ));
    }

    #[test]
    fn mrbma_requires_two_instruments() {
        let n = 30;
        let d = Dataset::new(
            noise_matrix(81, n, 1),
            noise_matrix(82, n, 1),
            DMatrix::zeros(n, 0),
            noise_vector(83, n),
            noise_vector(84, n),
            noise_vector(85, n),
        )
        .unwrap();
        // two instruments total (one per exposure) is allowed; build the
        // genuinely deficient case with an empty H rejected at Dataset level,
        // so exercise the J < 2 guard directly
        assert!(fit_mrbma(&d).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        // decision rules: frequentist p <= 0.05, Bayesian score > 0.5
        #[test]
        fn decision_rules_hold(p in 0.0f64..1.0, score in 0.0f64..1.0) {
            let (s, dec) = frequentist_decision(p);
            prop_assert!((s - (1.0 - p)).abs() < 1e-15);
            prop_assert_eq!(dec, p <= 0.05);
            prop_assert_eq!(bayesian_decision(score), score > 0.5);
        }
    }

    #[test]
    fn decision_ties_resolve_as_specified() {
        // frequentist ties reject; Bayesian ties do not declare
        assert!(frequentist_decision(0.05).1);
        assert!(!bayesian_decision(0.5));
    }
}
