//! Shared domain types: the donor-level dataset, the structural ground-truth
//! parameter set, centering, standardized effect sizes, sign-reversal
//! thresholds, and receptor-modulated effect curves.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative snap tolerance for centering: a column whose mean is already this
/// close to zero (scaled by its magnitude) is left untouched, which makes
/// centering exactly idempotent.
const CENTER_SNAP: f64 = 1e-12;

/// Threshold below which a standardized interaction slope is treated as zero
/// and the sign-reversal point reported as unbounded.
const SLOPE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{block} has {rows} rows but the dataset has {expected} donors")]
    RowMismatch {
        block: &'static str,
        rows: usize,
        expected: usize,
    },
    #[error("non-finite entry in {block} at row {row}, column {col}")]
    NonFinite {
        block: &'static str,
        row: usize,
        col: usize,
    },
    #[error("dataset needs at least 2 donors, got {0}")]
    TooFewDonors(usize),
    #[error("{block} must have at least one column (relevance needs one instrument per exposure)")]
    NoInstruments { block: &'static str },
    #[error("zero-variance outcome: sd({0}) = 0")]
    ZeroVariance(&'static str),
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("gamma must equal 1 - I(beta_x = beta_xz = 0); got gamma={gamma}, beta_x={beta_x}, beta_xz={beta_xz}")]
    GammaInconsistent {
        gamma: bool,
        beta_x: f64,
        beta_xz: f64,
    },
}

/// Donor-level matrices and vectors for one ligand--receptor--pathway fit.
///
/// All blocks share the donor (row) dimension. `g` and `h` are instrument
/// dosages for the ligand and receptor exposures, `v` holds observed
/// covariates (possibly zero columns), and `x`, `z`, `y` are ligand
/// expression, receptor expression, and pathway activity.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    /// Validates row alignment, finiteness, and instrument presence.
    pub fn new(
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        v: DMatrix<f64>,
        x: DVector<f64>,
        z: DVector<f64>,
        y: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let n = x.len();
        if n < 2 {
            return Err(ModelError::TooFewDonors(n));
        }
        for (block, rows) in [
            ("G", g.nrows()),
            ("H", h.nrows()),
            ("V", v.nrows()),
            ("z", z.len()),
            ("y", y.len()),
        ] {
            if rows != n {
                return Err(ModelError::RowMismatch {
                    block,
                    rows,
                    expected: n,
                });
            }
        }
        if g.ncols() == 0 {
            return Err(ModelError::NoInstruments { block: "G" });
        }
        if h.ncols() == 0 {
            return Err(ModelError::NoInstruments { block: "H" });
        }
        for (block, m) in [("G", &g), ("H", &h), ("V", &v)] {
            check_finite_matrix(block, m)?;
        }
        for (block, vec) in [("x", &x), ("z", &z), ("y", &y)] {
            check_finite_vector(block, vec)?;
        }
        Ok(Self { g, h, v, x, z, y })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn p_g(&self) -> usize {
        self.g.ncols()
    }

    pub fn p_h(&self) -> usize {
        self.h.ncols()
    }

    pub fn p_v(&self) -> usize {
        self.v.ncols()
    }

    /// True when every column mean is within `tol` of zero.
    pub fn is_centered(&self, tol: f64) -> bool {
        let col_ok = |m: &DMatrix<f64>| m.column_iter().all(|c| c.mean().abs() <= tol);
        col_ok(&self.g)
            && col_ok(&self.h)
            && col_ok(&self.v)
            && self.x.mean().abs() <= tol
            && self.z.mean().abs() <= tol
            && self.y.mean().abs() <= tol
    }
}

fn check_finite_matrix(block: &'static str, m: &DMatrix<f64>) -> Result<(), ModelError> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(ModelError::NonFinite { block, row, col });
            }
        }
    }
    Ok(())
}

fn check_finite_vector(block: &'static str, v: &DVector<f64>) -> Result<(), ModelError> {
    for row in 0..v.len() {
        if !v[row].is_finite() {
            return Err(ModelError::NonFinite { block, row, col: 0 });
        }
    }
    Ok(())
}

/// Column means subtracted by [`center_dataset`], kept so raw-scale
/// predictions stay recoverable.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeans {
    pub g: DVector<f64>,
    pub h: DVector<f64>,
    pub v: DVector<f64>,
    pub x: f64,
    pub z: f64,
    pub y: f64,
}

/// Subtracts column means from every block and returns them alongside.
///
/// A two-pass subtraction drives residual means to rounding level, and
/// columns already centered (mean below a scaled snap tolerance) are left
/// bit-identical, so centering is exactly idempotent.
pub fn center_dataset(d: &Dataset) -> (Dataset, DatasetMeans) {
    let mut out = d.clone();
    let g_means = center_columns(&mut out.g);
    let h_means = center_columns(&mut out.h);
    let v_means = center_columns(&mut out.v);
    let x_mean = center_vector(&mut out.x);
    let z_mean = center_vector(&mut out.z);
    let y_mean = center_vector(&mut out.y);
    (
        out,
        DatasetMeans {
            g: g_means,
            h: h_means,
            v: v_means,
            x: x_mean,
            z: z_mean,
            y: y_mean,
        },
    )
}

fn center_slice(col: &mut [f64]) -> f64 {
    let n = col.len() as f64;
    let m1 = col.iter().sum::<f64>() / n;
    let scale = 1.0 + col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if m1.abs() <= CENTER_SNAP * scale {
        return 0.0;
    }
    for v in col.iter_mut() {
        *v -= m1;
    }
    // second pass removes the rounding residue of the first
    let m2 = col.iter().sum::<f64>() / n;
    for v in col.iter_mut() {
        *v -= m2;
    }
    m1 + m2
}

fn center_columns(m: &mut DMatrix<f64>) -> DVector<f64> {
    let mut means = DVector::zeros(m.ncols());
    for c in 0..m.ncols() {
        let mut col: Vec<f64> = m.column(c).iter().copied().collect();
        means[c] = center_slice(&mut col);
        m.set_column(c, &DVector::from_vec(col));
    }
    means
}

fn center_vector(v: &mut DVector<f64>) -> f64 {
    center_slice(v.as_mut_slice())
}

/// Full generative parameter set of the structural model; used as simulation
/// ground truth and for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams {
    pub pi_x: DVector<f64>,
    pub pi_z: DVector<f64>,
    pub alpha_x: DVector<f64>,
    pub alpha_z: DVector<f64>,
    pub alpha_y: DVector<f64>,
    pub lambda_x: f64,
    pub lambda_z: f64,
    pub lambda_y: f64,
    pub beta_x: f64,
    pub beta_z: f64,
    pub beta_xz: f64,
    pub sigma2_x: f64,
    pub sigma2_z: f64,
    pub sigma2_y: f64,
    /// Communication indicator: 1 exactly when (beta_x, beta_xz) != (0, 0).
    pub gamma: bool,
}

impl StructuralParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("sigma2_x", self.sigma2_x),
            ("sigma2_z", self.sigma2_z),
            ("sigma2_y", self.sigma2_y),
        ] {
            if !(v > 0.0) {
                return Err(ModelError::NonPositive(name));
            }
        }
        let null = self.beta_x == 0.0 && self.beta_xz == 0.0;
        if self.gamma == null {
            return Err(ModelError::GammaInconsistent {
                gamma: self.gamma,
                beta_x: self.beta_x,
                beta_xz: self.beta_xz,
            });
        }
        Ok(())
    }
}

/// Raw-scale point estimates together with their standardized versions
/// (SD units of pathway activity per SD of ligand / receptor expression).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSummary {
    pub beta_x_hat: f64,
    pub beta_z_hat: f64,
    pub beta_xz_hat: f64,
    pub beta_x_std: f64,
    pub beta_xz_std: f64,
    pub sd_x: f64,
    pub sd_z: f64,
    pub sd_y: f64,
}

/// Sample standard deviation with denominator n-1.
pub fn sample_sd(v: &DVector<f64>) -> f64 {
    let n = v.len();
    debug_assert!(n >= 2);
    let mean = v.mean();
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}

/// Converts raw-scale effects to SD units:
/// `beta_x_std = beta_x * sd(x)/sd(y)`, `beta_xz_std = beta_xz * sd(x)sd(z)/sd(y)`.
pub fn standardize_effects(
    beta_x: f64,
    beta_z: f64,
    beta_xz: f64,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<EffectSummary, ModelError> {
    if x.len() < 2 || z.len() < 2 || y.len() < 2 {
        return Err(ModelError::TooFewDonors(x.len().min(z.len()).min(y.len())));
    }
    let sd_x = sample_sd(x);
    let sd_z = sample_sd(z);
    let sd_y = sample_sd(y);
    if !(sd_y > 0.0) {
        return Err(ModelError::ZeroVariance("y"));
    }
    Ok(EffectSummary {
        beta_x_hat: beta_x,
        beta_z_hat: beta_z,
        beta_xz_hat: beta_xz,
        beta_x_std: beta_x * sd_x / sd_y,
        beta_xz_std: beta_xz * sd_x * sd_z / sd_y,
        sd_x,
        sd_z,
        sd_y,
    })
}

/// Receptor expression level (SD units) at which the modulated ligand effect
/// `beta_x_std + beta_xz_std * z` changes sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignReversal {
    At(f64),
    /// The interaction slope is numerically zero; the effect never reverses.
    Unbounded,
}

impl SignReversal {
    pub fn value(&self) -> Option<f64> {
        match self {
            SignReversal::At(z) => Some(*z),
            SignReversal::Unbounded => None,
        }
    }
}

pub fn sign_reversal_threshold(e: &EffectSummary) -> SignReversal {
    if e.beta_xz_std.abs() < SLOPE_EPS {
        SignReversal::Unbounded
    } else {
        SignReversal::At(-e.beta_x_std / e.beta_xz_std)
    }
}

/// Evaluates the standardized modulated effect over a grid of receptor
/// values in SD units.
pub fn effect_curve(e: &EffectSummary, z_grid: &[f64]) -> Vec<f64> {
    z_grid
        .iter()
        .map(|z| e.beta_x_std + e.beta_xz_std * z)
        .collect()
}
