//! Browser bindings for the interactive demo page.
//!
//! Three operations back the static page in `www/`: an effect-curve /
//! sign-reversal explorer, a simulate-and-compare run of the fast
//! estimators, and a full posterior fit returning kept draws for the
//! spike-and-slab scatter. Everything is seeded and synchronous; no
//! entropy source is required, so the crate builds for
//! `wasm32-unknown-unknown` without extras.

use serde_json::json;
use wasm_bindgen::prelude::*;

use mrccc_core::baselines::{fit_mrbma, fit_mvmr, fit_ols, MethodResult};
use mrccc_core::gibbs::{run_chain, Hyperparams, McmcSettings};
use mrccc_core::model::{
    center_dataset, effect_curve, sign_reversal_threshold, standardize_effects, EffectSummary,
    SignReversal,
};
use mrccc_core::sim::{generate_dataset, Scenario, SimConfig};

const MAX_DEMO_N: usize = 20_000;
const MAX_DRAWS_RETURNED: usize = 500;

fn summary_for(beta_x_std: f64, beta_xz_std: f64) -> EffectSummary {
    EffectSummary {
        beta_x_hat: beta_x_std,
        beta_z_hat: 0.0,
        beta_xz_hat: beta_xz_std,
        beta_x_std,
        beta_xz_std,
        sd_x: 1.0,
        sd_z: 1.0,
        sd_y: 1.0,
    }
}

fn reversal_json(rev: SignReversal) -> serde_json::Value {
    match rev {
        SignReversal::At(z) => json!({ "kind": "at", "z": z }),
        SignReversal::Unbounded => json!({ "kind": "unbounded" }),
    }
}

/// Receptor-modulated effect curve `beta_x + beta_xz * z` over a grid of
/// receptor values (SD units), with the sign-reversal threshold.
#[wasm_bindgen]
pub fn effect_curve_json(
    beta_x_std: f64,
    beta_xz_std: f64,
    z_lo: f64,
    z_hi: f64,
    points: usize,
) -> String {
    let points = points.clamp(2, 2048);
    if !(beta_x_std.is_finite() && beta_xz_std.is_finite() && z_lo.is_finite() && z_hi.is_finite())
        || z_hi <= z_lo
    {
        return json!({ "error": "invalid curve parameters" }).to_string();
    }
    let grid: Vec<f64> = (0..points)
        .map(|i| z_lo + (z_hi - z_lo) * i as f64 / (points - 1) as f64)
        .collect();
    let e = summary_for(beta_x_std, beta_xz_std);
    let values = effect_curve(&e, &grid);
    json!({
        "z": grid,
        "effect": values,
        "sign_reversal": reversal_json(sign_reversal_threshold(&e)),
    })
    .to_string()
}

fn method_json(r: &MethodResult) -> serde_json::Value {
    json!({
        "method": r.method.token(),
        "score": r.score,
        "decision": r.decision,
        "beta_x_hat": r.beta_x_hat,
        "beta_xz_hat": r.beta_xz_hat,
    })
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    Scenario::parse(s).ok_or_else(|| format!("unknown scenario '{s}'"))
}

fn simulate_centered(
    scenario: Scenario,
    n: usize,
    seed: u64,
) -> Result<(mrccc_core::model::Dataset, mrccc_core::model::StructuralParams), String> {
    if n > MAX_DEMO_N {
        return Err(format!("n is capped at {MAX_DEMO_N} in the demo"));
    }
    let draw = generate_dataset(&SimConfig {
        scenario,
        n,
        replicate_index: 0,
        master_seed: seed,
    })
    .map_err(|e| e.to_string())?;
    let (centered, _) = center_dataset(&draw.data);
    Ok((centered, draw.truth))
}

/// Simulates one replicate and fits the three fast estimators, returning
/// scores, decisions, and estimates next to the generative truth.
#[wasm_bindgen]
pub fn simulate_scores_json(scenario: &str, n: usize, seed: u64) -> String {
    let inner = || -> Result<serde_json::Value, String> {
        let scenario = parse_scenario(scenario)?;
        let (data, truth) = simulate_centered(scenario, n, seed)?;
        let ols = fit_ols(&data).map_err(|e| e.to_string())?;
        let mvmr = fit_mvmr(&data).map_err(|e| e.to_string())?;
        let mrbma = fit_mrbma(&data).map_err(|e| e.to_string())?;
        Ok(json!({
            "scenario": scenario.id(),
            "n": n,
            "truth": {
                "beta_x": truth.beta_x,
                "beta_z": truth.beta_z,
                "beta_xz": truth.beta_xz,
                "gamma": truth.gamma,
            },
            "methods": [method_json(&ols), method_json(&mvmr), method_json(&mrbma)],
        }))
    };
    match inner() {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Full spike-and-slab posterior fit on one simulated replicate. Returns the
/// PIP, model-averaged means, standardized effects with the sign-reversal
/// threshold, and a subsample of kept (beta_x, beta_xz, gamma) draws.
#[wasm_bindgen]
pub fn mrccc_fit_json(
    scenario: &str,
    n: usize,
    seed: u64,
    iterations: usize,
    burn_in: usize,
    thin: usize,
) -> String {
    let inner = || -> Result<serde_json::Value, String> {
        let scenario = parse_scenario(scenario)?;
        let iterations = iterations.clamp(200, 50_000);
        let burn_in = burn_in.min(iterations - 1);
        let thin = thin.max(1);
        let (data, truth) = simulate_centered(scenario, n, seed)?;
        let hyper = Hyperparams::for_sample_size(data.n());
        let mcmc = McmcSettings {
            iterations,
            burn_in,
            thin,
            seed,
            keep_draws: true,
        };
        let summary = run_chain(&data, &hyper, &mcmc).map_err(|e| e.to_string())?;
        let effects = standardize_effects(
            summary.mean_beta_x,
            summary.mean_beta_z,
            summary.mean_beta_xz,
            &data.x,
            &data.z,
            &data.y,
        )
        .map_err(|e| e.to_string())?;
        let draws = summary.draws.as_deref().unwrap_or(&[]);
        let stride = draws.len().div_ceil(MAX_DRAWS_RETURNED).max(1);
        let scatter: Vec<serde_json::Value> = draws
            .iter()
            .step_by(stride)
            .map(|d| json!([d.beta_x, d.beta_xz, d.gamma as u8]))
            .collect();
        Ok(json!({
            "scenario": scenario.id(),
            "n": n,
            "pip": summary.pip,
            "n_kept": summary.n_kept,
            "mean_beta_x": summary.mean_beta_x,
            "mean_beta_xz": summary.mean_beta_xz,
            "mean_beta_z": summary.mean_beta_z,
            "beta_x_std": effects.beta_x_std,
            "beta_xz_std": effects.beta_xz_std,
            "sign_reversal": reversal_json(sign_reversal_threshold(&effects)),
            "draws": scatter,
            "truth": {
                "beta_x": truth.beta_x,
                "beta_xz": truth.beta_xz,
                "gamma": truth.gamma,
            },
        }))
    };
    match inner() {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_json_has_threshold() {
        let s = effect_curve_json(0.5, -2.5, -3.0, 3.0, 101);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["z"].as_array().unwrap().len(), 101);
        assert_eq!(v["sign_reversal"]["kind"], "at");
        let z = v["sign_reversal"]["z"].as_f64().unwrap();
        assert!((z - 0.2).abs() < 1e-12);
    }

    #[test]
    fn curve_json_flat_slope_is_unbounded() {
        let s = effect_curve_json(0.3, 0.0, -2.0, 2.0, 11);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["sign_reversal"]["kind"], "unbounded");
    }

    #[test]
    fn curve_json_rejects_bad_range() {
        let s = effect_curve_json(0.0, 0.0, 2.0, -2.0, 11);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v["error"].is_string());
    }

    #[test]
    fn simulate_scores_runs_all_methods() {
        let s = simulate_scores_json("S2", 300, 11);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["methods"].as_array().unwrap().len(), 3);
        assert_eq!(v["truth"]["beta_xz"], 0.3);
        // scenario S2 at n=300: the naive fit must flag communication
        assert_eq!(v["methods"][0]["method"], "ols");
        assert!(v["methods"][0]["score"].as_f64().unwrap() > 0.9);
    }

    #[test]
    fn simulate_scores_reports_unknown_scenario() {
        let s = simulate_scores_json("S9", 100, 1);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v["error"].as_str().unwrap().contains("S9"));
    }

    #[test]
    fn mrccc_fit_is_deterministic_and_bounded() {
        let a = mrccc_fit_json("S2", 250, 5, 2500, 500, 5);
        let b = mrccc_fit_json("S2", 250, 5, 2500, 500, 5);
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        let pip = v["pip"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&pip));
        assert!(v["draws"].as_array().unwrap().len() <= MAX_DRAWS_RETURNED);
        assert!(v["n_kept"].as_u64().unwrap() == 400);
    }
}
