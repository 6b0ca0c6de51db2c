//! Dataset, truth-sidecar, fit-result, and benchmark CSV formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write-then-load cycle reproduces every value bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use mrccc_core::baselines::MethodResult;
use mrccc_core::bench::BenchCell;
use mrccc_core::model::{Dataset, StructuralParams};
use mrccc_core::sim::Scenario;

use crate::error::PipelineError;
use crate::tables::csv_error;

/// Header for a dataset with the given block widths:
/// `donor,g1..,h1..,v1..,x,z,y`.
fn dataset_header(p_g: usize, p_h: usize, p_v: usize) -> String {
    let mut h = String::from("donor");
    for k in 0..p_g {
        let _ = write!(h, ",g{}", k + 1);
    }
    for k in 0..p_h {
        let _ = write!(h, ",h{}", k + 1);
    }
    for k in 0..p_v {
        let _ = write!(h, ",v{}", k + 1);
    }
    h.push_str(",x,z,y");
    h
}

pub fn dataset_to_csv_string(d: &Dataset, donor_ids: Option<&[String]>) -> String {
    let mut out = dataset_header(d.p_g(), d.p_h(), d.p_v());
    out.push('\n');
    for i in 0..d.n() {
        match donor_ids {
            Some(ids) => out.push_str(&ids[i]),
            None => {
                let _ = write!(out, "{}", i + 1);
            }
        }
        for k in 0..d.p_g() {
            let _ = write!(out, ",{}", d.g[(i, k)]);
        }
        for k in 0..d.p_h() {
            let _ = write!(out, ",{}", d.h[(i, k)]);
        }
        for k in 0..d.p_v() {
            let _ = write!(out, ",{}", d.v[(i, k)]);
        }
        let _ = write!(out, ",{},{},{}", d.x[i], d.z[i], d.y[i]);
        out.push('\n');
    }
    out
}

pub fn write_dataset_csv(
    d: &Dataset,
    donor_ids: Option<&[String]>,
    path: &Path,
) -> Result<(), PipelineError> {
    std::fs::write(path, dataset_to_csv_string(d, donor_ids))
        .map_err(|e| PipelineError::io(path, e))
}

fn block_width(headers: &[String], prefix: char) -> usize {
    headers
        .iter()
        .filter(|h| {
            h.len() > 1
                && h.starts_with(prefix)
                && h[1..].chars().all(|c| c.is_ascii_digit())
        })
        .count()
}

/// Loads a `donor,g*,h*,v*,x,z,y` CSV back into a validated [`Dataset`].
pub fn read_dataset_csv(path: &Path) -> Result<(Dataset, Vec<String>), PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, &e))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, &e))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    for required in ["donor", "x", "z", "y"] {
        if !headers.iter().any(|h| h == required) {
            return Err(PipelineError::MissingColumn {
                path: path.to_path_buf(),
                column: required.into(),
            });
        }
    }
    let p_g = block_width(&headers, 'g');
    let p_h = block_width(&headers, 'h');
    let p_v = block_width(&headers, 'v');
    let expected = dataset_header(p_g, p_h, p_v);
    let actual = headers.join(",");
    if expected != actual {
        return Err(PipelineError::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected dataset header '{actual}' (want '{expected}')"),
        });
    }

    let mut donors = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, &e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            return Err(PipelineError::Csv {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, got {}", headers.len(), rec.len()),
            });
        }
        donors.push(rec[0].to_string());
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (i, field) in rec.iter().enumerate().skip(1) {
            row.push(field.trim().parse().map_err(|_| PipelineError::Csv {
                path: path.to_path_buf(),
                line,
                message: format!("non-numeric value '{}' in column '{}'", field, headers[i]),
            })?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PipelineError::EmptyTable {
            path: path.to_path_buf(),
        });
    }
    let n = rows.len();
    let col = |offset: usize, width: usize| -> DMatrix<f64> {
        DMatrix::from_fn(n, width, |r, c| rows[r][offset + c])
    };
    let g = col(0, p_g);
    let h = col(p_g, p_h);
    let v = col(p_g + p_h, p_v);
    let base = p_g + p_h + p_v;
    let x = DVector::from_fn(n, |r, _| rows[r][base]);
    let z = DVector::from_fn(n, |r, _| rows[r][base + 1]);
    let y = DVector::from_fn(n, |r, _| rows[r][base + 2]);
    let data = Dataset::new(g, h, v, x, z, y)?;
    Ok((data, donors))
}

/// Ground-truth sidecar in long `param,value` form.
pub fn truth_to_csv_string(
    truth: &StructuralParams,
    scenario: Scenario,
    n: usize,
    replicate: usize,
    master_seed: u64,
) -> String {
    let mut out = String::from("param,value\n");
    let _ = writeln!(out, "scenario,{}", scenario.id());
    let _ = writeln!(out, "n,{n}");
    let _ = writeln!(out, "replicate,{replicate}");
    let _ = writeln!(out, "master_seed,{master_seed}");
    let mut scalar = |name: &str, v: f64| {
        let _ = writeln!(out, "{name},{v}");
    };
    scalar("beta_x", truth.beta_x);
    scalar("beta_z", truth.beta_z);
    scalar("beta_xz", truth.beta_xz);
    scalar("lambda_x", truth.lambda_x);
    scalar("lambda_z", truth.lambda_z);
    scalar("lambda_y", truth.lambda_y);
    scalar("sigma2_x", truth.sigma2_x);
    scalar("sigma2_z", truth.sigma2_z);
    scalar("sigma2_y", truth.sigma2_y);
    let _ = writeln!(out, "gamma,{}", truth.gamma as u8);
    for (name, vec) in [
        ("pi_x", &truth.pi_x),
        ("pi_z", &truth.pi_z),
        ("alpha_x", &truth.alpha_x),
        ("alpha_z", &truth.alpha_z),
        ("alpha_y", &truth.alpha_y),
    ] {
        for (k, v) in vec.iter().enumerate() {
            let _ = writeln!(out, "{name}_{},{}", k + 1, v);
        }
    }
    out
}

pub const METHOD_RESULT_HEADER: &str = "method,score,decision,beta_x_hat,beta_xz_hat,extras";

/// One CSV row per fit; extras serialize as `key=value` pairs joined by ';'.
pub fn method_result_to_csv_row(r: &MethodResult) -> String {
    let beta_xz = r
        .beta_xz_hat
        .map(|v| v.to_string())
        .unwrap_or_default();
    let extras: Vec<String> = r.extras.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!(
        "{},{},{},{},{},{}",
        r.method.token(),
        r.score,
        r.decision as u8,
        r.beta_x_hat,
        beta_xz,
        extras.join(";")
    )
}

pub const BENCH_HEADER: &str =
    "scenario,n,method,score_mean,score_sd,rejection_rate,bias_bx,mad_bx,bias_bxz,mad_bxz,replicates,failures";

/// Benchmark cells in the reported table column order; interaction columns
/// stay empty for methods that do not estimate it.
pub fn bench_cells_to_csv_string(cells: &[BenchCell]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.scenario.id(),
            c.n,
            c.method.token(),
            c.score_mean,
            c.score_sd,
            c.rejection_rate,
            c.bias_beta_x,
            c.mad_beta_x,
            opt(c.bias_beta_xz),
            opt(c.mad_beta_xz),
            c.replicates,
            c.failures
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrccc_core::sim::{generate_dataset, SimConfig};
    use tempfile::tempdir;

    #[test]
    fn dataset_roundtrip_is_bit_exact() {
        let draw = generate_dataset(&SimConfig {
            scenario: Scenario::S2,
            n: 30,
            replicate_index: 0,
            master_seed: 77,
        })
        .unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_csv(&draw.data, None, &path).unwrap();
        let (loaded, donors) = read_dataset_csv(&path).unwrap();
        assert_eq!(loaded, draw.data);
        assert_eq!(donors[0], "1");
        assert_eq!(donors.len(), 30);
    }

    #[test]
    fn dataset_header_shape() {
        assert_eq!(dataset_header(2, 1, 0), "donor,g1,g2,h1,x,z,y");
    }

    #[test]
    fn read_rejects_shuffled_header() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "donor,x,g1,h1,z,y\n1,0,0,0,0,0\n").unwrap();
        assert!(matches!(
            read_dataset_csv(&path),
            Err(PipelineError::Csv { line: 1, .. })
        ));
    }

    #[test]
    fn truth_sidecar_lists_all_parameters() {
        let truth = mrccc_core::sim::fixed_params(Scenario::S3);
        let s = truth_to_csv_string(&truth, Scenario::S3, 500, 4, 42);
        assert!(s.contains("scenario,S3\n"));
        assert!(s.contains("beta_x,0.3\n"));
        assert!(s.contains("beta_xz,0\n"));
        assert!(s.contains("gamma,1\n"));
        assert!(s.contains("pi_x_5,0.5\n"));
        assert!(s.contains("alpha_y_3,0.3\n"));
    }

    #[test]
    fn method_result_row_shape() {
        use std::collections::BTreeMap;
        let mut extras = BTreeMap::new();
        extras.insert("p_f".to_string(), 0.25_f64);
        let r = MethodResult {
            method: mrccc_core::baselines::Method::Ols,
            score: 0.75,
            decision: false,
            beta_x_hat: 0.125,
            beta_xz_hat: None,
            extras,
        };
        assert_eq!(method_result_to_csv_row(&r), "ols,0.75,0,0.125,,p_f=0.25");
    }
}
