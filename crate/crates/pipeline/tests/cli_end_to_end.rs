//! End-to-end CLI behavior: exit codes, file formats, and the identity
//! between in-memory fits and fits routed through dataset CSV files.

mod common;

use mrccc_core::baselines::fit_ols;
use mrccc_core::model::center_dataset;
use mrccc_core::sim::{generate_dataset, Scenario, SimConfig};
use mrccc_pipeline::cli::dispatch;
use mrccc_pipeline::dataset_io::method_result_to_csv_row;
use tempfile::tempdir;

fn run(args: &[&str]) -> i32 {
    dispatch(args.iter().map(|s| s.to_string()))
}

#[test]
fn missing_required_flag_is_usage_error() {
    assert_eq!(run(&["mrccc", "fit", "--method", "ols"]), 1);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(run(&["mrccc", "benchmark", "--seed", "1", "--bogus"]), 1);
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["mrccc", "--help"]), 0);
    assert_eq!(run(&["mrccc", "simulate", "--help"]), 0);
}

#[test]
fn unknown_method_is_data_error() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "donor,g1,h1,x,z,y\n1,0,0,0,0,0\n2,1,1,1,1,1\n").unwrap();
    assert_eq!(
        run(&["mrccc", "fit", "--method", "nope", "--data", data.to_str().unwrap()]),
        2
    );
}

#[test]
fn missing_data_file_is_data_error() {
    assert_eq!(
        run(&["mrccc", "fit", "--method", "ols", "--data", "/nonexistent/x.csv"]),
        2
    );
}

#[test]
fn simulate_writes_dataset_and_truth() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("sims");
    assert_eq!(
        run(&[
            "mrccc",
            "simulate",
            "--scenario",
            "S2",
            "--n",
            "50",
            "--replicates",
            "2",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    assert!(out.join("S2_n50_r000.csv").exists());
    assert!(out.join("S2_n50_r001.csv").exists());
    let truth = std::fs::read_to_string(out.join("S2_n50_r001_truth.csv")).unwrap();
    assert!(truth.contains("beta_xz,0.3"));
}

#[test]
fn fit_roundtrip_matches_in_memory_for_deterministic_methods() {
    // a dataset written by `simulate` and reloaded by `fit` produces
    // byte-identical result rows to fitting the in-memory dataset
    let dir = tempdir().unwrap();
    let out = dir.path().join("sims");
    assert_eq!(
        run(&[
            "mrccc", "simulate", "--scenario", "S3", "--n", "120", "--replicates", "1",
            "--seed", "21", "--out", out.to_str().unwrap()
        ]),
        0
    );
    let data_path = out.join("S3_n120_r000.csv");

    for method in ["ols", "mvmr"] {
        let fit_out = dir.path().join(format!("{method}.csv"));
        assert_eq!(
            run(&[
                "mrccc",
                "fit",
                "--method",
                method,
                "--data",
                data_path.to_str().unwrap(),
                "--out",
                fit_out.to_str().unwrap()
            ]),
            0
        );
        let cli_row = std::fs::read_to_string(&fit_out).unwrap();

        let draw = generate_dataset(&SimConfig {
            scenario: Scenario::S3,
            n: 120,
            replicate_index: 0,
            master_seed: 21,
        })
        .unwrap();
        let (centered, _) = center_dataset(&draw.data);
        let mem = match method {
            "ols" => fit_ols(&centered).unwrap(),
            _ => mrccc_core::baselines::fit_mvmr(&centered).unwrap(),
        };
        let mem_row = method_result_to_csv_row(&mem);
        assert_eq!(cli_row.lines().nth(1).unwrap(), mem_row, "{method} row differs");
    }
}

#[test]
fn fit_mrccc_runs_short_chain_from_csv() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("sims");
    assert_eq!(
        run(&[
            "mrccc", "simulate", "--scenario", "S2", "--n", "200", "--replicates", "1",
            "--seed", "3", "--out", out.to_str().unwrap()
        ]),
        0
    );
    let data_path = out.join("S2_n200_r000.csv");
    let fit_out = dir.path().join("mrccc.csv");
    assert_eq!(
        run(&[
            "mrccc",
            "fit",
            "--method",
            "mrccc",
            "--data",
            data_path.to_str().unwrap(),
            "--iterations",
            "2000",
            "--burn-in",
            "400",
            "--thin",
            "4",
            "--seed",
            "5",
            "--out",
            fit_out.to_str().unwrap()
        ]),
        0
    );
    let row = std::fs::read_to_string(&fit_out).unwrap();
    let line = row.lines().nth(1).unwrap();
    assert!(line.starts_with("mrccc,"), "row: {line}");
    // kept draws: (2000 - 400) / 4
    assert!(line.contains("n_kept=400"), "row: {line}");
}

#[test]
fn benchmark_row_count_contract() {
    // one n, all scenarios and methods: 12 rows plus header
    let dir = tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    assert_eq!(
        run(&[
            "mrccc",
            "benchmark",
            "--n-list",
            "60",
            "--seed",
            "7",
            "--replicates",
            "2",
            "--iterations",
            "300",
            "--burn-in",
            "60",
            "--thin",
            "2",
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.trim_end().lines().collect();
    assert_eq!(lines.len(), 13, "header + 12 cells");
    assert!(lines[0].starts_with("scenario,n,method"));
    assert!(lines[1].starts_with("S1,60,ols,"));
    assert!(lines[12].starts_with("S3,60,mrccc,"));
}

#[test]
fn screen_end_to_end_with_permuted_manifest() {
    // short chains: this checks plumbing and order independence, not power
    let dir = tempdir().unwrap();
    let fixture = common::write_triplet_fixture(
        dir.path(),
        Scenario::S2,
        150,
        3,
        11,
        Some((1500, 300, 5)),
    );
    let out_a = dir.path().join("screen_a.csv");
    assert_eq!(
        run(&[
            "mrccc",
            "screen",
            "--manifest",
            fixture.manifest_path.to_str().unwrap(),
            "--out",
            out_a.to_str().unwrap(),
            "--jobs",
            "2"
        ]),
        0
    );
    let permuted = dir.path().join("manifest_rev.json");
    common::permute_manifest(&fixture.manifest_path, &permuted);
    let out_b = dir.path().join("screen_b.csv");
    assert_eq!(
        run(&[
            "mrccc",
            "screen",
            "--manifest",
            permuted.to_str().unwrap(),
            "--out",
            out_b.to_str().unwrap(),
            "--jobs",
            "1"
        ]),
        0
    );
    let a = std::fs::read_to_string(&out_a).unwrap();
    let b = std::fs::read_to_string(&out_b).unwrap();
    assert_eq!(a, b, "screen output must not depend on triplet order or jobs");
    let lines: Vec<&str> = a.trim_end().lines().collect();
    assert_eq!(lines.len(), 4, "header + 3 triplets");
    assert!(lines[1].starts_with("LIG_0__REC_0__PW_0,"));
    // all three triplets fit five instruments per side
    for line in &lines[1..] {
        assert!(line.contains(",ok,150,5,5,"), "line: {line}");
    }
}

#[test]
fn screen_reports_missing_instruments_as_exclusion() {
    let dir = tempdir().unwrap();
    let fixture = common::write_triplet_fixture(
        dir.path(),
        Scenario::S1,
        80,
        1,
        13,
        Some((800, 200, 3)),
    );
    // move the ligand gene's promoter out of reach of every SNP
    let text = std::fs::read_to_string(&fixture.manifest_path).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["genes"]["LIG_0"]["promoter_pos"] = serde_json::json!(900_000_000);
    std::fs::write(&fixture.manifest_path, serde_json::to_string(&v).unwrap()).unwrap();

    let out = dir.path().join("screen.csv");
    assert_eq!(
        run(&[
            "mrccc",
            "screen",
            "--manifest",
            fixture.manifest_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let content = std::fs::read_to_string(&out).unwrap();
    let line = content.lines().nth(1).unwrap();
    assert!(
        line.contains("excluded: no valid instruments for ligand"),
        "line: {line}"
    );
}

#[test]
fn methods_subset_flag_limits_rows() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    assert_eq!(
        run(&[
            "mrccc",
            "benchmark",
            "--n-list",
            "60,80",
            "--seed",
            "2",
            "--replicates",
            "2",
            "--scenarios",
            "S1",
            "--methods",
            "ols,mvmr",
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1 + 2 * 2);
}
