//! Shared fixture builder: synthetic ligand-receptor-pathway screens routed
//! through the CSV + manifest surface, generated from the structural model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mrccc_core::model::StructuralParams;
use mrccc_core::sim::{generate_dataset_with_params, Scenario, SimConfig};
use nalgebra::DVector;

/// Structural parameters without covariates, so one manifest can carry many
/// independent replicates against a single (empty) covariate specification.
pub fn params_no_covariates(scenario: Scenario) -> StructuralParams {
    let mut p = mrccc_core::sim::fixed_params(scenario);
    p.alpha_x = DVector::zeros(0);
    p.alpha_z = DVector::zeros(0);
    p.alpha_y = DVector::zeros(0);
    p
}

pub struct TripletFixture {
    pub manifest_path: PathBuf,
}

/// Writes sender/receiver/genotype/position CSVs plus a manifest holding
/// `triplets` independent replicates of the scenario. Each triplet `r` gets
/// its own ligand gene `LIG_r` (sender), receptor `REC_r` + pathway gene
/// `PATH_r` (receiver), and five cis-SNPs per gene placed inside the window.
pub fn write_triplet_fixture(
    dir: &Path,
    scenario: Scenario,
    n: usize,
    triplets: usize,
    master_seed: u64,
    mcmc: Option<(usize, usize, usize)>,
) -> TripletFixture {
    let params = params_no_covariates(scenario);
    let draws: Vec<_> = (0..triplets)
        .map(|r| {
            generate_dataset_with_params(
                &SimConfig {
                    scenario,
                    n,
                    replicate_index: r,
                    master_seed,
                },
                &params,
            )
            .unwrap()
        })
        .collect();

    let p_g = 5;
    let p_h = 5;
    let lib = 1000.0;

    // sender expression: ligand genes
    let mut sender = String::from("donor");
    for r in 0..triplets {
        let _ = write!(sender, ",LIG_{r}");
    }
    sender.push_str(",library_size\n");
    for i in 0..n {
        let _ = write!(sender, "d{i}");
        for draw in &draws {
            let _ = write!(sender, ",{}", draw.data.x[i]);
        }
        let _ = writeln!(sender, ",{lib}");
    }

    // receiver expression: receptor + pathway genes
    let mut receiver = String::from("donor");
    for r in 0..triplets {
        let _ = write!(receiver, ",REC_{r},PATH_{r}");
    }
    receiver.push_str(",library_size\n");
    for i in 0..n {
        let _ = write!(receiver, "d{i}");
        for draw in &draws {
            let _ = write!(receiver, ",{},{}", draw.data.z[i], draw.data.y[i]);
        }
        let _ = writeln!(receiver, ",{lib}");
    }

    // genotypes: five cis-SNPs per gene per triplet
    let mut geno = String::from("donor");
    for r in 0..triplets {
        for j in 0..p_g {
            let _ = write!(geno, ",gsnp_{r}_{j}");
        }
        for j in 0..p_h {
            let _ = write!(geno, ",hsnp_{r}_{j}");
        }
    }
    geno.push('\n');
    for i in 0..n {
        let _ = write!(geno, "d{i}");
        for draw in &draws {
            for j in 0..p_g {
                let _ = write!(geno, ",{}", draw.data.g[(i, j)]);
            }
            for j in 0..p_h {
                let _ = write!(geno, ",{}", draw.data.h[(i, j)]);
            }
        }
        geno.push('\n');
    }

    // positions: gene r lives at r * 10 Mb on its chromosome, SNPs within 5 kb
    let mut pos = String::from("snp,chrom,pos\n");
    for r in 0..triplets {
        let base_l = (r as i64) * 10_000_000 + 1_000_000;
        let base_r = (r as i64) * 10_000_000 + 1_000_000;
        for j in 0..p_g {
            let _ = writeln!(pos, "gsnp_{r}_{j},L,{}", base_l + (j as i64) * 1_000);
        }
        for j in 0..p_h {
            let _ = writeln!(pos, "hsnp_{r}_{j},R,{}", base_r + (j as i64) * 1_000);
        }
    }

    let mut genes = String::new();
    for r in 0..triplets {
        let base = (r as i64) * 10_000_000 + 1_000_000;
        let _ = write!(
            genes,
            "{}\"LIG_{r}\": {{\"chrom\": \"L\", \"promoter_pos\": {base}}},\n            \"REC_{r}\": {{\"chrom\": \"R\", \"promoter_pos\": {base}}}",
            if r == 0 { "" } else { ",\n            " }
        );
    }
    let mut triplet_json = String::new();
    for r in 0..triplets {
        let _ = write!(
            triplet_json,
            "{}{{\"ligand\": \"LIG_{r}\", \"receptor\": \"REC_{r}\", \"pathway_id\": \"PW_{r}\", \"pathway_genes\": [\"PATH_{r}\"]}}",
            if r == 0 { "" } else { ",\n            " }
        );
    }
    let mcmc_json = match mcmc {
        Some((it, burn, thin)) => format!(
            ",\n        \"mcmc\": {{\"iterations\": {it}, \"burn_in\": {burn}, \"thin\": {thin}}}"
        ),
        None => String::new(),
    };
    let manifest = format!(
        r#"{{
        "master_seed": {master_seed},
        "sender_expression": "sender.csv",
        "receiver_expression": "receiver.csv",
        "genotypes": "geno.csv",
        "snp_positions": "pos.csv",
        "genes": {{
            {genes}
        }},
        "triplets": [
            {triplet_json}
        ]{mcmc_json}
    }}"#
    );

    std::fs::write(dir.join("sender.csv"), sender).unwrap();
    std::fs::write(dir.join("receiver.csv"), receiver).unwrap();
    std::fs::write(dir.join("geno.csv"), geno).unwrap();
    std::fs::write(dir.join("pos.csv"), pos).unwrap();
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest).unwrap();
    TripletFixture { manifest_path }
}

/// Rewrites the manifest with the triplet array order permuted (reversed).
pub fn permute_manifest(manifest_path: &Path, out_path: &Path) {
    let text = std::fs::read_to_string(manifest_path).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let arr = v["triplets"].as_array_mut().unwrap();
    arr.reverse();
    std::fs::write(out_path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}
