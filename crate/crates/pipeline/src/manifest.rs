//! Screening manifest: a JSON file naming the donor-level input CSVs, gene
//! promoter positions, covariate columns, and the triplets to screen. File
//! paths resolve relative to the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::genotypes::GeneLocus;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreenManifest {
    pub master_seed: u64,
    pub sender_expression: String,
    pub receiver_expression: String,
    pub genotypes: String,
    pub snp_positions: String,
    #[serde(default)]
    pub covariates: Option<String>,
    #[serde(default)]
    pub covariate_columns: Vec<String>,
    /// Promoter loci for every ligand and receptor gene referenced below.
    pub genes: BTreeMap<String, GeneEntry>,
    pub triplets: Vec<TripletEntry>,
    #[serde(default)]
    pub mcmc: Option<McmcEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneEntry {
    pub chrom: String,
    pub promoter_pos: i64,
}

impl GeneEntry {
    pub fn locus(&self) -> GeneLocus {
        GeneLocus {
            chrom: self.chrom.clone(),
            promoter_pos: self.promoter_pos,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripletEntry {
    pub ligand: String,
    pub receptor: String,
    pub pathway_id: String,
    pub pathway_genes: Vec<String>,
}

impl TripletEntry {
    /// Stable identifier used for seeding, sorting, and reporting.
    pub fn id(&self) -> String {
        format!("{}__{}__{}", self.ligand, self.receptor, self.pathway_id)
    }
}

/// Chain-length override; defaults follow the screening configuration
/// (20,000 iterations, 2,000 burn-in, thinning 10).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McmcEntry {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_iterations() -> usize {
    20_000
}
fn default_burn_in() -> usize {
    2_000
}
fn default_thin() -> usize {
    10
}

impl Default for McmcEntry {
    fn default() -> Self {
        McmcEntry {
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            thin: default_thin(),
        }
    }
}

/// Loads and validates a manifest; returns it with its base directory.
pub fn load_manifest(path: &Path) -> Result<(ScreenManifest, PathBuf), PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let manifest: ScreenManifest =
        serde_json::from_str(&text).map_err(|e| PipelineError::Manifest(e.to_string()))?;
    if manifest.triplets.is_empty() {
        return Err(PipelineError::Manifest("manifest lists no triplets".into()));
    }
    for t in &manifest.triplets {
        for gene in [&t.ligand, &t.receptor] {
            if !manifest.genes.contains_key(gene) {
                return Err(PipelineError::Manifest(format!(
                    "triplet '{}' references gene '{}' with no promoter position",
                    t.id(),
                    gene
                )));
            }
        }
        if t.pathway_genes.is_empty() {
            return Err(PipelineError::Manifest(format!(
                "triplet '{}' has an empty pathway gene set",
                t.id()
            )));
        }
    }
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((manifest, base))
}

pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
