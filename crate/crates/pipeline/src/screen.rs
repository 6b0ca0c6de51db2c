//! Manifest-driven triplet screening: table alignment, library-size
//! filtering, per-triplet dataset assembly, posterior fitting, and sorted
//! CSV emission.
//!
//! Each triplet owns an RNG seed derived by a stable hash of
//! (master seed, ligand, receptor, pathway id), so a screen is reproducible
//! and independent of triplet order and worker scheduling.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use mrccc_core::gibbs::{run_chain, Hyperparams, McmcSettings, PosteriorSummary};
use mrccc_core::model::{
    center_dataset, sign_reversal_threshold, standardize_effects, Dataset, EffectSummary,
    SignReversal,
};

use crate::error::PipelineError;
use crate::genotypes::{
    instrument_matrix, read_genotypes_csv, read_positions_csv, select_instruments,
    GenotypeTable, InstrumentSelection,
};
use crate::manifest::{load_manifest, resolve, McmcEntry, ScreenManifest, TripletEntry};
use crate::pathway::pathway_activity;
use crate::tables::{
    apply_mask, donor_intersection, filter_donors, read_covariates_csv, read_expression_csv,
    CovariateTable, DropReport, ExpressionTable,
};

/// Everything one triplet fit needs, resolved against the shared tables.
#[derive(Debug, Clone)]
pub struct TripletSpec {
    pub id: String,
    pub ligand: String,
    pub receptor: String,
    pub pathway_id: String,
    pub pathway_genes: Vec<String>,
    pub sender_ref: String,
    pub receiver_ref: String,
    pub genotype_ref: String,
    pub covariate_columns: Vec<String>,
    pub seed: u64,
}

/// A successful triplet screen.
#[derive(Debug, Clone)]
pub struct ScreenResult {
    pub triplet_id: String,
    pub ligand: String,
    pub receptor: String,
    pub pathway_id: String,
    pub n_donors: usize,
    pub n_instruments_ligand: usize,
    pub n_instruments_receptor: usize,
    pub pathway_representation: &'static str,
    pub summary: PosteriorSummary,
    pub effects: EffectSummary,
    pub sign_reversal: SignReversal,
}

/// Per-triplet outcome; exclusions carry a typed reason instead of failing
/// the whole screen.
#[derive(Debug, Clone)]
pub enum ScreenOutcome {
    Done(Box<ScreenResult>),
    Excluded { triplet_id: String, reason: String },
}

impl ScreenOutcome {
    pub fn triplet_id(&self) -> &str {
        match self {
            ScreenOutcome::Done(r) => &r.triplet_id,
            ScreenOutcome::Excluded { triplet_id, .. } => triplet_id,
        }
    }
}

/// FNV-1a over the seed and triplet identifiers; stable across platforms.
pub fn triplet_seed(master_seed: u64, ligand: &str, receptor: &str, pathway_id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&master_seed.to_le_bytes());
    eat(ligand.as_bytes());
    eat(&[0xff]);
    eat(receptor.as_bytes());
    eat(&[0xff]);
    eat(pathway_id.as_bytes());
    h
}

/// The shared, analysis-ready inputs: aligned, normalized, donor-filtered.
pub struct ScreenContext {
    pub sender: ExpressionTable,
    pub receiver: ExpressionTable,
    pub genotypes: GenotypeTable,
    pub covariates: CovariateTable,
    pub positions: std::collections::HashMap<String, crate::genotypes::SnpPosition>,
    pub manifest: ScreenManifest,
    pub drop_report: DropReport,
}

/// Loads every table named by the manifest, aligns donors, normalizes
/// expression to the cell-type median library size, and applies the
/// library-size donor filter.
pub fn prepare_context(manifest_path: &Path) -> Result<ScreenContext, PipelineError> {
    let (manifest, base) = load_manifest(manifest_path)?;
    let mut sender = read_expression_csv(&resolve(&base, &manifest.sender_expression))?;
    let mut receiver = read_expression_csv(&resolve(&base, &manifest.receiver_expression))?;
    let genotypes = read_genotypes_csv(&resolve(&base, &manifest.genotypes))?;
    let positions = read_positions_csv(&resolve(&base, &manifest.snp_positions))?;
    let covariates = match &manifest.covariates {
        Some(rel) if !manifest.covariate_columns.is_empty() => {
            read_covariates_csv(&resolve(&base, rel), &manifest.covariate_columns)?
        }
        _ => CovariateTable::empty(sender.donors.clone()),
    };

    // donor alignment across all tables, order anchored to the sender table
    let mut sets: Vec<(&str, &[String])> = vec![
        ("sender", &sender.donors),
        ("receiver", &receiver.donors),
        ("genotypes", &genotypes.donors),
    ];
    if !covariates.columns.is_empty() {
        sets.push(("covariates", &covariates.donors));
    }
    let (aligned, drop_report) = donor_intersection(&sets)?;
    sender = sender.subset_donors(&aligned)?;
    receiver = receiver.subset_donors(&aligned)?;
    let genotypes = genotypes.subset_donors(&aligned)?;
    let covariates = covariates.subset_donors(&aligned)?;

    // normalize to the cell-type median library size, then filter donors on
    // the raw library sizes
    sender.normalize_to_median();
    receiver.normalize_to_median();
    let mask = filter_donors(&sender, &receiver)?;
    let kept = apply_mask(&sender.donors, &mask);
    let sender = sender.subset_donors(&kept)?;
    let receiver = receiver.subset_donors(&kept)?;
    let genotypes = genotypes.subset_donors(&kept)?;
    let covariates = covariates.subset_donors(&kept)?;

    Ok(ScreenContext {
        sender,
        receiver,
        genotypes,
        covariates,
        positions,
        manifest,
        drop_report,
    })
}

fn specs(ctx: &ScreenContext) -> Vec<TripletSpec> {
    ctx.manifest
        .triplets
        .iter()
        .map(|t: &TripletEntry| TripletSpec {
            id: t.id(),
            ligand: t.ligand.clone(),
            receptor: t.receptor.clone(),
            pathway_id: t.pathway_id.clone(),
            pathway_genes: t.pathway_genes.clone(),
            sender_ref: ctx.manifest.sender_expression.clone(),
            receiver_ref: ctx.manifest.receiver_expression.clone(),
            genotype_ref: ctx.manifest.genotypes.clone(),
            covariate_columns: ctx.manifest.covariate_columns.clone(),
            seed: triplet_seed(ctx.manifest.master_seed, &t.ligand, &t.receptor, &t.pathway_id),
        })
        .collect()
}

/// Assembles the dataset for one triplet and runs the posterior chain with
/// the screening defaults (thinning 10 unless the manifest overrides).
pub fn screen_triplet(ctx: &ScreenContext, spec: &TripletSpec) -> ScreenOutcome {
    match screen_triplet_inner(ctx, spec) {
        Ok(outcome) => outcome,
        Err(e) => ScreenOutcome::Excluded {
            triplet_id: spec.id.clone(),
            reason: format!("error: {}", e.for_triplet(&spec.id)),
        },
    }
}

fn screen_triplet_inner(
    ctx: &ScreenContext,
    spec: &TripletSpec,
) -> Result<ScreenOutcome, PipelineError> {
    let excluded = |reason: &str| ScreenOutcome::Excluded {
        triplet_id: spec.id.clone(),
        reason: reason.to_string(),
    };

    let Some(x) = ctx.sender.gene_column(&spec.ligand) else {
        return Ok(excluded("ligand not present in sender table"));
    };
    let Some(z) = ctx.receiver.gene_column(&spec.receptor) else {
        return Ok(excluded("receptor not present in receiver table"));
    };

    let activity = match pathway_activity(&ctx.receiver, &spec.pathway_genes, &x) {
        Ok(a) => a,
        Err(PipelineError::EmptyPathway) => {
            return Ok(excluded("no pathway genes present in receiver table"))
        }
        Err(e) => return Err(e),
    };

    let ligand_locus = ctx.manifest.genes[&spec.ligand].locus();
    let receptor_locus = ctx.manifest.genes[&spec.receptor].locus();
    let g_sel = match select_instruments(
        &ctx.genotypes,
        &ctx.positions,
        &ligand_locus,
        &x,
        &ctx.covariates.values,
    )? {
        InstrumentSelection::Chosen(snps) => snps,
        InstrumentSelection::NoValidInstruments => {
            return Ok(excluded("no valid instruments for ligand"))
        }
    };
    let h_sel = match select_instruments(
        &ctx.genotypes,
        &ctx.positions,
        &receptor_locus,
        &z,
        &ctx.covariates.values,
    )? {
        InstrumentSelection::Chosen(snps) => snps,
        InstrumentSelection::NoValidInstruments => {
            return Ok(excluded("no valid instruments for receptor"))
        }
    };

    let g = instrument_matrix(&ctx.genotypes, &g_sel);
    let h = instrument_matrix(&ctx.genotypes, &h_sel);
    let data = Dataset::new(
        g,
        h,
        ctx.covariates.values.clone(),
        x,
        z,
        activity.values.clone(),
    )?;
    let (centered, _) = center_dataset(&data);

    let n = centered.n();
    let hyper = Hyperparams::for_sample_size(n);
    let mc: McmcEntry = ctx.manifest.mcmc.unwrap_or_default();
    let mcmc = McmcSettings {
        iterations: mc.iterations,
        burn_in: mc.burn_in,
        thin: mc.thin,
        seed: spec.seed,
        keep_draws: false,
    };
    let summary = run_chain(&centered, &hyper, &mcmc)?;

    // standardized effects on the analysis-ready (filtered, centered) data
    let effects = standardize_effects(
        summary.mean_beta_x,
        summary.mean_beta_z,
        summary.mean_beta_xz,
        &centered.x,
        &centered.z,
        &centered.y,
    )?;
    let sign_reversal = sign_reversal_threshold(&effects);

    Ok(ScreenOutcome::Done(Box::new(ScreenResult {
        triplet_id: spec.id.clone(),
        ligand: spec.ligand.clone(),
        receptor: spec.receptor.clone(),
        pathway_id: spec.pathway_id.clone(),
        n_donors: n,
        n_instruments_ligand: g_sel.len(),
        n_instruments_receptor: h_sel.len(),
        pathway_representation: activity.representation.name(),
        summary,
        effects,
        sign_reversal,
    })))
}

/// Screens every triplet in the manifest, in a bounded worker pool, and
/// returns the outcomes sorted by triplet id.
pub fn run_screen(manifest_path: &Path, jobs: Option<usize>) -> Result<Vec<ScreenOutcome>, PipelineError> {
    let ctx = prepare_context(manifest_path)?;
    let specs = specs(&ctx);
    let run = || -> Vec<ScreenOutcome> {
        let mut outcomes: Vec<ScreenOutcome> = specs
            .par_iter()
            .map(|spec| screen_triplet(&ctx, spec))
            .collect();
        outcomes.sort_by(|a, b| a.triplet_id().cmp(b.triplet_id()));
        outcomes
    };
    let outcomes = match jobs {
        Some(j) if j > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .expect("thread pool")
            .install(run),
        _ => run(),
    };
    Ok(outcomes)
}

pub const SCREEN_HEADER: &str = "triplet,ligand,receptor,pathway,status,n_donors,n_instruments_ligand,n_instruments_receptor,pathway_representation,pip,mean_beta_x,mean_beta_xz,mean_beta_z,beta_x_std,beta_xz_std,sd_x,sd_z,sd_y,sign_reversal_kind,sign_reversal_z";

/// Sorted screen outcomes as CSV; excluded triplets keep their reason in the
/// status column with empty numeric fields.
pub fn outcomes_to_csv_string(outcomes: &[ScreenOutcome]) -> String {
    let mut out = String::from(SCREEN_HEADER);
    out.push('\n');
    for o in outcomes {
        match o {
            ScreenOutcome::Done(r) => {
                let (kind, z) = match r.sign_reversal {
                    SignReversal::At(z) => ("at", z.to_string()),
                    SignReversal::Unbounded => ("unbounded", String::new()),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},ok,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.triplet_id,
                    r.ligand,
                    r.receptor,
                    r.pathway_id,
                    r.n_donors,
                    r.n_instruments_ligand,
                    r.n_instruments_receptor,
                    r.pathway_representation,
                    r.summary.pip,
                    r.summary.mean_beta_x,
                    r.summary.mean_beta_xz,
                    r.summary.mean_beta_z,
                    r.effects.beta_x_std,
                    r.effects.beta_xz_std,
                    r.effects.sd_x,
                    r.effects.sd_z,
                    r.effects.sd_y,
                    kind,
                    z
                );
            }
            ScreenOutcome::Excluded { triplet_id, reason } => {
                let mut fields = triplet_id.splitn(3, "__");
                let ligand = fields.next().unwrap_or("");
                let receptor = fields.next().unwrap_or("");
                let pathway = fields.next().unwrap_or("");
                let _ = writeln!(
                    out,
                    "{},{},{},{},excluded: {},,,,,,,,,,,,,,,",
                    triplet_id,
                    ligand,
                    receptor,
                    pathway,
                    reason.replace(',', ";")
                );
            }
        }
    }
    out
}
