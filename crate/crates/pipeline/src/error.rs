//! Pipeline error type; everything maps to CLI exit code 2 (data error).

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed CSV in {path} at line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: duplicate id '{id}'")]
    DuplicateId { path: PathBuf, id: String },
    #[error("{path}: empty table (header only)")]
    EmptyTable { path: PathBuf },
    #[error("donor '{donor}' has negative library size {value}")]
    NegativeLibrarySize { donor: String, value: f64 },
    #[error("no donors shared by all input tables")]
    EmptyDonorIntersection,
    #[error("library-size filtering excluded every donor")]
    AllDonorsExcluded,
    #[error("tables are not donor-aligned (expected identical donor lists)")]
    NotAligned,
    #[error("no position metadata for SNP '{0}'")]
    MissingSnpPosition(String),
    #[error("gene '{gene}' not found in {table} table")]
    GeneNotFound { gene: String, table: &'static str },
    #[error("pathway gene '{0}' has zero variance; cannot standardize")]
    ZeroVariancePathway(String),
    #[error("no pathway genes present in the receiver table")]
    EmptyPathway,
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("triplet '{id}': {source}")]
    Triplet {
        id: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Model(#[from] mrccc_core::model::ModelError),
    #[error(transparent)]
    Gibbs(#[from] mrccc_core::gibbs::GibbsError),
    #[error(transparent)]
    Baseline(#[from] mrccc_core::baselines::BaselineError),
    #[error(transparent)]
    Bench(#[from] mrccc_core::bench::BenchError),
    #[error(transparent)]
    Sim(#[from] mrccc_core::sim::SimError),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn for_triplet(self, id: &str) -> Self {
        PipelineError::Triplet {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
