//! Donor-level CSV pipeline around `mrccc-core`: table ingestion and
//! alignment, library-size filtering, cis-SNP instrument selection, pathway
//! activity construction, manifest-driven triplet screening, and the `mrccc`
//! command-line interface.

pub mod cli;
pub mod dataset_io;
pub mod error;
pub mod genotypes;
pub mod manifest;
pub mod pathway;
pub mod screen;
pub mod tables;

pub use error::PipelineError;
