//! Donor-level expression tables: CSV ingestion, donor alignment,
//! library-size normalization, and the median + 3*MAD donor filter.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::PipelineError;

/// Reserved column name carrying per-donor library sizes; when absent, row
/// sums of the expression values are used.
pub const LIBRARY_SIZE_COLUMN: &str = "library_size";

/// Lower library-size bound as a fraction of the median.
const LOWER_FRACTION: f64 = 0.25;

/// Upper bound is median + this many (unscaled) median absolute deviations.
const MAD_MULTIPLIER: f64 = 3.0;

/// One cell type's donor-by-gene expression with per-donor library sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTable {
    pub donors: Vec<String>,
    pub genes: Vec<String>,
    /// donors x genes
    pub values: DMatrix<f64>,
    pub library_sizes: Vec<f64>,
    gene_index: HashMap<String, usize>,
}

impl ExpressionTable {
    pub fn new(
        donors: Vec<String>,
        genes: Vec<String>,
        values: DMatrix<f64>,
        library_sizes: Vec<f64>,
    ) -> Result<Self, PipelineError> {
        assert_eq!(values.nrows(), donors.len());
        assert_eq!(values.ncols(), genes.len());
        assert_eq!(library_sizes.len(), donors.len());
        for (donor, &lib) in donors.iter().zip(&library_sizes) {
            if lib < 0.0 || !lib.is_finite() {
                return Err(PipelineError::NegativeLibrarySize {
                    donor: donor.clone(),
                    value: lib,
                });
            }
        }
        let gene_index = genes
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Ok(ExpressionTable {
            donors,
            genes,
            values,
            library_sizes,
            gene_index,
        })
    }

    pub fn n_donors(&self) -> usize {
        self.donors.len()
    }

    pub fn gene_column(&self, gene: &str) -> Option<DVector<f64>> {
        self.gene_index
            .get(gene)
            .map(|&c| self.values.column(c).into_owned())
    }

    pub fn has_gene(&self, gene: &str) -> bool {
        self.gene_index.contains_key(gene)
    }

    /// Scales every donor's expression by (median library size / donor
    /// library size). Library sizes themselves stay raw so the donor filter
    /// sees the original values.
    pub fn normalize_to_median(&mut self) {
        let med = median(&self.library_sizes);
        for (row, &lib) in self.library_sizes.clone().iter().enumerate() {
            let scale = if lib > 0.0 { med / lib } else { 0.0 };
            for c in 0..self.values.ncols() {
                self.values[(row, c)] *= scale;
            }
        }
    }

    /// Restricts to the given donors, in the given order.
    pub fn subset_donors(&self, keep: &[String]) -> Result<ExpressionTable, PipelineError> {
        let index: HashMap<&str, usize> = self
            .donors
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i))
            .collect();
        let mut values = DMatrix::zeros(keep.len(), self.genes.len());
        let mut libs = Vec::with_capacity(keep.len());
        for (r, donor) in keep.iter().enumerate() {
            let &src = index
                .get(donor.as_str())
                .ok_or(PipelineError::EmptyDonorIntersection)?;
            values.row_mut(r).copy_from(&self.values.row(src));
            libs.push(self.library_sizes[src]);
        }
        ExpressionTable::new(keep.to_vec(), self.genes.clone(), values, libs)
    }
}

/// A raw `donor,<col>,...` numeric CSV: donor ids, column names, values.
pub struct NumericCsv {
    pub donors: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Parses a donor-keyed numeric CSV with strict shape and type checks.
pub fn read_numeric_csv(path: &Path) -> Result<NumericCsv, PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, &e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, &e))?.clone();
    if headers.is_empty() || headers.get(0) != Some("donor") {
        return Err(PipelineError::MissingColumn {
            path: path.to_path_buf(),
            column: "donor".into(),
        });
    }
    let columns: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    check_unique(path, columns.iter())?;

    let mut donors: Vec<String> = Vec::new();
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
        let mut row = Vec::with_capacity(columns.len());
        for (i, field) in rec.iter().enumerate().skip(1) {
            row.push(field.trim().parse().map_err(|_| PipelineError::Csv {
                path: path.to_path_buf(),
                line,
                message: format!("non-numeric value '{}' in column '{}'", field, &headers[i]),
            })?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PipelineError::EmptyTable {
            path: path.to_path_buf(),
        });
    }
    check_unique(path, donors.iter())?;
    let values = DMatrix::from_fn(rows.len(), columns.len(), |r, c| rows[r][c]);
    Ok(NumericCsv {
        donors,
        columns,
        values,
    })
}

/// Parses a `donor,<gene>,...[,library_size]` CSV. When the reserved
/// `library_size` column is absent, row sums stand in for it.
pub fn read_expression_csv(path: &Path) -> Result<ExpressionTable, PipelineError> {
    let raw = read_numeric_csv(path)?;
    let lib_col = raw.columns.iter().position(|c| c == LIBRARY_SIZE_COLUMN);
    match lib_col {
        Some(idx) => {
            let libs: Vec<f64> = raw.values.column(idx).iter().copied().collect();
            let genes: Vec<String> = raw
                .columns
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != idx)
                .map(|(_, g)| g.clone())
                .collect();
            let mut values = DMatrix::zeros(raw.donors.len(), genes.len());
            let mut dst = 0;
            for (src, _) in raw.columns.iter().enumerate() {
                if src != idx {
                    values.set_column(dst, &raw.values.column(src));
                    dst += 1;
                }
            }
            ExpressionTable::new(raw.donors, genes, values, libs)
        }
        None => {
            let libs: Vec<f64> = (0..raw.donors.len())
                .map(|r| raw.values.row(r).sum())
                .collect();
            ExpressionTable::new(raw.donors, raw.columns, raw.values, libs)
        }
    }
}

fn check_unique<'a>(
    path: &Path,
    ids: impl Iterator<Item = &'a String>,
) -> Result<(), PipelineError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.clone()) {
            return Err(PipelineError::DuplicateId {
                path: path.to_path_buf(),
                id: id.clone(),
            });
        }
    }
    Ok(())
}

pub(crate) fn csv_error(path: &Path, e: &csv::Error) -> PipelineError {
    let line = match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, .. } => {
            pos.as_ref().map(|p| p.line()).unwrap_or(0)
        }
        _ => e.position().map(|p| p.line()).unwrap_or(0),
    };
    if let csv::ErrorKind::Io(_) = e.kind() {
        return PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        };
    }
    PipelineError::Csv {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Donors dropped from each table while intersecting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DropReport {
    pub dropped: Vec<(String, Vec<String>)>,
}

/// Intersects donor lists (order follows the first table) and reports what
/// each table lost.
pub fn donor_intersection(
    tables: &[(&str, &[String])],
) -> Result<(Vec<String>, DropReport), PipelineError> {
    let mut shared: Option<BTreeSet<&String>> = None;
    for (_, donors) in tables {
        let set: BTreeSet<&String> = donors.iter().collect();
        shared = Some(match shared {
            None => set,
            Some(prev) => prev.intersection(&set).copied().collect(),
        });
    }
    let shared = shared.unwrap_or_default();
    if shared.is_empty() {
        return Err(PipelineError::EmptyDonorIntersection);
    }
    let kept: Vec<String> = tables[0]
        .1
        .iter()
        .filter(|d| shared.contains(d))
        .cloned()
        .collect();
    let mut report = DropReport::default();
    for (name, donors) in tables {
        let dropped: Vec<String> = donors
            .iter()
            .filter(|d| !shared.contains(d))
            .cloned()
            .collect();
        if !dropped.is_empty() {
            report.dropped.push((name.to_string(), dropped));
        }
    }
    Ok((kept, report))
}

pub(crate) fn median(v: &[f64]) -> f64 {
    assert!(!v.is_empty());
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Unscaled median absolute deviation from the median.
pub(crate) fn mad(v: &[f64]) -> f64 {
    let med = median(v);
    let devs: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    median(&devs)
}

/// Keep mask for donors whose library size stays within
/// [0.25 * median, median + 3 * MAD] in BOTH cell types. The tables must be
/// donor-aligned.
pub fn filter_donors(
    sender: &ExpressionTable,
    receiver: &ExpressionTable,
) -> Result<Vec<bool>, PipelineError> {
    if sender.donors != receiver.donors {
        return Err(PipelineError::NotAligned);
    }
    let keep_for = |libs: &[f64]| -> Vec<bool> {
        let med = median(libs);
        let upper = med + MAD_MULTIPLIER * mad(libs);
        let lower = LOWER_FRACTION * med;
        libs.iter().map(|&l| l <= upper && l >= lower).collect()
    };
    let ks = keep_for(&sender.library_sizes);
    let kr = keep_for(&receiver.library_sizes);
    let mask: Vec<bool> = ks.iter().zip(&kr).map(|(a, b)| *a && *b).collect();
    if mask.iter().all(|m| !m) {
        return Err(PipelineError::AllDonorsExcluded);
    }
    Ok(mask)
}

pub fn apply_mask(donors: &[String], mask: &[bool]) -> Vec<String> {
    donors
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(d, _)| d.clone())
        .collect()
}

/// Covariate columns for the kept donors, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub donors: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

impl CovariateTable {
    /// Empty covariate set over the given donors.
    pub fn empty(donors: Vec<String>) -> Self {
        let n = donors.len();
        CovariateTable {
            donors,
            columns: Vec::new(),
            values: DMatrix::zeros(n, 0),
        }
    }

    pub fn subset_donors(&self, keep: &[String]) -> Result<CovariateTable, PipelineError> {
        let index: HashMap<&str, usize> = self
            .donors
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i))
            .collect();
        let mut values = DMatrix::zeros(keep.len(), self.columns.len());
        for (r, donor) in keep.iter().enumerate() {
            let &src = index
                .get(donor.as_str())
                .ok_or(PipelineError::EmptyDonorIntersection)?;
            values.row_mut(r).copy_from(&self.values.row(src));
        }
        Ok(CovariateTable {
            donors: keep.to_vec(),
            columns: self.columns.clone(),
            values,
        })
    }
}

/// Reads `donor,<col>,...` and keeps the named columns in the given order.
pub fn read_covariates_csv(
    path: &Path,
    columns: &[String],
) -> Result<CovariateTable, PipelineError> {
    let raw = read_numeric_csv(path)?;
    let mut values = DMatrix::zeros(raw.donors.len(), columns.len());
    for (c, name) in columns.iter().enumerate() {
        let src = raw
            .columns
            .iter()
            .position(|col| col == name)
            .ok_or_else(|| PipelineError::MissingColumn {
                path: path.to_path_buf(),
                column: name.clone(),
            })?;
        values.set_column(c, &raw.values.column(src));
    }
    Ok(CovariateTable {
        donors: raw.donors,
        columns: columns.to_vec(),
        values,
    })
}
