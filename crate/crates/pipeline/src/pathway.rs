//! Donor-level pathway activity from a receiver-cell gene set: the first
//! principal component of the column-standardized pathway submatrix and the
//! per-donor mean of the standardized genes, keeping whichever correlates
//! more strongly (in absolute value) with ligand expression.

use nalgebra::{DMatrix, DVector};

use crate::error::PipelineError;
use crate::tables::ExpressionTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathwayRep {
    Pc1,
    Mean,
}

impl PathwayRep {
    pub fn name(self) -> &'static str {
        match self {
            PathwayRep::Pc1 => "pc1",
            PathwayRep::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathwayActivity {
    pub values: DVector<f64>,
    pub representation: PathwayRep,
    /// Pearson correlation of the chosen representation with the ligand.
    pub correlation: f64,
    pub genes_used: Vec<String>,
}

fn pearson(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let (ma, mb) = (a.mean(), b.mean());
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let (da, db) = (a[i] - ma, b[i] - mb);
        num += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    num / (va * vb).sqrt()
}

pub fn pathway_activity(
    receiver: &ExpressionTable,
    gene_set: &[String],
    ligand: &DVector<f64>,
) -> Result<PathwayActivity, PipelineError> {
    let present: Vec<&String> = gene_set.iter().filter(|g| receiver.has_gene(g)).collect();
    if present.is_empty() {
        return Err(PipelineError::EmptyPathway);
    }
    let n = receiver.n_donors();
    let k = present.len();

    // column-standardize the pathway submatrix
    let mut s = DMatrix::zeros(n, k);
    for (c, gene) in present.iter().enumerate() {
        let col = receiver.gene_column(gene).expect("gene presence checked");
        let mean = col.mean();
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(PipelineError::ZeroVariancePathway((*gene).clone()));
        }
        for r in 0..n {
            s[(r, c)] = (col[r] - mean) / sd;
        }
    }

    // per-donor mean of the standardized genes
    let mean_rep = DVector::from_fn(n, |r, _| s.row(r).sum() / k as f64);

    // PC1 scores, sign-fixed to correlate non-negatively with the mean
    let svd = s.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let v1 = v_t.row(0).transpose();
    let mut pc1 = &s * &v1;
    if pearson(&pc1, &mean_rep) < 0.0 {
        pc1 = -pc1;
    }

    let corr_pc1 = pearson(&pc1, ligand);
    let corr_mean = pearson(&mean_rep, ligand);
    let (values, representation, correlation) = if corr_pc1.abs() >= corr_mean.abs() {
        (pc1, PathwayRep::Pc1, corr_pc1)
    } else {
        (mean_rep, PathwayRep::Mean, corr_mean)
    };
    Ok(PathwayActivity {
        values,
        representation,
        correlation,
        genes_used: present.into_iter().cloned().collect(),
    })
}
