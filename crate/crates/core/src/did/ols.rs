//! Least squares with iid, HC1 and cluster-robust (CR1) covariances.

use nalgebra::{DMatrix, DVector};

use super::{DidError, SeKind};

// relative tolerance for declaring a column linearly dependent
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    x: DMatrix<f64>,
    xtx_inv: DMatrix<f64>,
}

/// Columns that lie (numerically) in the span of the columns before them.
fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let rest = v.norm();
        if norm == 0.0 || rest <= RANK_TOL * norm {
            dependent.push(j);
        } else {
            basis.push(v / rest);
        }
    }
    dependent
}

/// Fits `y = X b + e` by QR.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, DidError> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(DidError::InvalidDesign(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if k == 0 || n < k {
        return Err(DidError::RankDeficient {
            columns: (0..k).collect(),
        });
    }
    let dependent = dependent_columns(x);
    if !dependent.is_empty() {
        return Err(DidError::RankDeficient { columns: dependent });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(DidError::RankDeficient { columns: vec![] })?;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or(DidError::RankDeficient { columns: vec![] })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &coefficients;
    Ok(OlsFit {
        coefficients,
        residuals,
        x: x.clone(),
        xtx_inv,
    })
}

impl OlsFit {
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }

    pub fn ssr(&self) -> f64 {
        self.residuals.norm_squared()
    }

    /// `(X'X)^-1`.
    pub fn bread(&self) -> &DMatrix<f64> {
        &self.xtx_inv
    }

    /// Coefficient covariance. `clusters[i]` is the cluster id of row `i`
    /// and is required for [`SeKind::ClusterByUnit`].
    pub fn covariance(&self, kind: SeKind, clusters: Option<&[usize]>) -> Result<DMatrix<f64>, DidError> {
        let (n, k) = (self.n_obs() as f64, self.n_params() as f64);
        let dof = (n - k).max(1.0);
        match kind {
            SeKind::Iid => Ok(&self.xtx_inv * (self.ssr() / dof)),
            SeKind::HcRobust => {
                let mut meat = DMatrix::zeros(self.x.ncols(), self.x.ncols());
                for i in 0..self.x.nrows() {
                    let xi = self.x.row(i).transpose();
                    meat += &xi * xi.transpose() * self.residuals[i].powi(2);
                }
                Ok(&self.xtx_inv * meat * &self.xtx_inv * (n / dof))
            }
            SeKind::ClusterByUnit => {
                let clusters = clusters.ok_or(DidError::MissingClusters)?;
                if clusters.len() != self.x.nrows() {
                    return Err(DidError::MissingClusters);
                }
                let g = clusters.iter().max().map_or(0, |m| m + 1);
                let mut scores = DMatrix::<f64>::zeros(g, self.x.ncols());
                for (i, &c) in clusters.iter().enumerate() {
                    let contrib = self.x.row(i) * self.residuals[i];
                    let mut row = scores.row_mut(c);
                    row += contrib;
                }
                let meat = scores.transpose() * &scores;
                let n_clusters = clusters
                    .iter()
                    .collect::<std::collections::BTreeSet<_>>()
                    .len() as f64;
                let scale = if n_clusters > 1.0 {
                    n_clusters / (n_clusters - 1.0) * (n - 1.0) / dof
                } else {
                    1.0
                };
                Ok(&self.xtx_inv * meat * &self.xtx_inv * scale)
            }
        }
    }

    pub fn standard_errors(&self, kind: SeKind, clusters: Option<&[usize]>) -> Result<DVector<f64>, DidError> {
        let cov = self.covariance(kind, clusters)?;
        Ok(cov.diagonal().map(|v| v.max(0.0).sqrt()))
    }
}
