//! Eigen-analysis of C(q,s) and regression filtering of the market factor.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::detrend::DetrendConfig;
use crate::error::{Error, Result};
use crate::panel::ReturnPanel;
use crate::rhoq::{corr_matrix, QCorrMatrix};

const SYMMETRY_TOLERANCE: f64 = 1e-10;
/// Residual rows with RMS below this (inputs are unit-variance) are exact zeros.
const RESIDUAL_FLOOR: f64 = 1e-9;

/// Spectrum of C(q,s) with the leading eigenvector and its participation entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub q: f64,
    pub s: usize,
    /// Eigenvalues in non-increasing order.
    pub lambda: Vec<f64>,
    /// Unit eigenvector of `lambda[0]`, signed so its components sum positive.
    pub v1: Vec<f64>,
    pub entropy: f64,
}

impl EigenSummary {
    pub fn lambda1(&self) -> f64 {
        self.lambda[0]
    }

    pub fn v1_squared(&self) -> Vec<f64> {
        self.v1.iter().map(|v| v * v).collect()
    }

    /// Largest squared component and its index.
    pub fn v1_squared_max(&self) -> (usize, f64) {
        self.v1
            .iter()
            .map(|v| v * v)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
    }
}

/// Full symmetric eigendecomposition, sorted by non-increasing eigenvalue.
/// Column `k` of the returned matrix is the eigenvector of eigenvalue `k`.
pub fn symmetric_eigen(values: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = values.len();
    if n == 0 || values.iter().any(|r| r.len() != n) {
        return Err(Error::Data("matrix is not square".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i][j] - values[j][i]).abs() > SYMMETRY_TOLERANCE || !values[i][j].is_finite() {
                return Err(Error::Data(format!(
                    "matrix not symmetric at ({i}, {j}): {} vs {}",
                    values[i][j], values[j][i]
                )));
            }
        }
    }
    let m = DMatrix::from_fn(n, n, |i, j| values[i][j]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let lambda = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    Ok((lambda, vectors))
}

pub fn eigen_summary(c: &QCorrMatrix) -> Result<EigenSummary> {
    let (lambda, vectors) = symmetric_eigen(&c.values)?;
    let mut v1: Vec<f64> = vectors.column(0).iter().copied().collect();
    let norm = v1.iter().map(|v| v * v).sum::<f64>().sqrt();
    v1.iter_mut().for_each(|v| *v /= norm);
    let sum: f64 = v1.iter().sum();
    let flip = if sum.abs() > 1e-12 {
        sum < 0.0
    } else {
        v1.iter().find(|v| v.abs() > 1e-12).is_some_and(|v| *v < 0.0)
    };
    if flip {
        v1.iter_mut().for_each(|v| *v = -*v);
    }
    let squared: Vec<f64> = v1.iter().map(|v| v * v).collect();
    let entropy = entropy(&squared)?;
    Ok(EigenSummary {
        q: c.q,
        s: c.s,
        lambda,
        v1,
        entropy,
    })
}

/// Shannon entropy `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Data(format!("negative or undefined weight {v} in entropy")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!("weights sum to {total}, not 1")));
    }
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    Ok(h.max(0.0))
}

/// Residuals of each standardised series after regression on the factor
/// `Z₁(k) = Σ_m v1_m c_m(k)`.
#[derive(Debug, Clone)]
pub struct ResidualPanel {
    pub residuals: ReturnPanel,
    pub factor: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn filter_market_factor(panel: &ReturnPanel, v1: &[f64]) -> Result<ResidualPanel> {
    let n = panel.n_assets();
    if v1.len() != n {
        return Err(Error::Data(format!(
            "eigenvector has {} components for {n} assets",
            v1.len()
        )));
    }
    let t = panel.len();
    let mut standardized = Vec::with_capacity(n);
    for (asset, row) in panel.assets().iter().zip(panel.returns()) {
        let mu = mean(row);
        let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / t as f64;
        if !(var > 0.0) {
            return Err(Error::Degenerate(format!(
                "asset {asset} is constant in the window"
            )));
        }
        let sd = var.sqrt();
        standardized.push(row.iter().map(|x| (x - mu) / sd).collect::<Vec<f64>>());
    }
    let mut factor = vec![0.0; t];
    for (w, row) in v1.iter().zip(&standardized) {
        for (z, c) in factor.iter_mut().zip(row) {
            *z += w * c;
        }
    }
    let zm = mean(&factor);
    let zvar: f64 = factor.iter().map(|z| (z - zm) * (z - zm)).sum();
    if !(zvar > 1e-24 * t as f64) {
        return Err(Error::Degenerate("market factor has zero variance".into()));
    }
    let mut intercepts = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for row in &standardized {
        let cm = mean(row);
        let cov: f64 = row.iter().zip(&factor).map(|(c, z)| (c - cm) * (z - zm)).sum();
        let b = cov / zvar;
        let a = cm - b * zm;
        let mut eps: Vec<f64> = row.iter().zip(&factor).map(|(c, z)| c - a - b * z).collect();
        let rms = (eps.iter().map(|e| e * e).sum::<f64>() / t as f64).sqrt();
        if rms < RESIDUAL_FLOOR {
            eps.iter_mut().for_each(|e| *e = 0.0);
        }
        intercepts.push(a);
        slopes.push(b);
        residuals.push(eps);
    }
    let mut residuals =
        ReturnPanel::new(panel.timestamps().to_vec(), panel.assets().to_vec(), residuals)?;
    if let Some(sectors) = panel.sectors() {
        residuals = residuals.with_sectors(sectors.to_vec())?;
    }
    Ok(ResidualPanel {
        residuals,
        factor,
        intercepts,
        slopes,
    })
}

/// The filtered matrix C′(q,s) built from the residual series.
pub fn residual_corr(resid: &ResidualPanel, q: f64, s: usize, cfg: &DetrendConfig) -> Result<QCorrMatrix> {
    corr_matrix(&resid.residuals, q, s, cfg)
}
