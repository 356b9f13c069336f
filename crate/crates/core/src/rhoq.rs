//! The q-dependent detrended cross-correlation coefficient ρ_q(s), the matrix
//! C(q,s) over a panel, and the distance D_ij = √(2(1 − C_ij)).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detrend::{
    check_q, moment, profile, DetrendBasis, DetrendConfig, DetrendedProfile, FluctuationSet,
    SegmentCovariances,
};
use crate::error::{Error, Result};
use crate::panel::ReturnPanel;

/// |ρ| may exceed 1 by at most this much through rounding before it is a defect.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum RhoIssue {
    Degenerate,
    OutOfRange(f64),
}

/// `S_XY / √(S_XX S_YY)` from the signed q-order moments. At q = 2 this is the
/// plain detrended cross-correlation coefficient.
fn coefficient(sxy: f64, sxx: f64, syy: f64) -> std::result::Result<f64, RhoIssue> {
    let denom = (sxx * syy).sqrt();
    if !(denom > 0.0) {
        return Err(RhoIssue::Degenerate);
    }
    let rho = sxy / denom;
    if rho.abs() > 1.0 + CLAMP_TOLERANCE || !rho.is_finite() {
        return Err(RhoIssue::OutOfRange(rho));
    }
    Ok(rho.clamp(-1.0, 1.0))
}

/// ρ_q(s) from a pair's fluctuation set.
pub fn rho_q(fs: &FluctuationSet, q: f64, s: usize) -> Result<f64> {
    let qi = fs
        .q_index(q)
        .ok_or_else(|| Error::Config(format!("q = {q} not in fluctuation set")))?;
    let si = fs
        .scale_index(s)
        .ok_or_else(|| Error::Config(format!("scale {s} not in fluctuation set")))?;
    coefficient(fs.sxy[qi][si], fs.sxx[qi][si], fs.syy[qi][si]).map_err(|e| match e {
        RhoIssue::Degenerate => Error::DegeneratePair("X".into(), "Y".into()),
        RhoIssue::OutOfRange(r) => Error::Defect(format!("rho_q = {r} outside [-1, 1]")),
    })
}

/// N×N matrix of ρ_q(s) with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QCorrMatrix {
    pub q: f64,
    pub s: usize,
    pub assets: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// N×N distance matrix with zero diagonal and entries in [0, 2].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QDistMatrix {
    pub q: f64,
    pub s: usize,
    pub assets: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl QCorrMatrix {
    pub fn n(&self) -> usize {
        self.assets.len()
    }

    pub fn to_distance(&self) -> QDistMatrix {
        let n = self.n();
        let mut values = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i][j] = (2.0 * (1.0 - self.values[i][j])).max(0.0).sqrt();
                }
            }
        }
        QDistMatrix {
            q: self.q,
            s: self.s,
            assets: self.assets.clone(),
            values,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_square(writer, &self.assets, &self.values)
    }
}

impl QDistMatrix {
    pub fn n(&self) -> usize {
        self.assets.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_square(writer, &self.assets, &self.values)
    }
}

pub fn to_distance(c: &QCorrMatrix) -> QDistMatrix {
    c.to_distance()
}

fn write_square<W: Write>(writer: W, assets: &[String], values: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let werr = |e: csv::Error| Error::Data(format!("writing matrix: {e}"));
    let header: Vec<&str> = std::iter::once("")
        .chain(assets.iter().map(String::as_str))
        .collect();
    w.write_record(&header).map_err(werr)?;
    for (a, row) in assets.iter().zip(values) {
        let rec: Vec<String> = std::iter::once(a.clone())
            .chain(row.iter().map(f64::to_string))
            .collect();
        w.write_record(&rec).map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io("writing matrix", e))
}

/// Per-asset detrended profiles at one scale, shared by every pair and every q.
#[derive(Debug, Clone)]
pub struct DetrendedPanel {
    scale: usize,
    assets: Vec<String>,
    profiles: Vec<DetrendedProfile>,
    variances: Vec<SegmentCovariances>,
}

impl DetrendedPanel {
    pub fn new(panel: &ReturnPanel, s: usize, cfg: &DetrendConfig) -> Result<Self> {
        let basis = DetrendBasis::new(s, cfg.poly_order)?;
        if panel.len() / s < 2 {
            return Err(Error::Config(format!(
                "window of length {} admits fewer than 4 segments at scale {s}",
                panel.len()
            )));
        }
        let profiles = panel
            .returns()
            .par_iter()
            .map(|row| DetrendedProfile::new(&profile(row, cfg.subtract_mean)?, &basis))
            .collect::<Result<Vec<_>>>()?;
        let variances = profiles.iter().map(DetrendedProfile::variances).collect();
        Ok(Self {
            scale: s,
            assets: panel.assets().to_vec(),
            profiles,
            variances,
        })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Indices of assets whose detrended profile vanishes in every segment.
    pub fn degenerate_assets(&self) -> Vec<usize> {
        self.variances
            .iter()
            .enumerate()
            .filter(|(_, v)| v.values.iter().all(|&x| x == 0.0))
            .map(|(i, _)| i)
            .collect()
    }

    /// C(q, s) for each q; every pair's segment covariances are computed once.
    pub fn corr_matrices(&self, q_values: &[f64]) -> Result<Vec<QCorrMatrix>> {
        for &q in q_values {
            check_q(q)?;
        }
        let n = self.assets.len();
        if n < 2 {
            return Err(Error::Data(format!("correlation matrix needs N >= 2, got {n}")));
        }
        let degenerate = self.degenerate_assets();
        if !degenerate.is_empty() {
            return Err(Error::DegenerateAssets {
                scale: self.scale,
                assets: degenerate.iter().map(|&i| self.assets[i].clone()).collect(),
            });
        }
        let uni: Vec<Vec<f64>> = q_values
            .iter()
            .map(|&q| self.variances.iter().map(|v| moment(&v.values, q)).collect())
            .collect();
        // rows[i][k][qi] = rho between i and i+1+k
        let rows: Vec<Vec<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| {
                        let cov = self.profiles[i].covariances(&self.profiles[j]);
                        q_values
                            .iter()
                            .enumerate()
                            .map(|(qi, &q)| {
                                let sxy = moment(&cov.values, q);
                                coefficient(sxy, uni[qi][i], uni[qi][j]).map_err(|e| match e {
                                    RhoIssue::Degenerate => Error::DegeneratePair(
                                        self.assets[i].clone(),
                                        self.assets[j].clone(),
                                    ),
                                    RhoIssue::OutOfRange(r) => Error::Defect(format!(
                                        "rho_q = {r} outside [-1, 1] for ({}, {}) at q = {q}",
                                        self.assets[i], self.assets[j]
                                    )),
                                })
                            })
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(q_values
            .iter()
            .enumerate()
            .map(|(qi, &q)| {
                let mut values = vec![vec![1.0; n]; n];
                for i in 0..n {
                    for (k, r) in rows[i].iter().enumerate() {
                        let j = i + 1 + k;
                        values[i][j] = r[qi];
                        values[j][i] = r[qi];
                    }
                }
                QCorrMatrix {
                    q,
                    s: self.scale,
                    assets: self.assets.clone(),
                    values,
                }
            })
            .collect())
    }
}

/// C(q, s) for a whole panel.
pub fn corr_matrix(panel: &ReturnPanel, q: f64, s: usize, cfg: &DetrendConfig) -> Result<QCorrMatrix> {
    let mut v = DetrendedPanel::new(panel, s, cfg)?.corr_matrices(&[q])?;
    Ok(v.remove(0))
}
