//! Multifractal detrended (cross-)fluctuation analysis.
//!
//! Both series are integrated into profiles, split into `M_s = ⌊T/s⌋` segments
//! counted from the start and another `M_s` counted from the end, and an
//! order-`m` polynomial is removed from each profile segment independently.
//! The segment-wise detrended covariances `f²_XY(s, ν)` are then averaged as
//! signed `q/2` powers to give the fluctuation functions `F^q(s)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residuals below this fraction of the largest profile value count as zero.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

pub const MAX_POLY_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetrendConfig {
    pub poly_order: usize,
    pub q_values: Vec<f64>,
    pub scales: Vec<usize>,
    /// Subtract the series mean before integrating into a profile.
    pub subtract_mean: bool,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self {
            poly_order: 2,
            q_values: vec![1.0, 2.0, 4.0],
            scales: vec![10],
            subtract_mean: true,
        }
    }
}

impl DetrendConfig {
    pub fn new(poly_order: usize, q_values: Vec<f64>, scales: Vec<usize>) -> Self {
        Self {
            poly_order,
            q_values,
            scales,
            subtract_mean: true,
        }
    }

    /// Checks order, q values and scales; scales are also checked against
    /// `series_len` when given.
    pub fn validate(&self, series_len: Option<usize>) -> Result<()> {
        check_order(self.poly_order)?;
        if self.q_values.is_empty() {
            return Err(Error::Config("no q values".into()));
        }
        for &q in &self.q_values {
            check_q(q)?;
        }
        if self.scales.is_empty() {
            return Err(Error::Config("no scales".into()));
        }
        if self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "scales must be strictly increasing: {:?}",
                self.scales
            )));
        }
        for &s in &self.scales {
            check_scale(s, self.poly_order)?;
            if let Some(len) = series_len {
                check_segments(len, s)?;
            }
        }
        Ok(())
    }
}

fn check_order(m: usize) -> Result<()> {
    if !(1..=MAX_POLY_ORDER).contains(&m) {
        return Err(Error::Config(format!(
            "polynomial order {m} outside 1..={MAX_POLY_ORDER}"
        )));
    }
    Ok(())
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::Config(format!("q = {q} unsupported (need q > 0)")));
    }
    Ok(())
}

fn check_scale(s: usize, m: usize) -> Result<()> {
    if s < m + 2 {
        return Err(Error::Config(format!(
            "scale {s} too short for polynomial order {m} (need s >= {})",
            m + 2
        )));
    }
    Ok(())
}

fn check_segments(len: usize, s: usize) -> Result<()> {
    if len / s < 2 {
        return Err(Error::Config(format!(
            "scale {s} leaves fewer than 4 segments in a series of length {len}"
        )));
    }
    Ok(())
}

/// Log-spaced integer scales from `max(10, m + 2)` to `⌊len / 5⌋`, about 20 points.
pub fn default_scales(series_len: usize, poly_order: usize) -> Vec<usize> {
    let lo = 10.max(poly_order + 2);
    let hi = series_len / 5;
    if hi <= lo {
        return vec![lo];
    }
    let points = 20;
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut scales: Vec<usize> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .collect();
    scales.dedup();
    scales
}

/// Cumulative sum of `x`, optionally of its deviations from the mean.
pub fn profile(x: &[f64], subtract_mean: bool) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Data("cannot build the profile of an empty series".into()));
    }
    if subtract_mean && x.iter().all(|&v| v == x[0]) {
        return Ok(vec![0.0; x.len()]);
    }
    let mean = if subtract_mean {
        x.iter().sum::<f64>() / x.len() as f64
    } else {
        0.0
    };
    let mut acc = 0.0;
    Ok(x.iter()
        .map(|v| {
            acc += v - mean;
            acc
        })
        .collect())
}

/// Start offsets of the `2·⌊len/s⌋` segments: first from the beginning, then
/// from the end (listed left to right).
pub fn segment_starts(len: usize, s: usize) -> Vec<usize> {
    let m = len / s;
    let tail = len - m * s;
    (0..m).map(|v| v * s).chain((0..m).map(|j| tail + j * s)).collect()
}

/// Orthonormal polynomial basis of degree `0..=m` over a segment of length `s`.
///
/// Abscissae are recentred to the segment midpoint and scaled to [-1, 1]
/// before Gram-Schmidt, so the least-squares residual is a pair of projections.
#[derive(Debug, Clone)]
pub struct DetrendBasis {
    scale: usize,
    rows: Vec<Vec<f64>>,
}

impl DetrendBasis {
    pub fn new(scale: usize, order: usize) -> Result<Self> {
        check_order(order)?;
        check_scale(scale, order)?;
        let half = (scale as f64 - 1.0) / 2.0;
        let t: Vec<f64> = (0..scale).map(|k| (k as f64 - half) / half).collect();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
        for deg in 0..=order {
            let mut v: Vec<f64> = t.iter().map(|x| x.powi(deg as i32)).collect();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for b in &rows {
                    let c = dot(b, &v);
                    v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
                }
            }
            let norm = dot(&v, &v).sqrt();
            assert!(norm > 1e-8, "polynomial basis lost rank at degree {deg}");
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
        Ok(Self { scale, rows })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Writes `segment - P(segment)` into `out`.
    pub fn residual_into(&self, segment: &[f64], out: &mut [f64]) {
        out.copy_from_slice(segment);
        for b in &self.rows {
            let c = dot(b, out);
            out.iter_mut().zip(b).for_each(|(o, bi)| *o -= c * bi);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Detrended residuals of one profile, all `2·M_s` segments concatenated.
#[derive(Debug, Clone)]
pub struct DetrendedProfile {
    scale: usize,
    residuals: Vec<f64>,
}

impl DetrendedProfile {
    pub fn new(profile: &[f64], basis: &DetrendBasis) -> Result<Self> {
        let s = basis.scale();
        if s > profile.len() {
            return Err(Error::Config(format!(
                "scale {s} exceeds profile length {}",
                profile.len()
            )));
        }
        let starts = segment_starts(profile.len(), s);
        let mut residuals = vec![0.0; starts.len() * s];
        for (chunk, &st) in residuals.chunks_exact_mut(s).zip(&starts) {
            basis.residual_into(&profile[st..st + s], chunk);
        }
        // a profile that is polynomial up to rounding has nothing left to correlate
        let peak = profile.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residuals.iter().all(|r| r.abs() <= RESIDUAL_FLOOR * peak) {
            residuals.iter_mut().for_each(|r| *r = 0.0);
        }
        Ok(Self { scale: s, residuals })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn n_segments(&self) -> usize {
        self.residuals.len() / self.scale
    }

    /// Segment-wise `(1/s) Σ_k x(k) y(k)` against another detrended profile.
    pub fn covariances(&self, other: &DetrendedProfile) -> SegmentCovariances {
        debug_assert_eq!(self.scale, other.scale);
        debug_assert_eq!(self.residuals.len(), other.residuals.len());
        let s = self.scale;
        let values = self
            .residuals
            .chunks_exact(s)
            .zip(other.residuals.chunks_exact(s))
            .map(|(x, y)| dot(x, y) / s as f64)
            .collect();
        SegmentCovariances { scale: s, values }
    }

    pub fn variances(&self) -> SegmentCovariances {
        self.covariances(self)
    }
}

/// `f²(s, ν)` for the `2·M_s` segments at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCovariances {
    pub scale: usize,
    pub values: Vec<f64>,
}

pub fn segment_covariances(
    xp: &[f64],
    yp: &[f64],
    s: usize,
    m: usize,
) -> Result<SegmentCovariances> {
    if xp.len() != yp.len() {
        return Err(Error::Data(format!(
            "profiles differ in length ({} vs {})",
            xp.len(),
            yp.len()
        )));
    }
    let basis = DetrendBasis::new(s, m)?;
    let x = DetrendedProfile::new(xp, &basis)?;
    let y = DetrendedProfile::new(yp, &basis)?;
    Ok(x.covariances(&y))
}

/// Signed q-order moment `S = (1/n) Σ sign(f)|f|^{q/2}` of segment (co)variances.
pub fn moment(values: &[f64], q: f64) -> f64 {
    let half = q / 2.0;
    let mut acc = 0.0;
    for &v in values {
        let mag = if half == 1.0 { v.abs() } else { v.abs().powf(half) };
        acc += if v < 0.0 { -mag } else { mag };
    }
    acc / values.len() as f64
}

/// Fluctuation function `sign(S)|S|^{1/q}` of the signed moment [`moment`].
pub fn fluctuation(values: &[f64], q: f64) -> f64 {
    root(moment(values, q), q)
}

fn root(m: f64, q: f64) -> f64 {
    let r = if q == 2.0 { m.abs().sqrt() } else { m.abs().powf(1.0 / q) };
    if m < 0.0 {
        -r
    } else {
        r
    }
}

/// Fluctuation functions of a pair over a `(q, s)` grid, indexed `[q][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSet {
    pub q_values: Vec<f64>,
    pub scales: Vec<usize>,
    pub fxy: Vec<Vec<f64>>,
    pub fxx: Vec<Vec<f64>>,
    pub fyy: Vec<Vec<f64>>,
    /// Signed moments `S` behind each `F`, same indexing.
    pub sxy: Vec<Vec<f64>>,
    pub sxx: Vec<Vec<f64>>,
    pub syy: Vec<Vec<f64>>,
}

impl FluctuationSet {
    fn empty(q_values: &[f64]) -> Self {
        let n = q_values.len();
        Self {
            q_values: q_values.to_vec(),
            scales: Vec::new(),
            fxy: vec![Vec::new(); n],
            fxx: vec![Vec::new(); n],
            fyy: vec![Vec::new(); n],
            sxy: vec![Vec::new(); n],
            sxx: vec![Vec::new(); n],
            syy: vec![Vec::new(); n],
        }
    }

    fn push_scale(
        &mut self,
        cov_xy: &SegmentCovariances,
        cov_xx: &SegmentCovariances,
        cov_yy: &SegmentCovariances,
    ) {
        self.scales.push(cov_xy.scale);
        for (qi, &q) in self.q_values.iter().enumerate() {
            let (mxy, mxx, myy) = (
                moment(&cov_xy.values, q),
                moment(&cov_xx.values, q),
                moment(&cov_yy.values, q),
            );
            self.fxy[qi].push(root(mxy, q));
            self.fxx[qi].push(root(mxx, q));
            self.fyy[qi].push(root(myy, q));
            self.sxy[qi].push(mxy);
            self.sxx[qi].push(mxx);
            self.syy[qi].push(myy);
        }
    }

    pub fn q_index(&self, q: f64) -> Option<usize> {
        self.q_values.iter().position(|&v| v == q)
    }

    pub fn scale_index(&self, s: usize) -> Option<usize> {
        self.scales.iter().position(|&v| v == s)
    }

    /// A univariate fluctuation vanished: the series is flat after detrending.
    pub fn is_degenerate(&self, qi: usize, si: usize) -> bool {
        self.fxx[qi][si] == 0.0 || self.fyy[qi][si] == 0.0
    }

    /// Rows `pair,q,s,Fxy,Fxx,Fyy`.
    pub fn write_csv<W: Write>(&self, pair: &str, writer: W, header: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let werr = |e: csv::Error| Error::Data(format!("writing fluctuation table: {e}"));
        if header {
            w.write_record(["pair", "q", "s", "Fxy", "Fxx", "Fyy"])
                .map_err(werr)?;
        }
        for (qi, q) in self.q_values.iter().enumerate() {
            for (si, s) in self.scales.iter().enumerate() {
                w.write_record([
                    pair.to_string(),
                    q.to_string(),
                    s.to_string(),
                    self.fxy[qi][si].to_string(),
                    self.fxx[qi][si].to_string(),
                    self.fyy[qi][si].to_string(),
                ])
                .map_err(werr)?;
            }
        }
        w.flush().map_err(|e| Error::io("writing fluctuation table", e))
    }
}

/// Fluctuation functions at a single scale.
pub fn fluctuation_functions(
    cov_xy: &SegmentCovariances,
    cov_xx: &SegmentCovariances,
    cov_yy: &SegmentCovariances,
    q_values: &[f64],
) -> Result<FluctuationSet> {
    for &q in q_values {
        check_q(q)?;
    }
    let n = cov_xy.values.len();
    if n == 0 || cov_xx.values.len() != n || cov_yy.values.len() != n {
        return Err(Error::Data(format!(
            "covariance sequences differ in length ({}, {}, {})",
            n,
            cov_xx.values.len(),
            cov_yy.values.len()
        )));
    }
    if cov_xx.values.iter().chain(&cov_yy.values).any(|&v| v < 0.0) {
        return Err(Error::Data("negative segment variance".into()));
    }
    let mut fs = FluctuationSet::empty(q_values);
    fs.push_scale(cov_xy, cov_xx, cov_yy);
    Ok(fs)
}

/// Full pipeline for a pair of series over every configured `(q, s)`.
pub fn pair_pipeline(x: &[f64], y: &[f64], cfg: &DetrendConfig) -> Result<FluctuationSet> {
    if x.len() != y.len() {
        return Err(Error::Data(format!(
            "series differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    cfg.validate(Some(x.len()))?;
    let xp = profile(x, cfg.subtract_mean)?;
    let yp = profile(y, cfg.subtract_mean)?;
    let mut fs = FluctuationSet::empty(&cfg.q_values);
    for &s in &cfg.scales {
        let basis = DetrendBasis::new(s, cfg.poly_order)?;
        let dx = DetrendedProfile::new(&xp, &basis)?;
        let dy = DetrendedProfile::new(&yp, &basis)?;
        fs.push_scale(&dx.covariances(&dy), &dx.variances(), &dy.variances());
    }
    Ok(fs)
}

/// Univariate fluctuation functions of one series.
pub fn series_pipeline(x: &[f64], cfg: &DetrendConfig) -> Result<FluctuationSet> {
    cfg.validate(Some(x.len()))?;
    let xp = profile(x, cfg.subtract_mean)?;
    let mut fs = FluctuationSet::empty(&cfg.q_values);
    for &s in &cfg.scales {
        let basis = DetrendBasis::new(s, cfg.poly_order)?;
        let v = DetrendedProfile::new(&xp, &basis)?.variances();
        fs.push_scale(&v, &v, &v);
    }
    Ok(fs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ln F` on `ln s`. `None` if any `F <= 0`.
pub fn log_log_fit(scales: &[usize], values: &[f64]) -> Option<LogLogFit> {
    if scales.len() < 2 || values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return None;
    }
    let n = scales.len() as f64;
    let lx: Vec<f64> = scales.iter().map(|&s| (s as f64).ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in lx.iter().zip(&ly) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LogLogFit { slope, r2 })
}

/// Generalised Hurst exponents `h_X(q)`, `h_Y(q)` and the bivariate `λ_XY(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponents {
    pub q_values: Vec<f64>,
    pub fit_range: (usize, usize),
    pub h_x: Vec<Option<LogLogFit>>,
    pub h_y: Vec<Option<LogLogFit>>,
    /// `None` where some `F_XY` in range is non-positive: no scaling to report.
    pub lambda_xy: Vec<Option<LogLogFit>>,
}

pub fn estimate_exponents(fs: &FluctuationSet, fit_range: (usize, usize)) -> Result<ScalingExponents> {
    let (lo, hi) = fit_range;
    let idx: Vec<usize> = (0..fs.scales.len())
        .filter(|&i| fs.scales[i] >= lo && fs.scales[i] <= hi)
        .collect();
    if idx.len() < 3 {
        return Err(Error::Config(format!(
            "fit range {lo}..={hi} holds {} scales (need at least 3)",
            idx.len()
        )));
    }
    let scales: Vec<usize> = idx.iter().map(|&i| fs.scales[i]).collect();
    let fit = |rows: &[Vec<f64>]| -> Vec<Option<LogLogFit>> {
        rows.iter()
            .map(|row| {
                let v: Vec<f64> = idx.iter().map(|&i| row[i]).collect();
                log_log_fit(&scales, &v)
            })
            .collect()
    };
    Ok(ScalingExponents {
        q_values: fs.q_values.clone(),
        fit_range,
        h_x: fit(&fs.fxx),
        h_y: fit(&fs.fyy),
        lambda_xy: fit(&fs.fxy),
    })
}
