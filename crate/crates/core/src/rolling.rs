//! Rolling-window driver and statistics of the resulting measure series.
//!
//! Each window runs C(q,s) → eigen summary → D(q,s) → qMST → tree metrics for
//! every configured `(q, s)`, then the graph distances between the trees of
//! each configured q-pair, and optionally the same chain on the residuals of
//! the market-factor regression.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detrend::DetrendConfig;
use crate::error::{Error, Result};
use crate::graph::{build_mst, deltacon0, resistance_distance, tree_metrics, QMst};
use crate::panel::ReturnPanel;
use crate::rhoq::DetrendedPanel;
use crate::spectra::{eigen_summary, filter_market_factor, EigenSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    pub window: usize,
    pub step: usize,
    pub q_values: Vec<f64>,
    pub scales: Vec<usize>,
    pub poly_order: usize,
    pub subtract_mean: bool,
    pub filter: bool,
    pub q_pairs: Vec<(f64, f64)>,
    pub tracked: Vec<String>,
    /// Keep each window's trees in the result (for export).
    pub keep_trees: bool,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            window: 10_080,
            step: 1_440,
            q_values: vec![1.0, 4.0],
            scales: vec![10],
            poly_order: 2,
            subtract_mean: true,
            filter: false,
            q_pairs: vec![(1.0, 4.0)],
            tracked: Vec::new(),
            keep_trees: false,
        }
    }
}

impl RollingConfig {
    pub fn detrend_config(&self) -> DetrendConfig {
        DetrendConfig {
            poly_order: self.poly_order,
            q_values: self.q_values.clone(),
            scales: self.scales.clone(),
            subtract_mean: self.subtract_mean,
        }
    }

    /// Checks the configuration on its own and, when given, against the
    /// number of return samples.
    pub fn validate(&self, panel_len: Option<usize>) -> Result<()> {
        self.detrend_config().validate(Some(self.window))?;
        if self.step == 0 {
            return Err(Error::Config("window step must be at least 1".into()));
        }
        let smax = *self.scales.iter().max().unwrap_or(&0);
        if self.window < 4 * smax {
            return Err(Error::Config(format!(
                "window {} shorter than 4 x largest scale {smax}",
                self.window
            )));
        }
        for &(a, b) in &self.q_pairs {
            for q in [a, b] {
                if !self.q_values.contains(&q) {
                    return Err(Error::Config(format!("q-pair uses q = {q}, which is not configured")));
                }
            }
        }
        if let Some(len) = panel_len {
            if self.window > len {
                return Err(Error::Config(format!(
                    "window {} longer than the {len} available returns",
                    self.window
                )));
            }
        }
        Ok(())
    }
}

/// `K = ⌊(len − W)/Δ⌋ + 1`, or 0 when the series is shorter than a window.
pub fn window_count(len: usize, window: usize, step: usize) -> usize {
    if window == 0 || step == 0 || len < window {
        0
    } else {
        (len - window) / step + 1
    }
}

/// Start offsets of the windows; window `k` covers `[start_k, start_k + W)`.
pub fn window_starts(len: usize, window: usize, step: usize) -> Vec<usize> {
    (0..window_count(len, window, step)).map(|k| k * step).collect()
}

/// Diagnostics of C(q,s) and its tree in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub q: f64,
    pub s: usize,
    pub n_assets: usize,
    pub lambda1: f64,
    pub v1_sq_max: f64,
    pub v1_sq_max_asset: String,
    pub entropy: f64,
    pub k_max: usize,
    pub k_argmax: String,
    pub avg_path_len: f64,
    /// v1² of each tracked asset; `None` when it is not in the window.
    pub tracked: Vec<Option<f64>>,
    pub eigen: EigenSummary,
    #[serde(skip)]
    pub tree: Option<QMst>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphDistances {
    pub q_a: f64,
    pub q_b: f64,
    pub s: usize,
    pub deltacon0: f64,
    pub resistance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedAssets {
    pub q: f64,
    pub s: usize,
    pub assets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    /// 1-based window number.
    pub index: usize,
    pub start: usize,
    pub end_timestamp: i64,
    /// Assets left out of this window because they are flat at some scale.
    pub dropped: Vec<String>,
    /// One entry per `(s, q)`, scales outermost.
    pub diagnostics: Vec<Diagnostics>,
    /// One entry per `(s, q-pair)`, scales outermost.
    pub distances: Vec<GraphDistances>,
    pub filtered: Vec<Option<Diagnostics>>,
    pub filtered_distances: Vec<Option<GraphDistances>>,
    pub filtered_dropped: Vec<DroppedAssets>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSeries {
    pub config: RollingConfig,
    pub windows: Vec<WindowResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Lambda1,
    V1SqMax,
    Entropy,
    KMax,
    AvgPathLen,
}

impl Measure {
    pub fn of(self, d: &Diagnostics) -> f64 {
        match self {
            Measure::Lambda1 => d.lambda1,
            Measure::V1SqMax => d.v1_sq_max,
            Measure::Entropy => d.entropy,
            Measure::KMax => d.k_max as f64,
            Measure::AvgPathLen => d.avg_path_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    DeltaCon0,
    Resistance,
}

/// Selects one measure series from a [`WindowSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeriesKey {
    Diagnostic { measure: Measure, q: f64, s: usize, filtered: bool },
    Distance { kind: DistanceKind, q_a: f64, q_b: f64, s: usize, filtered: bool },
}

impl WindowSeries {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    fn diag_index(&self, q: f64, s: usize) -> Option<usize> {
        let qi = self.config.q_values.iter().position(|&v| v == q)?;
        let si = self.config.scales.iter().position(|&v| v == s)?;
        Some(si * self.config.q_values.len() + qi)
    }

    fn pair_index(&self, q_a: f64, q_b: f64, s: usize) -> Option<usize> {
        let pi = self.config.q_pairs.iter().position(|&p| p == (q_a, q_b))?;
        let si = self.config.scales.iter().position(|&v| v == s)?;
        Some(si * self.config.q_pairs.len() + pi)
    }

    /// Per-window diagnostics for `(q, s)`; `None` if not configured or, for
    /// the filtered path, unavailable in some window.
    pub fn diagnostics(&self, q: f64, s: usize, filtered: bool) -> Option<Vec<&Diagnostics>> {
        let i = self.diag_index(q, s)?;
        self.windows
            .iter()
            .map(|w| {
                if filtered {
                    w.filtered.get(i)?.as_ref()
                } else {
                    w.diagnostics.get(i)
                }
            })
            .collect()
    }

    pub fn distances(&self, q_a: f64, q_b: f64, s: usize, filtered: bool) -> Option<Vec<GraphDistances>> {
        let i = self.pair_index(q_a, q_b, s)?;
        self.windows
            .iter()
            .map(|w| {
                if filtered {
                    *w.filtered_distances.get(i)?
                } else {
                    w.distances.get(i).copied()
                }
            })
            .collect()
    }

    pub fn series(&self, key: SeriesKey) -> Option<Vec<f64>> {
        match key {
            SeriesKey::Diagnostic { measure, q, s, filtered } => Some(
                self.diagnostics(q, s, filtered)?
                    .into_iter()
                    .map(|d| measure.of(d))
                    .collect(),
            ),
            SeriesKey::Distance { kind, q_a, q_b, s, filtered } => Some(
                self.distances(q_a, q_b, s, filtered)?
                    .into_iter()
                    .map(|d| match kind {
                        DistanceKind::DeltaCon0 => d.deltacon0,
                        DistanceKind::Resistance => d.resistance,
                    })
                    .collect(),
            ),
        }
    }

    /// Table `window,window_end,n_assets,lambda1,...` for one `(q, s)`.
    pub fn write_measures_csv<W: Write>(&self, q: f64, s: usize, filtered: bool, writer: W) -> Result<()> {
        let i = self
            .diag_index(q, s)
            .ok_or_else(|| Error::Config(format!("(q = {q}, s = {s}) not configured")))?;
        let mut w = csv::Writer::from_writer(writer);
        let werr = |e: csv::Error| Error::Data(format!("writing measures: {e}"));
        let mut header: Vec<String> = [
            "window", "window_end", "n_assets", "lambda1", "v1sq_max", "v1sq_max_asset", "entropy",
            "kmax", "kmax_asset", "avgL",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.config.tracked.iter().map(|t| format!("v1sq_{t}")));
        w.write_record(&header).map_err(werr)?;
        for win in &self.windows {
            let d = if filtered {
                win.filtered.get(i).and_then(Option::as_ref)
            } else {
                win.diagnostics.get(i)
            };
            let mut rec = vec![win.index.to_string(), win.end_timestamp.to_string()];
            match d {
                Some(d) => {
                    rec.extend([
                        d.n_assets.to_string(),
                        d.lambda1.to_string(),
                        d.v1_sq_max.to_string(),
                        d.v1_sq_max_asset.clone(),
                        d.entropy.to_string(),
                        d.k_max.to_string(),
                        d.k_argmax.clone(),
                        d.avg_path_len.to_string(),
                    ]);
                    rec.extend(d.tracked.iter().map(|t| t.map(|v| v.to_string()).unwrap_or_default()));
                }
                None => rec.resize(header.len(), String::new()),
            }
            w.write_record(&rec).map_err(werr)?;
        }
        w.flush().map_err(|e| Error::io("writing measures", e))
    }

    /// Table `window,window_end,d_dc0,d_rp1` for one q-pair at scale `s`.
    pub fn write_distances_csv<W: Write>(
        &self,
        q_a: f64,
        q_b: f64,
        s: usize,
        filtered: bool,
        writer: W,
    ) -> Result<()> {
        let i = self
            .pair_index(q_a, q_b, s)
            .ok_or_else(|| Error::Config(format!("q-pair {q_a}:{q_b} at s = {s} not configured")))?;
        let mut w = csv::Writer::from_writer(writer);
        let werr = |e: csv::Error| Error::Data(format!("writing distances: {e}"));
        w.write_record(["window", "window_end", "d_dc0", "d_rp1"]).map_err(werr)?;
        for win in &self.windows {
            let d = if filtered {
                win.filtered_distances.get(i).copied().flatten()
            } else {
                win.distances.get(i).copied()
            };
            let (a, b) = d
                .map(|d| (d.deltacon0.to_string(), d.resistance.to_string()))
                .unwrap_or_default();
            w.write_record([win.index.to_string(), win.end_timestamp.to_string(), a, b])
                .map_err(werr)?;
        }
        w.flush().map_err(|e| Error::io("writing distances", e))
    }
}

fn diagnose(
    corr: &crate::rhoq::QCorrMatrix,
    cfg: &RollingConfig,
) -> Result<(Diagnostics, QMst)> {
    let eigen = eigen_summary(corr)?;
    let tree = build_mst(&corr.to_distance())?;
    let metrics = tree_metrics(&tree);
    let (imax, v1_sq_max) = eigen.v1_squared_max();
    let tracked = cfg
        .tracked
        .iter()
        .map(|t| {
            corr.assets
                .iter()
                .position(|a| a == t)
                .map(|i| eigen.v1[i] * eigen.v1[i])
        })
        .collect();
    Ok((
        Diagnostics {
            q: corr.q,
            s: corr.s,
            n_assets: corr.n(),
            lambda1: eigen.lambda1(),
            v1_sq_max,
            v1_sq_max_asset: corr.assets[imax].clone(),
            entropy: eigen.entropy,
            k_max: metrics.k_max,
            k_argmax: metrics.k_argmax,
            avg_path_len: metrics.avg_path_len,
            tracked,
            eigen,
            tree: None,
        },
        tree,
    ))
}

fn tree_distances(a: &QMst, b: &QMst, q_a: f64, q_b: f64, s: usize) -> Result<GraphDistances> {
    let (aa, ab) = (a.adjacency(), b.adjacency());
    Ok(GraphDistances {
        q_a,
        q_b,
        s,
        deltacon0: deltacon0(&aa, &ab)?,
        resistance: resistance_distance(&aa, &ab)?,
    })
}

/// Runs the whole chain on one window.
pub fn analyze_window(panel: &ReturnPanel, index: usize, start: usize, cfg: &RollingConfig) -> Result<WindowResult> {
    let dcfg = cfg.detrend_config();
    let window = panel.slice_window(start, cfg.window)?;

    let mut flat = vec![false; window.n_assets()];
    for &s in &cfg.scales {
        for i in DetrendedPanel::new(&window, s, &dcfg)?.degenerate_assets() {
            flat[i] = true;
        }
    }
    let keep: Vec<usize> = (0..window.n_assets()).filter(|&i| !flat[i]).collect();
    let dropped: Vec<String> = (0..window.n_assets())
        .filter(|&i| flat[i])
        .map(|i| window.assets()[i].clone())
        .collect();
    if keep.len() < 2 {
        return Err(Error::Degenerate(format!(
            "window {index} has {} non-degenerate assets (need 2)",
            keep.len()
        )));
    }
    let window = if dropped.is_empty() { window } else { window.select_assets(&keep) };

    let nq = cfg.q_values.len();
    let mut diagnostics = Vec::with_capacity(cfg.scales.len() * nq);
    let mut distances = Vec::new();
    let mut filtered = Vec::new();
    let mut filtered_distances = Vec::new();
    let mut filtered_dropped = Vec::new();
    for &s in &cfg.scales {
        let mats = DetrendedPanel::new(&window, s, &dcfg)?.corr_matrices(&cfg.q_values)?;
        let mut trees = Vec::with_capacity(nq);
        for c in &mats {
            let (mut d, tree) = diagnose(c, cfg)?;
            if cfg.keep_trees {
                d.tree = Some(tree.clone());
            }
            trees.push(tree);
            diagnostics.push(d);
        }
        let qpos = |q: f64| cfg.q_values.iter().position(|&v| v == q).expect("validated q-pair");
        for &(qa, qb) in &cfg.q_pairs {
            distances.push(tree_distances(&trees[qpos(qa)], &trees[qpos(qb)], qa, qb, s)?);
        }

        if cfg.filter {
            let base = diagnostics.len() - nq;
            let mut ftrees: Vec<Option<QMst>> = Vec::with_capacity(nq);
            for (qi, &q) in cfg.q_values.iter().enumerate() {
                let resid = filter_market_factor(&window, &diagnostics[base + qi].eigen.v1)?;
                let rp = DetrendedPanel::new(&resid.residuals, s, &dcfg)?;
                let flat_resid = rp.degenerate_assets();
                let rp = if flat_resid.is_empty() {
                    rp
                } else {
                    filtered_dropped.push(DroppedAssets {
                        q,
                        s,
                        assets: flat_resid.iter().map(|&i| window.assets()[i].clone()).collect(),
                    });
                    let keep: Vec<usize> =
                        (0..window.n_assets()).filter(|i| !flat_resid.contains(i)).collect();
                    if keep.len() < 2 {
                        filtered.push(None);
                        ftrees.push(None);
                        continue;
                    }
                    DetrendedPanel::new(&resid.residuals.select_assets(&keep), s, &dcfg)?
                };
                let c = rp.corr_matrices(&[q])?.remove(0);
                let (mut d, tree) = diagnose(&c, cfg)?;
                if cfg.keep_trees {
                    d.tree = Some(tree.clone());
                }
                filtered.push(Some(d));
                ftrees.push(Some(tree));
            }
            for &(qa, qb) in &cfg.q_pairs {
                let d = match (&ftrees[qpos(qa)], &ftrees[qpos(qb)]) {
                    (Some(a), Some(b)) if a.assets() == b.assets() => {
                        Some(tree_distances(a, b, qa, qb, s)?)
                    }
                    _ => None,
                };
                filtered_distances.push(d);
            }
        }
    }
    Ok(WindowResult {
        index,
        start,
        end_timestamp: *window.timestamps().last().expect("non-empty window"),
        dropped,
        diagnostics,
        distances,
        filtered,
        filtered_distances,
        filtered_dropped,
    })
}

/// Runs every window; windows are independent and collected in order.
pub fn run_rolling(panel: &ReturnPanel, cfg: &RollingConfig) -> Result<WindowSeries> {
    cfg.validate(None)?;
    let starts = window_starts(panel.len(), cfg.window, cfg.step);
    if starts.is_empty() {
        return Err(Error::Config(format!(
            "no complete window of {} samples in {} returns",
            cfg.window,
            panel.len()
        )));
    }
    let windows = starts
        .par_iter()
        .enumerate()
        .map(|(k, &start)| analyze_window(panel, k + 1, start, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowSeries {
        config: cfg.clone(),
        windows,
    })
}

/// Autocorrelation `A(Δk)` for `Δk = 0..=max_lag`, normalised by `1/K`.
pub fn measure_acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let k = x.len();
    if k < max_lag + 2 {
        return Err(Error::Data(format!(
            "series of length {k} too short for lag {max_lag}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("series has non-finite values".into()));
    }
    let mean = x.iter().sum::<f64>() / k as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = dev.iter().map(|d| d * d).sum::<f64>() / k as f64;
    if !(var > 0.0) {
        return Err(Error::Degenerate("constant measure series".into()));
    }
    Ok((0..=max_lag)
        .map(|lag| {
            let c = dev[..k - lag]
                .iter()
                .zip(&dev[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / k as f64;
            c / var
        })
        .collect())
}

/// Pearson correlations between series; `None` in rows/columns of constant series.
pub fn pearson_matrix(series: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>> {
    let n = series.first().map(Vec::len).unwrap_or(0);
    if series.iter().any(|s| s.len() != n) {
        return Err(Error::Data("measure series differ in length".into()));
    }
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 windows, got {n}")));
    }
    let centred: Vec<Option<(Vec<f64>, f64)>> = series
        .iter()
        .map(|s| {
            let m = s.iter().sum::<f64>() / n as f64;
            let d: Vec<f64> = s.iter().map(|v| v - m).collect();
            let ss = d.iter().map(|v| v * v).sum::<f64>();
            (ss > 0.0 && ss.is_finite()).then_some((d, ss))
        })
        .collect();
    Ok(centred
        .iter()
        .map(|a| {
            centred
                .iter()
                .map(|b| match (a, b) {
                    (Some((da, sa)), Some((db, sb))) => {
                        let c = da.iter().zip(db).map(|(x, y)| x * y).sum::<f64>() / (sa * sb).sqrt();
                        Some(c.clamp(-1.0, 1.0))
                    }
                    _ => None,
                })
                .collect()
        })
        .collect())
}

pub fn measure_correlations(ws: &WindowSeries, selection: &[SeriesKey]) -> Result<Vec<Vec<Option<f64>>>> {
    let series = selection
        .iter()
        .map(|&k| {
            ws.series(k)
                .ok_or_else(|| Error::Config(format!("measure {k:?} not available")))
        })
        .collect::<Result<Vec<_>>>()?;
    pearson_matrix(&series)
}
