//! Command-line front end: argument parsing, config resolution and exports.
//!
//! Every command that writes files assembles them in a scratch directory next
//! to the destination and renames it into place only after everything has
//! been written, together with a `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::detrend::{default_scales, estimate_exponents, series_pipeline, DetrendConfig};
use crate::error::{Error, Result};
use crate::graph::{deltacon0, resistance_distance, QMst, TreeJson};
use crate::panel::{load_prices, load_returns, read_sectors, Layout, ReturnPanel};
use crate::rolling::{run_rolling, RollingConfig, WindowSeries};
use crate::synth::SynthSpec;

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "qmst", version, about = "q-dependent detrended correlation networks")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a price file into log-returns and cumulative returns.
    Returns(ReturnsArgs),
    /// Rolling-window correlation, spectrum, tree and graph-distance analysis.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic panel.
    Synth(SynthArgs),
    /// Compare two trees stored as JSON edge lists.
    Graphdist(GraphdistArgs),
    /// Fluctuation functions and generalised Hurst exponents of one series.
    Mfdfa(MfdfaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    #[default]
    Prices,
    Returns,
}

#[derive(Debug, Args)]
pub struct ReturnsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "wide")]
    pub layout: Layout,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<Layout>,
    #[arg(long, value_enum)]
    pub input_kind: Option<InputKind>,
    /// Two-column `asset,sector` file used to label exported trees.
    #[arg(long)]
    pub sectors: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated q values, e.g. `1,4`.
    #[arg(long)]
    pub q: Option<String>,
    /// Comma-separated scales, e.g. `10,32`.
    #[arg(long)]
    pub scales: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    /// Also analyse residuals after removing the market factor.
    #[arg(long)]
    pub filter: bool,
    /// q-pairs for tree distances, e.g. `1:4,2:4`.
    #[arg(long)]
    pub pairs: Option<String>,
    /// Assets whose v1 share is reported, e.g. `BTC,ETH`.
    #[arg(long)]
    pub track: Option<String>,
    /// Write every window's trees (JSON and DOT).
    #[arg(long)]
    pub emit_trees: bool,
    /// Flat key = value file mirroring the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rerun with the configuration recorded in an earlier manifest.
    #[arg(long, conflicts_with = "config")]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Fgn,
    Cascade,
    CorrPair,
    FactorPanel,
    CrashPanel,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of returns.
    #[arg(long, default_value_t = 65_536)]
    pub length: usize,
    #[arg(long, default_value_t = 0.7)]
    pub hurst: f64,
    #[arg(long, default_value_t = 0.7)]
    pub weight: f64,
    #[arg(long, default_value_t = 16)]
    pub depth: u32,
    #[arg(long, default_value_t = 0.5)]
    pub r: f64,
    #[arg(long, default_value_t = 30)]
    pub n_assets: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    pub jump: f64,
    /// Crash position (default: middle of the sample).
    #[arg(long)]
    pub t_crash: Option<usize>,
    /// Write pseudo-prices `exp(cumsum(r))` instead of returns.
    #[arg(long)]
    pub prices: bool,
}

#[derive(Debug, Args)]
pub struct GraphdistArgs {
    pub tree_a: PathBuf,
    pub tree_b: PathBuf,
    /// Also write the result and a manifest into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MfdfaArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "returns")]
    pub input_kind: InputKind,
    #[arg(long, default_value = "wide")]
    pub layout: Layout,
    /// Column to analyse (default: the first).
    #[arg(long)]
    pub asset: Option<String>,
    #[arg(long, default_value = "1,2,4")]
    pub q: String,
    /// Comma-separated scales (default: log-spaced over the usable range).
    #[arg(long)]
    pub scales: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Scales `lo:hi` used for the exponent fit (default: all).
    #[arg(long)]
    pub fit: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Fully resolved `analyze` configuration, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub layout: Layout,
    pub input_kind: InputKind,
    pub sectors: Option<PathBuf>,
    pub q_values: Vec<f64>,
    pub scales: Vec<usize>,
    pub poly_order: usize,
    pub window: usize,
    pub step: usize,
    pub filter: bool,
    pub q_pairs: Vec<(f64, f64)>,
    pub tracked: Vec<String>,
    pub emit_trees: bool,
}

impl RunConfig {
    pub fn rolling(&self) -> RollingConfig {
        RollingConfig {
            window: self.window,
            step: self.step,
            q_values: self.q_values.clone(),
            scales: self.scales.clone(),
            poly_order: self.poly_order,
            subtract_mean: true,
            filter: self.filter,
            q_pairs: self.q_pairs.clone(),
            tracked: self.tracked.clone(),
            keep_trees: self.emit_trees,
        }
    }
}

/// Config file contents: every key optional, names as on the command line.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    input: Option<PathBuf>,
    layout: Option<Layout>,
    input_kind: Option<InputKind>,
    sectors: Option<PathBuf>,
    q: Option<ListValue>,
    scales: Option<ListValue>,
    order: Option<usize>,
    window: Option<usize>,
    step: Option<usize>,
    filter: Option<bool>,
    pairs: Option<String>,
    track: Option<ListValue>,
    emit_trees: Option<bool>,
    threads: Option<usize>,
}

/// A list given either as flag-style text or as a native value.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ListValue {
    Text(String),
    Number(f64),
    Numbers(Vec<f64>),
    Words(Vec<String>),
}

impl ListValue {
    fn into_text(self) -> String {
        match self {
            ListValue::Text(s) => s,
            ListValue::Number(v) => v.to_string(),
            ListValue::Numbers(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            ListValue::Words(v) => v.join(","),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest<C> {
    tool: String,
    version: String,
    command: String,
    config: C,
    outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summary: Option<serde_json::Value>,
}

impl<C> Manifest<C> {
    fn new(command: &str, config: C) -> Self {
        Self {
            tool: "qmst".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            outputs: Vec::new(),
            summary: None,
        }
    }
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("'{t}' is not a number")))
        })
        .collect()
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Config(format!("'{t}' is not a positive integer")))
        })
        .collect()
}

/// Parses `a:b,c:d` into q-pairs.
pub fn parse_pairs(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (a, b) = t
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("q-pair '{t}' is not of the form a:b")))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("q-pair '{t}' is not numeric")))
            };
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

fn parse_words(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

fn read_manifest_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let m: Manifest<RunConfig> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if m.command != "analyze" {
        return Err(Error::Config(format!(
            "{} records a '{}' run, not analyze",
            path.display(),
            m.command
        )));
    }
    Ok(m.config)
}

/// Applies flags over the config file over defaults; returns the config and
/// the thread count requested in the file, if any.
pub fn resolve_analyze(args: &AnalyzeArgs) -> Result<(RunConfig, Option<usize>)> {
    if let Some(path) = &args.from_manifest {
        return Ok((read_manifest_config(path)?, None));
    }
    let file = match &args.config {
        Some(p) => read_file_config(p)?,
        None => FileConfig::default(),
    };
    let defaults = RollingConfig::default();
    let text = |flag: &Option<String>, file: Option<ListValue>| flag.clone().or(file.map(ListValue::into_text));

    let input = args
        .input
        .clone()
        .or(file.input)
        .ok_or_else(|| Error::Config("no input file given (--input or config key 'input')".into()))?;
    let q_values = match text(&args.q, file.q) {
        Some(t) => parse_f64_list(&t)?,
        None => defaults.q_values.clone(),
    };
    let scales = match text(&args.scales, file.scales) {
        Some(t) => parse_usize_list(&t)?,
        None => defaults.scales.clone(),
    };
    let q_pairs = match args.pairs.clone().or(file.pairs) {
        Some(t) => parse_pairs(&t)?,
        None => {
            // default pair (1, 4) only makes sense when both are configured
            let (a, b) = defaults.q_pairs[0];
            if q_values.contains(&a) && q_values.contains(&b) {
                defaults.q_pairs.clone()
            } else {
                Vec::new()
            }
        }
    };
    let tracked = text(&args.track, file.track)
        .map(|t| parse_words(&t))
        .unwrap_or_default();
    let cfg = RunConfig {
        input,
        layout: args.layout.or(file.layout).unwrap_or_default(),
        input_kind: args.input_kind.or(file.input_kind).unwrap_or_default(),
        sectors: args.sectors.clone().or(file.sectors),
        q_values,
        scales,
        poly_order: args.order.or(file.order).unwrap_or(defaults.poly_order),
        window: args.window.or(file.window).unwrap_or(defaults.window),
        step: args.step.or(file.step).unwrap_or(defaults.step),
        filter: args.filter || file.filter.unwrap_or(false),
        q_pairs,
        tracked,
        emit_trees: args.emit_trees || file.emit_trees.unwrap_or(false),
    };
    Ok((cfg, file.threads))
}

/// Attaches the file name to ingestion errors that only carry a row number.
fn in_file(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Row { .. } | Error::Data(_) => Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        other => other,
    }
}

fn load_panel(path: &Path, kind: InputKind, layout: Layout) -> Result<(ReturnPanel, Vec<String>)> {
    match kind {
        InputKind::Prices => {
            let p = load_prices(path, layout).map_err(in_file(path))?;
            Ok((p.to_returns(), p.rejected_assets().to_vec()))
        }
        InputKind::Returns => {
            if layout != Layout::Wide {
                return Err(Error::Config("return files must use the wide layout".into()));
            }
            Ok((load_returns(path).map_err(in_file(path))?, Vec::new()))
        }
    }
}

/// Output directory assembled in a scratch location and renamed into place.
struct Staging {
    dir: tempfile::TempDir,
    dest: PathBuf,
    outputs: Vec<String>,
}

impl Staging {
    fn new(dest: &Path) -> Result<Self> {
        if dest.exists() {
            let reusable = dest.is_dir()
                && (dest.join(MANIFEST).is_file()
                    || fs::read_dir(dest)
                        .map_err(|e| Error::io(format!("reading {}", dest.display()), e))?
                        .next()
                        .is_none());
            if !reusable {
                return Err(Error::Config(format!(
                    "{} exists and is not an earlier qmst output directory",
                    dest.display()
                )));
            }
        }
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        let dir = tempfile::Builder::new()
            .prefix(".qmst-")
            .tempdir_in(&parent)
            .map_err(|e| Error::io(format!("creating scratch directory in {}", parent.display()), e))?;
        Ok(Self {
            dir,
            dest: dest.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.dir.path().join(name);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))?;
        }
        let f = fs::File::create(&path).map_err(|e| Error::io(format!("creating {name}"), e))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        use std::io::Write;
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(format!("writing {name}"), e))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    fn commit<C: Serialize>(mut self, mut manifest: Manifest<C>) -> Result<PathBuf> {
        manifest.outputs = self.outputs.clone();
        manifest.outputs.sort();
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        self.write_text(MANIFEST, &text)?;
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest)
                .map_err(|e| Error::io(format!("replacing {}", self.dest.display()), e))?;
        }
        let staged = self.dir.keep();
        fs::rename(&staged, &self.dest).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            Error::io(format!("moving outputs to {}", self.dest.display()), e)
        })?;
        Ok(self.dest)
    }
}

fn tag(q: f64, s: usize) -> String {
    format!("q{q}_s{s}")
}

pub fn cmd_returns(args: &ReturnsArgs) -> Result<PathBuf> {
    let prices = load_prices(&args.input, args.layout).map_err(in_file(&args.input))?;
    let returns = prices.to_returns();
    let mut out = Staging::new(&args.out)?;
    returns.write_csv(out.create("returns.csv")?)?;
    returns.write_cumulative_csv(out.create("cumulative_returns.csv")?)?;
    let mut m = Manifest::new(
        "returns",
        serde_json::json!({ "input": absolute(&args.input), "layout": args.layout }),
    );
    m.summary = Some(serde_json::json!({
        "n_assets": returns.n_assets(),
        "n_returns": returns.len(),
        "rejected_assets": prices.rejected_assets(),
    }));
    out.commit(m)
}

fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

#[derive(Serialize)]
struct EigenRecord<'a> {
    window: usize,
    window_end: i64,
    assets: &'a [String],
    lambda: &'a [f64],
    v1: &'a [f64],
    entropy: f64,
}

fn write_eigen(out: &mut Staging, ws: &WindowSeries, q: f64, s: usize, filtered: bool) -> Result<()> {
    let Some(diags) = ws.diagnostics(q, s, filtered) else {
        return Ok(());
    };
    let records: Vec<EigenRecord> = ws
        .windows
        .iter()
        .zip(diags)
        .map(|(w, d)| EigenRecord {
            window: w.index,
            window_end: w.end_timestamp,
            assets: d.tree.as_ref().map(QMst::assets).unwrap_or(&[]),
            lambda: &d.eigen.lambda,
            v1: &d.eigen.v1,
            entropy: d.eigen.entropy,
        })
        .collect();
    let prefix = if filtered { "filtered_" } else { "" };
    out.write_json(&format!("{prefix}eigen_{}.json", tag(q, s)), &records)
}

pub fn cmd_analyze(cfg: &RunConfig, dest: &Path) -> Result<PathBuf> {
    let mut rolling = cfg.rolling();
    // trees carry the asset labels of each window's eigen records
    rolling.keep_trees = true;
    rolling.validate(None)?;
    let (mut panel, rejected) = load_panel(&cfg.input, cfg.input_kind, cfg.layout)?;
    let sectors = match &cfg.sectors {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::io(format!("opening {}", p.display()), e))?;
            read_sectors(f).map_err(in_file(p))?
        }
        None => BTreeMap::new(),
    };
    if !sectors.is_empty() {
        let labels = panel
            .assets()
            .iter()
            .map(|a| sectors.get(a).cloned().unwrap_or_default())
            .collect();
        panel = panel.with_sectors(labels)?;
    }
    rolling.validate(Some(panel.len()))?;
    let ws = run_rolling(&panel, &rolling)?;

    let mut out = Staging::new(dest)?;
    let passes: &[bool] = if cfg.filter { &[false, true] } else { &[false] };
    for &filtered in passes {
        let prefix = if filtered { "filtered_" } else { "" };
        for &s in &cfg.scales {
            for &q in &cfg.q_values {
                ws.write_measures_csv(q, s, filtered, out.create(&format!("{prefix}measures_{}.csv", tag(q, s)))?)?;
                write_eigen(&mut out, &ws, q, s, filtered)?;
            }
            for &(a, b) in &cfg.q_pairs {
                let name = format!("{prefix}distances_q{a}-{b}_s{s}.csv");
                ws.write_distances_csv(a, b, s, filtered, out.create(&name)?)?;
            }
        }
    }
    if cfg.emit_trees {
        for w in &ws.windows {
            let groups = std::iter::once((w.diagnostics.iter().collect::<Vec<_>>(), ""))
                .chain(cfg.filter.then(|| (w.filtered.iter().flatten().collect(), "filtered_")));
            for (diags, prefix) in groups {
                for d in diags {
                    let Some(tree) = &d.tree else { continue };
                    let stem = format!("trees/{prefix}w{:05}_{}", w.index, tag(d.q, d.s));
                    out.write_json(&format!("{stem}.json"), &tree.to_json())?;
                    let labels: Option<Vec<String>> = (!sectors.is_empty()).then(|| {
                        tree.assets()
                            .iter()
                            .map(|a| sectors.get(a).cloned().unwrap_or_default())
                            .collect()
                    });
                    out.write_text(&format!("{stem}.dot"), &tree.to_dot(labels.as_deref()))?;
                }
            }
        }
    }

    let mut resolved = cfg.clone();
    resolved.input = absolute(&cfg.input);
    resolved.sectors = cfg.sectors.as_deref().map(absolute);
    let dropped: Vec<_> = ws
        .windows
        .iter()
        .filter(|w| !w.dropped.is_empty() || !w.filtered_dropped.is_empty())
        .map(|w| {
            serde_json::json!({
                "window": w.index,
                "dropped": w.dropped,
                "filtered_dropped": w.filtered_dropped,
            })
        })
        .collect();
    let mut m = Manifest::new("analyze", resolved);
    m.summary = Some(serde_json::json!({
        "n_assets": panel.n_assets(),
        "n_returns": panel.len(),
        "n_windows": ws.len(),
        "rejected_assets": rejected,
        "window_drops": dropped,
    }));
    out.commit(m)
}

pub fn synth_spec(args: &SynthArgs) -> SynthSpec {
    let (length, seed) = (args.length, args.seed);
    match args.kind {
        SynthKind::Fgn => SynthSpec::Fgn { hurst: args.hurst, length, seed },
        SynthKind::Cascade => SynthSpec::Cascade { weight: args.weight, depth: args.depth, seed },
        SynthKind::CorrPair => SynthSpec::CorrPair { r: args.r, length, seed },
        SynthKind::FactorPanel => SynthSpec::FactorPanel {
            n_assets: args.n_assets,
            length,
            beta: args.beta,
            sigma: args.sigma,
            seed,
        },
        SynthKind::CrashPanel => SynthSpec::CrashPanel {
            n_assets: args.n_assets,
            length,
            jump: args.jump,
            t_crash: args.t_crash.unwrap_or(length / 2),
            sigma: args.sigma,
            seed,
        },
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let spec = synth_spec(args);
    let panel = spec.generate()?;
    let mut out = Staging::new(&args.out)?;
    if args.prices {
        let prices = panel.to_pseudo_prices()?;
        crate::panel::write_wide(out.create("prices.csv")?, prices.timestamps(), prices.assets(), prices.prices())?;
    } else {
        panel.write_csv(out.create("returns.csv")?)?;
    }
    out.commit(Manifest::new("synth", serde_json::json!({ "spec": spec, "prices": args.prices })))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeDistances {
    pub deltacon0: f64,
    pub resistance: f64,
}

fn read_tree(path: &Path) -> Result<QMst> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let json: TreeJson = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    json.into_tree().map_err(in_file(path))
}

pub fn cmd_graphdist(args: &GraphdistArgs) -> Result<TreeDistances> {
    let a = read_tree(&args.tree_a)?;
    let b = read_tree(&args.tree_b)?;
    if a.assets() != b.assets() {
        return Err(Error::Data("trees are built on different asset lists".into()));
    }
    let (aa, ab) = (a.adjacency(), b.adjacency());
    let d = TreeDistances {
        deltacon0: deltacon0(&aa, &ab)?,
        resistance: resistance_distance(&aa, &ab)?,
    };
    if let Some(dest) = &args.out {
        let mut out = Staging::new(dest)?;
        out.write_json("distances.json", &d)?;
        out.commit(Manifest::new(
            "graphdist",
            serde_json::json!({ "tree_a": absolute(&args.tree_a), "tree_b": absolute(&args.tree_b) }),
        ))?;
    }
    Ok(d)
}

pub fn cmd_mfdfa(args: &MfdfaArgs) -> Result<PathBuf> {
    let (panel, _) = load_panel(&args.input, args.input_kind, args.layout)?;
    let col = match &args.asset {
        Some(a) => panel
            .assets()
            .iter()
            .position(|x| x == a)
            .ok_or_else(|| Error::Config(format!("asset '{a}' not in {}", args.input.display())))?,
        None => 0,
    };
    let x = panel.series(col);
    let scales = match &args.scales {
        Some(t) => parse_usize_list(t)?,
        None => default_scales(x.len(), args.order),
    };
    let cfg = DetrendConfig {
        poly_order: args.order,
        q_values: parse_f64_list(&args.q)?,
        scales,
        subtract_mean: true,
    };
    cfg.validate(Some(x.len()))?;
    let fit = match &args.fit {
        Some(t) => {
            let v = parse_pairs(t)?;
            match v.as_slice() {
                [(lo, hi)] if *lo >= 0.0 && *hi >= *lo => (*lo as usize, *hi as usize),
                _ => return Err(Error::Config(format!("fit range '{t}' is not lo:hi"))),
            }
        }
        None => (cfg.scales[0], *cfg.scales.last().expect("validated scales")),
    };
    let fs = series_pipeline(x, &cfg)?;
    let exps = estimate_exponents(&fs, fit)?;
    let asset = panel.assets()[col].clone();
    let mut out = Staging::new(&args.out)?;
    fs.write_csv(&asset, out.create("fluctuations.csv")?, true)?;
    let h: Vec<_> = exps
        .q_values
        .iter()
        .zip(&exps.h_x)
        .map(|(q, f)| serde_json::json!({ "q": q, "h": f.map(|f| f.slope), "r2": f.map(|f| f.r2) }))
        .collect();
    out.write_json("exponents.json", &serde_json::json!({ "asset": asset, "fit_range": fit, "hurst": h }))?;
    out.commit(Manifest::new(
        "mfdfa",
        serde_json::json!({
            "input": absolute(&args.input),
            "input_kind": args.input_kind,
            "layout": args.layout,
            "asset": asset,
            "poly_order": cfg.poly_order,
            "q_values": cfg.q_values,
            "scales": cfg.scales,
            "fit_range": fit,
        }),
    ))
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Returns(a) => {
            set_threads(cli.threads)?;
            cmd_returns(a)?;
        }
        Command::Analyze(a) => {
            let (cfg, file_threads) = resolve_analyze(a)?;
            set_threads(cli.threads.or(file_threads))?;
            cmd_analyze(&cfg, &a.out)?;
        }
        Command::Synth(a) => {
            set_threads(cli.threads)?;
            cmd_synth(a)?;
        }
        Command::Graphdist(a) => {
            let d = cmd_graphdist(a)?;
            println!("{}", serde_json::to_string(&d)?);
        }
        Command::Mfdfa(a) => {
            set_threads(cli.threads)?;
            cmd_mfdfa(a)?;
        }
    }
    Ok(())
}
