//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qmst::detrend::{estimate_exponents, pair_pipeline, series_pipeline, DetrendConfig};
use qmst::graph::{build_mst, effective_resistance, MstEdge, QMst};
use qmst::panel::ReturnPanel;
use qmst::rhoq::{to_distance, DetrendedPanel, QCorrMatrix, QDistMatrix};
use qmst::rolling::{run_rolling, window_count, window_starts, Measure, RollingConfig};
use qmst::spectra::{eigen_summary, entropy};
use qmst::synth::{
    cascade_hurst, crash_burst, gen_cascade, gen_corr_pair, gen_crash_panel, gen_factor_panel, gen_fgn, Variates,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn log_scales(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut v: Vec<usize> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .collect();
    v.dedup();
    v
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("A{i}")).collect()
}

// ---- 1: MST optimality ---------------------------------------------------

fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

fn sorted_sum(mut w: Vec<f64>) -> f64 {
    w.sort_by(f64::total_cmp);
    w.iter().sum()
}

fn exhaustive_minimum(d: &[Vec<f64>]) -> f64 {
    let n = d.len();
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(sorted_sum(prufer_edges(&seq, n).iter().map(|&(a, b)| d[a][b]).collect()));
        let mut k = 0;
        while k < len {
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
        if k == len {
            return best;
        }
    }
}

fn criterion_1() -> Outcome {
    let mut g = Variates::new(1001, 0);
    let mut mismatches = 0;
    for trial in 0..200 {
        let n = 4 + trial % 5;
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                d[i][j] = 2.0 * g.uniform();
                d[j][i] = d[i][j];
            }
        }
        let tree = build_mst(&QDistMatrix { q: 1.0, s: 10, assets: labels(n), values: d.clone() }).unwrap();
        if sorted_sum(tree.edges().iter().map(|e| e.w).collect()) != exhaustive_minimum(&d) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("200 matrices N in 4..=8, {mismatches} mismatches"))
}

// ---- 2: bounds and symmetry ------------------------------------------------

fn criterion_2() -> Outcome {
    let qs = [0.5, 1.0, 2.0, 4.0];
    let scales = [10, 32, 128];
    let cfg = DetrendConfig::new(2, qs.to_vec(), scales.to_vec());
    let mut g = Variates::new(1002, 0);
    let (mut worst, mut asym, mut self_off) = (0.0f64, 0usize, 0usize);
    for seed in 0..100u64 {
        let r = 2.0 * g.uniform() - 1.0;
        let (x, y) = gen_corr_pair(r, 2048, 5000 + seed).unwrap();
        let xy = pair_pipeline(&x, &y, &cfg).unwrap();
        let yx = pair_pipeline(&y, &x, &cfg).unwrap();
        let xx = pair_pipeline(&x, &x, &cfg).unwrap();
        for &q in &qs {
            for &s in &scales {
                let a = qmst::rhoq::rho_q(&xy, q, s).unwrap();
                let b = qmst::rhoq::rho_q(&yx, q, s).unwrap();
                worst = worst.max(a.abs());
                asym += usize::from(a != b);
                self_off += usize::from(qmst::rhoq::rho_q(&xx, q, s).unwrap() != 1.0);
            }
        }
    }
    outcome(
        worst <= 1.0 + 1e-12 && asym == 0 && self_off == 0,
        format!("max |rho| {worst:.6}, {asym} asymmetric, {self_off} self-pairs != 1"),
    )
}

// ---- 3: DCCA fidelity ------------------------------------------------------

fn criterion_3() -> Outcome {
    let cfg = DetrendConfig::new(2, vec![2.0], vec![32]);
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [0.0, 0.4, 0.8] {
        let rhos: Vec<f64> = (1..=20u64)
            .map(|seed| {
                let (x, y) = gen_corr_pair(r, 1 << 16, seed).unwrap();
                qmst::rhoq::rho_q(&pair_pipeline(&x, &y, &cfg).unwrap(), 2.0, 32).unwrap()
            })
            .collect();
        let mean = rhos.iter().sum::<f64>() / 20.0;
        let worst = rhos.iter().map(|v| (v - r).abs()).fold(0.0, f64::max);
        pass &= (mean - r).abs() <= 0.05;
        parts.push(format!("r={r}: mean {mean:.4} (worst seed off by {worst:.4})"));
    }
    outcome(pass, parts.join("; "))
}

// ---- 4: Hurst recovery ------------------------------------------------------

fn criterion_4() -> Outcome {
    let scales = log_scales(16, 4096, 20);
    let cfg = DetrendConfig::new(2, vec![2.0], scales);
    let mut pass = true;
    let mut parts = Vec::new();
    for h in [0.3, 0.5, 0.7] {
        let mut worst = 0.0f64;
        for seed in 1..=20u64 {
            let x = gen_fgn(h, 1 << 16, seed).unwrap();
            let e = estimate_exponents(&series_pipeline(&x, &cfg).unwrap(), (16, 4096)).unwrap();
            worst = worst.max((e.h_x[0].unwrap().slope - h).abs());
        }
        pass &= worst <= 0.05;
        parts.push(format!("H={h}: worst |h(2)-H| {worst:.4}"));
    }
    outcome(pass, format!("20 seeds each; {}", parts.join("; ")))
}

// ---- 5: multifractal spectrum ---------------------------------------------

fn criterion_5() -> Outcome {
    let qs = [1.0, 2.0, 4.0];
    let cfg = DetrendConfig::new(2, qs.to_vec(), log_scales(16, 4096, 20));
    let (mut worst, mut increasing) = (0.0f64, 0usize);
    for seed in 1..=20u64 {
        let x = gen_cascade(0.7, 16, seed).unwrap();
        let e = estimate_exponents(&series_pipeline(&x, &cfg).unwrap(), (16, 4096)).unwrap();
        let h: Vec<f64> = e.h_x.iter().map(|f| f.unwrap().slope).collect();
        for (i, &q) in qs.iter().enumerate() {
            worst = worst.max((h[i] - cascade_hurst(0.7, q)).abs());
        }
        increasing += usize::from(h.windows(2).any(|w| w[1] > w[0]));
    }
    outcome(
        worst <= 0.1 && increasing == 0,
        format!("20 seeds; worst |h(q)-theory| {worst:.4}; {increasing} seeds not non-increasing"),
    )
}

// ---- 6: triangle inequality -------------------------------------------------

fn random_panel(seed: u64) -> ReturnPanel {
    let mut g = Variates::new(seed, 0);
    let n = 12;
    let beta = 2.0 * g.uniform();
    gen_factor_panel(n, 2048, beta, 1.0, seed).unwrap()
}

fn criterion_6() -> Outcome {
    let qs = [1.0, 2.0, 4.0];
    let cfg = DetrendConfig::new(2, qs.to_vec(), vec![10]);
    let mut worst = [f64::NEG_INFINITY; 3];
    let mut g = Variates::new(1006, 0);
    for p in 0..20u64 {
        let panel = random_panel(6000 + p);
        let mats = DetrendedPanel::new(&panel, 10, &cfg).unwrap().corr_matrices(&qs).unwrap();
        for (qi, c) in mats.iter().enumerate() {
            let d = to_distance(c).values;
            let n = d.len();
            let mut sampled = 0;
            while sampled < 500 {
                let mut pick = || ((g.uniform() * n as f64) as usize).min(n - 1);
                let (i, j, k) = (pick(), pick(), pick());
                if i == j || j == k || i == k {
                    continue;
                }
                worst[qi] = worst[qi].max(d[i][k] - d[i][j] - d[j][k]);
                sampled += 1;
            }
        }
    }
    let max = worst.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        max <= 1e-9,
        format!(
            "10^4 distinct triples per q; max D_ik - D_ij - D_jk q=1 {:.3e}, q=2 {:.3e}, q=4 {:.3e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---- 7: crash scenario -----------------------------------------------------

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_7() -> Outcome {
    let (t, t_crash, window, step) = (12_000, 6_000, 2_000, 500);
    let cfg = RollingConfig {
        window,
        step,
        q_values: vec![1.0, 4.0],
        scales: vec![10],
        q_pairs: vec![(1.0, 4.0)],
        ..RollingConfig::default()
    };
    let (b0, b1) = crash_burst(t, t_crash);
    let starts = window_starts(t, window, step);
    let burst: Vec<usize> = (0..starts.len()).filter(|&k| starts[k] <= b0 && starts[k] + window >= b1).collect();
    let calm: Vec<usize> = (0..starts.len()).filter(|&k| starts[k] + window <= b0 || starts[k] >= b1).collect();
    let mut hits = [0usize; 5];
    let mut all = 0;
    for seed in 1..=20u64 {
        let panel = gen_crash_panel(30, t, -10.0, t_crash, 1.0, seed).unwrap();
        let ws = run_rolling(&panel, &cfg).unwrap();
        let d1 = ws.diagnostics(1.0, 10, false).unwrap();
        let d4 = ws.diagnostics(4.0, 10, false).unwrap();
        let dist = ws.distances(1.0, 4.0, 10, false).unwrap();
        let dc_med = median(calm.iter().map(|&k| dist[k].deltacon0).collect());
        let rp_med = median(calm.iter().map(|&k| dist[k].resistance).collect());
        let every = |f: &dyn Fn(usize) -> bool| burst.iter().all(|&k| f(k));
        let checks = [
            every(&|k| Measure::Lambda1.of(d4[k]) > Measure::Lambda1.of(d1[k])),
            every(&|k| Measure::AvgPathLen.of(d4[k]) > Measure::AvgPathLen.of(d1[k])),
            every(&|k| Measure::Entropy.of(d4[k]) > Measure::Entropy.of(d1[k])),
            every(&|k| dist[k].deltacon0 > dc_med),
            every(&|k| dist[k].resistance > rp_med),
        ];
        for (h, c) in hits.iter_mut().zip(checks) {
            *h += usize::from(c);
        }
        all += usize::from(checks.iter().all(|&c| c));
    }
    outcome(
        all >= 18,
        format!(
            "{all}/20 seeds satisfy all; lambda1 {}/20, <L> {}/20, H {}/20, d_DC0 {}/20, d_rp1 {}/20 \
             ({} burst windows, {} calm windows)",
            hits[0],
            hits[1],
            hits[2],
            hits[3],
            hits[4],
            burst.len(),
            calm.len()
        ),
    )
}

// ---- 8: filtering ----------------------------------------------------------

fn criterion_8() -> Outcome {
    let qs = [1.0, 2.0, 4.0];
    let cfg = RollingConfig {
        window: 1 << 13,
        step: 1 << 12,
        q_values: qs.to_vec(),
        scales: vec![10],
        filter: true,
        q_pairs: Vec::new(),
        ..RollingConfig::default()
    };
    let (mut windows, mut fails, mut worst_ratio) = (0usize, 0usize, 0.0f64);
    for seed in 1..=20u64 {
        let panel = gen_factor_panel(20, 1 << 15, 1.0, 0.5, seed).unwrap();
        let ws = run_rolling(&panel, &cfg).unwrap();
        for &q in &qs {
            let raw = ws.diagnostics(q, 10, false).unwrap();
            let filt = ws.diagnostics(q, 10, true).unwrap();
            for (a, b) in raw.iter().zip(&filt) {
                windows += 1;
                fails += usize::from(!(b.lambda1 < a.lambda1));
                worst_ratio = worst_ratio.max(b.lambda1 / a.lambda1);
            }
        }
    }
    outcome(
        fails == 0,
        format!("{windows} window/q cells, {fails} with lambda1' >= lambda1, max ratio {worst_ratio:.4}"),
    )
}

// ---- 9: spectral identities --------------------------------------------------

fn criterion_9() -> Outcome {
    let qs = [1.0, 2.0, 4.0];
    let cfg = DetrendConfig::new(2, qs.to_vec(), vec![10]);
    let mut trace_err = 0.0f64;
    for p in 0..10u64 {
        let panel = random_panel(9000 + p);
        for c in DetrendedPanel::new(&panel, 10, &cfg).unwrap().corr_matrices(&qs).unwrap() {
            let e = eigen_summary(&c).unwrap();
            trace_err = trace_err.max((e.lambda.iter().sum::<f64>() - c.n() as f64).abs());
        }
    }
    let n = 25;
    let ones = QCorrMatrix { q: 2.0, s: 10, assets: labels(n), values: vec![vec![1.0; n]; n] };
    let h_ones = eigen_summary(&ones).unwrap().entropy;
    let mut delta = vec![0.0; n];
    delta[3] = 1.0;
    let h_delta = entropy(&delta).unwrap();

    let mut g = Variates::new(1009, 0);
    let mut r_err = 0.0f64;
    for n in [2, 5, 13, 40, 90] {
        let seq: Vec<usize> = (0..n - 2).map(|_| ((g.uniform() * n as f64) as usize).min(n - 1)).collect();
        let edges = if n == 2 { vec![(0, 1)] } else { prufer_edges(&seq, n) };
        let t = QMst::from_edges(
            labels(n),
            edges.into_iter().map(|(a, b)| MstEdge { i: a.min(b), j: a.max(b), w: 1.0 }).collect(),
        )
        .unwrap();
        let r = effective_resistance(&t.adjacency()).unwrap();
        let hops = t.hop_distances();
        for i in 0..n {
            for j in 0..n {
                r_err = r_err.max((r[i][j] - hops[i][j] as f64).abs());
            }
        }
    }
    let ln_err = (h_ones - (n as f64).ln()).abs();
    outcome(
        trace_err <= 1e-9 && ln_err <= 1e-9 && h_delta.abs() <= 1e-9 && r_err <= 1e-9,
        format!(
            "trace err {trace_err:.2e}, H(ones)-ln N {ln_err:.2e}, H(delta) {h_delta:.2e}, max |R-L| {r_err:.2e}"
        ),
    )
}

// ---- 10: window bookkeeping ---------------------------------------------------

fn criterion_10() -> Outcome {
    let t = 1_964_159;
    let panel = ReturnPanel::new(
        (1..=t as i64).map(|k| k * 60_000).collect(),
        labels(2),
        vec![Variates::new(10, 1).gaussians(t), Variates::new(10, 2).gaussians(t)],
    )
    .unwrap();
    let cfg = RollingConfig::default();
    let valid = cfg.validate(Some(panel.len())).is_ok();
    let k = window_count(panel.len(), cfg.window, cfg.step);
    let starts = window_starts(panel.len(), cfg.window, cfg.step);
    let last_fits = starts.last().is_some_and(|&s| s + cfg.window <= t && s + cfg.step + cfg.window > t);
    outcome(
        valid && k == 1357 && starts.len() == k && last_fits,
        format!("T={t} returns, W=10080, step=1440 -> K={k}"),
    )
}

// ---- 11: determinism ---------------------------------------------------------

fn files(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

fn qmst_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qmst")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let run = || -> Result<(usize, usize), String> {
        qmst_cli(&["synth", "--kind", "crash-panel", "--n-assets", "15", "--length", "6000", "--seed", "11", "--out", &p("panel")])?;
        qmst_cli(&[
            "analyze", "--input", &p("panel/returns.csv"), "--input-kind", "returns", "--window", "2000", "--step",
            "500", "--q", "1,2,4", "--scales", "10,20", "--pairs", "1:4,2:4", "--filter", "--emit-trees", "--out",
            &p("first"),
        ])?;
        qmst_cli(&["--threads", "1", "analyze", "--from-manifest", &p("first/manifest.json"), "--out", &p("second")])?;
        let (a, b) = (files(&dir.path().join("first")), files(&dir.path().join("second")));
        if a != b {
            return Err(format!("file sets differ: {} vs {}", a.len(), b.len()));
        }
        let differing = a
            .iter()
            .filter(|f| fs::read(dir.path().join("first").join(f)).ok() != fs::read(dir.path().join("second").join(f)).ok())
            .count();
        Ok((a.len(), differing))
    };
    match run() {
        Ok((n, 0)) => outcome(true, format!("{n} files byte-identical")),
        Ok((n, d)) => outcome(false, format!("{d} of {n} files differ")),
        Err(e) => outcome(false, e.trim().to_string()),
    }
}

fn main() {
    let criteria: [(fn() -> Outcome, Duration); 11] = [
        (criterion_1, Duration::from_secs(10)),
        (criterion_2, Duration::from_secs(30)),
        (criterion_3, Duration::from_secs(120)),
        (criterion_4, Duration::from_secs(120)),
        (criterion_5, Duration::from_secs(60)),
        (criterion_6, Duration::from_secs(60)),
        (criterion_7, Duration::from_secs(300)),
        (criterion_8, Duration::from_secs(120)),
        (criterion_9, Duration::from_secs(60)),
        (criterion_10, Duration::from_secs(60)),
        (criterion_11, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (check, budget)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let mut o = check();
        let took = t0.elapsed();
        if took > *budget {
            o.pass = false;
            o.detail.push_str(&format!("; over time budget {budget:?}"));
        }
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2}: {} [{:.1}s] {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
