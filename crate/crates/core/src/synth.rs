//! Synthetic series and panels with known ground truth.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`),
//! which produces the same stream on every platform. Uniforms take the top
//! 53 bits of a `u64` draw, offset by half a unit so they lie strictly inside
//! (0, 1); Gaussians are their image under the inverse normal CDF. Panels
//! give asset `i` the word stream `i + 1` of the seeded generator and keep
//! stream 0 for any common component.

use std::f64::consts::SQRT_2;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;

/// Sampling interval of synthetic timestamps (one minute).
pub const SYNTH_STEP_MS: i64 = 60_000;

/// Number of consecutive samples carrying the common crash return.
pub const CRASH_BURST_LEN: usize = 10;

/// Seeded source of uniform and standard-normal variates.
pub struct Variates {
    rng: ChaCha20Rng,
}

impl Variates {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform on (0, 1), never hitting either end.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn gaussian(&mut self) -> f64 {
        -SQRT_2 * erfc_inv(2.0 * self.uniform())
    }

    pub fn gaussians(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }

    pub fn coin(&mut self) -> bool {
        self.rng.next_u64() >> 63 == 1
    }
}

fn check_pow2(t: usize) -> Result<()> {
    if t < 2 || !t.is_power_of_two() {
        return Err(Error::Config(format!("length {t} must be a power of two >= 2")));
    }
    Ok(())
}

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Fractional Gaussian noise by circulant embedding (Davies-Harte).
pub fn gen_fgn(hurst: f64, t: usize, seed: u64) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::Config(format!("Hurst exponent {hurst} outside (0, 1)")));
    }
    check_pow2(t)?;
    let m = 2 * t;
    let mut row: Vec<Complex64> = (0..m)
        .map(|k| {
            let lag = if k <= t { k } else { m - k };
            Complex64::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let top = row.iter().map(|c| c.re).fold(0.0, f64::max);
    let mut eig = Vec::with_capacity(m);
    for c in &row {
        if c.re < -1e-10 * top {
            return Err(Error::Degenerate(format!(
                "circulant embedding has negative eigenvalue {} for H = {hurst}",
                c.re
            )));
        }
        eig.push(c.re.max(0.0));
    }
    let mut noise = Variates::new(seed, 0);
    let mut w: Vec<Complex64> = eig
        .iter()
        .map(|&l| {
            let a = (l / m as f64).sqrt();
            let re = noise.gaussian();
            let im = noise.gaussian();
            Complex64::new(a * re, a * im)
        })
        .collect();
    fft.process(&mut w);
    Ok(w[..t].iter().map(|c| c.re).collect())
}

/// Binomial multiplicative cascade measure on `2^depth` cells (total mass 1).
pub fn cascade_measure(weight: f64, depth: u32, seed: u64) -> Result<Vec<f64>> {
    if !(weight > 0.5 && weight < 1.0) {
        return Err(Error::Config(format!("cascade weight {weight} outside (0.5, 1)")));
    }
    if !(10..=30).contains(&depth) {
        return Err(Error::Config(format!("cascade depth {depth} outside 10..=30")));
    }
    let mut coins = Variates::new(seed, 0);
    let mut mass = vec![1.0];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(mass.len() * 2);
        for &m in &mass {
            let (l, r) = if coins.coin() {
                (weight, 1.0 - weight)
            } else {
                (1.0 - weight, weight)
            };
            next.push(m * l);
            next.push(m * r);
        }
        mass = next;
    }
    Ok(mass)
}

/// Cascade measure minus its mean.
pub fn gen_cascade(weight: f64, depth: u32, seed: u64) -> Result<Vec<f64>> {
    let mut mass = cascade_measure(weight, depth, seed)?;
    let mean = mass.iter().sum::<f64>() / mass.len() as f64;
    mass.iter_mut().for_each(|m| *m -= mean);
    Ok(mass)
}

/// Generalised Hurst exponent of the binomial cascade,
/// `h(q) = 1/q − log₂(a^q + (1−a)^q)/q`.
pub fn cascade_hurst(weight: f64, q: f64) -> f64 {
    1.0 / q - (weight.powf(q) + (1.0 - weight).powf(q)).log2() / q
}

/// I.i.d. jointly Gaussian pair with correlation `r`.
pub fn gen_corr_pair(r: f64, t: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::Config(format!("correlation {r} outside [-1, 1]")));
    }
    if t < 2 {
        return Err(Error::Config("pair length must be at least 2".into()));
    }
    let x = Variates::new(seed, 0).gaussians(t);
    let z = Variates::new(seed, 1).gaussians(t);
    let c = (1.0 - r * r).max(0.0).sqrt();
    let y = x.iter().zip(&z).map(|(a, b)| r * a + c * b).collect();
    Ok((x, y))
}

fn panel_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("X{i:03}")).collect()
}

fn synth_timestamps(t: usize) -> Vec<i64> {
    (1..=t as i64).map(|k| k * SYNTH_STEP_MS).collect()
}

/// One-factor panel `r_i = β Z + σ ε_i`.
pub fn gen_factor_panel(n: usize, t: usize, beta: f64, sigma: f64, seed: u64) -> Result<ReturnPanel> {
    if n < 2 || t < 2 {
        return Err(Error::Config("factor panel needs N >= 2 and T >= 2".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite() && beta.is_finite()) {
        return Err(Error::Config(format!("invalid beta {beta} / sigma {sigma}")));
    }
    let z = Variates::new(seed, 0).gaussians(t);
    let rows = (0..n)
        .map(|i| {
            let mut v = Variates::new(seed, i as u64 + 1);
            z.iter().map(|f| beta * f + sigma * v.gaussian()).collect()
        })
        .collect();
    ReturnPanel::new(synth_timestamps(t), panel_labels(n), rows)
}

/// Sample range `[start, end)` of the crash burst centred on `t_crash`.
pub fn crash_burst(t: usize, t_crash: usize) -> (usize, usize) {
    let start = t_crash.saturating_sub(CRASH_BURST_LEN / 2);
    (start, (start + CRASH_BURST_LEN).min(t))
}

/// Independent Gaussian returns with a common return `jump` added to every
/// asset over a short burst around `t_crash`.
pub fn gen_crash_panel(
    n: usize,
    t: usize,
    jump: f64,
    t_crash: usize,
    sigma: f64,
    seed: u64,
) -> Result<ReturnPanel> {
    if n < 10 {
        return Err(Error::Config(format!("crash panel needs N >= 10, got {n}")));
    }
    if !(t_crash > 0 && t_crash < t) {
        return Err(Error::Config(format!("crash time {t_crash} outside (0, {t})")));
    }
    if !(jump <= 0.0) {
        return Err(Error::Config(format!("crash return {jump} must not be positive")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("invalid sigma {sigma}")));
    }
    let (b0, b1) = crash_burst(t, t_crash);
    let rows = (0..n)
        .map(|i| {
            let mut v = Variates::new(seed, i as u64 + 1);
            (0..t)
                .map(|k| sigma * v.gaussian() + if (b0..b1).contains(&k) { jump } else { 0.0 })
                .collect()
        })
        .collect();
    ReturnPanel::new(synth_timestamps(t), panel_labels(n), rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SynthSpec {
    Fgn { hurst: f64, length: usize, seed: u64 },
    Cascade { weight: f64, depth: u32, seed: u64 },
    CorrPair { r: f64, length: usize, seed: u64 },
    FactorPanel { n_assets: usize, length: usize, beta: f64, sigma: f64, seed: u64 },
    CrashPanel { n_assets: usize, length: usize, jump: f64, t_crash: usize, sigma: f64, seed: u64 },
}

impl SynthSpec {
    pub fn generate(&self) -> Result<ReturnPanel> {
        match *self {
            SynthSpec::Fgn { hurst, length, seed } => {
                let x = gen_fgn(hurst, length, seed)?;
                ReturnPanel::new(synth_timestamps(length), vec!["fgn".into()], vec![x])
            }
            SynthSpec::Cascade { weight, depth, seed } => {
                let x = gen_cascade(weight, depth, seed)?;
                ReturnPanel::new(synth_timestamps(x.len()), vec!["cascade".into()], vec![x])
            }
            SynthSpec::CorrPair { r, length, seed } => {
                let (x, y) = gen_corr_pair(r, length, seed)?;
                ReturnPanel::new(synth_timestamps(length), vec!["X".into(), "Y".into()], vec![x, y])
            }
            SynthSpec::FactorPanel { n_assets, length, beta, sigma, seed } => {
                gen_factor_panel(n_assets, length, beta, sigma, seed)
            }
            SynthSpec::CrashPanel { n_assets, length, jump, t_crash, sigma, seed } => {
                gen_crash_panel(n_assets, length, jump, t_crash, sigma, seed)
            }
        }
    }
}
