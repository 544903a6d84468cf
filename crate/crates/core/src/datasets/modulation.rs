//! Synthetic digitally modulated carriers and the four envelope, phase and
//! frequency statistics used to tell the formats apart.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::mesh::C64;
use crate::rng::{substream, STREAM_DATA};

pub const MODFMT_FEATURES: [&str; 4] = ["gamma_max", "sigma_aa", "sigma_dp", "sigma_df"];

const MIN_SIGNAL_LEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "4ASK")]
    Ask4,
    #[serde(rename = "4FSK")]
    Fsk4,
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
}

impl Modulation {
    pub const ALL: [Modulation; 4] = [Self::Ask4, Self::Fsk4, Self::Bpsk, Self::Qpsk];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ask4 => "4ASK",
            Self::Fsk4 => "4FSK",
            Self::Bpsk => "BPSK",
            Self::Qpsk => "QPSK",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Synthesis constants. Frequencies are in cycles per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub symbols: usize,
    pub samples_per_symbol: usize,
    pub carrier: f64,
    pub fsk_spacing: f64,
    /// `None` leaves the signal noiseless.
    pub snr_db: Option<f64>,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            symbols: 128,
            samples_per_symbol: 16,
            carrier: 0.125,
            fsk_spacing: 0.008,
            snr_db: Some(20.0),
        }
    }
}

impl SignalConfig {
    pub fn len(&self) -> usize {
        self.symbols * self.samples_per_symbol
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            samples_per_symbol: self.samples_per_symbol as f64,
            ..FeatureConfig::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.symbols == 0 || self.samples_per_symbol == 0 {
            return Err(Error::invalid(
                "signal needs at least one symbol and one sample per symbol",
            ));
        }
        if !self.carrier.is_finite() || !self.fsk_spacing.is_finite() {
            return Err(Error::invalid("carrier and tone spacing must be finite"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::invalid(format!("SNR must be finite, got {snr}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Normalised-amplitude threshold separating weak samples.
    pub amplitude_threshold: f64,
    /// Inverse symbol rate used to normalise instantaneous frequency.
    pub samples_per_symbol: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            amplitude_threshold: 1.0,
            samples_per_symbol: 16.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationFeatures {
    pub gamma_max: f64,
    pub sigma_aa: f64,
    pub sigma_dp: f64,
    pub sigma_df: f64,
}

impl ModulationFeatures {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.gamma_max, self.sigma_aa, self.sigma_dp, self.sigma_df]
    }
}

fn synthesize(kind: Modulation, cfg: &SignalConfig, rng: &mut impl Rng) -> Vec<C64> {
    let sps = cfg.samples_per_symbol;
    let mut out = Vec::with_capacity(cfg.len());
    let mut fsk_phase = 0.0;
    for _ in 0..cfg.symbols {
        let (amp, phase, tone) = match kind {
            Modulation::Ask4 => (f64::from(rng.random_range(1..=4u8)) / 4.0, 0.0, 0.0),
            Modulation::Bpsk => (1.0, f64::from(rng.random_range(0..2u8)) * PI, 0.0),
            Modulation::Qpsk => (1.0, f64::from(2 * rng.random_range(0..4u8) + 1) * FRAC_PI_4, 0.0),
            Modulation::Fsk4 => {
                let k = [-3.0, -1.0, 1.0, 3.0][rng.random_range(0..4usize)];
                (1.0, 0.0, k * cfg.fsk_spacing)
            }
        };
        for _ in 0..sps {
            let n = out.len() as f64;
            out.push(C64::from_polar(amp, TAU * cfg.carrier * n + phase + fsk_phase));
            fsk_phase += TAU * tone;
        }
    }
    if let Some(snr_db) = cfg.snr_db {
        let power = out.iter().map(|z| z.norm_sqr()).sum::<f64>() / out.len() as f64;
        let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        for z in &mut out {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z += C64::new(sigma * re, sigma * im);
        }
    }
    out
}

/// `n / 4` complex baseband signals of each format in shuffled order.
pub fn gen_modulated_signals(n: usize, seed: u64, cfg: &SignalConfig) -> Result<Vec<(Vec<C64>, Modulation)>> {
    cfg.check()?;
    if !n.is_multiple_of(4) {
        return Err(Error::invalid(format!("signal count {n} must be divisible by 4")));
    }
    let mut kinds: Vec<Modulation> = Modulation::ALL
        .iter()
        .flat_map(|&k| std::iter::repeat_n(k, n / 4))
        .collect();
    kinds.shuffle(&mut substream(seed, STREAM_DATA, 2, 0));
    Ok(kinds
        .into_par_iter()
        .enumerate()
        .map(|(i, kind)| {
            (
                synthesize(kind, cfg, &mut substream(seed, STREAM_DATA, 3, i as u64)),
                kind,
            )
        })
        .collect())
}

/// Analytic signal of a real sequence: negative-frequency bins zeroed,
/// positive bins doubled, DC and Nyquist kept.
pub fn analytic_signal(x: &[f64]) -> Vec<C64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n.div_ceil(2);
    for z in &mut buf[1..half] {
        *z *= 2.0;
    }
    for z in &mut buf[n / 2 + 1..] {
        *z = C64::new(0.0, 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|z| z * scale).collect()
}

fn mean(x: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = x.len() as f64;
    x.sum::<f64>() / n
}

fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x.iter().copied());
    mean(x.iter().map(|v| (v - m).powi(2))).sqrt()
}

fn unwrap(phase: &mut [f64]) {
    let mut offset = 0.0;
    let mut prev = phase[0];
    for p in phase.iter_mut().skip(1) {
        let raw = *p;
        let mut d = raw - prev;
        if !(-PI..=PI).contains(&d) {
            d -= TAU * ((d + PI) / TAU).floor();
        }
        offset += d - (raw - prev);
        prev = raw;
        *p = raw + offset;
    }
}

fn wrap_pi(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Features of a complex baseband signal, whose instantaneous amplitude is
/// `|s(n)|`.
pub fn extract_features(signal: &[C64], cfg: &FeatureConfig) -> Result<ModulationFeatures> {
    let n = signal.len();
    if n < MIN_SIGNAL_LEN {
        return Err(Error::invalid(format!(
            "signal has {n} samples, at least {MIN_SIGNAL_LEN} required"
        )));
    }
    if signal.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("signal contains non-finite samples"));
    }
    let amp: Vec<f64> = signal.iter().map(|z| z.norm()).collect();
    let amp_mean = mean(amp.iter().copied());
    if amp_mean <= 0.0 {
        return Err(Error::invalid("signal is identically zero"));
    }
    let a_n: Vec<f64> = amp.iter().map(|a| a / amp_mean).collect();
    let a_cn: Vec<f64> = a_n.iter().map(|a| a - 1.0).collect();

    let mut spectrum: Vec<C64> = a_cn.iter().map(|&v| C64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut spectrum);
    let gamma_max = spectrum.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max) / n as f64;

    let abs_cn: Vec<f64> = a_cn.iter().map(|v| v.abs()).collect();
    let sigma_aa = std_dev(&abs_cn);

    // Unit-amplitude samples land on 1 ± rounding; the slack keeps them.
    let non_weak: Vec<bool> = a_n.iter().map(|&a| a > cfg.amplitude_threshold - 1e-9).collect();

    let mut phase: Vec<f64> = signal.iter().map(|z| z.arg()).collect();
    unwrap(&mut phase);

    let xm = (n as f64 - 1.0) / 2.0;
    let ym = mean(phase.iter().copied());
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, p) in phase.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (p - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let nonlinear: Vec<f64> = phase
        .iter()
        .enumerate()
        .zip(&non_weak)
        .filter(|(_, &keep)| keep)
        .map(|((i, p), _)| wrap_pi(p - ym - slope * (i as f64 - xm)))
        .collect();
    let sigma_dp = std_dev(&nonlinear);

    let freq: Vec<f64> = phase
        .windows(2)
        .zip(&non_weak)
        .filter(|(_, &keep)| keep)
        .map(|(w, _)| (w[1] - w[0]) / TAU)
        .collect();
    let sigma_df = if freq.is_empty() {
        0.0
    } else {
        std_dev(&freq) * cfg.samples_per_symbol
    };

    Ok(ModulationFeatures {
        gamma_max,
        sigma_aa,
        sigma_dp,
        sigma_df,
    })
}

/// Features of a real passband sequence via its analytic signal.
pub fn extract_features_real(signal: &[f64], cfg: &FeatureConfig) -> Result<ModulationFeatures> {
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("signal contains non-finite samples"));
    }
    extract_features(&analytic_signal(signal), cfg)
}

/// Unscaled feature table of `n` generated signals, one class per format.
pub fn gen_modfmt_dataset(n: usize, seed: u64, cfg: &SignalConfig) -> Result<Dataset> {
    let signals = gen_modulated_signals(n, seed, cfg)?;
    let fcfg = cfg.features();
    let rows = signals
        .par_iter()
        .map(|(s, kind)| extract_features(s, &fcfg).map(|f| (f.to_vec(), kind.index())))
        .collect::<Result<Vec<_>>>()?;
    let (features, labels) = rows.into_iter().unzip();
    Dataset::new(
        features,
        labels,
        Modulation::ALL.iter().map(|m| m.name().to_string()).collect(),
    )
}
