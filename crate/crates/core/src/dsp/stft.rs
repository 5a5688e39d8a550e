use alloc::format;
use alloc::vec::Vec;

use super::fft::FftPlan;
use super::PcmSignal;
use crate::math::{cos, log10, PI};
use crate::{Error, Result};

/// Added to magnitudes before taking the logarithm.
pub const DB_EPSILON: f64 = 1e-10;

/// Spectrogram discretization: frequency bins, horizontal pixel rate and the
/// decibel floor. The FFT size is `2·(n_bins − 1)` and the hop is
/// `sample_rate / pps` samples.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StftConfig {
    pub n_bins: usize,
    pub pps: u32,
    pub floor_db: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::five_second_clips()
    }
}

impl StftConfig {
    /// 64 bins at 10 px/s: a 5 s clip becomes a 50×64 image.
    pub fn five_second_clips() -> Self {
        Self { n_bins: 64, pps: 10, floor_db: -80.0 }
    }

    /// 129 bins at 50 px/s: a 10 s clip becomes a 500×129 image.
    pub fn ten_second_clips() -> Self {
        Self { n_bins: 129, pps: 50, floor_db: -80.0 }
    }

    pub fn fft_size(&self) -> usize {
        2 * (self.n_bins - 1)
    }

    pub fn hop_samples(&self, sample_rate_hz: u32) -> usize {
        (sample_rate_hz / self.pps) as usize
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::InvalidConfig(format!("n_bins must be >= 2, got {}", self.n_bins)));
        }
        if self.pps == 0 || self.hop_samples(sample_rate_hz) == 0 {
            return Err(Error::InvalidConfig(format!(
                "pps {} gives no whole-sample hop at {sample_rate_hz} Hz",
                self.pps
            )));
        }
        if !self.floor_db.is_finite() {
            return Err(Error::InvalidConfig("floor_db must be finite".into()));
        }
        Ok(())
    }

    /// Number of frames for a signal of `n_samples`.
    pub fn frames(&self, n_samples: usize, sample_rate_hz: u32) -> usize {
        if n_samples < self.fft_size() {
            0
        } else {
            (n_samples - self.fft_size()) / self.hop_samples(sample_rate_hz) + 1
        }
    }
}

/// Log-magnitude spectrogram stored `[time_px × n_bins]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub magnitudes_db: Vec<f64>,
    pub time_px: usize,
    pub config: StftConfig,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.config.n_bins
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes_db[t * self.n_bins()..(t + 1) * self.n_bins()]
    }
}

/// Periodic Hann window `w[n] = 0.5·(1 − cos(2πn/N))`.
pub fn hann_window(size: usize) -> Vec<f64> {
    (0..size)
        .map(|n| 0.5 * (1.0 - cos(2.0 * PI * n as f64 / size as f64)))
        .collect()
}

/// Short-time Fourier transform in decibels: frame `t` starts at sample
/// `t·hop`, is Hann-windowed, and its magnitude spectrum becomes
/// `max(20·log10(|X| + ε), floor_db)`.
pub fn stft(signal: &PcmSignal, config: &StftConfig) -> Result<Spectrogram> {
    config.validate(signal.sample_rate_hz())?;
    let fft_size = config.fft_size();
    if signal.len() < fft_size {
        return Err(Error::TooShort { needed: fft_size, available: signal.len() });
    }
    let hop = config.hop_samples(signal.sample_rate_hz());
    let time_px = config.frames(signal.len(), signal.sample_rate_hz());
    let window = hann_window(fft_size);
    let plan = FftPlan::new(fft_size);

    let mut magnitudes_db = Vec::with_capacity(time_px * config.n_bins);
    let mut frame = alloc::vec![0.0; fft_size];
    for t in 0..time_px {
        let src = &signal.samples()[t * hop..t * hop + fft_size];
        for ((f, s), w) in frame.iter_mut().zip(src).zip(&window) {
            *f = s * w;
        }
        magnitudes_db.extend(
            plan.magnitudes(&frame, config.n_bins)
                .into_iter()
                .map(|m| (20.0 * log10(m + DB_EPSILON)).max(config.floor_db)),
        );
    }
    Ok(Spectrogram { magnitudes_db, time_px, config: *config })
}
