//! Seeded synthetic "languages": harmonic tone complexes with a drifting
//! fundamental, shaped by formant-like resonances and a syllabic envelope.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{PcmSignal, CORPUS_SAMPLE_RATE};
use crate::math::{cos, round, sin, PI};
use crate::{Error, Result};

/// Peak amplitude of every generated clip.
pub const PEAK_AMPLITUDE: f64 = 0.9;

/// Shortest clip [`generate_clip`] accepts, in seconds.
pub const MIN_DURATION_SECONDS: f64 = 5.0;

/// Number of built-in signatures: five in-set classes and one held out.
pub const NUM_PRESETS: usize = 6;

/// Lorentzian spectral peak. A zero `gain` disables it.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Resonance {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub gain: f64,
}

impl Resonance {
    pub const fn new(center_hz: f64, bandwidth_hz: f64) -> Self {
        Self { center_hz, bandwidth_hz, gain: 1.0 }
    }

    fn response(&self, freq: f64) -> f64 {
        let x = (freq - self.center_hz) / (0.5 * self.bandwidth_hz);
        self.gain / (1.0 + x * x)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassSignature {
    pub class_id: usize,
    /// Fundamental frequency band `(low, high)` in Hz.
    pub f0_band_hz: (f64, f64),
    pub resonances: [Resonance; 3],
    /// Syllabic amplitude modulation rate in Hz.
    pub am_rate_hz: f64,
    /// Standard deviation of additive white noise before peak normalization,
    /// relative to a unit-amplitude harmonic.
    pub noise_level: f64,
}

/// f0 band, resonance centres, resonance bandwidths, AM rate, noise level.
type PresetRow = ([f64; 2], [f64; 3], [f64; 3], f64, f64);

const PRESETS: [PresetRow; NUM_PRESETS] = [
    ([100.0, 140.0], [500.0, 1500.0, 2500.0], [160.0, 200.0, 260.0], 1.0, 0.02),
    ([180.0, 240.0], [800.0, 2200.0, 3400.0], [180.0, 220.0, 300.0], 1.6, 0.03),
    ([120.0, 160.0], [1200.0, 3000.0, 5000.0], [200.0, 260.0, 340.0], 2.2, 0.02),
    ([220.0, 280.0], [350.0, 1800.0, 4200.0], [140.0, 220.0, 320.0], 0.7, 0.04),
    ([150.0, 200.0], [650.0, 2800.0, 6000.0], [160.0, 240.0, 400.0], 1.3, 0.03),
    ([260.0, 320.0], [1000.0, 4000.0, 6800.0], [200.0, 300.0, 400.0], 1.9, 0.03),
];

impl ClassSignature {
    /// Built-in signature `id < NUM_PRESETS`; ids 0..5 form the default
    /// in-set classes and 5 is the held-out class.
    pub fn preset(id: usize) -> Result<Self> {
        let &(f0, centers, bandwidths, am, noise) = PRESETS
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("no preset signature {id}")))?;
        Ok(Self {
            class_id: id,
            f0_band_hz: (f0[0], f0[1]),
            resonances: core::array::from_fn(|k| Resonance::new(centers[k], bandwidths[k])),
            am_rate_hz: am,
            noise_level: noise,
        })
    }

    pub fn presets() -> Vec<Self> {
        (0..NUM_PRESETS).map(|id| Self::preset(id).expect("preset id in range")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = f64::from(CORPUS_SAMPLE_RATE) / 2.0;
        let (lo, hi) = self.f0_band_hz;
        let bad = |what: &str| Err(Error::InvalidConfig(format!("signature {}: {what}", self.class_id)));
        if !(lo > 0.0 && lo <= hi && hi < nyquist) {
            return bad("f0 band must satisfy 0 < low ≤ high < Nyquist");
        }
        for r in &self.resonances {
            if !(r.center_hz > 0.0 && r.center_hz < nyquist && r.bandwidth_hz > 0.0 && r.gain >= 0.0) {
                return bad("resonance out of range");
            }
        }
        if self.resonances.iter().all(|r| r.gain == 0.0) {
            return bad("at least one resonance needs a positive gain");
        }
        if !(self.am_rate_hz >= 0.0 && self.am_rate_hz < nyquist) || !(self.noise_level >= 0.0) {
            return bad("modulation rate or noise level out of range");
        }
        Ok(())
    }

    /// Number of the parameters (f0 band, each resonance, AM rate, noise
    /// level) in which two signatures differ.
    pub fn differing_parameters(&self, other: &Self) -> usize {
        let mut n = usize::from(self.f0_band_hz != other.f0_band_hz);
        n += self.resonances.iter().zip(&other.resonances).filter(|(a, b)| a != b).count();
        n + usize::from(self.am_rate_hz != other.am_rate_hz) + usize::from(self.noise_level != other.noise_level)
    }

    fn gain_at(&self, freq: f64) -> f64 {
        self.resonances.iter().map(|r| r.response(freq)).sum()
    }
}

const GAIN_BLOCK: usize = 32;
const MAX_PARTIAL_HZ: f64 = 7800.0;

/// Renders `duration_s` seconds at the corpus sample rate.
///
/// The fundamental sweeps its band sinusoidally, every harmonic below
/// 7.8 kHz is weighted by the summed resonance response at its current
/// frequency, the sum is multiplied by a raised-cosine syllabic envelope and
/// white noise is added. The result is scaled so its peak is exactly
/// [`PEAK_AMPLITUDE`]. The output is a pure function of its arguments.
pub fn generate_clip(signature: &ClassSignature, duration_s: f64, seed: u64) -> Result<PcmSignal> {
    signature.validate()?;
    if !(duration_s >= MIN_DURATION_SECONDS) {
        return Err(Error::InvalidConfig(format!(
            "clip duration {duration_s} s is below {MIN_DURATION_SECONDS} s"
        )));
    }
    let sr = f64::from(CORPUS_SAMPLE_RATE);
    let n = round(duration_s * sr) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (lo, hi) = signature.f0_band_hz;
    let f0_mid = 0.5 * (lo + hi);
    let f0_swing = 0.5 * (hi - lo);
    let drift_rate = rng.gen_range(0.15..0.45);
    let drift_phase = rng.gen_range(0.0..2.0 * PI);
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let max_harmonics = (MAX_PARTIAL_HZ / lo) as usize;

    let mut out = vec![0.0; n];
    let mut gains = vec![0.0; max_harmonics + 1];
    let mut theta = rng.gen_range(0.0..2.0 * PI);
    for (i, sample) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let f0 = f0_mid + f0_swing * sin(2.0 * PI * drift_rate * t + drift_phase);
        if i % GAIN_BLOCK == 0 {
            for (h, g) in gains.iter_mut().enumerate().skip(1) {
                let f = h as f64 * f0;
                *g = if f < MAX_PARTIAL_HZ { signature.gain_at(f) } else { 0.0 };
            }
        }
        theta += 2.0 * PI * f0 / sr;
        if theta > 2.0 * PI {
            theta -= 2.0 * PI;
        }
        // sin(hθ) by the recurrence sin((h+1)θ) = 2cosθ·sin(hθ) − sin((h−1)θ)
        let (s1, c1) = (sin(theta), cos(theta));
        let (mut prev, mut cur) = (0.0, s1);
        let mut acc = 0.0;
        for &g in &gains[1..] {
            acc += g * cur;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        let envelope = 0.25 + 0.75 * (0.5 - 0.5 * cos(2.0 * PI * signature.am_rate_hz * t + am_phase));
        *sample = envelope * acc;
    }
    if signature.noise_level > 0.0 {
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += signature.noise_level * z;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = PEAK_AMPLITUDE / peak;
        out.iter_mut().for_each(|v| *v *= scale);
    }
    PcmSignal::new(out, CORPUS_SAMPLE_RATE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_pairwise_distinct() {
        let all = ClassSignature::presets();
        for (i, a) in all.iter().enumerate() {
            a.validate().unwrap();
            for b in &all[i + 1..] {
                assert!(a.differing_parameters(b) >= 2);
            }
        }
        assert!(ClassSignature::preset(NUM_PRESETS).is_err());
    }

    #[test]
    fn short_duration_rejected() {
        let sig = ClassSignature::preset(0).unwrap();
        assert!(generate_clip(&sig, 4.99, 1).is_err());
    }

    #[test]
    fn clip_is_peak_normalized() {
        let sig = ClassSignature::preset(2).unwrap();
        let clip = generate_clip(&sig, 5.0, 3).unwrap();
        assert_eq!(clip.len(), 80_000);
        let peak = clip.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - PEAK_AMPLITUDE).abs() < 1e-12);
    }
}
