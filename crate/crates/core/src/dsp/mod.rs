//! Audio front end: WAV decoding, fixed-length clipping, Hann-window
//! spectrograms and the 32×25 model input image.

mod fft;
mod pgm;
mod resize;
mod stft;
mod wav;

use alloc::format;
use alloc::vec::Vec;

pub use pgm::spectrogram_to_pgm;
pub use resize::{resize_bilinear, resize_to_model_input, ModelInput, INPUT_COLS, INPUT_ROWS};
pub use stft::{hann_window, stft, Spectrogram, StftConfig, DB_EPSILON};
pub use wav::{decode_wav, encode_wav};

use crate::{Error, Result};

/// Sample rate every corpus file is generated at and required to have.
pub const CORPUS_SAMPLE_RATE: u32 = 16_000;

/// Mono waveform with amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcmSignal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl PcmSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::TooShort { needed: 1, available: 0 });
        }
        if let Some(i) = samples.iter().position(|s| !(s.abs() <= 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "sample {i} = {} outside [-1, 1]",
                samples[i]
            )));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

/// Cuts a signal into consecutive, non-overlapping clips of exactly
/// `clip_seconds`; a trailing partial clip is dropped.
pub fn clip_segments(signal: &PcmSignal, clip_seconds: u32) -> Result<Vec<PcmSignal>> {
    if !matches!(clip_seconds, 5 | 10) {
        return Err(Error::InvalidConfig(format!(
            "clip length must be 5 or 10 seconds, got {clip_seconds}"
        )));
    }
    let clip_len = clip_seconds as usize * signal.sample_rate_hz as usize;
    if signal.len() < clip_len {
        return Err(Error::TooShort { needed: clip_len, available: signal.len() });
    }
    Ok(signal
        .samples
        .chunks_exact(clip_len)
        .map(|chunk| PcmSignal { samples: chunk.to_vec(), sample_rate_hz: signal.sample_rate_hz })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seconds(s: f64) -> PcmSignal {
        let n = (s * 16_000.0) as usize;
        PcmSignal::new((0..n).map(|i| (i % 100) as f64 / 100.0).collect(), 16_000).unwrap()
    }

    #[test]
    fn clipping_drops_the_remainder() {
        let clips = clip_segments(&seconds(12.0), 5).unwrap();
        assert_eq!(clips.len(), 2);
        assert!(clips.iter().all(|c| c.len() == 80_000));
        assert_eq!(clips[1].samples()[0], seconds(12.0).samples()[80_000]);
    }

    #[test]
    fn exact_length_gives_one_clip() {
        assert_eq!(clip_segments(&seconds(5.0), 5).unwrap().len(), 1);
        assert_eq!(clip_segments(&seconds(20.0), 10).unwrap().len(), 2);
    }

    #[test]
    fn short_signal_is_rejected() {
        assert!(matches!(clip_segments(&seconds(3.0), 5), Err(Error::TooShort { .. })));
        assert!(matches!(clip_segments(&seconds(30.0), 7), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn signal_validation() {
        assert!(PcmSignal::new(vec![], 16_000).is_err());
        assert!(PcmSignal::new(vec![1.5], 16_000).is_err());
        assert!(PcmSignal::new(vec![f64::NAN], 16_000).is_err());
        assert!(PcmSignal::new(vec![0.1], 0).is_err());
        assert!(PcmSignal::new(vec![-1.0, 1.0], 8_000).is_ok());
    }
}
