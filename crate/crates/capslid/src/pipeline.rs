//! WAV file → spectrogram → model input.

use std::path::Path;

use capslid_core::dsp::{clip_segments, decode_wav, resize_to_model_input, stft, ModelInput, PcmSignal, StftConfig};

use crate::error::{io_err, CapslidError, Result};

pub fn read_wav(path: &Path) -> Result<PcmSignal> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(decode_wav(&bytes)?)
}

/// Reads a WAV file and insists on the given sample rate.
pub fn read_wav_at(path: &Path, sample_rate_hz: u32) -> Result<PcmSignal> {
    let signal = read_wav(path)?;
    if signal.sample_rate_hz() != sample_rate_hz {
        return Err(CapslidError::SampleRate {
            path: path.to_owned(),
            expected: sample_rate_hz,
            found: signal.sample_rate_hz(),
        });
    }
    Ok(signal)
}

/// Spectrogram image of a signal of exactly one clip length (longer input
/// is truncated to its first clip).
pub fn signal_to_input(signal: &PcmSignal, clip_seconds: u32, config: &StftConfig) -> Result<ModelInput> {
    let first = clip_segments(signal, clip_seconds)?.into_iter().next().expect("at least one clip");
    Ok(resize_to_model_input(&stft(&first, config)?))
}

/// One model input per consecutive clip of `signal`.
pub fn clip_inputs(signal: &PcmSignal, clip_seconds: u32, config: &StftConfig) -> Result<Vec<ModelInput>> {
    clip_segments(signal, clip_seconds)?
        .iter()
        .map(|clip| Ok(resize_to_model_input(&stft(clip, config)?)))
        .collect()
}

/// Spectrogram preset matching a clip length (5 s or 10 s).
pub fn stft_for_clip(clip_seconds: u32) -> Result<StftConfig> {
    match clip_seconds {
        5 => Ok(StftConfig::five_second_clips()),
        10 => Ok(StftConfig::ten_second_clips()),
        other => Err(capslid_core::Error::InvalidConfig(format!("clip length must be 5 or 10 s, got {other}")).into()),
    }
}
