//! RIFF/WAVE, PCM signed 16-bit little-endian, mono.

use alloc::format;
use alloc::vec::Vec;

use super::PcmSignal;
use crate::{Error, Result};

const PCM_FORMAT: u16 = 1;

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn malformed(msg: &str) -> Error {
    Error::MalformedWav(msg.into())
}

/// Decodes a mono 16-bit PCM WAV file; samples are scaled by 1/32768.
pub fn decode_wav(bytes: &[u8]) -> Result<PcmSignal> {
    if bytes.len() < 12 {
        return Err(malformed("file shorter than the RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE signature"));
    }

    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).ok_or_else(|| malformed("chunk size overflow"))?;
        match id {
            b"fmt " => {
                if size < 16 || end > bytes.len() {
                    return Err(malformed("truncated fmt chunk"));
                }
                format = Some((
                    read_u16(bytes, body),
                    read_u16(bytes, body + 2),
                    read_u32(bytes, body + 4),
                    read_u16(bytes, body + 14),
                ));
            }
            b"data" => {
                let (tag, channels, rate, bits) = format.ok_or_else(|| malformed("data chunk before fmt chunk"))?;
                if tag != PCM_FORMAT || bits != 16 {
                    return Err(Error::UnsupportedFormat(format!(
                        "format tag {tag} with {bits} bits per sample (need PCM 16-bit)"
                    )));
                }
                if channels != 1 {
                    return Err(Error::UnsupportedFormat(format!("{channels} channels (need mono)")));
                }
                if end > bytes.len() {
                    return Err(malformed("data chunk truncated"));
                }
                if !size.is_multiple_of(2) {
                    return Err(malformed("data chunk has an odd byte count"));
                }
                let samples: Vec<f64> = bytes[body..end]
                    .chunks_exact(2)
                    .map(|b| f64::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0)
                    .collect();
                if samples.is_empty() {
                    return Err(malformed("no samples"));
                }
                return PcmSignal::new(samples, rate).map_err(|e| Error::MalformedWav(format!("{e}")));
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = end + (size & 1);
    }
    Err(malformed(if format.is_some() { "missing data chunk" } else { "missing fmt chunk" }))
}

/// Encodes as mono 16-bit PCM. Samples map to `round(x · 32768)` clamped to
/// the i16 range, so decoding is accurate to within 1/32768.
pub fn encode_wav(signal: &PcmSignal) -> Vec<u8> {
    let data_len = signal.len() * 2;
    let rate = signal.sample_rate_hz();
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in signal.samples() {
        let q = crate::math::round(s * 32768.0).clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn wav_bytes(channels: u16, format: u16, bits: u16, samples: &[i16]) -> Vec<u8> {
        let data_len = samples.len() * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&16_000u32.to_le_bytes());
        out.extend_from_slice(&(16_000u32 * 2 * u32::from(channels)).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn decodes_linear_scaling() {
        let sig = decode_wav(&wav_bytes(1, 1, 16, &[0, 16384, -16384])).unwrap();
        assert_eq!(sig.samples(), &[0.0, 0.5, -0.5]);
        assert_eq!(sig.sample_rate_hz(), 16_000);
    }

    #[test]
    fn stereo_is_unsupported() {
        let err = decode_wav(&wav_bytes(2, 1, 16, &[0, 1, 2, 3])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)), "{err:?}");
        let err = decode_wav(&wav_bytes(1, 3, 16, &[0, 1])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
        let err = decode_wav(&wav_bytes(1, 1, 8, &[0, 1])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }

    #[test]
    fn truncated_header_is_malformed() {
        let bytes = wav_bytes(1, 1, 16, &[1, 2, 3]);
        assert!(matches!(decode_wav(&bytes[..10]), Err(Error::MalformedWav(_))));
        assert!(matches!(decode_wav(&bytes[..30]), Err(Error::MalformedWav(_))));
        // data chunk claims more bytes than present
        assert!(matches!(decode_wav(&bytes[..bytes.len() - 1]), Err(Error::MalformedWav(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_wav(&bad), Err(Error::MalformedWav(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let plain = wav_bytes(1, 1, 16, &[100, -100]);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]); // odd size plus pad byte
        bytes.extend_from_slice(&plain[36..]);
        let sig = decode_wav(&bytes).unwrap();
        assert_eq!(sig.samples(), &[100.0 / 32768.0, -100.0 / 32768.0]);
    }

    #[test]
    fn encode_decode_error_is_within_one_lsb() {
        let samples = vec![0.0, 1.0, -1.0, 0.123_456, -0.999_99, 0.5];
        let sig = PcmSignal::new(samples.clone(), 16_000).unwrap();
        let back = decode_wav(&encode_wav(&sig)).unwrap();
        for (a, b) in samples.iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
