use alloc::format;
use alloc::vec::Vec;

use super::Spectrogram;
use crate::math::round;

/// Binary grey map (P5, maxval 255): one row per time frame, one column per
/// frequency bin. Decibels map linearly from `[floor_db, max]` to `[0, 255]`.
pub fn spectrogram_to_pgm(spec: &Spectrogram) -> Vec<u8> {
    let floor = spec.config.floor_db;
    let max = spec.magnitudes_db.iter().cloned().fold(floor, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", spec.n_bins(), spec.time_px).into_bytes();
    let range = max - floor;
    out.extend(spec.magnitudes_db.iter().map(|&db| {
        if range > 0.0 {
            round((db - floor) / range * 255.0).clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}
