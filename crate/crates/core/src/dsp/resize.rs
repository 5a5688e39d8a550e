use alloc::format;
use alloc::vec::Vec;

use super::Spectrogram;
use crate::math::floor;
use crate::{Error, Result, Tensor};

pub const INPUT_ROWS: usize = 32;
pub const INPUT_COLS: usize = 25;

/// The network's input: a 32×25 image with values in `[0, 1]`, row-major.
/// Rows run along time, columns along frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pixels: Vec<f64>,
}

impl ModelInput {
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != INPUT_ROWS * INPUT_COLS {
            return Err(Error::ShapeMismatch(format!(
                "model input needs {} pixels, got {}",
                INPUT_ROWS * INPUT_COLS,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("model input pixels must lie in [0, 1]".into()));
        }
        Ok(Self { pixels })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * INPUT_COLS + col]
    }

    /// `[32, 25, 1]` tensor view for the convolutional stem.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(alloc::vec![INPUT_ROWS, INPUT_COLS, 1], self.pixels.clone())
    }
}

/// Source coordinate and blend weight for destination index `dst` under
/// half-pixel-center alignment, clamped at the borders.
fn source_coord(dst: usize, scale: f64, src_len: usize) -> (usize, usize, f64) {
    let pos = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (floor(pos) as usize).min(src_len - 1);
    let hi = (lo + 1).min(src_len - 1);
    let frac = if lo == hi { 0.0 } else { pos - lo as f64 };
    (lo, hi, frac)
}

/// Bilinear resize of a row-major grid with half-pixel-center alignment.
pub fn resize_bilinear(src: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    assert_eq!(src.len(), rows * cols, "source grid size");
    let sy = rows as f64 / out_rows as f64;
    let sx = cols as f64 / out_cols as f64;
    let col_coords: Vec<_> = (0..out_cols).map(|x| source_coord(x, sx, cols)).collect();
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for y in 0..out_rows {
        let (y0, y1, fy) = source_coord(y, sy, rows);
        for &(x0, x1, fx) in &col_coords {
            let top = src[y0 * cols + x0] * (1.0 - fx) + src[y0 * cols + x1] * fx;
            let bottom = src[y1 * cols + x0] * (1.0 - fx) + src[y1 * cols + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Resizes a spectrogram to 32×25 and min-max normalizes it to `[0, 1]`.
/// A constant image maps to 0.5 everywhere.
pub fn resize_to_model_input(spec: &Spectrogram) -> ModelInput {
    let mut pixels = resize_bilinear(&spec.magnitudes_db, spec.time_px, spec.n_bins(), INPUT_ROWS, INPUT_COLS);
    let (lo, hi) = pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        let range = hi - lo;
        pixels.iter_mut().for_each(|v| *v = ((*v - lo) / range).clamp(0.0, 1.0));
    } else {
        pixels.iter_mut().for_each(|v| *v = 0.5);
    }
    ModelInput { pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::StftConfig;
    use alloc::vec;

    fn spec_from(grid: Vec<f64>, rows: usize, cols: usize) -> Spectrogram {
        Spectrogram {
            magnitudes_db: grid,
            time_px: rows,
            config: StftConfig { n_bins: cols, pps: 10, floor_db: -80.0 },
        }
    }

    #[test]
    fn identity_geometry_passes_values_through() {
        let grid: Vec<f64> = (0..800).map(|i| ((i * 7919) % 800) as f64).collect();
        assert_eq!(resize_bilinear(&grid, 32, 25, 32, 25), grid);
        let input = resize_to_model_input(&spec_from(grid.clone(), 32, 25));
        for (p, g) in input.pixels().iter().zip(&grid) {
            assert!((p - g / 799.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_grid_maps_to_half() {
        let input = resize_to_model_input(&spec_from(vec![-12.5; 50 * 64], 50, 64));
        assert!(input.pixels().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn two_by_two_upsample_matches_formula() {
        // Oracle: explicit half-pixel-center bilinear evaluation with clamping.
        let src = [0.0, 1.0, 0.0, 1.0];
        let out = resize_bilinear(&src, 2, 2, 4, 5);
        for y in 0..4 {
            for x in 0..5 {
                let sx: f64 = ((x as f64 + 0.5) * (2.0 / 5.0) - 0.5).clamp(0.0, 1.0);
                let sy: f64 = ((y as f64 + 0.5) * (2.0 / 4.0) - 0.5).clamp(0.0, 1.0);
                let f = |r: usize, c: usize| src[r * 2 + c];
                let want = (1.0 - sy) * ((1.0 - sx) * f(0, 0) + sx * f(0, 1))
                    + sy * ((1.0 - sx) * f(1, 0) + sx * f(1, 1));
                assert!((out[y * 5 + x] - want).abs() < 1e-15, "({y},{x})");
            }
        }
        // columns at the clamped border equal the source values
        assert_eq!(out[0], 0.0);
        assert_eq!(out[4], 1.0);
    }

    #[test]
    fn model_input_validation() {
        assert!(ModelInput::new(vec![0.5; 799]).is_err());
        assert!(ModelInput::new(vec![1.5; 800]).is_err());
        let m = ModelInput::new(vec![0.25; 800]).unwrap();
        assert_eq!(m.to_tensor().shape(), &[32, 25, 1]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn resize_stays_within_source_bounds(
                (rows, cols, grid) in (1usize..60, 1usize..70).prop_flat_map(|(r, c)| {
                    (Just(r), Just(c), prop::collection::vec(-50.0f64..50.0, r * c))
                }),
            ) {
                let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let out = resize_bilinear(&grid, rows, cols, INPUT_ROWS, INPUT_COLS);
                for v in out {
                    prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }
}
