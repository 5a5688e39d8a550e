//! Magnitude spectrum of a real frame: iterative radix-2 FFT for power-of-two
//! sizes, direct DFT otherwise.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{cos, sin, sqrt, PI};

pub(crate) struct FftPlan {
    size: usize,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
}

impl FftPlan {
    pub fn new(size: usize) -> Self {
        let (cos_table, sin_table) = (0..size)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / size as f64;
                (cos(a), sin(a))
            })
            .unzip();
        Self { size, cos_table, sin_table }
    }

    /// `|X[k]|` for `k < n_bins`, where `X` is the DFT of `frame`.
    pub fn magnitudes(&self, frame: &[f64], n_bins: usize) -> Vec<f64> {
        debug_assert_eq!(frame.len(), self.size);
        let (re, im) = if self.size.is_power_of_two() {
            self.radix2(frame)
        } else {
            self.direct(frame, n_bins)
        };
        (0..n_bins).map(|k| sqrt(re[k] * re[k] + im[k] * im[k])).collect()
    }

    fn direct(&self, frame: &[f64], n_bins: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.size;
        let mut re = vec![0.0; n_bins];
        let mut im = vec![0.0; n_bins];
        for k in 0..n_bins {
            for (t, &x) in frame.iter().enumerate() {
                let idx = (k * t) % n;
                re[k] += x * self.cos_table[idx];
                im[k] += x * self.sin_table[idx];
            }
        }
        (re, im)
    }

    fn radix2(&self, frame: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.size;
        let mut re = frame.to_vec();
        let mut im = vec![0.0; n];
        let bits = n.trailing_zeros();
        if bits > 0 {
            for i in 0..n {
                let j = i.reverse_bits() >> (usize::BITS - bits);
                if j > i {
                    re.swap(i, j);
                }
            }
        }
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let (wr, wi) = (self.cos_table[k * stride], self.sin_table[k * stride]);
                    let (a, b) = (start + k, start + k + len / 2);
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len *= 2;
        }
        (re, im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radix2_agrees_with_direct_dft() {
        let frame: Vec<f64> = (0..64).map(|i| sin(i as f64 * 0.37) + 0.2 * cos(i as f64 * 1.3)).collect();
        let plan = FftPlan::new(64);
        let fast = plan.magnitudes(&frame, 33);
        let (re, im) = plan.direct(&frame, 33);
        for k in 0..33 {
            let slow = sqrt(re[k] * re[k] + im[k] * im[k]);
            assert!((fast[k] - slow).abs() < 1e-10, "bin {k}: {} vs {slow}", fast[k]);
        }
    }
}
