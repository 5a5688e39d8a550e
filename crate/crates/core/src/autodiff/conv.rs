//! Valid (unpadded) strided 2-D cross-correlation over `[H, W, C]` tensors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{gemm, MatRef};
use crate::{Error, Result};

/// Geometry of one convolution: input `[h, w, cin]`, kernel `[kh, kw, cin, cout]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize) -> Result<Self> {
        let (&[h, w, cin], &[kh, kw, kcin, cout]) = (input, kernel) else {
            return Err(Error::ShapeMismatch(format!(
                "conv2d wants [H,W,C] input and [K,K,C,O] kernel, got {input:?} and {kernel:?}"
            )));
        };
        if kcin != cin {
            return Err(Error::ShapeMismatch(format!(
                "conv2d input has {cin} channels, kernel expects {kcin}"
            )));
        }
        if stride == 0 {
            return Err(Error::ShapeMismatch("conv2d stride must be >= 1".into()));
        }
        if h < kh || w < kw {
            return Err(Error::ShapeMismatch(format!(
                "conv2d input {h}x{w} smaller than kernel {kh}x{kw}"
            )));
        }
        Ok(Self { h, w, cin, kh, kw, cout, stride })
    }

    pub fn out_h(&self) -> usize {
        (self.h - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - self.kw) / self.stride + 1
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.out_h(), self.out_w(), self.cout]
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Lays out every receptive field as one row of a `[positions, kh·kw·cin]`
    /// matrix, in kernel order `(ky, kx, c)`.
    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let run = self.kw * self.cin;
        let plen = self.patch_len();
        let mut patches = vec![0.0; self.positions() * plen];
        for oy in 0..self.out_h() {
            for ox in 0..self.out_w() {
                let row = &mut patches[(oy * self.out_w() + ox) * plen..][..plen];
                for ky in 0..self.kh {
                    let src = ((oy * self.stride + ky) * self.w + ox * self.stride) * self.cin;
                    row[ky * run..(ky + 1) * run].copy_from_slice(&input[src..src + run]);
                }
            }
        }
        patches
    }

    fn col2im_add(&self, patches: &[f64], grad_input: &mut [f64]) {
        let run = self.kw * self.cin;
        let plen = self.patch_len();
        for oy in 0..self.out_h() {
            for ox in 0..self.out_w() {
                let row = &patches[(oy * self.out_w() + ox) * plen..][..plen];
                for ky in 0..self.kh {
                    let dst = ((oy * self.stride + ky) * self.w + ox * self.stride) * self.cin;
                    for (g, p) in grad_input[dst..dst + run].iter_mut().zip(&row[ky * run..]) {
                        *g += p;
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &[f64], kernel: &[f64]) -> Vec<f64> {
        let patches = self.im2col(input);
        let mut out = vec![0.0; self.positions() * self.cout];
        gemm(
            self.positions(),
            self.patch_len(),
            self.cout,
            MatRef::row_major(&patches, self.patch_len()),
            MatRef::row_major(kernel, self.cout),
            0.0,
            &mut out,
        );
        out
    }

    /// Gradients w.r.t. input and kernel; either may be skipped.
    pub fn backward(
        &self,
        input: &[f64],
        kernel: &[f64],
        grad_out: &[f64],
        want_input: bool,
        want_kernel: bool,
    ) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        let (p, k, n) = (self.positions(), self.patch_len(), self.cout);
        let grad_kernel = want_kernel.then(|| {
            let patches = self.im2col(input);
            let mut gk = vec![0.0; k * n];
            gemm(
                k,
                p,
                n,
                MatRef::transposed(&patches, k),
                MatRef::row_major(grad_out, n),
                0.0,
                &mut gk,
            );
            gk
        });
        let grad_input = want_input.then(|| {
            let mut gp = vec![0.0; p * k];
            gemm(
                p,
                n,
                k,
                MatRef::row_major(grad_out, n),
                MatRef::transposed(kernel, n),
                0.0,
                &mut gp,
            );
            let mut gi = vec![0.0; self.h * self.w * self.cin];
            self.col2im_add(&gp, &mut gi);
            gi
        });
        (grad_input, grad_kernel)
    }
}
