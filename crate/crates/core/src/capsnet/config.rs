use alloc::format;

use crate::{Error, Result};

/// Layer sizes of the capsule network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CapsNetConfig {
    pub input_rows: usize,
    pub input_cols: usize,
    pub kernel_size: usize,
    pub conv1_channels: usize,
    pub primary_banks: usize,
    pub primary_dim: usize,
    pub primary_stride: usize,
    pub mid_caps: usize,
    pub mid_dim: usize,
    pub lang_caps: usize,
    pub lang_dim: usize,
    pub decoder_hidden: [usize; 2],
    pub routing_iterations: usize,
}

impl Default for CapsNetConfig {
    /// Full size: 128 stem kernels of 9×9, 1280 primary capsules of dim 8
    /// (32 banks on an 8×5 grid), 32 MidCaps of dim 8, 5 LangCaps of dim 16,
    /// decoder 16→512→1024→800, 3 routing iterations.
    fn default() -> Self {
        Self {
            input_rows: 32,
            input_cols: 25,
            kernel_size: 9,
            conv1_channels: 128,
            primary_banks: 32,
            primary_dim: 8,
            primary_stride: 2,
            mid_caps: 32,
            mid_dim: 8,
            lang_caps: 5,
            lang_dim: 16,
            decoder_hidden: [512, 1024],
            routing_iterations: 3,
        }
    }
}

impl CapsNetConfig {
    /// Small variant for gradient checks: 8 stem kernels, 4 primary banks,
    /// 8 MidCaps, 5 LangCaps of dim 8.
    pub fn reduced() -> Self {
        Self {
            conv1_channels: 8,
            primary_banks: 4,
            mid_caps: 8,
            lang_dim: 8,
            decoder_hidden: [24, 48],
            ..Self::default()
        }
    }

    pub fn conv1_out(&self) -> (usize, usize) {
        (
            self.input_rows - self.kernel_size + 1,
            self.input_cols - self.kernel_size + 1,
        )
    }

    /// Spatial grid of the primary capsule convolution.
    pub fn primary_grid(&self) -> (usize, usize) {
        let (h, w) = self.conv1_out();
        (
            (h - self.kernel_size) / self.primary_stride + 1,
            (w - self.kernel_size) / self.primary_stride + 1,
        )
    }

    pub fn num_primary_caps(&self) -> usize {
        let (h, w) = self.primary_grid();
        h * w * self.primary_banks
    }

    pub fn input_pixels(&self) -> usize {
        self.input_rows * self.input_cols
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.input_rows,
            self.input_cols,
            self.kernel_size,
            self.conv1_channels,
            self.primary_banks,
            self.primary_dim,
            self.primary_stride,
            self.mid_caps,
            self.mid_dim,
            self.lang_caps,
            self.lang_dim,
            self.decoder_hidden[0],
            self.decoder_hidden[1],
            self.routing_iterations,
        ];
        if positive.contains(&0) {
            return Err(Error::InvalidConfig(format!("every layer size must be positive: {self:?}")));
        }
        let (h, w) = (
            self.input_rows.checked_sub(self.kernel_size - 1),
            self.input_cols.checked_sub(self.kernel_size - 1),
        );
        match (h, w) {
            (Some(h), Some(w)) if h >= self.kernel_size && w >= self.kernel_size => Ok(()),
            _ => Err(Error::InvalidConfig(format!(
                "input {}x{} too small for two {}x{} convolutions",
                self.input_rows, self.input_cols, self.kernel_size, self.kernel_size
            ))),
        }
    }
}
