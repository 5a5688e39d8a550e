use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::CapsNetConfig;
use crate::math::sqrt;
use crate::{Error, Result, Tensor};

/// Position of each learnable tensor inside [`ModelParams`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamSlot {
    Conv1Weight,
    Conv1Bias,
    PrimaryWeight,
    PrimaryBias,
    MidTransform,
    LangTransform,
    Decoder1Weight,
    Decoder1Bias,
    Decoder2Weight,
    Decoder2Bias,
    Decoder3Weight,
    Decoder3Bias,
}

impl ParamSlot {
    pub const ALL: [ParamSlot; 12] = [
        ParamSlot::Conv1Weight,
        ParamSlot::Conv1Bias,
        ParamSlot::PrimaryWeight,
        ParamSlot::PrimaryBias,
        ParamSlot::MidTransform,
        ParamSlot::LangTransform,
        ParamSlot::Decoder1Weight,
        ParamSlot::Decoder1Bias,
        ParamSlot::Decoder2Weight,
        ParamSlot::Decoder2Bias,
        ParamSlot::Decoder3Weight,
        ParamSlot::Decoder3Bias,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamSlot::Conv1Weight => "conv1.weight",
            ParamSlot::Conv1Bias => "conv1.bias",
            ParamSlot::PrimaryWeight => "primary.weight",
            ParamSlot::PrimaryBias => "primary.bias",
            ParamSlot::MidTransform => "mid.transform",
            ParamSlot::LangTransform => "lang.transform",
            ParamSlot::Decoder1Weight => "decoder.fc1.weight",
            ParamSlot::Decoder1Bias => "decoder.fc1.bias",
            ParamSlot::Decoder2Weight => "decoder.fc2.weight",
            ParamSlot::Decoder2Bias => "decoder.fc2.bias",
            ParamSlot::Decoder3Weight => "decoder.fc3.weight",
            ParamSlot::Decoder3Bias => "decoder.fc3.bias",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn shape(self, c: &CapsNetConfig) -> Vec<usize> {
        let k = c.kernel_size;
        let primary_channels = c.primary_banks * c.primary_dim;
        let [h1, h2] = c.decoder_hidden;
        match self {
            ParamSlot::Conv1Weight => vec![k, k, 1, c.conv1_channels],
            ParamSlot::Conv1Bias => vec![c.conv1_channels],
            ParamSlot::PrimaryWeight => vec![k, k, c.conv1_channels, primary_channels],
            ParamSlot::PrimaryBias => vec![primary_channels],
            ParamSlot::MidTransform => vec![c.num_primary_caps(), c.mid_caps, c.mid_dim, c.primary_dim],
            ParamSlot::LangTransform => vec![c.mid_caps, c.lang_caps, c.lang_dim, c.mid_dim],
            ParamSlot::Decoder1Weight => vec![c.lang_dim, h1],
            ParamSlot::Decoder1Bias => vec![h1],
            ParamSlot::Decoder2Weight => vec![h1, h2],
            ParamSlot::Decoder2Bias => vec![h2],
            ParamSlot::Decoder3Weight => vec![h2, c.input_pixels()],
            ParamSlot::Decoder3Bias => vec![c.input_pixels()],
        }
    }
}

/// Every learnable tensor of encoder and decoder, indexed by [`ParamSlot`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: CapsNetConfig,
    tensors: Vec<Tensor>,
}

fn routing_init_std(shape: &[usize]) -> f64 {
    shape[1] as f64 / sqrt((shape[0] * shape[2]) as f64)
}

impl ModelParams {
    /// Seeded initialization with zero biases.
    ///
    /// Convolution kernels are uniform in `±sqrt(6/fan_in)` and decoder
    /// weights uniform in `±sqrt(6/(fan_in+fan_out))`. A routing transform
    /// `[I, J, D_out, D_in]` is normal with std `J / sqrt(I·D_out)`, which keeps
    /// the uniform-coupling weighted sum near the norm of its children.
    /// Smaller scales collapse through the chained squash nonlinearities.
    pub fn init(config: CapsNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = ParamSlot::ALL
            .iter()
            .map(|&slot| {
                let shape = slot.shape(&config);
                let mut uniform = |limit: f64| {
                    let dist = Uniform::new_inclusive(-limit, limit);
                    Tensor::from_fn(&shape, |_| dist.sample(&mut rng))
                };
                match slot {
                    ParamSlot::Conv1Weight | ParamSlot::PrimaryWeight => {
                        uniform(sqrt(6.0 / (shape[0] * shape[1] * shape[2]) as f64))
                    }
                    ParamSlot::Decoder1Weight | ParamSlot::Decoder2Weight | ParamSlot::Decoder3Weight => {
                        uniform(sqrt(6.0 / (shape[0] + shape[1]) as f64))
                    }
                    ParamSlot::MidTransform | ParamSlot::LangTransform => {
                        let std = routing_init_std(&shape);
                        let normal = Normal::new(0.0, std).expect("valid std");
                        Tensor::from_fn(&shape, |_| normal.sample(&mut rng))
                    }
                    _ => Tensor::zeros(&shape),
                }
            })
            .collect();
        Ok(Self { config, tensors })
    }

    pub fn zeros(config: CapsNetConfig) -> Result<Self> {
        config.validate()?;
        let tensors = ParamSlot::ALL.iter().map(|s| Tensor::zeros(&s.shape(&config))).collect();
        Ok(Self { config, tensors })
    }

    /// Assembles parameters from tensors in [`ParamSlot::ALL`] order.
    pub fn from_tensors(config: CapsNetConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        if tensors.len() != ParamSlot::ALL.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                ParamSlot::ALL.len(),
                tensors.len()
            )));
        }
        for (slot, t) in ParamSlot::ALL.iter().zip(&tensors) {
            t.expect_shape(&slot.shape(&config))
                .map_err(|e| Error::ShapeMismatch(format!("{}: {e}", slot.name())))?;
            if !t.is_finite() {
                return Err(Error::NonFinite(slot.name().into()));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &CapsNetConfig {
        &self.config
    }

    pub fn get(&self, slot: ParamSlot) -> &Tensor {
        &self.tensors[slot.index()]
    }

    pub fn get_mut(&mut self, slot: ParamSlot) -> &mut Tensor {
        &mut self.tensors[slot.index()]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.tensors
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        ParamSlot::ALL.iter().map(|s| s.name()).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Rounds every value to the nearest `f32`, as a checkpoint stores it.
    pub fn round_to_f32(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_shapes() {
        let p = ModelParams::zeros(CapsNetConfig::default()).unwrap();
        assert_eq!(p.get(ParamSlot::Conv1Weight).shape(), &[9, 9, 1, 128]);
        assert_eq!(p.get(ParamSlot::PrimaryWeight).shape(), &[9, 9, 128, 256]);
        assert_eq!(p.get(ParamSlot::MidTransform).shape(), &[1280, 32, 8, 8]);
        assert_eq!(p.get(ParamSlot::LangTransform).shape(), &[32, 5, 16, 8]);
        assert_eq!(p.get(ParamSlot::Decoder1Weight).shape(), &[16, 512]);
        assert_eq!(p.get(ParamSlot::Decoder2Weight).shape(), &[512, 1024]);
        assert_eq!(p.get(ParamSlot::Decoder3Weight).shape(), &[1024, 800]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let c = CapsNetConfig::reduced();
        let a = ModelParams::init(c, 7).unwrap();
        assert_eq!(a, ModelParams::init(c, 7).unwrap());
        assert_ne!(a, ModelParams::init(c, 8).unwrap());
        let limit = sqrt(6.0 / 81.0);
        assert!(a.get(ParamSlot::Conv1Weight).data().iter().all(|v| v.abs() <= limit));
        assert!(a.get(ParamSlot::Conv1Bias).data().iter().all(|&v| v == 0.0));
        let limit = sqrt(6.0 / (8.0 + 24.0));
        assert!(a.get(ParamSlot::Decoder1Weight).data().iter().all(|v| v.abs() <= limit));
        // reduced lang transform is [8, 5, 8, 8]: std 5 / sqrt(64)
        let lang = a.get(ParamSlot::LangTransform).data();
        let var = lang.iter().map(|v| v * v).sum::<f64>() / lang.len() as f64;
        assert!((sqrt(var) - 0.625).abs() < 0.05, "std {}", sqrt(var));
    }

    #[test]
    fn from_tensors_checks_shapes() {
        let c = CapsNetConfig::reduced();
        let mut tensors = ModelParams::zeros(c).unwrap().into_tensors();
        assert!(ModelParams::from_tensors(c, tensors.clone()).is_ok());
        tensors[3] = Tensor::zeros(&[3]);
        assert!(ModelParams::from_tensors(c, tensors).is_err());
    }

    #[test]
    fn slot_names_round_trip() {
        for slot in ParamSlot::ALL {
            assert_eq!(ParamSlot::from_name(slot.name()), Some(slot));
        }
    }
}
