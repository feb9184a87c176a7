//! Patch discriminator: four stride-2 4×4 convolutions, leaky-ReLU between
//! them, one score per receptive-field patch.

use alloc::format;
use alloc::vec::Vec;

use super::conv::ConvShape;
use super::net::{Activation, Stack, Tape};
use super::params::ParamSet;
use super::spec::ModelSpec;
use super::{image_to_planes, Real};
use crate::error::{Error, Result};
use crate::image::Image;

const STAGES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    stack: Stack,
    size: usize,
}

impl Discriminator {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        if !spec.use_discriminator {
            return Err(Error::Config("discriminator is disabled in the model spec".into()));
        }
        spec.validate()?;
        let size = spec.input_size;
        if size % (1 << STAGES) != 0 {
            return Err(Error::Spec(format!(
                "discriminator needs input_size divisible by {}, got {size}",
                1 << STAGES
            )));
        }
        let mut stack = Stack::new(spec.disc_fingerprint());
        let mut ch = 3;
        let mut res = size;
        for i in 0..STAGES {
            let last = i + 1 == STAGES;
            let out = if last { 1 } else { spec.base_channels << i };
            let act = if last { Activation::Identity } else { Activation::LeakyRelu };
            stack.push(&format!("disc{i}"), ConvShape::new(ch, out, 4, 2, 1, res, res), false, act, false);
            ch = out;
            res /= 2;
        }
        Ok(Self { stack, size })
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> ParamSet<T> {
        self.stack.init(seed)
    }

    pub fn zero_params<T: Real>(&self) -> ParamSet<T> {
        self.stack.zeros()
    }

    pub fn score_side(&self) -> usize {
        self.size >> STAGES
    }

    fn check(&self, params: &ParamSet<impl Real>, image: &Image) -> Result<()> {
        params.check_layout(&self.stack.zeros())?;
        if image.height() != self.size || image.width() != self.size {
            return Err(Error::shape(
                format!("{0}x{0} image", self.size),
                format!("{}x{}", image.height(), image.width()),
            ));
        }
        Ok(())
    }

    pub fn forward<T: Real>(&self, params: &ParamSet<T>, image: &Image) -> Result<ScoreMap> {
        self.check(params, image)?;
        let planes = image_to_planes::<T>(&image.to_rgb());
        let scores = self.stack.forward(params, &planes, None);
        let side = self.score_side();
        Ok(ScoreMap {
            height: side,
            width: side,
            data: scores.iter().map(|v| v.as_f64()).collect(),
        })
    }

    /// Scores of a channel-major RGB buffer, keeping the tape for [`Self::backward`].
    pub(crate) fn forward_planes<T: Real>(&self, params: &ParamSet<T>, planes: &[T]) -> (Vec<T>, Tape<T>) {
        let mut tape = self.stack.new_tape();
        let scores = self.stack.forward(params, planes, Some(&mut tape));
        (scores, tape)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        tape: &Tape<T>,
        dscores: Vec<T>,
        grads: &mut ParamSet<T>,
    ) -> Vec<T> {
        self.stack
            .backward(params, tape, dscores, grads, true)
            .expect("input gradient requested")
    }
}

/// Patch scores for `image`.
pub fn disc_forward<T: Real>(disc: &Discriminator, params: &ParamSet<T>, image: &Image) -> Result<ScoreMap> {
    disc.forward(params, image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ModelSpec {
        ModelSpec {
            use_discriminator: true,
            base_channels: 4,
            ..ModelSpec::default()
        }
    }

    #[test]
    fn four_stages_give_four_by_four_scores() {
        let d = Discriminator::new(&spec()).unwrap();
        let p = d.init_params::<f32>(3);
        let img = Image::from_fn(64, 64, 3, |y, x, _| ((x ^ y) & 1) as f32);
        let s = disc_forward(&d, &p, &img).unwrap();
        assert_eq!((s.height, s.width, s.data.len()), (4, 4, 16));
        assert_eq!(s, disc_forward(&d, &p, &img).unwrap());
    }

    #[test]
    fn zero_discriminator_scores_zero() {
        let d = Discriminator::new(&spec()).unwrap();
        let p = d.zero_params::<f64>();
        let s = d.forward(&p, &Image::filled(64, 64, 3, 0.7)).unwrap();
        assert!(s.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disabled_discriminator_is_a_configuration_error() {
        assert!(matches!(
            Discriminator::new(&ModelSpec::default()),
            Err(Error::Config(_))
        ));
    }
}
