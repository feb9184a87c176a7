//! The reference inpainting generator.
//!
//! Input is the masked RGB image with the mask appended as a fourth channel.
//! `depth` stride-2 gated convolutions encode, one gated block per dilation
//! works at the bottleneck, `depth` upsample-then-gated-conv blocks decode,
//! and a plain three-channel convolution with a bounded activation produces
//! the restoration.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::ConvShape;
use super::net::{Activation, Stack};
use super::params::{Gradients, ParamSet};
use super::spec::{ModelSpec, OutputActivation};
use super::Real;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

/// One supervised example: network input, its mask, the target, and the
/// pixels the loss must ignore.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: Image,
    pub mask: Mask,
    pub target: Image,
    pub exclusion: Option<Mask>,
}

/// A per-sample differentiable loss on the generator output.
///
/// `output` is the network's raw `3×H×W` (channel-major) result; the return
/// value is the loss and its gradient with respect to `output`.
pub trait LossFn<T: Real> {
    fn loss_and_grad(&self, output: &[T], sample: &TrainSample) -> Result<(T, Vec<T>)>;
}

#[derive(Debug, Clone)]
pub struct Generator {
    spec: ModelSpec,
    stack: Stack,
}

/// Loss, gradients and the per-sample outputs of one batch.
pub struct BatchGrad<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    pub outputs: Vec<Vec<T>>,
}

impl Generator {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let size = spec.input_size;
        let c = spec.base_channels;
        let k = spec.kernel;
        let block_act = Activation::Elu;
        let mut stack = Stack::new(spec.fingerprint());
        let mut ch = 4;
        let mut res = size;

        for i in 0..spec.depth {
            let out = c << i;
            stack.push(&format!("enc{i}"), ConvShape::new(ch, out, k, 2, 1, res, res), false, block_act, spec.gated);
            ch = out;
            res /= 2;
        }
        for (j, &d) in spec.dilations.iter().enumerate() {
            let out = if spec.depth == 0 { c } else { ch };
            stack.push(&format!("mid{j}"), ConvShape::new(ch, out, k, 1, d, res, res), false, block_act, spec.gated);
            ch = out;
        }
        for i in (0..spec.depth).rev() {
            let out = if i == 0 { (c / 2).max(1) } else { c << (i - 1) };
            res *= 2;
            stack.push(&format!("dec{i}"), ConvShape::new(ch, out, k, 1, 1, res, res), true, block_act, spec.gated);
            ch = out;
        }
        let act = match spec.output {
            OutputActivation::Sigmoid => Activation::Sigmoid,
            OutputActivation::Clamp => Activation::Clamp,
        };
        stack.push("out", ConvShape::new(ch, 3, k, 1, 1, res, res), false, act, false);
        Ok(Self { spec, stack })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Deterministic fan-in-scaled initialization.
    pub fn init_params<T: Real>(&self, seed: u64) -> ParamSet<T> {
        self.stack.init(seed)
    }

    /// All-zero parameters with this generator's layout.
    pub fn zero_params<T: Real>(&self) -> ParamSet<T> {
        self.stack.zeros()
    }

    pub fn check_params<T: Real>(&self, params: &ParamSet<T>) -> Result<()> {
        params.check_layout(&self.stack.zeros())
    }

    fn check_inputs(&self, image: &Image, mask: &Mask) -> Result<()> {
        let s = self.spec.input_size;
        if image.height() != s || image.width() != s {
            return Err(Error::shape(
                format!("{s}x{s} image"),
                format!("{}x{}", image.height(), image.width()),
            ));
        }
        if mask.height() != s || mask.width() != s {
            return Err(Error::shape(
                format!("{s}x{s} mask"),
                format!("{}x{}", mask.height(), mask.width()),
            ));
        }
        Ok(())
    }

    /// Network input tensor: RGB planes followed by the mask plane.
    pub(crate) fn input_tensor<T: Real>(&self, image: &Image, mask: &Mask) -> Result<Vec<T>> {
        self.check_inputs(image, mask)?;
        let rgb = image.to_rgb();
        let n = rgb.height() * rgb.width();
        let mut x = vec![T::zero(); 4 * n];
        for (p, px) in rgb.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                x[c * n + p] = T::lit(px[c] as f64);
            }
        }
        for (p, &m) in mask.data().iter().enumerate() {
            x[3 * n + p] = T::lit(m as f64);
        }
        Ok(x)
    }

    /// `f_θ(image, mask)`: the full-resolution restoration, same channel
    /// count as `image`.
    pub fn forward<T: Real>(&self, params: &ParamSet<T>, image: &Image, mask: &Mask) -> Result<Image> {
        self.check_params(params)?;
        let x = self.input_tensor(image, mask)?;
        let out = self.stack.forward(params, &x, None);
        let rgb = planes_to_image(&out, self.spec.input_size)?;
        Ok(if image.channels() == 1 { rgb.to_gray() } else { rgb })
    }

    /// Mean batch loss, its exact gradient, and each sample's raw output.
    pub fn grad_batch<T: Real, L: LossFn<T>>(
        &self,
        params: &ParamSet<T>,
        loss: &L,
        batch: &[TrainSample],
    ) -> Result<BatchGrad<T>> {
        if batch.is_empty() {
            return Err(Error::Config("gradient of an empty batch".into()));
        }
        self.check_params(params)?;
        let mut total = params.zeros_like();
        let mut sample_grads = params.zeros_like();
        let mut loss_sum = T::zero();
        let mut outputs = Vec::with_capacity(batch.len());
        let mut tape = self.stack.new_tape();
        for sample in batch {
            let x = self.input_tensor(&sample.input, &sample.mask)?;
            let out = self.stack.forward(params, &x, Some(&mut tape));
            let (l, dout) = loss.loss_and_grad(&out, sample)?;
            if !l.is_finite() {
                return Err(Error::numeric(format!("loss {:?}", l)));
            }
            loss_sum = loss_sum + l;
            sample_grads.scale(T::zero());
            self.stack.backward(params, &tape, dout, &mut sample_grads, false);
            total.add_assign(&sample_grads);
            outputs.push(out);
        }
        let inv = T::one() / T::lit(batch.len() as f64);
        total.scale(inv);
        if let Some(name) = total.first_non_finite() {
            return Err(Error::numeric(format!("gradient of {name}")));
        }
        Ok(BatchGrad {
            loss: loss_sum * inv,
            grads: total,
            outputs,
        })
    }
}

/// Mean batch loss and its gradient with respect to every parameter.
pub fn grad<T: Real, L: LossFn<T>>(
    generator: &Generator,
    params: &ParamSet<T>,
    loss: &L,
    batch: &[TrainSample],
) -> Result<(T, Gradients<T>)> {
    let b = generator.grad_batch(params, loss, batch)?;
    Ok((b.loss, b.grads))
}

/// Channel-major `3×S×S` buffer to an interleaved RGB image.
pub(crate) fn planes_to_image<T: Real>(planes: &[T], size: usize) -> Result<Image> {
    let n = size * size;
    let mut data = Vec::with_capacity(3 * n);
    for p in 0..n {
        for c in 0..3 {
            data.push(planes[c * n + p].as_f64() as f32);
        }
    }
    Image::new(size, size, 3, data)
}

/// Interleaved image to channel-major planes.
pub(crate) fn image_to_planes<T: Real>(image: &Image) -> Vec<T> {
    let (n, ch) = (image.height() * image.width(), image.channels());
    let mut out = vec![T::zero(); ch * n];
    for (p, px) in image.data().chunks_exact(ch).enumerate() {
        for c in 0..ch {
            out[c * n + p] = T::lit(px[c] as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ModelSpec {
        ModelSpec {
            input_size: 16,
            base_channels: 4,
            depth: 1,
            dilations: vec![2],
            ..ModelSpec::default()
        }
    }

    #[test]
    fn first_conv_takes_rgb_plus_mask() {
        let spec = ModelSpec {
            base_channels: 16,
            depth: 2,
            ..ModelSpec::default()
        };
        let g = Generator::new(spec).unwrap();
        let p = g.init_params::<f32>(0);
        assert_eq!(p.params()[0].name, "enc0.feat.weight");
        assert_eq!(p.params()[0].shape, vec![16, 4, 3, 3]);
        assert_eq!(p.params()[2].name, "enc0.gate.weight");
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let g = Generator::new(small_spec()).unwrap();
        assert_eq!(g.init_params::<f32>(5), g.init_params::<f32>(5));
        assert_ne!(g.init_params::<f32>(5), g.init_params::<f32>(6));
    }

    #[test]
    fn bad_spec_rejected() {
        let spec = ModelSpec {
            input_size: 18,
            depth: 2,
            ..ModelSpec::default()
        };
        assert!(matches!(Generator::new(spec), Err(Error::Spec(_))));
    }

    #[test]
    fn forward_shape_range_and_determinism() {
        let g = Generator::new(small_spec()).unwrap();
        let p = g.init_params::<f32>(1);
        let img = Image::from_fn(16, 16, 3, |y, x, c| ((y * 3 + x * 5 + c) % 7) as f32 / 7.0);
        let mask = Mask::from_fn(16, 16, |y, x| (4..9).contains(&y) && (3..12).contains(&x));
        let a = g.forward(&p, &img, &mask).unwrap();
        let b = g.forward(&p, &img, &mask).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width(), a.channels()), (16, 16, 3));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));

        let gray = g.forward(&p, &img.to_gray(), &mask).unwrap();
        assert_eq!(gray.channels(), 1);
    }

    #[test]
    fn forward_rejects_wrong_sizes_and_foreign_params() {
        let g = Generator::new(small_spec()).unwrap();
        let p = g.init_params::<f32>(1);
        let img = Image::filled(8, 8, 3, 0.5);
        assert!(matches!(g.forward(&p, &img, &Mask::zeros(8, 8)), Err(Error::Shape { .. })));

        let other = Generator::new(ModelSpec {
            base_channels: 8,
            ..small_spec()
        })
        .unwrap();
        let foreign = other.init_params::<f32>(1);
        let img = Image::filled(16, 16, 3, 0.5);
        assert!(g.forward(&foreign, &img, &Mask::zeros(16, 16)).is_err());
    }

    #[test]
    fn single_linear_layer_evaluates_by_hand() {
        // depth 0, no middle blocks, 1x1 kernel: one convolution 4 -> 3.
        let spec = ModelSpec {
            input_size: 4,
            base_channels: 1,
            depth: 0,
            dilations: vec![],
            kernel: 1,
            output: OutputActivation::Clamp,
            ..ModelSpec::default()
        };
        let g = Generator::new(spec).unwrap();
        for &(w, c) in &[(1.5f64, 0.5f32), (3.0, 0.5), (0.25, 0.8)] {
            let mut p = g.zero_params::<f64>();
            for (name, data) in p.values_mut() {
                if name == "out.weight" {
                    // identity on the colour channels, nothing from the mask
                    for ch in 0..3 {
                        data[ch * 4 + ch] = w;
                    }
                }
            }
            let img = Image::filled(4, 4, 3, c);
            let out = g.forward(&p, &img, &Mask::zeros(4, 4)).unwrap();
            let expect = (w * c as f64).clamp(0.0, 1.0) as f32;
            assert!(out.data().iter().all(|&v| (v - expect).abs() < 1e-6), "w={w} c={c}");
        }
    }
}
