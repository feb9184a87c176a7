use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::model::{Discriminator, LossFn, ParamSet, Real, TrainSample};

/// Reconstruction loss value plus the flag raised when no pixel is
/// supervised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecLoss {
    pub value: f64,
    pub degenerate: bool,
}

fn check_dims(target: &Image, prediction: &Image, mask: Option<&Mask>) -> Result<()> {
    if !target.same_dims(prediction) {
        return Err(Error::shape(
            format!("{}x{}x{}", target.height(), target.width(), target.channels()),
            format!("{}x{}x{}", prediction.height(), prediction.width(), prediction.channels()),
        ));
    }
    if let Some(m) = mask {
        if m.height() != target.height() || m.width() != target.width() {
            return Err(Error::shape(
                format!("{}x{} mask", target.height(), target.width()),
                format!("{}x{}", m.height(), m.width()),
            ));
        }
    }
    Ok(())
}

/// Mean squared difference over pixels outside `mask`, all channels.
/// Hole pixels are skipped entirely, so their values cannot influence the
/// result in any bit.
pub fn rec_loss(target: &Image, prediction: &Image, mask: &Mask) -> Result<RecLoss> {
    check_dims(target, prediction, Some(mask))?;
    let ch = target.channels();
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (p, &m) in mask.data().iter().enumerate() {
        if m != 0 {
            continue;
        }
        for c in 0..ch {
            let d = prediction.data()[p * ch + c] as f64 - target.data()[p * ch + c] as f64;
            sum += d * d;
        }
        count += ch;
    }
    Ok(if count == 0 {
        RecLoss {
            value: 0.0,
            degenerate: true,
        }
    } else {
        RecLoss {
            value: sum / count as f64,
            degenerate: false,
        }
    })
}

/// The same loss on a channel-major `3×H×W` network output, with its
/// gradient. `target` is promoted to RGB.
pub(crate) fn rec_loss_planar<T: Real>(output: &[T], target: &Image, exclusion: Option<&Mask>) -> Result<(f64, Vec<T>, bool)> {
    let rgb = target.to_rgb();
    let n = rgb.height() * rgb.width();
    if output.len() != 3 * n {
        return Err(Error::shape(format!("{} output values", 3 * n), format!("{}", output.len())));
    }
    if let Some(m) = exclusion {
        if m.height() * m.width() != n || m.height() != rgb.height() {
            return Err(Error::shape(
                format!("{}x{} exclusion mask", rgb.height(), rgb.width()),
                format!("{}x{}", m.height(), m.width()),
            ));
        }
    }
    let excluded = |p: usize| exclusion.is_some_and(|m| m.data()[p] != 0);
    let count = 3 * (0..n).filter(|&p| !excluded(p)).count();
    let mut grad = vec![T::zero(); 3 * n];
    if count == 0 {
        return Ok((0.0, grad, true));
    }
    let inv = 1.0 / count as f64;
    let mut sum = 0.0f64;
    for p in 0..n {
        if excluded(p) {
            continue;
        }
        for c in 0..3 {
            let d = output[c * n + p].as_f64() - rgb.data()[p * 3 + c] as f64;
            sum += d * d;
            grad[c * n + p] = T::lit(2.0 * d * inv);
        }
    }
    Ok((sum * inv, grad, false))
}

/// Mask-excluded reconstruction loss as a training objective: each sample's
/// `exclusion` mask (when present) is left unsupervised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecLossFn {
    pub weight: f64,
}

impl Default for RecLossFn {
    fn default() -> Self {
        Self { weight: 1.0 }
    }
}

impl<T: Real> LossFn<T> for RecLossFn {
    fn loss_and_grad(&self, output: &[T], sample: &TrainSample) -> Result<(T, Vec<T>)> {
        let (loss, mut grad, _) = rec_loss_planar(output, &sample.target, sample.exclusion.as_ref())?;
        let w = T::lit(self.weight);
        for g in &mut grad {
            *g = *g * w;
        }
        Ok((T::lit(self.weight * loss), grad))
    }
}

/// Generator and discriminator hinge terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvLoss {
    pub generator: f64,
    pub discriminator: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Hinge losses with `real` as the positive sample: the generator term is
/// `−mean D(fake)`, the discriminator term
/// `mean max(0, 1 − D(real)) + mean max(0, 1 + D(fake))`.
pub fn adv_loss<T: Real>(disc: &Discriminator, disc_params: &ParamSet<T>, real: &Image, fake: &Image) -> Result<AdvLoss> {
    let r = disc.forward(disc_params, real)?;
    let f = disc.forward(disc_params, fake)?;
    let hinge_real: Vec<f64> = r.data.iter().map(|s| (1.0 - s).max(0.0)).collect();
    let hinge_fake: Vec<f64> = f.data.iter().map(|s| (1.0 + s).max(0.0)).collect();
    Ok(AdvLoss {
        generator: -mean(&f.data),
        discriminator: mean(&hinge_real) + mean(&hinge_fake),
    })
}

/// Loss weights `λ_rec`, `λ_adv`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossWeights {
    pub rec: f64,
    pub adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { rec: 1.0, adv: 0.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.rec >= 0.0 && self.adv >= 0.0) || !self.rec.is_finite() || !self.adv.is_finite() {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// `λ_rec·rec + λ_adv·adv`.
pub fn total_loss(rec: f64, adv: f64, weights: &LossWeights) -> Result<f64> {
    let total = weights.rec * rec + weights.adv * adv;
    if !total.is_finite() || !rec.is_finite() || !adv.is_finite() {
        return Err(Error::numeric(format!("loss terms rec={rec} adv={adv}")));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    #[test]
    fn single_pixel_difference() {
        let target = Image::filled(2, 2, 1, 0.5);
        let delta = 0.25f32;
        let pred = Image::new(2, 2, 1, vec![0.5, 0.5 + delta, 0.5, 0.5]).unwrap();
        let l = rec_loss(&target, &pred, &Mask::zeros(2, 2)).unwrap();
        assert_eq!(l.value, (delta as f64).powi(2) / 4.0);
        let hidden = Mask::new(2, 2, vec![0, 1, 0, 0]).unwrap();
        assert_eq!(rec_loss(&target, &pred, &hidden).unwrap().value, 0.0);
        assert_eq!(rec_loss(&target, &target, &Mask::zeros(2, 2)).unwrap().value, 0.0);
    }

    #[test]
    fn all_hole_mask_is_degenerate() {
        let a = Image::filled(3, 3, 3, 0.1);
        let b = Image::filled(3, 3, 3, 0.9);
        let l = rec_loss(&a, &b, &Mask::ones(3, 3)).unwrap();
        assert_eq!(l, RecLoss { value: 0.0, degenerate: true });
        assert!(rec_loss(&a, &Image::filled(3, 4, 3, 0.0), &Mask::zeros(3, 3)).is_err());
    }

    #[test]
    fn planar_loss_agrees_with_image_loss() {
        let target = Image::from_fn(4, 4, 3, |y, x, c| ((y + x * c) % 5) as f32 / 4.0);
        let pred = Image::from_fn(4, 4, 3, |y, x, c| ((y * x + c) % 3) as f32 / 2.0);
        let mask = Mask::from_fn(4, 4, |y, x| y == x);
        let planes: Vec<f64> = (0..3)
            .flat_map(|c| (0..16).map(move |p| (c, p)))
            .map(|(c, p)| pred.data()[p * 3 + c] as f64)
            .collect();
        let (l, g, _) = rec_loss_planar(&planes, &target, Some(&mask)).unwrap();
        assert!((l - rec_loss(&target, &pred, &mask).unwrap().value).abs() < 1e-12);
        for p in 0..16 {
            if mask.data()[p] == 1 {
                assert!((0..3).all(|c| g[c * 16 + p] == 0.0));
            }
        }
    }

    #[test]
    fn hinge_at_zero_scores() {
        let spec = ModelSpec {
            use_discriminator: true,
            base_channels: 4,
            input_size: 32,
            ..ModelSpec::default()
        };
        let disc = Discriminator::new(&spec).unwrap();
        let img = Image::filled(32, 32, 3, 0.4);
        let l = adv_loss(&disc, &disc.zero_params::<f32>(), &img, &img).unwrap();
        assert_eq!(l.generator, 0.0);
        assert_eq!(l.discriminator, 2.0);
    }

    #[test]
    fn weighted_total() {
        let w = LossWeights { rec: 1.0, adv: 1.0 };
        assert_eq!(total_loss(0.5, 0.0, &w).unwrap(), 0.5);
        assert!((total_loss(0.5, 0.3, &w).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(total_loss(0.5, 0.3, &LossWeights { rec: 1.0, adv: 0.0 }).unwrap(), 0.5);
        assert!(total_loss(f64::NAN, 0.0, &w).is_err());
    }
}
