//! One optimizer step of the generator (and, when the adversarial weight is
//! positive, the discriminator), shared by pre-training and fine-tuning.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use crate::error::Result;
use crate::finetune::{loss, total_loss, LossWeights, StepLoss};
use crate::model::{
    adam_step, image_to_planes, AdamConfig, Discriminator, Generator, LossFn, OptimState, ParamSet, TrainSample,
};
use crate::seed::{self, stream};

struct DiscState {
    net: Discriminator,
    params: ParamSet<f32>,
    optim: OptimState<f32>,
}

/// Weighted reconstruction plus the generator hinge term, with running sums
/// of both parts.
struct Objective<'a> {
    weights: LossWeights,
    disc: Option<&'a DiscState>,
    rec_sum: Cell<f64>,
    adv_sum: Cell<f64>,
    degenerate: Cell<bool>,
}

impl LossFn<f32> for Objective<'_> {
    fn loss_and_grad(&self, output: &[f32], sample: &TrainSample) -> Result<(f32, Vec<f32>)> {
        let (rec, mut grad, degenerate) = loss::rec_loss_planar(output, &sample.target, sample.exclusion.as_ref())?;
        let w_rec = self.weights.rec as f32;
        for g in &mut grad {
            *g *= w_rec;
        }
        self.rec_sum.set(self.rec_sum.get() + rec);
        self.degenerate.set(self.degenerate.get() && degenerate);
        let mut adv = 0.0;
        if let Some(d) = self.disc {
            let (scores, tape) = d.net.forward_planes(&d.params, output);
            let n = scores.len() as f64;
            adv = -scores.iter().map(|&s| s as f64).sum::<f64>() / n;
            let dscore = (-self.weights.adv / n) as f32;
            let mut unused = d.params.zeros_like();
            let dx = d.net.backward(&d.params, &tape, vec![dscore; scores.len()], &mut unused);
            for (g, v) in grad.iter_mut().zip(dx) {
                *g += v;
            }
        }
        self.adv_sum.set(self.adv_sum.get() + adv);
        Ok((total_loss(rec, adv, &self.weights)? as f32, grad))
    }
}

pub(crate) struct Trainer {
    pub params: ParamSet<f32>,
    optim: OptimState<f32>,
    disc: Option<DiscState>,
    weights: LossWeights,
    lr: f32,
}

impl Trainer {
    pub fn new(
        generator: &Generator,
        params: ParamSet<f32>,
        weights: LossWeights,
        lr: f64,
        adam: AdamConfig,
        seed_value: u64,
    ) -> Result<Self> {
        let disc = if weights.adv > 0.0 {
            let net = Discriminator::new(generator.spec())?;
            let dp = net.init_params(seed::derive(seed_value, &[stream::DISC_INIT]));
            let optim = OptimState::new(&dp, adam);
            Some(DiscState { net, params: dp, optim })
        } else {
            None
        };
        Ok(Self {
            optim: OptimState::new(&params, adam),
            params,
            disc,
            weights,
            lr: lr as f32,
        })
    }

    pub fn adversarial(&self) -> bool {
        self.disc.is_some()
    }

    /// Generator update, then one discriminator update treating each
    /// sample's target as real and the generator output as fake.
    pub fn step(&mut self, generator: &Generator, batch: &[TrainSample]) -> Result<StepLoss> {
        let objective = Objective {
            weights: self.weights,
            disc: self.disc.as_ref(),
            rec_sum: Cell::new(0.0),
            adv_sum: Cell::new(0.0),
            degenerate: Cell::new(true),
        };
        let result = generator.grad_batch(&self.params, &objective, batch)?;
        let b = batch.len() as f64;
        let rec = objective.rec_sum.get() / b;
        let adv = objective.adv_sum.get() / b;
        let degenerate = objective.degenerate.get();
        let total = total_loss(rec, adv, &self.weights)?;
        adam_step(&mut self.params, &result.grads, &mut self.optim, self.lr)?;
        self.update_discriminator(batch, &result.outputs)?;
        Ok(StepLoss {
            rec,
            adv,
            total,
            degenerate,
        })
    }

    fn update_discriminator(&mut self, batch: &[TrainSample], outputs: &[Vec<f32>]) -> Result<()> {
        let Some(d) = self.disc.as_mut() else {
            return Ok(());
        };
        let mut grads = d.params.zeros_like();
        let inv_b = 1.0 / batch.len() as f64;
        for (sample, fake) in batch.iter().zip(outputs) {
            let real = image_to_planes::<f32>(&sample.target.to_rgb());
            for (planes, sign) in [(&real, -1.0f64), (fake, 1.0)] {
                let (scores, tape) = d.net.forward_planes(&d.params, planes);
                let n = scores.len() as f64;
                // d/ds of max(0, 1 + sign·s), averaged over patches and batch
                let ds = scores
                    .iter()
                    .map(|&s| {
                        if 1.0 + sign * s as f64 > 0.0 {
                            (sign * inv_b / n) as f32
                        } else {
                            0.0
                        }
                    })
                    .collect();
                d.net.backward(&d.params, &tape, ds, &mut grads);
            }
        }
        adam_step(&mut d.params, &grads, &mut d.optim, self.lr)
    }
}
