//! Per-image self-supervised adaptation.
//!
//! The pre-trained generator restores the masked input once; that
//! restoration `I_pred` is frozen. Every step hides random regions of
//! `I_pred`, asks the generator to restore them and updates the parameters
//! with a reconstruction loss that ignores the original hole. Fréchet
//! distance evaluations along the way drive optional early stopping.

pub(crate) mod loss;

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

pub use loss::{adv_loss, rec_loss, total_loss, AdvLoss, LossWeights, RecLoss, RecLossFn};

use crate::error::{Error, Result};
use crate::image::{apply_mask, composite, Image, Mask, Transform};
use crate::maskgen::MaskSpec;
use crate::model::{AdamConfig, Generator, ParamSet, TrainSample};
use crate::quality::{internal_fid, should_stop, Region, StopPolicy};
use crate::seed::{self, stream};
use crate::train::Trainer;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FinetuneConfig {
    /// Iteration budget `T`.
    pub iterations: usize,
    pub lr: f64,
    /// Corrupted samples per step.
    pub batch: usize,
    pub mask_spec: MaskSpec,
    /// Apply one random flip/rotation per sample.
    pub augment: bool,
    pub weights: LossWeights,
    pub auto_stop: Option<StopPolicy>,
    /// Iterations between Fréchet evaluations; 0 disables them.
    pub eval_every: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            lr: 1e-4,
            batch: 4,
            mask_spec: MaskSpec::default(),
            augment: false,
            weights: LossWeights::default(),
            auto_stop: None,
            eval_every: 25,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        self.weights.validate()?;
        if let Some(policy) = &self.auto_stop {
            policy.validate()?;
            if self.eval_every == 0 {
                return Err(Error::Config("auto-stop needs eval_every > 0".into()));
            }
        }
        match &self.mask_spec {
            MaskSpec::Freeform(spec) => spec.validate(),
            MaskSpec::Rect(_) => Ok(()),
        }
    }
}

/// `I_pred = f_θ₀(Ĩ, M)`. The input must already be zero under the mask.
pub fn initial_predict(generator: &Generator, params: &ParamSet<f32>, input: &Image, mask: &Mask) -> Result<Image> {
    if apply_mask(input, mask)? != *input {
        return Err(Error::Config("input image is not zeroed under its mask".into()));
    }
    generator.forward(params, input, mask)
}

/// `Ĩ_pred = I_pred ⊙ (1 − M_i)`.
pub fn corrupt(prediction: &Image, mask: &Mask) -> Result<Image> {
    apply_mask(prediction, mask)
}

/// The pipeline without adaptation: `composite(f_θ(Ĩ, M), Ĩ, M)`.
pub fn baseline(generator: &Generator, params: &ParamSet<f32>, input: &Image, mask: &Mask) -> Result<Image> {
    let pred = initial_predict(generator, params, input, mask)?;
    composite(&pred, input, mask)
}

/// Scores a composited candidate restoration against the masked input.
pub trait FidScorer {
    fn score(&mut self, candidate: &Image, input: &Image, mask: &Mask) -> Result<f64>;
}

/// Hole-centered candidate patches against fully valid input patches.
#[derive(Debug, Clone, Copy, Default)]
pub struct InternalFid;

impl FidScorer for InternalFid {
    fn score(&mut self, candidate: &Image, input: &Image, mask: &Mask) -> Result<f64> {
        internal_fid(candidate, Region::Holes(mask), input, Region::Valid(mask))
    }
}

impl<F: FnMut(&Image, &Image, &Mask) -> Result<f64>> FidScorer for F {
    fn score(&mut self, candidate: &Image, input: &Image, mask: &Mask) -> Result<f64> {
        self(candidate, input, mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub loss_rec: Option<f64>,
    pub loss_adv: Option<f64>,
    pub fid: Option<f64>,
}

/// One entry for the initial evaluation and one per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub entries: Vec<LogEntry>,
}

impl RunLog {
    pub fn fid_history(&self) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.fid.map(|f| (e.iteration, f)))
            .collect()
    }

    fn record_fid(&mut self, iteration: usize, fid: f64) {
        match self.entries.last_mut() {
            Some(e) if e.iteration == iteration => e.fid = Some(fid),
            _ => self.entries.push(LogEntry {
                iteration,
                loss_rec: None,
                loss_adv: None,
                fid: Some(fid),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub rec: f64,
    pub adv: f64,
    pub total: f64,
    /// Every sample of the step had its whole image excluded.
    pub degenerate: bool,
}

/// Parameters at an evaluated iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub fid: f64,
    pub params: ParamSet<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    AutoStop,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Budget => "budget",
            StopReason::AutoStop => "auto-stop",
        }
    }
}

/// State of one fine-tuning run.
pub struct FinetuneSession<'g> {
    generator: &'g Generator,
    config: FinetuneConfig,
    trainer: Trainer,
    iteration: usize,
    input: Image,
    mask: Mask,
    i_pred: Image,
    best: Option<Snapshot>,
    log: RunLog,
}

impl<'g> FinetuneSession<'g> {
    pub fn new(generator: &'g Generator, theta0: &ParamSet<f32>, input: &Image, mask: &Mask, config: &FinetuneConfig) -> Result<Self> {
        config.validate()?;
        generator.check_params(theta0)?;
        let i_pred = initial_predict(generator, theta0, input, mask)?;
        let trainer = Trainer::new(generator, theta0.clone(), config.weights, config.lr, config.adam, config.seed)?;
        Ok(Self {
            generator,
            config: config.clone(),
            trainer,
            iteration: 0,
            input: input.clone(),
            mask: mask.clone(),
            i_pred,
            best: None,
            log: RunLog::default(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.trainer.params
    }

    pub fn i_pred(&self) -> &Image {
        &self.i_pred
    }

    pub fn input(&self) -> &Image {
        &self.input
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    /// The lowest-FID snapshot so far (earliest on ties).
    pub fn best(&self) -> Option<&Snapshot> {
        self.best.as_ref()
    }

    pub fn config(&self) -> &FinetuneConfig {
        &self.config
    }

    /// `composite(f_θ(Ĩ, M), Ĩ, M)` for the given parameters.
    pub fn restore(&self, params: &ParamSet<f32>) -> Result<Image> {
        let out = self.generator.forward(params, &self.input, &self.mask)?;
        composite(&out, &self.input, &self.mask)
    }

    fn build_batch(&self) -> Result<Vec<TrainSample>> {
        let (h, w) = (self.i_pred.height(), self.i_pred.width());
        let i = self.iteration as u64;
        (0..self.config.batch as u64)
            .map(|b| {
                let m_i = self
                    .config
                    .mask_spec
                    .generate(h, w, seed::derive(self.config.seed, &[stream::FINETUNE_MASK, i, b]))?;
                let sample = TrainSample {
                    input: corrupt(&self.i_pred, &m_i)?,
                    mask: m_i,
                    target: self.i_pred.clone(),
                    exclusion: Some(self.mask.clone()),
                };
                if !self.config.augment {
                    return Ok(sample);
                }
                let mut rng = seed::rng(seed::derive(self.config.seed, &[stream::FINETUNE_AUG, i, b]));
                let t = Transform::ALL[rng.random_range(0..Transform::ALL.len())];
                Ok(TrainSample {
                    input: t.apply(&sample.input)?,
                    mask: t.apply_mask(&sample.mask)?,
                    target: t.apply(&sample.target)?,
                    exclusion: Some(t.apply_mask(&self.mask)?),
                })
            })
            .collect()
    }

    /// One parameter update on `B` freshly corrupted copies of `I_pred`.
    pub fn step(&mut self) -> Result<StepLoss> {
        let next = self.iteration + 1;
        let batch = self.build_batch()?;
        let loss = self
            .trainer
            .step(self.generator, &batch)
            .map_err(|e| e.at_iteration(next))?;
        self.iteration = next;
        self.log.entries.push(LogEntry {
            iteration: next,
            loss_rec: Some(loss.rec),
            loss_adv: self.trainer.adversarial().then_some(loss.adv),
            fid: None,
        });
        Ok(loss)
    }

    /// Scores the current parameters and records the result.
    pub fn evaluate(&mut self, scorer: &mut dyn FidScorer) -> Result<f64> {
        let candidate = self.restore(&self.trainer.params)?;
        let fid = scorer
            .score(&candidate, &self.input, &self.mask)
            .map_err(|e| e.at_iteration(self.iteration))?;
        if !fid.is_finite() {
            return Err(Error::Numeric {
                iteration: Some(self.iteration),
                what: format!("Fréchet distance {fid}"),
            });
        }
        self.log.record_fid(self.iteration, fid);
        if self.best.as_ref().is_none_or(|b| fid < b.fid) {
            self.best = Some(Snapshot {
                iteration: self.iteration,
                fid,
                params: self.trainer.params.clone(),
            });
        }
        Ok(fid)
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// `θ*`.
    pub params: ParamSet<f32>,
    /// `composite(f_θ*(Ĩ, M), Ĩ, M)`.
    pub image: Image,
    pub baseline: Image,
    pub i_pred: Image,
    pub log: RunLog,
    pub stop_reason: StopReason,
    /// Steps actually taken.
    pub iterations: usize,
    /// Iteration whose parameters became `θ*`.
    pub selected_iteration: usize,
}

/// A failed run with everything logged up to the failure.
#[derive(Debug, Clone)]
pub struct FinetuneFailure {
    pub error: Error,
    pub log: RunLog,
}

impl fmt::Display for FinetuneFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl core::error::Error for FinetuneFailure {}

/// Called with the session after the initial evaluation and after every step.
pub type Observer<'a> = dyn FnMut(&FinetuneSession<'_>) -> Result<()> + 'a;

pub fn run_finetune(
    generator: &Generator,
    theta0: &ParamSet<f32>,
    input: &Image,
    mask: &Mask,
    config: &FinetuneConfig,
) -> core::result::Result<FinetuneOutcome, Box<FinetuneFailure>> {
    run_finetune_with(generator, theta0, input, mask, config, &mut InternalFid, &mut |_| Ok(()))
}

/// [`run_finetune`] with a custom scorer and a per-step observer.
///
/// Without auto-stop `θ*` is the parameter set after the last step. With it,
/// `θ*` is the best-scoring snapshot, whether the run stopped early or
/// exhausted its budget.
pub fn run_finetune_with(
    generator: &Generator,
    theta0: &ParamSet<f32>,
    input: &Image,
    mask: &Mask,
    config: &FinetuneConfig,
    scorer: &mut dyn FidScorer,
    observer: &mut Observer<'_>,
) -> core::result::Result<FinetuneOutcome, Box<FinetuneFailure>> {
    let fail = |error: Error, log: &RunLog| {
        Box::new(FinetuneFailure {
            error,
            log: log.clone(),
        })
    };
    let mut session = FinetuneSession::new(generator, theta0, input, mask, config).map_err(|e| fail(e, &RunLog::default()))?;
    let evaluating = config.eval_every > 0;
    let mut reason = StopReason::Budget;

    let mut run = |session: &mut FinetuneSession<'_>| -> Result<()> {
        if evaluating {
            session.evaluate(scorer)?;
        }
        observer(session)?;
        while session.iteration < config.iterations {
            session.step()?;
            let i = session.iteration;
            if evaluating && (i % config.eval_every == 0 || i == config.iterations) {
                session.evaluate(scorer)?;
                if let Some(policy) = &config.auto_stop {
                    if should_stop(&session.log.fid_history(), policy) {
                        reason = StopReason::AutoStop;
                        observer(session)?;
                        break;
                    }
                }
            }
            observer(session)?;
        }
        Ok(())
    };
    run(&mut session).map_err(|e| fail(e, &session.log))?;

    let (params, selected) = match (&config.auto_stop, session.best.take()) {
        (Some(_), Some(best)) => (best.params, best.iteration),
        _ => (session.trainer.params.clone(), session.iteration),
    };
    let finish = || -> Result<(Image, Image)> {
        let image = session.restore(&params)?;
        let baseline = composite(&session.i_pred, &session.input, &session.mask)?;
        Ok((image, baseline))
    };
    let (image, baseline) = finish().map_err(|e| fail(e, &session.log))?;
    Ok(FinetuneOutcome {
        params,
        image,
        baseline,
        i_pred: session.i_pred,
        stop_reason: reason,
        iterations: session.iteration,
        selected_iteration: selected,
        log: session.log,
    })
}
