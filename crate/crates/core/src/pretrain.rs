//! Supervised pre-training on synthetic repetitive textures.
//!
//! The corpus stands in for a large natural-image dataset: tiles, stripes,
//! bricks, checkerboards and tiles under a smooth gradient, each with a
//! random period, palette and phase. The generator learns to restore
//! free-form holes with a full-image squared error against the clean image.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::finetune::{LossWeights, StepLoss};
use crate::image::{apply_mask, Image, Transform};
use crate::maskgen::MaskSpec;
use crate::model::{AdamConfig, Generator, ModelSpec, ParamSet, TrainSample};
use crate::seed::{self, stream};
use crate::train::Trainer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PatternFamily {
    Tiles,
    Stripes,
    Bricks,
    Checker,
    GradientTiles,
}

impl PatternFamily {
    pub const ALL: [PatternFamily; 5] = [
        PatternFamily::Tiles,
        PatternFamily::Stripes,
        PatternFamily::Bricks,
        PatternFamily::Checker,
        PatternFamily::GradientTiles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternFamily::Tiles => "tiles",
            PatternFamily::Stripes => "stripes",
            PatternFamily::Bricks => "bricks",
            PatternFamily::Checker => "checker",
            PatternFamily::GradientTiles => "gradient-tiles",
        }
    }

    /// Whether every image of the family repeats exactly with its period.
    pub fn is_periodic(self) -> bool {
        self != PatternFamily::GradientTiles
    }
}

/// Random colours: each image draws between `colors_min` and `colors_max`
/// colours, any two at least `min_distance` apart (max-norm) when possible.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PaletteSpec {
    pub colors_min: usize,
    pub colors_max: usize,
    pub min_distance: f64,
}

impl Default for PaletteSpec {
    fn default() -> Self {
        Self {
            colors_min: 2,
            colors_max: 4,
            min_distance: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DatasetSpec {
    pub families: Vec<PatternFamily>,
    pub period_min: usize,
    pub period_max: usize,
    pub palette: PaletteSpec,
    pub count: usize,
    pub image_size: usize,
    /// Optional folder of real images; read by the I/O layer, not here.
    pub folder: Option<alloc::string::String>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            families: PatternFamily::ALL.to_vec(),
            period_min: 4,
            period_max: 12,
            palette: PaletteSpec::default(),
            count: 200,
            image_size: 64,
            folder: None,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::Spec("dataset needs at least one pattern family".into()));
        }
        if self.count == 0 {
            return Err(Error::Spec("dataset count must be at least 1".into()));
        }
        if !(2 <= self.period_min && self.period_min <= self.period_max && self.period_max <= self.image_size / 2) {
            return Err(Error::Spec(format!(
                "period range [{}, {}] must lie within [2, {}]",
                self.period_min,
                self.period_max,
                self.image_size / 2
            )));
        }
        let p = &self.palette;
        if p.colors_min < 2 || p.colors_min > p.colors_max || !(0.0..=1.0).contains(&p.min_distance) {
            return Err(Error::Spec(format!("invalid palette {p:?}")));
        }
        Ok(())
    }
}

/// How one synthetic image was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternInfo {
    pub family: PatternFamily,
    pub period: usize,
}

fn draw_palette(rng: &mut ChaCha8Rng, spec: &PaletteSpec) -> Vec<[f32; 3]> {
    let n = rng.random_range(spec.colors_min..=spec.colors_max);
    let mut colors: Vec<[f32; 3]> = Vec::with_capacity(n);
    while colors.len() < n {
        let mut best = [0.0f32; 3];
        let mut best_gap = -1.0f64;
        // a few candidates; keep the one farthest from what we have
        for _ in 0..8 {
            let c = [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()];
            let gap = colors
                .iter()
                .map(|o| (0..3).map(|k| (o[k] - c[k]).abs() as f64).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            if gap >= spec.min_distance {
                best = c;
                break;
            }
            if gap > best_gap {
                best_gap = gap;
                best = c;
            }
        }
        colors.push(best);
    }
    colors
}

/// Renders one texture of `family` with period `period`.
pub fn render_pattern(family: PatternFamily, period: usize, size: usize, palette: &PaletteSpec, seed_value: u64) -> Image {
    let mut rng = seed::rng(seed_value);
    let colors = draw_palette(&mut rng, palette);
    let p = period.max(2);
    let (oy, ox) = (rng.random_range(0..p), rng.random_range(0..p));
    let index: Vec<usize> = match family {
        PatternFamily::Tiles | PatternFamily::GradientTiles => {
            // background plus a few wrapped rectangles in a p×p motif
            let mut motif = vec![0usize; p * p];
            for _ in 0..rng.random_range(2..=3) {
                let color = rng.random_range(1..colors.len().max(2)) % colors.len();
                let (h, w) = (rng.random_range(1..=p.div_ceil(2)), rng.random_range(1..=p.div_ceil(2)));
                let (y0, x0) = (rng.random_range(0..p), rng.random_range(0..p));
                for dy in 0..h {
                    for dx in 0..w {
                        motif[((y0 + dy) % p) * p + (x0 + dx) % p] = color;
                    }
                }
            }
            (0..size * size)
                .map(|i| motif[((i / size + oy) % p) * p + (i % size + ox) % p])
                .collect()
        }
        PatternFamily::Stripes => {
            let direction = rng.random_range(0..3);
            let bands: Vec<usize> = (0..p).map(|t| (t * colors.len()) / p).collect();
            (0..size * size)
                .map(|i| {
                    let (y, x) = (i / size + oy, i % size + ox);
                    let t = match direction {
                        0 => x,
                        1 => y,
                        _ => x + y,
                    };
                    bands[t % p]
                })
                .collect()
        }
        PatternFamily::Bricks => {
            let bh = (p / 2).max(1);
            (0..size * size)
                .map(|i| {
                    let (y, x) = ((i / size + oy) % (2 * bh), (i % size + ox) % p);
                    let shifted = if y >= bh { (x + p / 2) % p } else { x };
                    if y % bh == 0 || shifted == 0 {
                        0
                    } else {
                        1 + (y / bh) % (colors.len() - 1)
                    }
                })
                .collect()
        }
        PatternFamily::Checker => (0..size * size)
            .map(|i| {
                let (y, x) = ((i / size + oy) % p, (i % size + ox) % p);
                usize::from((y < p / 2) != (x < p / 2))
            })
            .collect(),
    };
    let gradient = (family == PatternFamily::GradientTiles).then(|| {
        let angle = rng.random_range(0.0..core::f64::consts::TAU);
        let strength = rng.random_range(0.15..0.35) as f32;
        (libm::cos(angle) as f32, libm::sin(angle) as f32, strength)
    });
    Image::from_fn(size, size, 3, |y, x, c| {
        let v = colors[index[y * size + x]][c];
        match gradient {
            Some((gy, gx, s)) => {
                let t = (gy * (y as f32 / size as f32 - 0.5) + gx * (x as f32 / size as f32 - 0.5)) * s;
                (v + t).clamp(0.0, 1.0)
            }
            None => v,
        }
    })
}

/// Independent uniform noise in every pixel and channel.
pub fn white_noise(size: usize, seed_value: u64) -> Image {
    let mut rng = seed::rng(seed_value);
    let data = (0..size * size * 3).map(|_| rng.random::<f32>()).collect();
    Image::new(size, size, 3, data).expect("unit-range noise")
}

/// The synthetic corpus; image `i` depends only on `(seed, i)`.
pub fn make_synthetic_dataset(spec: &DatasetSpec, seed_value: u64) -> Result<Vec<(Image, PatternInfo)>> {
    spec.validate()?;
    Ok((0..spec.count)
        .map(|i| {
            let s = seed::derive(seed_value, &[stream::DATASET, i as u64]);
            let mut rng = seed::rng(s);
            let family = spec.families[rng.random_range(0..spec.families.len())];
            let period = rng.random_range(spec.period_min..=spec.period_max);
            let image = render_pattern(family, period, spec.image_size, &spec.palette, seed::derive(s, &[1]));
            (image, PatternInfo { family, period })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub mask_spec: MaskSpec,
    /// Random horizontal/vertical flips.
    pub flips: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch: 4,
            lr: 1e-3,
            seed: 0,
            weights: LossWeights::default(),
            mask_spec: MaskSpec::default(),
            flips: true,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        self.weights.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: ParamSet<f32>,
    pub log: Vec<EpochLoss>,
}

pub fn pretrain(spec: &ModelSpec, dataset: &[Image], config: &TrainConfig) -> Result<PretrainOutcome> {
    pretrain_with(spec, dataset, config, &mut |_| {})
}

/// [`pretrain`] reporting each finished epoch.
pub fn pretrain_with(
    spec: &ModelSpec,
    dataset: &[Image],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLoss),
) -> Result<PretrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let generator = Generator::new(spec.clone())?;
    let init = generator.init_params(seed::derive(config.seed, &[stream::TRAIN_SHUFFLE, u64::MAX]));
    let mut trainer = Trainer::new(&generator, init, config.weights, config.lr, config.adam, config.seed)?;
    let size = spec.input_size;
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 1..=config.epochs {
        let e = epoch as u64;
        let mut rng = seed::rng(seed::derive(config.seed, &[stream::TRAIN_SHUFFLE, e]));
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch) {
            let batch = chunk
                .iter()
                .map(|&idx| {
                    let clean = &dataset[idx];
                    let path = [e, idx as u64];
                    let mask = config
                        .mask_spec
                        .generate(size, size, seed::derive(config.seed, &[stream::TRAIN_MASK, path[0], path[1]]))?;
                    let mut flip = seed::rng(seed::derive(config.seed, &[stream::TRAIN_FLIP, path[0], path[1]]));
                    let t = if config.flips {
                        [Transform::Identity, Transform::FlipHorizontal, Transform::FlipVertical, Transform::Rotate180]
                            [flip.random_range(0..4)]
                    } else {
                        Transform::Identity
                    };
                    let clean = t.apply(clean)?;
                    Ok(TrainSample {
                        input: apply_mask(&clean, &mask)?,
                        mask,
                        target: clean,
                        exclusion: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let StepLoss { total, .. } = trainer.step(&generator, &batch).map_err(|err| at_epoch(err, epoch))?;
            sum += total;
            steps += 1;
        }
        let entry = EpochLoss {
            epoch,
            loss: sum / steps as f64,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(PretrainOutcome {
        params: trainer.params,
        log,
    })
}

fn at_epoch(err: Error, epoch: usize) -> Error {
    match err {
        Error::Numeric { what, .. } => Error::Numeric {
            iteration: None,
            what: format!("epoch {epoch}: {what}"),
        },
        other => other,
    }
}
