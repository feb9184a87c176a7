//! JSON configuration files. Every field has a default, and
//! [`reference_pretrain`] / [`reference_experiment`] produce complete
//! reference files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use selfex_core::finetune::FinetuneConfig;
use selfex_core::maskgen::MaskSpec;
use selfex_core::model::ModelSpec;
use selfex_core::pretrain::{DatasetSpec, TrainConfig};

use crate::error::{Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("config serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub model: ModelSpec,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    /// Share of the corpus drawn from `dataset.folder`, when set.
    pub real_fraction: f64,
    pub dataset_seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
            real_fraction: 0.1,
            dataset_seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: Self = read_json(path)?;
        if let Some(folder) = &config.dataset.folder {
            config.dataset.folder = Some(resolve(path, Path::new(folder)).to_string_lossy().into_owned());
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.dataset.validate()?;
        self.train.validate()?;
        if self.dataset.image_size != self.model.input_size {
            return Err(Error::Invalid(format!(
                "dataset image_size {} differs from model input_size {}",
                self.dataset.image_size, self.model.input_size
            )));
        }
        if !(0.0..=1.0).contains(&self.real_fraction) {
            return Err(Error::Invalid(format!("real_fraction {} outside [0, 1]", self.real_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ImageSource {
    /// Every PNG in a folder, in file-name order; ids are file stems.
    Folder { path: PathBuf },
    Synthetic { dataset: DatasetSpec, seed: u64 },
    /// White noise; ids start with `noise-`.
    Noise { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MaskSource {
    /// A fresh mask per image, seeded from the global seed and image index.
    Generate { spec: MaskSpec },
    /// `<id>.png` per image.
    Folder { path: PathBuf },
}

impl Default for MaskSource {
    fn default() -> Self {
        MaskSource::Generate {
            spec: MaskSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Psnr,
    Ssim,
    Fid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub weights: PathBuf,
    /// Defaults to the weights' sidecar.
    pub model_spec: Option<PathBuf>,
    pub images: Vec<ImageSource>,
    pub masks: MaskSource,
    /// Its `iterations` is replaced by the last checkpoint.
    pub finetune: FinetuneConfig,
    pub metrics: Vec<Metric>,
    pub checkpoints: Vec<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Fill the report's `seconds` column. Off by default so reports are
    /// byte-reproducible; timings always go to `timing.csv`.
    pub record_timing: bool,
    /// Worker threads for per-image runs; 0 uses all cores.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            weights: PathBuf::from("model.stiw"),
            model_spec: None,
            images: Vec::new(),
            masks: MaskSource::default(),
            finetune: FinetuneConfig::default(),
            metrics: vec![Metric::Psnr, Metric::Ssim, Metric::Fid],
            checkpoints: vec![0, 100, 200, 400],
            output_dir: PathBuf::from("out"),
            seed: 0,
            record_timing: false,
            threads: 0,
        }
    }
}

fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new("")).join(p)
    }
}

impl ExperimentConfig {
    /// Reads a config, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut c: Self = read_json(path)?;
        c.weights = resolve(path, &c.weights);
        c.model_spec = c.model_spec.map(|p| resolve(path, &p));
        c.output_dir = resolve(path, &c.output_dir);
        for source in &mut c.images {
            if let ImageSource::Folder { path: p } = source {
                *p = resolve(path, p);
            }
        }
        if let MaskSource::Folder { path: p } = &mut c.masks {
            *p = resolve(path, p);
        }
        c.validate()?;
        if !c.weights.is_file() {
            return Err(Error::Invalid(format!("weights file {} not found", c.weights.display())));
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.checkpoints.first() != Some(&0) || !self.checkpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Invalid(format!(
                "checkpoints must be strictly increasing and start at 0, got {:?}",
                self.checkpoints
            )));
        }
        if self.images.is_empty() {
            return Err(Error::Invalid("no image sources configured".into()));
        }
        self.effective_finetune().validate()?;
        Ok(())
    }

    /// The fine-tuning config with its budget set to the last checkpoint.
    pub fn effective_finetune(&self) -> FinetuneConfig {
        FinetuneConfig {
            iterations: self.checkpoints.last().copied().unwrap_or(0),
            ..self.finetune.clone()
        }
    }

    pub fn wants(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }
}

pub fn reference_pretrain() -> PretrainConfig {
    PretrainConfig::default()
}

pub fn reference_experiment() -> ExperimentConfig {
    ExperimentConfig {
        images: vec![ImageSource::Synthetic {
            dataset: DatasetSpec {
                period_min: 14,
                period_max: 24,
                count: 20,
                ..DatasetSpec::default()
            },
            seed: 1,
        }],
        ..ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_configs_round_trip() {
        let e = reference_experiment();
        let text = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), e);
        let p = reference_pretrain();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PretrainConfig>(&text).unwrap(), p);
    }

    #[test]
    fn partial_config_takes_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"images": [{"kind": "noise", "count": 3, "seed": 9}], "checkpoints": [0, 5]}"#).unwrap();
        assert_eq!(c.finetune, FinetuneConfig::default());
        assert_eq!(c.effective_finetune().iterations, 5);
        c.validate().unwrap();
    }

    #[test]
    fn bad_checkpoints_and_unknown_fields() {
        let c = ExperimentConfig {
            checkpoints: vec![10, 20],
            ..reference_experiment()
        };
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"checkpoint": [0]}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"finetune": {"iters": 3}}"#).is_err());
        assert!(serde_json::from_str::<PretrainConfig>(r#"{"model": {"channels": 8}}"#).is_err());
    }
}
