//! Before/after evaluation over a set of images.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use selfex_core::finetune::{run_finetune_with, FinetuneConfig, FinetuneSession, InternalFid, RunLog, StopReason};
use selfex_core::model::{Generator, ParamSet};
use selfex_core::quality::{
    extract_patch_features, frechet_distance, gaussian_stats, internal_fid, psnr, ssim, Region,
};
use selfex_core::seed::{self, stream};
use selfex_core::{apply_mask, Image, Mask};

use crate::config::{ExperimentConfig, MaskSource, Metric};
use crate::dataset::load_source;
use crate::error::{Error, Result};
use crate::png_io::{load_mask, save_image, save_mask};
use crate::report::{write_runlog, ReportRow, FAILED, MEAN_ID, SET_ID};
use crate::weights::load_model;

/// Everything the report needs from one image.
struct CaseResult {
    id: String,
    rows: Vec<ReportRow>,
    /// Composite at each checkpoint, for set-level scores.
    composites: Vec<Image>,
    input: Option<(Image, Mask)>,
    summary: Option<CaseSummary>,
    seconds: f64,
    error: Option<String>,
}

/// How one successful run ended.
#[derive(Debug, Clone)]
pub struct CaseSummary {
    pub id: String,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub selected_iteration: usize,
    /// Internal FID of the returned restoration.
    pub final_fid: Option<f64>,
    pub log: RunLog,
}

pub struct ExperimentOutcome {
    pub rows: Vec<ReportRow>,
    /// `(image id, wall-clock seconds)`.
    pub timing: Vec<(String, f64)>,
    pub failures: Vec<(String, String)>,
    /// Successful runs, sorted by id.
    pub cases: Vec<CaseSummary>,
}

struct Metrics<'a> {
    config: &'a ExperimentConfig,
    truth: &'a Image,
    input: &'a Image,
    mask: &'a Mask,
}

impl Metrics<'_> {
    fn row(&self, id: &str, t: usize, candidate: &Image, seconds: f64, reason: StopReason) -> Result<ReportRow> {
        let c = self.config;
        Ok(ReportRow {
            image_id: id.to_string(),
            t: Some(t),
            psnr: c.wants(Metric::Psnr).then(|| psnr(candidate, self.truth)).transpose()?,
            ssim: c.wants(Metric::Ssim).then(|| ssim(candidate, self.truth)).transpose()?,
            fid: c
                .wants(Metric::Fid)
                .then(|| internal_fid(candidate, Region::Holes(self.mask), self.input, Region::Valid(self.mask)))
                .transpose()?,
            seconds: c.record_timing.then_some(seconds),
            stop_reason: reason.as_str().to_string(),
        })
    }
}

fn case_mask(config: &ExperimentConfig, index: usize, id: &str, size: usize) -> Result<Mask> {
    let mask = match &config.masks {
        MaskSource::Generate { spec } => {
            spec.generate(size, size, seed::derive(config.seed, &[stream::EXPERIMENT_MASK, index as u64]))?
        }
        MaskSource::Folder { path } => load_mask(path.join(format!("{id}.png")))?,
    };
    if mask.height() != size || mask.width() != size {
        return Err(Error::Invalid(format!(
            "mask for {id} is {}x{}, expected {size}x{size}",
            mask.height(),
            mask.width()
        )));
    }
    Ok(mask)
}

fn run_case(
    config: &ExperimentConfig,
    generator: &Generator,
    theta0: &ParamSet<f32>,
    index: usize,
    id: &str,
    truth: &Image,
) -> Result<(Vec<ReportRow>, Vec<Image>, Image, Mask, CaseSummary)> {
    let start = Instant::now();
    let size = generator.spec().input_size;
    let mask = case_mask(config, index, id, size)?;
    let input = apply_mask(truth, &mask)?;
    let ft = FinetuneConfig {
        seed: seed::derive(config.seed, &[stream::IMAGE, index as u64]),
        ..config.effective_finetune()
    };
    let metrics = Metrics {
        config,
        truth,
        input: &input,
        mask: &mask,
    };
    let checkpoints = &config.checkpoints;
    let mut rows = Vec::with_capacity(checkpoints.len());
    let mut composites = Vec::with_capacity(checkpoints.len());
    let auto = ft.auto_stop.is_some();
    let mut observer = |session: &FinetuneSession<'_>| -> selfex_core::Result<()> {
        let i = session.iteration();
        if checkpoints.get(rows.len()) != Some(&i) {
            return Ok(());
        }
        let params = match session.best() {
            Some(best) if auto => &best.params,
            _ => session.params(),
        };
        let candidate = session.restore(params)?;
        let row = metrics
            .row(id, i, &candidate, start.elapsed().as_secs_f64(), StopReason::Budget)
            .map_err(|e| match e {
                Error::Core(core) => core,
                other => selfex_core::Error::Config(other.to_string()),
            })?;
        rows.push(row);
        composites.push(candidate);
        Ok(())
    };
    let outcome = run_finetune_with(generator, theta0, &input, &mask, &ft, &mut InternalFid, &mut observer)
        .map_err(|f| Error::Core(f.error))?;
    for &c in &checkpoints[rows.len()..] {
        rows.push(metrics.row(id, c, &outcome.image, start.elapsed().as_secs_f64(), outcome.stop_reason)?);
        composites.push(outcome.image.clone());
    }

    let dir = config.output_dir.join("images").join(id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    save_image(&input, dir.join("input.png"))?;
    save_mask(&mask, dir.join("mask.png"))?;
    save_image(&outcome.i_pred, dir.join("initial_raw.png"))?;
    save_image(&outcome.baseline, dir.join("baseline.png"))?;
    save_image(&generator.forward(&outcome.params, &input, &mask)?, dir.join("final_raw.png"))?;
    save_image(&outcome.image, dir.join("final.png"))?;
    write_runlog(&outcome.log, &config.output_dir.join("runs").join(format!("{id}.csv")))?;
    let summary = CaseSummary {
        id: id.to_string(),
        stop_reason: outcome.stop_reason,
        iterations: outcome.iterations,
        selected_iteration: outcome.selected_iteration,
        final_fid: internal_fid(&outcome.image, Region::Holes(&mask), &input, Region::Valid(&mask)).ok(),
        log: outcome.log,
    };
    Ok((rows, composites, input, mask, summary))
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<_>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Pools hole patches of every composite against valid patches of every input.
fn set_fid(cases: &[CaseResult], k: usize) -> Option<f64> {
    let mut candidate = Vec::new();
    let mut reference = Vec::new();
    for c in cases.iter().filter(|c| c.error.is_none()) {
        let (input, mask) = c.input.as_ref()?;
        candidate.extend(extract_patch_features(&c.composites[k], Region::Holes(mask)).ok()?);
        reference.extend(extract_patch_features(input, Region::Valid(mask)).ok()?);
    }
    let a = gaussian_stats(&candidate).ok()?;
    let b = gaussian_stats(&reference).ok()?;
    frechet_distance(&a, &b).ok()
}

/// Fine-tunes every configured image and returns the report rows:
/// per-image rows sorted by id, then one `mean` and one `set` row per
/// checkpoint. A failed image contributes a single `failed` row.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let (spec, theta0) = load_model(&config.weights, config.model_spec.as_deref())?;
    let generator = Generator::new(spec)?;
    let size = generator.spec().input_size;
    let mut cases = Vec::new();
    for source in &config.images {
        cases.extend(load_source(source, size)?);
    }
    let mut seen = BTreeSet::new();
    if let Some((id, _)) = cases.iter().find(|(id, _)| !seen.insert(id.clone())) {
        return Err(Error::Invalid(format!("duplicate image id {id}")));
    }
    for dir in [config.output_dir.join("images"), config.output_dir.join("runs")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let work = || {
        cases
            .par_iter()
            .enumerate()
            .map(|(index, (id, truth))| {
                let start = Instant::now();
                let result = run_case(config, &generator, &theta0, index, id, truth);
                let seconds = start.elapsed().as_secs_f64();
                match result {
                    Ok((rows, composites, input, mask, summary)) => CaseResult {
                        id: id.clone(),
                        rows,
                        composites,
                        input: Some((input, mask)),
                        summary: Some(summary),
                        seconds,
                        error: None,
                    },
                    Err(e) => CaseResult {
                        id: id.clone(),
                        rows: vec![ReportRow {
                            image_id: id.clone(),
                            t: None,
                            psnr: None,
                            ssim: None,
                            fid: None,
                            seconds: config.record_timing.then_some(seconds),
                            stop_reason: FAILED.to_string(),
                        }],
                        composites: Vec::new(),
                        input: None,
                        summary: None,
                        seconds,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect::<Vec<_>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let mut results = pool.install(work);
    results.sort_by(|a, b| a.id.cmp(&b.id));

    let mut rows: Vec<ReportRow> = results.iter().flat_map(|c| c.rows.iter().cloned()).collect();
    let ok: Vec<&CaseResult> = results.iter().filter(|c| c.error.is_none()).collect();
    if !ok.is_empty() {
        for (k, &t) in config.checkpoints.iter().enumerate() {
            let at = |f: fn(&ReportRow) -> Option<f64>| mean(ok.iter().map(|c| f(&c.rows[k])));
            rows.push(ReportRow {
                image_id: MEAN_ID.to_string(),
                t: Some(t),
                psnr: at(|r| r.psnr),
                ssim: at(|r| r.ssim),
                fid: at(|r| r.fid),
                seconds: if config.record_timing { at(|r| r.seconds) } else { None },
                stop_reason: String::new(),
            });
        }
        if config.wants(Metric::Fid) {
            for (k, &t) in config.checkpoints.iter().enumerate() {
                rows.push(ReportRow {
                    image_id: SET_ID.to_string(),
                    t: Some(t),
                    psnr: None,
                    ssim: None,
                    fid: set_fid(&results, k),
                    seconds: None,
                    stop_reason: String::new(),
                });
            }
        }
    }
    Ok(ExperimentOutcome {
        rows,
        timing: results.iter().map(|c| (c.id.clone(), c.seconds)).collect(),
        failures: results
            .iter()
            .filter_map(|c| c.error.clone().map(|e| (c.id.clone(), e)))
            .collect(),
        cases: results.into_iter().filter_map(|c| c.summary).collect(),
    })
}

/// Runs an experiment and writes `report`, plus `timing.csv` and
/// `errors.txt` in the output directory.
pub fn evaluate(config: &ExperimentConfig, report: &Path) -> Result<ExperimentOutcome> {
    let outcome = run_experiment(config)?;
    crate::report::write_report(&outcome.rows, report)?;
    let timing = config.output_dir.join("timing.csv");
    let mut w = csv::Writer::from_path(&timing)?;
    w.write_record(["image_id", "seconds"])?;
    for (id, s) in &outcome.timing {
        w.write_record([id.clone(), format!("{s:.3}")])?;
    }
    w.flush().map_err(|e| Error::io(&timing, e))?;
    let errors = config.output_dir.join("errors.txt");
    let text: String = outcome.failures.iter().map(|(id, e)| format!("{id}: {e}\n")).collect();
    fs::write(&errors, text).map_err(|e| Error::io(&errors, e))?;
    Ok(outcome)
}
