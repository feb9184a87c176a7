//! The `selfex` command line. Exit status: 0 on success, 1 on usage
//! errors, 2 on runtime errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use selfex_core::finetune::{run_finetune, FinetuneConfig};
use selfex_core::maskgen::{coverage, gen_freeform, FreeformSpec, MaskSpec};
use selfex_core::model::Generator;
use selfex_core::pretrain::pretrain_with;
use selfex_core::quality::{psnr, ssim, StopPolicy};
use selfex_core::{apply_mask, Image};

use crate::config::{read_json, reference_experiment, reference_pretrain, write_json, ExperimentConfig, PretrainConfig};
use crate::dataset::pretrain_corpus;
use crate::error::{Error, Result};
use crate::experiment::evaluate;
use crate::png_io::{load_image, load_mask, save_image, save_mask};
use crate::report::{write_loss_log, write_runlog};
use crate::weights::{load_model, save_model};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "selfex", version, about = "Test-time self-supervised fine-tuning for inpainting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a generator on the synthetic corpus.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV; defaults to `<out>.loss.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Adapt a pre-trained generator to one masked image.
    Finetune(FinetuneArgs),
    /// Run a before/after experiment and write its report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate a free-form mask.
    Maskgen {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        coverage_min: f64,
        #[arg(long, default_value_t = 0.4)]
        coverage_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print PSNR and SSIM between two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Write a reference configuration with every default spelled out.
    Defaults {
        #[arg(value_enum)]
        kind: DefaultsKind,
        /// Print to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DefaultsKind {
    Pretrain,
    Evaluate,
    Finetune,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Model spec JSON; defaults to the weights' sidecar.
    #[arg(long)]
    model_spec: Option<PathBuf>,
    #[arg(long)]
    image: PathBuf,
    /// Mask PNG (255 = hole), or `gen` to draw a free-form mask from `--seed`.
    #[arg(long)]
    mask: String,
    #[arg(long)]
    out: PathBuf,
    /// Iteration budget.
    #[arg(long, conflicts_with = "auto_stop")]
    iters: Option<usize>,
    /// Stop when the internal FID starts to rise and keep the best snapshot.
    #[arg(long)]
    auto_stop: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lr: Option<f64>,
    /// Fine-tuning config JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the output of the model before fine-tuning.
    #[arg(long)]
    baseline_out: Option<PathBuf>,
    /// Also write the generated or loaded mask.
    #[arg(long)]
    mask_out: Option<PathBuf>,
    /// Per-iteration log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(value, path),
        None => {
            println!("{}", serde_json::to_string_pretty(value).expect("config serializes"));
            Ok(())
        }
    }
}

fn cmd_pretrain(config: &Path, out: &Path, log: Option<&Path>, quiet: bool) -> Result<()> {
    let config = PretrainConfig::load(config)?;
    let corpus = pretrain_corpus(&config)?;
    let result = pretrain_with(&config.model, &corpus, &config.train, &mut |e| {
        if !quiet {
            eprintln!("epoch {:>4}  loss {:.6}", e.epoch, e.loss);
        }
    })?;
    save_model(&config.model, &result.params, out)?;
    let default_log = PathBuf::from(format!("{}.loss.csv", out.display()));
    write_loss_log(&result.log, log.unwrap_or(&default_log))
}

fn cmd_finetune(args: &FinetuneArgs) -> Result<()> {
    let (spec, theta0) = load_model(&args.weights, args.model_spec.as_deref())?;
    let generator = Generator::new(spec)?;
    let image = load_image(&args.image)?;
    let size = generator.spec().input_size;
    if image.height() != size || image.width() != size {
        return Err(Error::Invalid(format!(
            "{} is {}x{}; the model expects {size}x{size}",
            args.image.display(),
            image.height(),
            image.width()
        )));
    }
    let mut config: FinetuneConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => FinetuneConfig::default(),
    };
    config.seed = args.seed;
    if let Some(iters) = args.iters {
        config.iterations = iters;
    }
    if let Some(lr) = args.lr {
        config.lr = lr;
    }
    if args.auto_stop && config.auto_stop.is_none() {
        config.auto_stop = Some(StopPolicy::default());
    }
    let mask = if args.mask == "gen" {
        MaskSpec::default().generate(size, size, args.seed)?
    } else {
        load_mask(&args.mask)?
    };
    let input = apply_mask(&image, &mask)?;
    let outcome = run_finetune(&generator, &theta0, &input, &mask, &config).map_err(|f| Error::Core(f.error))?;
    save_image(&outcome.image, &args.out)?;
    if let Some(path) = &args.baseline_out {
        save_image(&outcome.baseline, path)?;
    }
    if let Some(path) = &args.mask_out {
        save_mask(&mask, path)?;
    }
    if let Some(path) = &args.log {
        write_runlog(&outcome.log, path)?;
    }
    eprintln!(
        "{} after {} iterations ({}), parameters from iteration {}",
        args.out.display(),
        outcome.iterations,
        outcome.stop_reason.as_str(),
        outcome.selected_iteration
    );
    Ok(())
}

fn cmd_maskgen(height: usize, width: usize, seed: u64, min: f64, max: f64, out: &Path) -> Result<()> {
    let spec = FreeformSpec::default().with_coverage(min, max);
    let mask = gen_freeform(height, width, &spec, seed)?;
    save_mask(&mask, out)?;
    eprintln!("{} coverage {:.4}", out.display(), coverage(&mask));
    Ok(())
}

fn cmd_metrics(a: &Path, b: &Path) -> Result<()> {
    let (a, b): (Image, Image) = (load_image(a)?, load_image(b)?);
    println!("psnr={:.2} ssim={:.4}", psnr(&a, &b)?, ssim(&a, &b)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain {
            config,
            out,
            log,
            quiet,
        } => cmd_pretrain(&config, &out, log.as_deref(), quiet),
        Command::Finetune(args) => cmd_finetune(&args),
        Command::Evaluate { config, report } => {
            let config = ExperimentConfig::load(&config)?;
            let outcome = evaluate(&config, &report)?;
            for (id, e) in &outcome.failures {
                eprintln!("{id} failed: {e}");
            }
            Ok(())
        }
        Command::Maskgen {
            height,
            width,
            seed,
            coverage_min,
            coverage_max,
            out,
        } => cmd_maskgen(height, width, seed, coverage_min, coverage_max, &out),
        Command::Metrics { a, b } => cmd_metrics(&a, &b),
        Command::Defaults { kind, out } => match kind {
            DefaultsKind::Pretrain => print_json(&reference_pretrain(), out.as_deref()),
            DefaultsKind::Evaluate => print_json(&reference_experiment(), out.as_deref()),
            DefaultsKind::Finetune => print_json(&FinetuneConfig::default(), out.as_deref()),
        },
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
