use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use selfex::png_io::{load_mask, save_image, save_mask};
use selfex::weights::save_model;
use selfex_core::finetune::baseline;
use selfex_core::maskgen::coverage;
use selfex_core::model::{Generator, ModelSpec};
use selfex_core::{apply_mask, Image, Mask};

fn selfex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfex")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn model(dir: &Path) -> (PathBuf, Generator) {
    let spec = ModelSpec {
        base_channels: 4,
        ..ModelSpec::default()
    };
    let g = Generator::new(spec).unwrap();
    let path = dir.join("model.stiw");
    save_model(g.spec(), &g.init_params::<f32>(8), &path).unwrap();
    (path, g)
}

fn texture() -> Image {
    Image::from_fn(64, 64, 3, |y, x, c| (((y / 6 + x / 6) % 3) as f32 * 0.3 + 0.05 * c as f32).min(1.0))
}

#[test]
fn metrics_of_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.png");
    save_image(&texture(), &p).unwrap();
    let out = selfex(&["metrics", "--a", s(&p), "--b", s(&p)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "psnr=100.00 ssim=1.0000");
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["metrics", "--a", "x.png"],
        vec!["metrics", "--a", "x.png", "--b", "y.png", "--bogus"],
        vec!["frobnicate"],
        vec![],
        vec!["finetune", "--weights", "w", "--image", "i", "--mask", "gen", "--out", "o", "--iters", "3", "--auto-stop"],
    ] {
        let out = selfex(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(selfex(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    let out = selfex(&["metrics", "--a", s(&missing), "--b", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = selfex(&["evaluate", "--config", s(&dir.path().join("none.json")), "--report", "r.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn maskgen_default_coverage() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["0", "1", "99", "123456789"] {
        let p = dir.path().join(format!("m{seed}.png"));
        let out = selfex(&["maskgen", "--height", "64", "--width", "64", "--seed", seed, "--out", s(&p)]);
        assert_eq!(out.status.code(), Some(0));
        let c = coverage(&load_mask(&p).unwrap());
        assert!((0.20..=0.40).contains(&c), "seed {seed}: {c}");
    }
    let p = dir.path().join("narrow.png");
    let out = selfex(&[
        "maskgen", "--height", "64", "--width", "64", "--seed", "5", "--coverage-min", "0.3", "--coverage-max", "0.35",
        "--out", s(&p),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!((0.3..=0.35).contains(&coverage(&load_mask(&p).unwrap())));
}

#[test]
fn zero_iterations_reproduce_the_baseline_file() {
    let dir = tempfile::tempdir().unwrap();
    let (weights, g) = model(dir.path());
    let image = dir.path().join("img.png");
    save_image(&texture(), &image).unwrap();
    let mask = Mask::from_fn(64, 64, |y, x| (20..40).contains(&y) && (10..50).contains(&x));
    let mask_path = dir.path().join("mask.png");
    save_mask(&mask, &mask_path).unwrap();
    let (out, base) = (dir.path().join("out.png"), dir.path().join("base.png"));
    let run = selfex(&[
        "finetune", "--weights", s(&weights), "--image", s(&image), "--mask", s(&mask_path), "--out", s(&out),
        "--iters", "0", "--baseline-out", s(&base),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let out_bytes = std::fs::read(&out).unwrap();
    assert_eq!(out_bytes, std::fs::read(&base).unwrap());

    let loaded = selfex::png_io::load_image(&image).unwrap();
    let params = g.init_params::<f32>(8);
    let expected = baseline(&g, &params, &apply_mask(&loaded, &mask).unwrap(), &mask).unwrap();
    let independent = dir.path().join("independent.png");
    save_image(&expected, &independent).unwrap();
    assert_eq!(out_bytes, std::fs::read(&independent).unwrap());
}

#[test]
fn short_finetune_with_generated_mask() {
    let dir = tempfile::tempdir().unwrap();
    let (weights, _) = model(dir.path());
    let image = dir.path().join("img.png");
    save_image(&texture(), &image).unwrap();
    let (out, mask_out, log) = (dir.path().join("o.png"), dir.path().join("m.png"), dir.path().join("log.csv"));
    let run = selfex(&[
        "finetune", "--weights", s(&weights), "--image", s(&image), "--mask", "gen", "--out", s(&out), "--iters", "2",
        "--seed", "4", "--mask-out", s(&mask_out), "--log", s(&log),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,loss_rec,loss_adv,fid_or_blank");
    assert_eq!(lines.len(), 4);
    let c = coverage(&load_mask(&mask_out).unwrap());
    assert!((0.2..=0.4).contains(&c));
}

#[test]
fn wrong_image_size_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (weights, _) = model(dir.path());
    let image = dir.path().join("small.png");
    save_image(&Image::filled(10, 10, 3, 0.5), &image).unwrap();
    let run = selfex(&[
        "finetune", "--weights", s(&weights), "--image", s(&image), "--mask", "gen", "--out", s(&dir.path().join("o.png")),
    ]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn defaults_are_loadable_json() {
    for kind in ["pretrain", "evaluate", "finetune"] {
        let out = selfex(&["defaults", kind]);
        assert_eq!(out.status.code(), Some(0));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v.is_object());
    }
    let out = selfex(&["defaults", "evaluate"]);
    let config: selfex::config::ExperimentConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(config, selfex::config::reference_experiment());
}
