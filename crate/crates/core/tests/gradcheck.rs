use selfex_core::model::{grad, Generator, LossFn, ModelSpec, TrainSample};
use selfex_core::{Image, Mask, Result};

struct HalfSquared;

impl LossFn<f64> for HalfSquared {
    fn loss_and_grad(&self, output: &[f64], sample: &TrainSample) -> Result<(f64, Vec<f64>)> {
        let n = sample.target.height() * sample.target.width();
        let mut loss = 0.0;
        let mut g = vec![0.0; output.len()];
        for p in 0..n {
            for c in 0..3 {
                let d = output[c * n + p] - sample.target.data()[p * 3 + c] as f64;
                loss += 0.5 * d * d;
                g[c * n + p] = d;
            }
        }
        Ok((loss, g))
    }
}

fn sample(size: usize, k: usize) -> TrainSample {
    let target = Image::from_fn(size, size, 3, |y, x, c| ((y * 7 + x * 3 + c * 5 + k) % 11) as f32 / 10.0);
    let mask = Mask::from_fn(size, size, |y, x| (2..5).contains(&y) && (1 + k..5 + k).contains(&x));
    TrainSample {
        input: selfex_core::apply_mask(&target, &mask).unwrap(),
        mask,
        target,
        exclusion: None,
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let spec = ModelSpec {
        input_size: 8,
        base_channels: 4,
        depth: 1,
        dilations: vec![2],
        ..ModelSpec::default()
    };
    let g = Generator::new(spec).unwrap();
    let params = g.init_params::<f64>(3);
    let batch = [sample(8, 0), sample(8, 2)];
    let (_, analytic) = grad(&g, &params, &HalfSquared, &batch).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (pi, p) in params.params().iter().enumerate() {
        for i in (0..p.len()).step_by(1 + p.len() / 12) {
            let eval = |delta: f64| {
                let mut q = params.clone();
                q.values_mut().nth(pi).unwrap().1[i] += delta;
                grad(&g, &q, &HalfSquared, &batch).unwrap().0
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.params()[pi].data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
            assert!(rel < 1e-3, "{} [{i}]: analytic {a} numeric {numeric}", p.name);
        }
    }
    assert!(worst < 1e-3);
}
