use proptest::prelude::*;
use selfex_core::finetune::{rec_loss, RecLossFn};
use selfex_core::maskgen::{coverage, gen_freeform, FreeformSpec};
use selfex_core::model::{LossFn, TrainSample};
use selfex_core::quality::{extract_patch_features, frechet_distance, psnr, should_stop, ssim, FeatureStats, Region, StopPolicy};
use selfex_core::{apply_mask, composite, Image, Mask, Transform};

fn image(h: usize, w: usize, c: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f32..=1.0, h * w * c).prop_map(move |d| Image::new(h, w, c, d).unwrap())
}

fn mask(h: usize, w: usize) -> impl Strategy<Value = Mask> {
    prop::collection::vec(0u8..=1, h * w).prop_map(move |d| Mask::new(h, w, d).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..9, 1usize..9, prop::sample::select(vec![1usize, 3]))
}

fn image_mask() -> impl Strategy<Value = (Image, Mask)> {
    dims().prop_flat_map(|(h, w, c)| (image(h, w, c), mask(h, w)))
}

fn spd(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d * (d + 1)).prop_map(move |a| {
        let rows = d + 1;
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = (0..rows).map(|r| a[r * d + i] * a[r * d + j]).sum::<f64>() / rows as f64;
            }
        }
        cov
    })
}

fn stats(d: usize) -> impl Strategy<Value = FeatureStats> {
    (prop::collection::vec(-3.0f64..3.0, d), spd(d)).prop_map(|(m, c)| FeatureStats::new(m, c, 100).unwrap())
}

proptest! {
    #[test]
    fn mask_and_complement_partition((x, m) in image_mask()) {
        let a = apply_mask(&x, &m).unwrap();
        let b = apply_mask(&x, &m.complement()).unwrap();
        for ((&p, &q), &v) in a.data().iter().zip(b.data()).zip(x.data()) {
            prop_assert_eq!(p + q, v);
        }
    }

    #[test]
    fn composite_keeps_valid_pixels((x, m) in image_mask(), seed in any::<u64>()) {
        let c = x.channels();
        let p = Image::from_fn(x.height(), x.width(), c, |y, xx, k| ((seed as usize + y * 31 + xx * 7 + k) % 97) as f32 / 96.0);
        let out = composite(&p, &x, &m).unwrap();
        for y in 0..x.height() {
            for xx in 0..x.width() {
                let src = if m.is_hole(y, xx) { &p } else { &x };
                for k in 0..c {
                    prop_assert_eq!(out.get(y, xx, k).to_bits(), src.get(y, xx, k).to_bits());
                }
            }
        }
    }

    #[test]
    fn transform_inverse_roundtrips(n in 1usize..8, c in prop::sample::select(vec![1usize, 3]), op in prop::sample::select(Transform::ALL.to_vec()), seed in any::<u32>()) {
        let x = Image::from_fn(n, n, c, |y, xx, k| ((seed as usize ^ (y * 13 + xx * 5 + k)) % 251) as f32 / 250.0);
        let y = op.apply(&x).unwrap();
        prop_assert_eq!(op.inverse().apply(&y).unwrap(), x);
        let m = Mask::from_fn(n, n, |a, b| (a * 3 + b + seed as usize) % 4 == 0);
        prop_assert_eq!(op.inverse().apply_mask(&op.apply_mask(&m).unwrap()).unwrap(), m.clone());
        prop_assert_eq!(op.apply_mask(&m).unwrap().holes(), m.holes());
    }

    #[test]
    fn psnr_symmetric_and_monotone(x in image(6, 6, 3), e1 in 0.01f32..0.2, e2 in 0.21f32..0.4) {
        let y = Image::from_fn(6, 6, 3, |a, b, k| x.get(a, b, k) + if x.get(a, b, k) < 0.5 { e1 } else { -e1 });
        prop_assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
        let z = Image::from_fn(6, 6, 3, |a, b, k| x.get(a, b, k) + if x.get(a, b, k) < 0.5 { e2 } else { -e2 });
        prop_assert!(psnr(&x, &z).unwrap() < psnr(&x, &y).unwrap());
    }

    #[test]
    fn ssim_bounded_with_unit_identity(a in image(12, 12, 3), b in image(12, 12, 3)) {
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let s = ssim(&a, &b).unwrap();
        prop_assert!(s.abs() <= 1.0 + 1e-12);
        prop_assert_eq!(s, ssim(&b, &a).unwrap());
    }

    #[test]
    fn frechet_symmetric_nonnegative_zero_on_self((s1, s2) in (1usize..5).prop_flat_map(|d| (stats(d), stats(d)))) {
        let ab = frechet_distance(&s1, &s2).unwrap();
        prop_assert_eq!(ab, frechet_distance(&s2, &s1).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!(frechet_distance(&s1, &s1).unwrap().abs() < 1e-7);
    }

    #[test]
    fn should_stop_is_pure(fids in prop::collection::vec(0.0f64..10.0, 0..12), w in 1usize..4, p in 1usize..3, m in 0usize..6) {
        let hist: Vec<(usize, f64)> = fids.iter().enumerate().map(|(i, &f)| (i * 25, f)).collect();
        let policy = StopPolicy { window: w, patience: p, min_evals: m };
        let first = should_stop(&hist, &policy);
        prop_assert_eq!(first, should_stop(&hist.clone(), &policy));
        if hist.len() < m.max(1) {
            prop_assert!(!first);
        }
    }

    #[test]
    fn freeform_is_binary_deterministic_and_in_bounds(seed in any::<u64>()) {
        let spec = FreeformSpec::default();
        let a = gen_freeform(64, 64, &spec, seed).unwrap();
        prop_assert!(a.data().iter().all(|&v| v <= 1));
        let cov = coverage(&a);
        prop_assert!((spec.coverage_min..=spec.coverage_max).contains(&cov));
        prop_assert_eq!(a, gen_freeform(64, 64, &spec, seed).unwrap());
    }

    #[test]
    fn features_are_deterministic(x in image(16, 16, 3)) {
        let a = extract_patch_features(&x, Region::All).unwrap();
        let b = extract_patch_features(&x, Region::All).unwrap();
        prop_assert_eq!(a.len(), 9);
        let bits = |v: &Vec<Vec<f64>>| v.iter().flatten().map(|f| f.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rec_loss_ignores_hole_values((t, m) in image_mask(), noise in any::<u64>()) {
        let c = t.channels();
        let p = Image::from_fn(t.height(), t.width(), c, |y, x, k| ((noise as usize + y + 2 * x + k) % 13) as f32 / 12.0);
        let base = rec_loss(&t, &p, &m).unwrap();
        let scramble = |img: &Image, salt: usize| Image::from_fn(img.height(), img.width(), c, |y, x, k| {
            if m.is_hole(y, x) { ((salt + y * 5 + x + k) % 7) as f32 / 6.0 } else { img.get(y, x, k) }
        });
        let again = rec_loss(&scramble(&t, 3), &scramble(&p, 11), &m).unwrap();
        prop_assert_eq!(base.value.to_bits(), again.value.to_bits());
        prop_assert_eq!(base.degenerate, again.degenerate);
    }
}

#[test]
fn rec_loss_output_gradient_ignores_holes() {
    let target = Image::from_fn(8, 8, 3, |y, x, c| ((y * 3 + x + c) % 5) as f32 / 4.0);
    let m = Mask::from_fn(8, 8, |y, x| y > 4 && x < 3);
    let sample = TrainSample {
        input: apply_mask(&target, &m).unwrap(),
        mask: m.clone(),
        target,
        exclusion: Some(m.clone()),
    };
    let out: Vec<f32> = (0..3 * 64).map(|i| (i % 9) as f32 / 8.0).collect();
    let (l0, g0) = RecLossFn::default().loss_and_grad(&out, &sample).unwrap();
    let mut out2 = out.clone();
    for p in 0..64 {
        if m.data()[p] == 1 {
            for c in 0..3 {
                out2[c * 64 + p] = 0.123;
            }
        }
    }
    let (l1, g1) = RecLossFn::default().loss_and_grad(&out2, &sample).unwrap();
    assert_eq!(l0.to_bits(), l1.to_bits());
    assert_eq!(g0, g1);
}
