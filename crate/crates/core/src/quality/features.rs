use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::frechet::{frechet_distance, gaussian_stats};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::seed;

pub const PATCH: usize = 8;
pub const STRIDE: usize = 4;
pub const FEATURE_DIM: usize = 16;

const PATCH_LEN: usize = PATCH * PATCH * 3;

/// Which patches of an image contribute features.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    All,
    /// Patches whose center pixel is a hole.
    Holes(&'a Mask),
    /// Patches lying entirely outside the hole.
    Valid(&'a Mask),
}

impl Region<'_> {
    fn contains(&self, y: usize, x: usize) -> bool {
        match self {
            Region::All => true,
            Region::Holes(m) => m.is_hole(y + PATCH / 2, x + PATCH / 2),
            Region::Valid(m) => (y..y + PATCH).all(|yy| (x..x + PATCH).all(|xx| !m.is_hole(yy, xx))),
        }
    }

    fn mask(&self) -> Option<&Mask> {
        match self {
            Region::All => None,
            Region::Holes(m) | Region::Valid(m) => Some(m),
        }
    }
}

/// The fixed projection, seeded with 0 and drawn in a fixed order.
fn projection() -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(0, &[seed::stream::FEATURES]));
    let scale = 1.0 / libm::sqrt(PATCH_LEN as f64);
    (0..FEATURE_DIM * PATCH_LEN)
        .map(|_| rng.random_range(-1.0..=1.0) * scale)
        .collect()
}

/// Projects every selected 8×8 patch (stride 4) to a 16-dimensional vector.
///
/// Grayscale images are replicated to three channels first.
pub fn extract_patch_features(image: &Image, region: Region<'_>) -> Result<Vec<Vec<f64>>> {
    if let Some(m) = region.mask() {
        if m.height() != image.height() || m.width() != image.width() {
            return Err(Error::shape(
                format!("{}x{} region", image.height(), image.width()),
                format!("{}x{}", m.height(), m.width()),
            ));
        }
    }
    let rgb = image.to_rgb();
    let (h, w) = (rgb.height(), rgb.width());
    if h < PATCH || w < PATCH {
        return Err(Error::Degenerate(format!("{h}x{w} image holds no {PATCH}x{PATCH} patch")));
    }
    let proj = projection();
    let mut patch = [0.0f64; PATCH_LEN];
    let mut out = Vec::new();
    for y in (0..=h - PATCH).step_by(STRIDE) {
        for x in (0..=w - PATCH).step_by(STRIDE) {
            if !region.contains(y, x) {
                continue;
            }
            let mut i = 0;
            for yy in y..y + PATCH {
                let row = &rgb.data()[(yy * w + x) * 3..(yy * w + x + PATCH) * 3];
                for &v in row {
                    patch[i] = v as f64;
                    i += 1;
                }
            }
            let f = proj
                .chunks_exact(PATCH_LEN)
                .map(|wk| wk.iter().zip(&patch).map(|(a, b)| a * b).sum())
                .collect();
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err(Error::Degenerate("region contains no full patch".into()));
    }
    Ok(out)
}

/// Fréchet distance between the patch-feature Gaussians of two regions.
/// Each side needs at least `FEATURE_DIM + 1` patches.
pub fn internal_fid(candidate: &Image, candidate_region: Region<'_>, reference: &Image, reference_region: Region<'_>) -> Result<f64> {
    let stats = |image: &Image, region: Region<'_>, side: &str| {
        let f = extract_patch_features(image, region)?;
        if f.len() < FEATURE_DIM + 1 {
            return Err(Error::Degenerate(format!(
                "{side} region yields {} patches, need {}",
                f.len(),
                FEATURE_DIM + 1
            )));
        }
        gaussian_stats(&f)
    };
    let a = stats(candidate, candidate_region, "candidate")?;
    let b = stats(reference, reference_region, "reference")?;
    frechet_distance(&a, &b)
}
