//! Seeded free-form brush-stroke masks and rectangular masks.
//!
//! Free-form strokes are random-walk polylines swept by a disk of the
//! stroke's brush width. A generated mask whose hole coverage falls outside
//! the requested bounds is thrown away and regenerated from a derived
//! sub-seed, up to [`MAX_ATTEMPTS`] times.

use alloc::format;

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Mask;
use crate::seed;

pub const MAX_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FreeformSpec {
    pub strokes_min: usize,
    pub strokes_max: usize,
    pub vertices_min: usize,
    pub vertices_max: usize,
    /// Brush diameter in pixels.
    pub width_min: f64,
    pub width_max: f64,
    pub length_min: f64,
    pub length_max: f64,
    /// Largest direction change between consecutive segments, radians.
    pub angle_jitter: f64,
    pub coverage_min: f64,
    pub coverage_max: f64,
}

impl Default for FreeformSpec {
    /// Settings for 64×64 images.
    fn default() -> Self {
        Self {
            strokes_min: 1,
            strokes_max: 4,
            vertices_min: 4,
            vertices_max: 12,
            width_min: 4.0,
            width_max: 12.0,
            length_min: 4.0,
            length_max: 16.0,
            angle_jitter: core::f64::consts::FRAC_PI_4,
            coverage_min: 0.20,
            coverage_max: 0.40,
        }
    }
}

impl FreeformSpec {
    pub fn with_coverage(mut self, min: f64, max: f64) -> Self {
        self.coverage_min = min;
        self.coverage_max = max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.strokes_min <= self.strokes_max
            && self.vertices_min <= self.vertices_max
            && self.width_min <= self.width_max
            && self.length_min <= self.length_max;
        if !ordered {
            return Err(Error::Spec(format!("free-form bounds must satisfy min <= max: {self:?}")));
        }
        if self.width_min <= 0.0 || self.length_min < 0.0 || self.angle_jitter < 0.0 {
            return Err(Error::Spec(format!(
                "brush width must be positive, length and jitter non-negative: {self:?}"
            )));
        }
        if !(0.0 <= self.coverage_min && self.coverage_min <= self.coverage_max && self.coverage_max <= 1.0) {
            return Err(Error::Spec(format!(
                "coverage bounds must satisfy 0 <= min <= max <= 1, got [{}, {}]",
                self.coverage_min, self.coverage_max
            )));
        }
        Ok(())
    }

    /// Upper bound on the area a mask drawn from this spec can cover.
    fn max_area(&self) -> f64 {
        let r = self.width_max / 2.0;
        let per_stroke = self.vertices_max as f64 * self.length_max * self.width_max
            + core::f64::consts::PI * r * r;
        self.strokes_max as f64 * per_stroke
    }
}

/// Where a rectangle goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RectOrigin {
    Random,
    At { y: usize, x: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RectSpec {
    pub rect_height: usize,
    pub rect_width: usize,
    pub origin: RectOrigin,
}

/// Either mask family, as used by configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum MaskSpec {
    Freeform(FreeformSpec),
    Rect(RectSpec),
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec::Freeform(FreeformSpec::default())
    }
}

impl MaskSpec {
    pub fn generate(&self, height: usize, width: usize, seed: u64) -> Result<Mask> {
        match self {
            MaskSpec::Freeform(spec) => gen_freeform(height, width, spec, seed),
            MaskSpec::Rect(spec) => gen_rect(height, width, spec, seed),
        }
    }
}

/// Fraction of pixels that are holes.
pub fn coverage(mask: &Mask) -> f64 {
    mask.holes() as f64 / (mask.height() * mask.width()) as f64
}

pub fn gen_freeform(height: usize, width: usize, spec: &FreeformSpec, seed: u64) -> Result<Mask> {
    spec.validate()?;
    if height < 16 || width < 16 {
        return Err(Error::Spec(format!("free-form masks need at least 16x16, got {height}x{width}")));
    }
    let area = (height * width) as f64;
    if spec.max_area() < spec.coverage_min * area {
        return Err(Error::Generation(format!(
            "coverage_min {} unattainable: strokes can cover at most {:.0} of {area} pixels",
            spec.coverage_min,
            spec.max_area()
        )));
    }

    let (mut too_small, mut too_large) = (0u64, 0u64);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seed::rng(seed::derive(seed, &[seed::stream::MASK_ATTEMPT, attempt]));
        let mask = draw_strokes(height, width, spec, &mut rng);
        let cov = coverage(&mask);
        if cov < spec.coverage_min {
            too_small += 1;
        } else if cov > spec.coverage_max {
            too_large += 1;
        } else {
            return Ok(mask);
        }
    }
    let bound = if too_small >= too_large {
        format!("coverage_min {}", spec.coverage_min)
    } else {
        format!("coverage_max {}", spec.coverage_max)
    };
    Err(Error::Generation(format!(
        "{bound} not met after {MAX_ATTEMPTS} attempts ({too_small} below, {too_large} above)"
    )))
}

fn draw_strokes(height: usize, width: usize, spec: &FreeformSpec, rng: &mut impl Rng) -> Mask {
    let mut mask = Mask::zeros(height, width);
    let strokes = rng.random_range(spec.strokes_min..=spec.strokes_max);
    for _ in 0..strokes {
        let mut y = rng.random_range(0.0..height as f64);
        let mut x = rng.random_range(0.0..width as f64);
        let vertices = rng.random_range(spec.vertices_min..=spec.vertices_max);
        let radius = uniform(rng, spec.width_min, spec.width_max) / 2.0;
        let mut angle = rng.random_range(0.0..core::f64::consts::TAU);
        stamp_segment(&mut mask, (y, x), (y, x), radius);
        for _ in 0..vertices {
            angle += uniform(rng, -spec.angle_jitter, spec.angle_jitter);
            let len = uniform(rng, spec.length_min, spec.length_max);
            let ny = (y + len * libm::sin(angle)).clamp(0.0, (height - 1) as f64);
            let nx = (x + len * libm::cos(angle)).clamp(0.0, (width - 1) as f64);
            stamp_segment(&mut mask, (y, x), (ny, nx), radius);
            y = ny;
            x = nx;
        }
    }
    mask
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Marks every pixel whose center lies within `radius` of the segment `a`–`b`.
fn stamp_segment(mask: &mut Mask, a: (f64, f64), b: (f64, f64), radius: f64) {
    let (h, w) = (mask.height(), mask.width());
    let y0 = libm::floor(a.0.min(b.0) - radius).max(0.0) as usize;
    let y1 = (libm::ceil(a.0.max(b.0) + radius) as usize).min(h - 1);
    let x0 = libm::floor(a.1.min(b.1) - radius).max(0.0) as usize;
    let x1 = (libm::ceil(a.1.max(b.1) + radius) as usize).min(w - 1);
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    let r2 = radius * radius;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let (cy, cx) = (py as f64 + 0.5, px as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((cy - a.0) * dy + (cx - a.1) * dx) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (ey, ex) = (cy - (a.0 + t * dy), cx - (a.1 + t * dx));
            if ey * ey + ex * ex <= r2 {
                mask.set(py, px, true);
            }
        }
    }
}

pub fn gen_rect(height: usize, width: usize, spec: &RectSpec, seed: u64) -> Result<Mask> {
    let (rh, rw) = (spec.rect_height, spec.rect_width);
    if rh == 0 || rw == 0 || rh > height || rw > width {
        return Err(Error::Placement(format!(
            "{rh}x{rw} rectangle in a {height}x{width} image"
        )));
    }
    let (oy, ox) = match spec.origin {
        RectOrigin::At { y, x } => {
            if y + rh > height || x + rw > width {
                return Err(Error::Placement(format!(
                    "{rh}x{rw} rectangle at ({y}, {x}) exceeds {height}x{width}"
                )));
            }
            (y, x)
        }
        RectOrigin::Random => {
            let mut rng = seed::rng(seed);
            (
                rng.random_range(0..=height - rh),
                rng.random_range(0..=width - rw),
            )
        }
    };
    Ok(Mask::from_fn(height, width, |y, x| {
        (oy..oy + rh).contains(&y) && (ox..ox + rw).contains(&x)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_gives_empty_mask() {
        let spec = FreeformSpec {
            strokes_min: 0,
            strokes_max: 0,
            ..FreeformSpec::default()
        }
        .with_coverage(0.0, 0.4);
        let m = gen_freeform(64, 64, &spec, 3).unwrap();
        assert_eq!(coverage(&m), 0.0);
    }

    #[test]
    fn default_spec_respects_coverage_bounds() {
        let spec = FreeformSpec::default();
        for seed in 0..200 {
            let c = coverage(&gen_freeform(64, 64, &spec, seed).unwrap());
            assert!((0.2..=0.4).contains(&c), "seed {seed}: coverage {c}");
        }
    }

    #[test]
    fn freeform_is_deterministic() {
        let spec = FreeformSpec::default();
        assert_eq!(
            gen_freeform(64, 64, &spec, 7).unwrap(),
            gen_freeform(64, 64, &spec, 7).unwrap()
        );
        assert_ne!(
            gen_freeform(64, 64, &spec, 7).unwrap(),
            gen_freeform(64, 64, &spec, 8).unwrap()
        );
    }

    #[test]
    fn unattainable_coverage_names_the_bound() {
        let spec = FreeformSpec {
            strokes_max: 1,
            vertices_max: 4,
            width_max: 4.0,
            length_max: 4.0,
            ..FreeformSpec::default()
        };
        match gen_freeform(64, 64, &spec, 0) {
            Err(Error::Generation(msg)) => assert!(msg.contains("coverage_min"), "{msg}"),
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn narrow_window_that_is_never_hit_reports_failure() {
        // Reachable in principle, but a 1e-6 wide window is practically never hit.
        let spec = FreeformSpec::default().with_coverage(0.3, 0.300001);
        assert!(matches!(gen_freeform(64, 64, &spec, 1), Err(Error::Generation(_))));
    }

    #[test]
    fn invalid_and_small_inputs_rejected() {
        let bad = FreeformSpec::default().with_coverage(0.5, 0.2);
        assert!(matches!(gen_freeform(64, 64, &bad, 0), Err(Error::Spec(_))));
        assert!(matches!(
            gen_freeform(8, 64, &FreeformSpec::default(), 0),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn rect_area_and_placement() {
        let spec = RectSpec {
            rect_height: 32,
            rect_width: 32,
            origin: RectOrigin::Random,
        };
        let m = gen_rect(64, 64, &spec, 11).unwrap();
        assert_eq!(coverage(&m), 0.25);
        assert_eq!(m, gen_rect(64, 64, &spec, 11).unwrap());

        let one = RectSpec {
            rect_height: 1,
            rect_width: 1,
            origin: RectOrigin::At { y: 0, x: 0 },
        };
        let m = gen_rect(8, 8, &one, 0).unwrap();
        assert!(m.is_hole(0, 0));
        assert_eq!(m.holes(), 1);

        let off = RectSpec {
            rect_height: 4,
            rect_width: 4,
            origin: RectOrigin::At { y: 6, x: 0 },
        };
        assert!(matches!(gen_rect(8, 8, &off, 0), Err(Error::Placement(_))));
    }

    #[test]
    fn rect_mask_is_one_axis_aligned_block() {
        let spec = RectSpec {
            rect_height: 5,
            rect_width: 9,
            origin: RectOrigin::Random,
        };
        let m = gen_rect(32, 40, &spec, 5).unwrap();
        assert_eq!(m.holes(), 45);
        let rows: alloc::vec::Vec<usize> = (0..32).filter(|&y| (0..40).any(|x| m.is_hole(y, x))).collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4] - rows[0], 4);
    }

    #[test]
    fn coverage_arithmetic() {
        assert_eq!(coverage(&Mask::zeros(4, 4)), 0.0);
        assert_eq!(coverage(&Mask::ones(4, 4)), 1.0);
        let m = Mask::from_fn(64, 64, |y, _| y < 16);
        assert_eq!(m.holes(), 1024);
        assert_eq!(coverage(&m), 0.25);
    }
}
