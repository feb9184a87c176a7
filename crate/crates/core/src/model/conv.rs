//! 2-D convolution as im2col + GEMM, with its reverse pass.
//!
//! Activations are single-sample `C×H×W` buffers. Weights are
//! `cout × (cin·k·k)` row-major, which is the `(cout, cin, k, k)` tensor
//! flattened.

use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, Layout, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvShape {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, dilation: usize, h: usize, w: usize) -> Self {
        let pad = dilation * (k - 1) / 2;
        let span = dilation * (k - 1) + 1;
        let oh = (h + 2 * pad - span) / stride + 1;
        let ow = (w + 2 * pad - span) / stride + 1;
        Self {
            cin,
            cout,
            k,
            stride,
            dilation,
            pad,
            h,
            w,
            oh,
            ow,
        }
    }

    /// Rows of the column matrix, also the weight fan-in.
    #[inline]
    pub fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    #[inline]
    pub fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    #[inline]
    pub fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    #[cfg(test)]
    pub fn out_len(&self) -> usize {
        self.cout * self.oh * self.ow
    }

    #[cfg(test)]
    pub fn weight_len(&self) -> usize {
        self.cout * self.patch_len()
    }

    /// Output columns `ox` whose input column `ox*stride + off` lands in `[0, w)`.
    #[inline]
    fn valid_range(&self, off: isize, len: usize, out: usize) -> (usize, usize) {
        let s = self.stride as isize;
        // smallest o with o*s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // largest o with o*s + off <= len-1
        let hi_excl = if (len as isize - 1 - off) < 0 {
            0
        } else {
            ((len as isize - 1 - off) / s + 1).min(out as isize)
        };
        let lo = (lo as usize).min(out);
        (lo, (hi_excl.max(0) as usize).max(lo))
    }
}

/// Unfolds `x` (`cin×h×w`) into `cols` (`cin·k·k × oh·ow`).
pub(crate) fn im2col<T: Real>(x: &[T], s: &ConvShape, cols: &mut Vec<T>) {
    let n = s.out_pixels();
    cols.clear();
    cols.resize(s.patch_len() * n, T::zero());
    for c in 0..s.cin {
        let plane = &x[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ky in 0..s.k {
            let off_y = (ky * s.dilation) as isize - s.pad as isize;
            let (oy0, oy1) = s.valid_range(off_y, s.h, s.oh);
            for kx in 0..s.k {
                let off_x = (kx * s.dilation) as isize - s.pad as isize;
                let (ox0, ox1) = s.valid_range(off_x, s.w, s.ow);
                let row = ((c * s.k + ky) * s.k + kx) * n;
                for oy in oy0..oy1 {
                    let iy = (oy * s.stride) as isize + off_y;
                    let src = &plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                    let dst = &mut cols[row + oy * s.ow..row + (oy + 1) * s.ow];
                    if s.stride == 1 {
                        let ix0 = (ox0 as isize + off_x) as usize;
                        dst[ox0..ox1].copy_from_slice(&src[ix0..ix0 + (ox1 - ox0)]);
                    } else {
                        for ox in ox0..ox1 {
                            dst[ox] = src[((ox * s.stride) as isize + off_x) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back onto `dx` (`cin×h×w`); the adjoint of [`im2col`].
pub(crate) fn col2im_add<T: Real>(cols: &[T], s: &ConvShape, dx: &mut [T]) {
    let n = s.out_pixels();
    for c in 0..s.cin {
        let plane = &mut dx[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ky in 0..s.k {
            let off_y = (ky * s.dilation) as isize - s.pad as isize;
            let (oy0, oy1) = s.valid_range(off_y, s.h, s.oh);
            for kx in 0..s.k {
                let off_x = (kx * s.dilation) as isize - s.pad as isize;
                let (ox0, ox1) = s.valid_range(off_x, s.w, s.ow);
                let row = ((c * s.k + ky) * s.k + kx) * n;
                for oy in oy0..oy1 {
                    let iy = ((oy * s.stride) as isize + off_y) as usize;
                    let src = &cols[row + oy * s.ow..row + (oy + 1) * s.ow];
                    let dst = &mut plane[iy * s.w..(iy + 1) * s.w];
                    if s.stride == 1 {
                        let ix0 = (ox0 as isize + off_x) as usize;
                        for (d, &v) in dst[ix0..ix0 + (ox1 - ox0)].iter_mut().zip(&src[ox0..ox1]) {
                            *d = *d + v;
                        }
                    } else {
                        for ox in ox0..ox1 {
                            let ix = ((ox * s.stride) as isize + off_x) as usize;
                            dst[ix] = dst[ix] + src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out = W · cols + b`, `out` is `cout × oh·ow`.
pub(crate) fn conv_forward<T: Real>(weight: &[T], bias: &[T], cols: &[T], s: &ConvShape, out: &mut Vec<T>) {
    let n = s.out_pixels();
    out.clear();
    out.reserve(s.cout * n);
    for &b in bias {
        out.extend(core::iter::repeat_n(b, n));
    }
    gemm(s.cout, s.patch_len(), n, weight, Layout::Normal, cols, Layout::Normal, T::one(), out);
}

/// Accumulates weight and bias gradients; optionally writes (`beta = 0`) or
/// adds (`beta = 1`) the column gradient `Wᵀ · dout` into `dcols`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    weight: &[T],
    cols: &[T],
    dout: &[T],
    s: &ConvShape,
    dweight: &mut [T],
    dbias: &mut [T],
    dcols: Option<(&mut Vec<T>, bool)>,
) {
    let n = s.out_pixels();
    let kk = s.patch_len();
    gemm(s.cout, n, kk, dout, Layout::Normal, cols, Layout::Transposed, T::one(), dweight);
    for (c, db) in dbias.iter_mut().enumerate() {
        let row = &dout[c * n..(c + 1) * n];
        *db = row.iter().fold(*db, |acc, &v| acc + v);
    }
    if let Some((dcols, accumulate)) = dcols {
        let beta = if accumulate {
            T::one()
        } else {
            dcols.clear();
            dcols.resize(kk * n, T::zero());
            T::zero()
        };
        gemm(kk, s.cout, n, weight, Layout::Transposed, dout, Layout::Normal, beta, dcols);
    }
}

/// Nearest-neighbour ×2 upsampling of a `c×h×w` buffer.
pub(crate) fn upsample2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            let src = &x[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
            let dst = &mut out[(ch * oh + y) * ow..(ch * oh + y + 1) * ow];
            for (x2, d) in dst.iter_mut().enumerate() {
                *d = src[x2 / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2×2 block of `dy` (`c×2h×2w`).
pub(crate) fn upsample2_backward<T: Real>(dy: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            let src = &dy[(ch * oh + y) * ow..(ch * oh + y + 1) * ow];
            let dst = &mut dx[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
            for (x2, &v) in src.iter().enumerate() {
                dst[x2 / 2] = dst[x2 / 2] + v;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct convolution, the textbook loop nest.
    fn naive_conv(x: &[f64], w: &[f64], b: &[f64], s: &ConvShape) -> Vec<f64> {
        let mut out = vec![0.0; s.out_len()];
        for co in 0..s.cout {
            for oy in 0..s.oh {
                for ox in 0..s.ow {
                    let mut acc = b[co];
                    for ci in 0..s.cin {
                        for ky in 0..s.k {
                            for kx in 0..s.k {
                                let iy = (oy * s.stride + ky * s.dilation) as isize - s.pad as isize;
                                let ix = (ox * s.stride + kx * s.dilation) as isize - s.pad as isize;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                acc += w[((co * s.cin + ci) * s.k + ky) * s.k + kx]
                                    * x[(ci * s.h + iy as usize) * s.w + ix as usize];
                            }
                        }
                    }
                    out[(co * s.oh + oy) * s.ow + ox] = acc;
                }
            }
        }
        out
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| libm::sin(i as f64 * 0.37) * scale).collect()
    }

    #[test]
    fn im2col_gemm_matches_direct_convolution() {
        for &(k, stride, dil, h, w) in &[
            (3, 1, 1, 7, 6),
            (3, 2, 1, 8, 8),
            (3, 1, 2, 9, 9),
            (3, 1, 4, 8, 8),
            (4, 2, 1, 8, 8),
            (1, 1, 1, 5, 5),
        ] {
            let s = ConvShape::new(2, 3, k, stride, dil, h, w);
            let x = ramp(s.in_len(), 1.0);
            let wt = ramp(s.weight_len(), 0.5);
            let b = [0.1, -0.2, 0.3];
            let mut cols = Vec::new();
            im2col(&x, &s, &mut cols);
            let mut out = Vec::new();
            conv_forward(&wt, &b, &cols, &s, &mut out);
            let expect = naive_conv(&x, &wt, &b, &s);
            for (a, e) in out.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12, "k{k} s{stride} d{dil}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for all x, c.
        for &(k, stride, dil) in &[(3, 1, 1), (3, 2, 1), (3, 1, 3), (4, 2, 1)] {
            let s = ConvShape::new(2, 1, k, stride, dil, 9, 8);
            let x = ramp(s.in_len(), 1.0);
            let c = ramp(s.patch_len() * s.out_pixels(), 0.3);
            let mut cols = Vec::new();
            im2col(&x, &s, &mut cols);
            let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
            let mut dx = vec![0.0; s.in_len()];
            col2im_add(&c, &s, &mut dx);
            let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn upsample_backward_is_adjoint() {
        let x = ramp(2 * 3 * 4, 1.0);
        let dy = ramp(2 * 6 * 8, 0.7);
        let up = upsample2(&x, 2, 3, 4);
        let lhs: f64 = up.iter().zip(&dy).map(|(a, b)| a * b).sum();
        let dx = upsample2_backward(&dy, 2, 3, 4);
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn output_sizes() {
        assert_eq!(ConvShape::new(4, 8, 3, 2, 1, 64, 64).oh, 32);
        assert_eq!(ConvShape::new(4, 8, 4, 2, 1, 64, 64).oh, 32);
        assert_eq!(ConvShape::new(4, 8, 3, 1, 4, 16, 16).oh, 16);
        assert_eq!(ConvShape::new(4, 8, 4, 2, 1, 8, 8).oh, 4);
    }
}
