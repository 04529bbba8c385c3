//! Raw buffer kernels behind the convolution and upsampling ops.

use super::Real;

/// Geometry of one 2-D convolution over a `C×H×W` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Rows of the unfolded input matrix (`C·k·k`).
    pub fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// A 1×1 stride-1 unpadded convolution reads its input as the unfolded
    /// matrix directly.
    pub fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output columns `[lo, hi)` whose input column `ox·stride + kx − pad` is
/// inside the image.
fn valid_cols(g: &ConvGeom, kx: usize) -> (usize, usize) {
    let (s, p) = (g.stride, g.pad);
    let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
    let hi = ((g.in_w - 1 + p - kx) / s + 1).min(g.out_w);
    (lo, hi.max(lo))
}

/// Unfolds `x` into a `(C·k·k) × (out_h·out_w)` matrix of patches.
pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let n = g.out_pixels();
    let mut cols = vec![T::zero(); g.patch_len() * n];
    let (k, s, pad) = (g.k, g.stride, g.pad);
    for c in 0..g.in_c {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.out_h {
                    let iy = (oy * s + ky).wrapping_sub(pad);
                    if iy >= g.in_h || lo >= hi {
                        continue;
                    }
                    let src = &plane[iy * g.in_w..(iy + 1) * g.in_w];
                    let out_row = &mut dst[oy * g.out_w + lo..oy * g.out_w + hi];
                    let first = lo * s + kx - pad;
                    if s == 1 {
                        out_row.copy_from_slice(&src[first..first + (hi - lo)]);
                    } else {
                        for (slot, &v) in out_row.iter_mut().zip(src[first..].iter().step_by(s)) {
                            *slot = v;
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub(crate) fn col2im_add<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let n = g.out_pixels();
    let (k, s, pad) = (g.k, g.stride, g.pad);
    for c in 0..g.in_c {
        let plane = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.out_h {
                    let iy = (oy * s + ky).wrapping_sub(pad);
                    if iy >= g.in_h || lo >= hi {
                        continue;
                    }
                    let dst = &mut plane[iy * g.in_w..(iy + 1) * g.in_w];
                    let grad_row = &src[oy * g.out_w + lo..oy * g.out_w + hi];
                    let first = lo * s + kx - pad;
                    if s == 1 {
                        for (d, &v) in dst[first..first + (hi - lo)].iter_mut().zip(grad_row) {
                            *d += v;
                        }
                    } else {
                        for (d, &v) in dst[first..].iter_mut().step_by(s).zip(grad_row) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// One output coordinate of a bilinear resize: the two source taps and
/// their weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub w_lo: f64,
    pub w_hi: f64,
}

/// Half-pixel-centre sampling along one axis: source coordinate
/// `(dst + 0.5)·src_len/dst_len − 0.5`, clamped to `[0, src_len − 1]`.
pub(crate) fn bilinear_taps(src_len: usize, dst_len: usize) -> Vec<Tap> {
    let scale = src_len as f64 / dst_len as f64;
    let last = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            let frac = pos - lo as f64;
            Tap { lo, hi, w_lo: 1.0 - frac, w_hi: frac }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub(crate) struct UpsamplePlan {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub rows: Vec<Tap>,
    pub cols: Vec<Tap>,
}

impl UpsamplePlan {
    pub fn new(channels: usize, in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Self {
        Self {
            channels,
            in_h,
            in_w,
            rows: bilinear_taps(in_h, out_h),
            cols: bilinear_taps(in_w, out_w),
        }
    }

    pub fn out_len(&self) -> usize {
        self.channels * self.rows.len() * self.cols.len()
    }

    pub fn forward<T: Real>(&self, x: &[T]) -> Vec<T> {
        let (oh, ow) = (self.rows.len(), self.cols.len());
        let mut out = vec![T::zero(); self.out_len()];
        for c in 0..self.channels {
            let plane = &x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            let dst = &mut out[c * oh * ow..(c + 1) * oh * ow];
            for (oy, ry) in self.rows.iter().enumerate() {
                let (wy0, wy1) = (T::of(ry.w_lo), T::of(ry.w_hi));
                let r0 = &plane[ry.lo * self.in_w..(ry.lo + 1) * self.in_w];
                let r1 = &plane[ry.hi * self.in_w..(ry.hi + 1) * self.in_w];
                for (ox, rx) in self.cols.iter().enumerate() {
                    let (wx0, wx1) = (T::of(rx.w_lo), T::of(rx.w_hi));
                    let top = wx0 * r0[rx.lo] + wx1 * r0[rx.hi];
                    let bottom = wx0 * r1[rx.lo] + wx1 * r1[rx.hi];
                    dst[oy * ow + ox] = wy0 * top + wy1 * bottom;
                }
            }
        }
        out
    }

    /// Exact adjoint of [`UpsamplePlan::forward`], accumulated into `dx`.
    pub fn backward_add<T: Real>(&self, g: &[T], dx: &mut [T]) {
        let (oh, ow) = (self.rows.len(), self.cols.len());
        for c in 0..self.channels {
            let plane = &mut dx[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            let src = &g[c * oh * ow..(c + 1) * oh * ow];
            for (oy, ry) in self.rows.iter().enumerate() {
                let (wy0, wy1) = (T::of(ry.w_lo), T::of(ry.w_hi));
                for (ox, rx) in self.cols.iter().enumerate() {
                    let (wx0, wx1) = (T::of(rx.w_lo), T::of(rx.w_hi));
                    let v = src[oy * ow + ox];
                    let (top, bottom) = (wy0 * v, wy1 * v);
                    plane[ry.lo * self.in_w + rx.lo] += wx0 * top;
                    plane[ry.lo * self.in_w + rx.hi] += wx1 * top;
                    plane[ry.hi * self.in_w + rx.lo] += wx0 * bottom;
                    plane[ry.hi * self.in_w + rx.hi] += wx1 * bottom;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_pixel_taps_for_doubling() {
        let taps = bilinear_taps(2, 4);
        let pos: Vec<f64> = taps.iter().map(|t| t.lo as f64 + t.w_hi).collect();
        assert_eq!(pos, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn identity_resize_taps_are_exact() {
        for t in bilinear_taps(5, 5).iter().enumerate() {
            assert_eq!(t.1.lo, t.0);
            assert_eq!(t.1.w_lo, 1.0);
        }
    }

    fn im2col_naive(x: &[f64], g: &ConvGeom) -> Vec<f64> {
        let n = g.out_pixels();
        let mut cols = vec![0.0; g.patch_len() * n];
        for c in 0..g.in_c {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let row = (c * g.k + ky) * g.k + kx;
                    for oy in 0..g.out_h {
                        for ox in 0..g.out_w {
                            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < g.in_h && (ix as usize) < g.in_w {
                                cols[row * n + oy * g.out_w + ox] =
                                    x[(c * g.in_h + iy as usize) * g.in_w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    #[test]
    fn im2col_matches_nested_loops() {
        for (h, w, k, stride, pad) in [(5, 4, 3, 2, 1), (6, 7, 3, 1, 1), (4, 4, 1, 1, 0), (7, 5, 5, 2, 2), (3, 3, 3, 1, 0), (8, 8, 1, 2, 0)] {
            let out_h = (h + 2 * pad - k) / stride + 1;
            let out_w = (w + 2 * pad - k) / stride + 1;
            let g = ConvGeom { in_c: 2, in_h: h, in_w: w, out_c: 1, k, stride, pad, out_h, out_w };
            let x: Vec<f64> = (0..2 * h * w).map(|i| i as f64 + 1.0).collect();
            assert_eq!(im2col(&x, &g), im2col_naive(&x, &g), "{h}x{w} k{k} s{stride} p{pad}");
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom {
            in_c: 2,
            in_h: 5,
            in_w: 4,
            out_c: 1,
            k: 3,
            stride: 2,
            pad: 1,
            out_h: 3,
            out_w: 2,
        };
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let cols = im2col(&x, &g);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&y, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
