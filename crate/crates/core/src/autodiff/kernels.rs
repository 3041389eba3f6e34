//! Forward and adjoint kernels used by the tape. Convolutions go through an
//! im2col lowering onto a single GEMM per batch item.

use crate::tensor::{gemm, Element, MatRef};

/// Spatial geometry of a zero-padded strided correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Geometry of a forward convolution; `None` if the kernel does not fit.
    pub fn forward(
        channels: usize,
        height: usize,
        width: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        let ph = height + 2 * pad;
        let pw = width + 2 * pad;
        if stride == 0 || ph < kh || pw < kw {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            kh,
            kw,
            stride,
            pad,
            out_h: (ph - kh) / stride + 1,
            out_w: (pw - kw) / stride + 1,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Input coordinate hit by output `(oy, ox)` at kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky) as isize - self.pad as isize;
        let x = (ox * self.stride + kx) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.height as isize || x >= self.width as isize {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }
}

pub(crate) fn im2col<T: Element>(g: &ConvGeom, image: &[T], cols: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match g.source(oy, ox, ky, kx) {
                            Some((y, x)) => plane[y * g.width + x],
                            None => T::zero(),
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into the image.
pub(crate) fn col2im<T: Element>(g: &ConvGeom, cols: &[T], image: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((y, x)) = g.source(oy, ox, ky, kx) {
                            plane[y * g.width + x] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out[n] = kernels(K × C·kh·kw) · im2col(input[n])`.
pub(crate) fn conv2d_forward<T: Element>(g: &ConvGeom, batch: usize, k: usize, input: &[T], kernels: &[T]) -> Vec<T> {
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    let out_len = k * g.col_cols();
    let mut out = vec![T::zero(); batch * out_len];
    for n in 0..batch {
        im2col(g, &input[n * g.image_len()..(n + 1) * g.image_len()], &mut cols);
        gemm(
            MatRef::new(kernels, k, g.col_rows()),
            MatRef::new(&cols, g.col_rows(), g.col_cols()),
            &mut out[n * out_len..(n + 1) * out_len],
            false,
        );
    }
    out
}

/// Gradients of [`conv2d_forward`] with respect to its input and kernels.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Element>(
    g: &ConvGeom,
    batch: usize,
    k: usize,
    input: &[T],
    kernels: &[T],
    grad_out: &[T],
    want_input: bool,
    want_kernels: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let rows = g.col_rows();
    let ncols = g.col_cols();
    let out_len = k * ncols;
    let mut cols = vec![T::zero(); rows * ncols];
    let mut d_input = want_input.then(|| vec![T::zero(); batch * g.image_len()]);
    let mut d_kernels = want_kernels.then(|| vec![T::zero(); k * rows]);
    for n in 0..batch {
        let dy = MatRef::new(&grad_out[n * out_len..(n + 1) * out_len], k, ncols);
        if let Some(dk) = d_kernels.as_mut() {
            im2col(g, &input[n * g.image_len()..(n + 1) * g.image_len()], &mut cols);
            gemm(dy, MatRef::new(&cols, rows, ncols).t(), dk, true);
        }
        if let Some(dx) = d_input.as_mut() {
            gemm(MatRef::new(kernels, k, rows).t(), dy, &mut cols, false);
            col2im(g, &cols, &mut dx[n * g.image_len()..(n + 1) * g.image_len()]);
        }
    }
    (d_input, d_kernels)
}

/// Transpose convolution, the exact adjoint of [`conv2d_forward`] for
/// geometry `g` (whose "image" is the transpose-conv output).
pub(crate) fn conv_transpose2d_forward<T: Element>(
    g: &ConvGeom,
    batch: usize,
    k: usize,
    input: &[T],
    kernels: &[T],
) -> Vec<T> {
    let rows = g.col_rows();
    let ncols = g.col_cols();
    let in_len = k * ncols;
    let mut cols = vec![T::zero(); rows * ncols];
    let mut out = vec![T::zero(); batch * g.image_len()];
    for n in 0..batch {
        gemm(
            MatRef::new(kernels, k, rows).t(),
            MatRef::new(&input[n * in_len..(n + 1) * in_len], k, ncols),
            &mut cols,
            false,
        );
        col2im(g, &cols, &mut out[n * g.image_len()..(n + 1) * g.image_len()]);
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose2d_backward<T: Element>(
    g: &ConvGeom,
    batch: usize,
    k: usize,
    input: &[T],
    kernels: &[T],
    grad_out: &[T],
    want_input: bool,
    want_kernels: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let rows = g.col_rows();
    let ncols = g.col_cols();
    let in_len = k * ncols;
    let mut cols = vec![T::zero(); rows * ncols];
    let mut d_input = want_input.then(|| vec![T::zero(); batch * in_len]);
    let mut d_kernels = want_kernels.then(|| vec![T::zero(); k * rows]);
    for n in 0..batch {
        im2col(g, &grad_out[n * g.image_len()..(n + 1) * g.image_len()], &mut cols);
        let dcols = MatRef::new(&cols, rows, ncols);
        if let Some(dx) = d_input.as_mut() {
            gemm(
                MatRef::new(kernels, k, rows),
                dcols,
                &mut dx[n * in_len..(n + 1) * in_len],
                false,
            );
        }
        if let Some(dk) = d_kernels.as_mut() {
            gemm(
                MatRef::new(&input[n * in_len..(n + 1) * in_len], k, ncols),
                dcols.t(),
                dk,
                true,
            );
        }
    }
    (d_input, d_kernels)
}

#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Reflect-pads every `H×W` plane by `p` without repeating the edge pixel.
pub(crate) fn pad_reflect_forward<T: Element>(planes: usize, h: usize, w: usize, p: usize, input: &[T]) -> Vec<T> {
    let (oh, ow) = (h + 2 * p, w + 2 * p);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for plane in input.chunks_exact(h * w) {
        for y in 0..oh {
            let sy = reflect_index(y as isize - p as isize, h);
            for x in 0..ow {
                let sx = reflect_index(x as isize - p as isize, w);
                out.push(plane[sy * w + sx]);
            }
        }
    }
    out
}

pub(crate) fn pad_reflect_backward<T: Element>(planes: usize, h: usize, w: usize, p: usize, grad: &[T]) -> Vec<T> {
    let (oh, ow) = (h + 2 * p, w + 2 * p);
    let mut out = vec![T::zero(); planes * h * w];
    for (plane, g) in out.chunks_exact_mut(h * w).zip(grad.chunks_exact(oh * ow)) {
        for y in 0..oh {
            let sy = reflect_index(y as isize - p as isize, h);
            for x in 0..ow {
                let sx = reflect_index(x as isize - p as isize, w);
                plane[sy * w + sx] += g[y * ow + x];
            }
        }
    }
    out
}

/// Per-(sample, channel) normalization statistics.
pub(crate) struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn instance_norm_forward<T: Element>(
    n: usize,
    c: usize,
    hw: usize,
    input: &[T],
    gain: &[T],
    bias: &[T],
    eps: T,
) -> (Vec<T>, NormCache<T>) {
    let count = T::of(hw as f64);
    let mut out = vec![T::zero(); input.len()];
    let mut xhat = vec![T::zero(); input.len()];
    let mut inv_std = Vec::with_capacity(n * c);
    for (idx, plane) in input.chunks_exact(hw).enumerate() {
        let ch = idx % c;
        let mean = plane.iter().copied().sum::<T>() / count;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
        let inv = T::one() / (var + eps).sqrt();
        inv_std.push(inv);
        let base = idx * hw;
        for (i, &v) in plane.iter().enumerate() {
            let xh = (v - mean) * inv;
            xhat[base + i] = xh;
            out[base + i] = gain[ch] * xh + bias[ch];
        }
    }
    (out, NormCache { xhat, inv_std })
}

/// Returns `(d_input, d_gain, d_bias)`.
pub(crate) fn instance_norm_backward<T: Element>(
    c: usize,
    hw: usize,
    cache: &NormCache<T>,
    gain: &[T],
    grad: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let count = T::of(hw as f64);
    let mut dx = vec![T::zero(); grad.len()];
    let mut dgain = vec![T::zero(); c];
    let mut dbias = vec![T::zero(); c];
    for (idx, g) in grad.chunks_exact(hw).enumerate() {
        let ch = idx % c;
        let base = idx * hw;
        let xh = &cache.xhat[base..base + hw];
        let sum_g: T = g.iter().copied().sum();
        let sum_gx: T = g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
        dgain[ch] += sum_gx;
        dbias[ch] += sum_g;
        let k = gain[ch] * cache.inv_std[idx] / count;
        for i in 0..hw {
            dx[base + i] = k * (count * g[i] - sum_g - xh[i] * sum_gx);
        }
    }
    (dx, dgain, dbias)
}
