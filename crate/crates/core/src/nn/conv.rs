//! Strided 1D/2D convolutions via im2col + GEMM, with "same"-style zero
//! padding: the output length along each convolved axis is `⌈L/stride⌉`,
//! and the total padding `(out−1)·stride + k − L` is split left/right with
//! the extra column on the right.
//!
//! The im2col buffer from the forward pass is kept in the returned context
//! so the backward pass reuses it for the weight gradient and runs the
//! transposed GEMM for the input gradient.

use ndarray::{Array2, Array3, Array4, Axis, Ix3, Ix4};
use rand_chacha::ChaCha8Rng;

use super::{Module, Param, ParamVisitor};
use crate::Real;

/// Padding split for one axis: `(left, right)`.
fn same_padding(len: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(len);
    (total / 2, total - total / 2)
}

/// Temporal convolution over `(N, C_in, L)` inputs.
#[derive(Debug, Clone)]
pub struct Conv1d<F> {
    /// Kernels, `(C_out, C_in, K)`.
    pub w: Param<F>,
    /// Per-output-channel bias.
    pub b: Param<F>,
    /// Temporal stride.
    pub stride: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
}

/// Forward context of [`Conv1d`]: the im2col buffer plus geometry.
#[derive(Debug)]
pub struct Conv1dCtx<F> {
    cols: Array2<F>,
    n: usize,
    l_in: usize,
    l_out: usize,
}

impl<F: Real> Conv1d<F> {
    /// New layer with fan-in-scaled uniform kernels and zero bias.
    pub fn new(c_in: usize, c_out: usize, k: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        Conv1d {
            w: Param::uniform(&[c_out, c_in, k], c_in * k, rng),
            b: Param::zeros(&[c_out]),
            stride,
            c_in,
            c_out,
            k,
        }
    }

    /// Output length for an input of length `l`.
    pub fn out_len(&self, l: usize) -> usize {
        l.div_ceil(self.stride)
    }

    /// Convolves a batch; returns the output and the backward context.
    pub fn forward(&self, x: &Array3<F>) -> (Array3<F>, Conv1dCtx<F>) {
        let (n, c_in, l_in) = x.dim();
        debug_assert_eq!(c_in, self.c_in, "channel mismatch");
        let l_out = self.out_len(l_in);
        let (pad_l, _) = same_padding(l_in, self.k, self.stride);
        let ck = self.c_in * self.k;

        let mut cols = Array2::zeros((ck, n * l_out));
        for b in 0..n {
            for c in 0..self.c_in {
                for kk in 0..self.k {
                    let row = c * self.k + kk;
                    for o in 0..l_out {
                        let i = (o * self.stride + kk) as isize - pad_l as isize;
                        if i >= 0 && (i as usize) < l_in {
                            cols[[row, b * l_out + o]] = x[[b, c, i as usize]];
                        }
                    }
                }
            }
        }

        let w2 = self
            .w
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("conv1d kernel rank")
            .to_shape((self.c_out, ck))
            .expect("conv1d kernel reshape")
            .into_owned();
        let y2 = w2.dot(&cols);

        let mut y = Array3::zeros((n, self.c_out, l_out));
        for b in 0..n {
            for co in 0..self.c_out {
                let bias = self.b.value[[co]];
                for o in 0..l_out {
                    y[[b, co, o]] = y2[[co, b * l_out + o]] + bias;
                }
            }
        }
        (y, Conv1dCtx { cols, n, l_in, l_out })
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, ctx: &Conv1dCtx<F>, dy: &Array3<F>) -> Array3<F> {
        let (n, l_in, l_out) = (ctx.n, ctx.l_in, ctx.l_out);
        let ck = self.c_in * self.k;
        let (pad_l, _) = same_padding(l_in, self.k, self.stride);

        let mut dy2 = Array2::zeros((self.c_out, n * l_out));
        for b in 0..n {
            for co in 0..self.c_out {
                for o in 0..l_out {
                    dy2[[co, b * l_out + o]] = dy[[b, co, o]];
                }
            }
        }

        let dw2 = dy2.dot(&ctx.cols.t());
        {
            let mut wg = self
                .w
                .grad
                .view_mut()
                .into_dimensionality::<Ix3>()
                .expect("conv1d grad rank");
            for co in 0..self.c_out {
                for c in 0..self.c_in {
                    for kk in 0..self.k {
                        wg[[co, c, kk]] += dw2[[co, c * self.k + kk]];
                    }
                }
            }
        }
        {
            let db = dy2.sum_axis(Axis(1));
            let mut bg = self.b.grad.view_mut();
            for co in 0..self.c_out {
                bg[[co]] += db[[co]];
            }
        }

        let w2 = self
            .w
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("conv1d kernel rank")
            .to_shape((self.c_out, ck))
            .expect("conv1d kernel reshape")
            .into_owned();
        let dcols = w2.t().dot(&dy2);

        let mut dx = Array3::zeros((n, self.c_in, l_in));
        for b in 0..n {
            for c in 0..self.c_in {
                for kk in 0..self.k {
                    let row = c * self.k + kk;
                    for o in 0..l_out {
                        let i = (o * self.stride + kk) as isize - pad_l as isize;
                        if i >= 0 && (i as usize) < l_in {
                            dx[[b, c, i as usize]] += dcols[[row, b * l_out + o]];
                        }
                    }
                }
            }
        }
        dx
    }
}

impl<F: Real> Module<F> for Conv1d<F> {
    fn visit_params(&mut self, prefix: &str, visitor: &mut dyn ParamVisitor<F>) {
        visitor.visit(&format!("{prefix}.w"), &mut self.w);
        visitor.visit(&format!("{prefix}.b"), &mut self.b);
    }
}

/// Planar convolution over `(N, C_in, H, W)` inputs, stride 1, square or
/// rectangular kernels, "same" zero padding on both spatial axes.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    /// Kernels, `(C_out, C_in, KH, KW)`.
    pub w: Param<F>,
    /// Per-output-channel bias.
    pub b: Param<F>,
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
}

/// Forward context of [`Conv2d`].
#[derive(Debug)]
pub struct Conv2dCtx<F> {
    cols: Vec<Array2<F>>,
    h: usize,
    w: usize,
}

impl<F: Real> Conv2d<F> {
    /// New layer with fan-in-scaled uniform kernels and zero bias.
    pub fn new(c_in: usize, c_out: usize, kh: usize, kw: usize, rng: &mut ChaCha8Rng) -> Self {
        Conv2d {
            w: Param::uniform(&[c_out, c_in, kh, kw], c_in * kh * kw, rng),
            b: Param::zeros(&[c_out]),
            c_in,
            c_out,
            kh,
            kw,
        }
    }

    /// Convolves a batch; per-sample GEMM keeps the im2col buffers small.
    pub fn forward(&self, x: &Array4<F>) -> (Array4<F>, Conv2dCtx<F>) {
        let (n, c_in, h, w) = x.dim();
        debug_assert_eq!(c_in, self.c_in, "channel mismatch");
        let (pad_t, _) = same_padding(h, self.kh, 1);
        let (pad_le, _) = same_padding(w, self.kw, 1);
        let ck = self.c_in * self.kh * self.kw;

        let w2 = self
            .w
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("conv2d kernel rank")
            .to_shape((self.c_out, ck))
            .expect("conv2d kernel reshape")
            .into_owned();

        let mut y = Array4::zeros((n, self.c_out, h, w));
        let mut cols_all = Vec::with_capacity(n);
        for b in 0..n {
            let mut cols = Array2::zeros((ck, h * w));
            for c in 0..self.c_in {
                for ki in 0..self.kh {
                    for kj in 0..self.kw {
                        let row = (c * self.kh + ki) * self.kw + kj;
                        for oi in 0..h {
                            let ii = (oi + ki) as isize - pad_t as isize;
                            if ii < 0 || ii as usize >= h {
                                continue;
                            }
                            for oj in 0..w {
                                let jj = (oj + kj) as isize - pad_le as isize;
                                if jj >= 0 && (jj as usize) < w {
                                    cols[[row, oi * w + oj]] = x[[b, c, ii as usize, jj as usize]];
                                }
                            }
                        }
                    }
                }
            }
            let y2 = w2.dot(&cols);
            for co in 0..self.c_out {
                let bias = self.b.value[[co]];
                for oi in 0..h {
                    for oj in 0..w {
                        y[[b, co, oi, oj]] = y2[[co, oi * w + oj]] + bias;
                    }
                }
            }
            cols_all.push(cols);
        }
        (y, Conv2dCtx { cols: cols_all, h, w })
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, ctx: &Conv2dCtx<F>, dy: &Array4<F>) -> Array4<F> {
        let (n, _, h, w) = dy.dim();
        debug_assert_eq!((h, w), (ctx.h, ctx.w));
        let (pad_t, _) = same_padding(h, self.kh, 1);
        let (pad_le, _) = same_padding(w, self.kw, 1);
        let ck = self.c_in * self.kh * self.kw;

        let w2 = self
            .w
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("conv2d kernel rank")
            .to_shape((self.c_out, ck))
            .expect("conv2d kernel reshape")
            .into_owned();

        let mut dw2 = Array2::<F>::zeros((self.c_out, ck));
        let mut db = vec![F::zero(); self.c_out];
        let mut dx = Array4::zeros((n, self.c_in, h, w));

        for b in 0..n {
            let mut dy2 = Array2::zeros((self.c_out, h * w));
            for co in 0..self.c_out {
                for oi in 0..h {
                    for oj in 0..w {
                        let g = dy[[b, co, oi, oj]];
                        dy2[[co, oi * w + oj]] = g;
                        db[co] += g;
                    }
                }
            }
            dw2 = dw2 + dy2.dot(&ctx.cols[b].t());
            let dcols = w2.t().dot(&dy2);
            for c in 0..self.c_in {
                for ki in 0..self.kh {
                    for kj in 0..self.kw {
                        let row = (c * self.kh + ki) * self.kw + kj;
                        for oi in 0..h {
                            let ii = (oi + ki) as isize - pad_t as isize;
                            if ii < 0 || ii as usize >= h {
                                continue;
                            }
                            for oj in 0..w {
                                let jj = (oj + kj) as isize - pad_le as isize;
                                if jj >= 0 && (jj as usize) < w {
                                    dx[[b, c, ii as usize, jj as usize]] +=
                                        dcols[[row, oi * w + oj]];
                                }
                            }
                        }
                    }
                }
            }
        }

        {
            let mut wg = self
                .w
                .grad
                .view_mut()
                .into_dimensionality::<Ix4>()
                .expect("conv2d grad rank");
            for co in 0..self.c_out {
                for c in 0..self.c_in {
                    for ki in 0..self.kh {
                        for kj in 0..self.kw {
                            wg[[co, c, ki, kj]] += dw2[[co, (c * self.kh + ki) * self.kw + kj]];
                        }
                    }
                }
            }
            let mut bg = self.b.grad.view_mut();
            for co in 0..self.c_out {
                bg[[co]] += db[co];
            }
        }
        dx
    }
}

impl<F: Real> Module<F> for Conv2d<F> {
    fn visit_params(&mut self, prefix: &str, visitor: &mut dyn ParamVisitor<F>) {
        visitor.visit(&format!("{prefix}.w"), &mut self.w);
        visitor.visit(&format!("{prefix}.b"), &mut self.b);
    }
}
