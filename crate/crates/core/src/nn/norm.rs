//! Group normalization: per-sample statistics over fixed channel groups,
//! so the normalization is independent of batch size (unlike batch norm)
//! while still coupling a few channels for stability.
//!
//! Layout convention: inputs are viewed as `(N, C, S)` with `S` the
//! flattened spatial extent; [`GroupNorm::forward3`]/[`GroupNorm::forward4`]
//! adapt the rank-3 and rank-4 tensors the convolution stack produces.

use ndarray::{Array1, Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;

use super::{Module, Param, ParamVisitor};
use crate::Real;

/// Normalizes each group of `group_size` consecutive channels to zero
/// mean / unit variance per sample, then applies a learned per-channel
/// affine map `γ·x̂ + β` (γ initialized to 1, β to 0).
#[derive(Debug, Clone)]
pub struct GroupNorm<F> {
    /// Per-channel scale.
    pub gamma: Param<F>,
    /// Per-channel shift.
    pub beta: Param<F>,
    channels: usize,
    group_size: usize,
    eps: F,
}

/// Forward context: normalized activations and inverse standard deviations.
#[derive(Debug)]
pub struct GroupNormCtx<F> {
    x_hat: Array3<F>,
    inv_std: Array2<F>,
}

impl<F: Real> GroupNorm<F> {
    /// New layer over `channels` channels in groups of `group_size`.
    ///
    /// # Panics
    /// When `channels` is not a multiple of `group_size` (a static
    /// configuration error).
    pub fn new(channels: usize, group_size: usize, _rng: &mut ChaCha8Rng) -> Self {
        assert!(
            group_size > 0 && channels % group_size == 0,
            "channels {channels} must be a multiple of group size {group_size}"
        );
        let mut gamma = Param::zeros(&[channels]);
        gamma.value.fill(F::one());
        GroupNorm {
            gamma,
            beta: Param::zeros(&[channels]),
            channels,
            group_size,
            eps: F::of(1e-5),
        }
    }

    fn groups(&self) -> usize {
        self.channels / self.group_size
    }

    /// Core forward on the canonical `(N, C, S)` view.
    pub fn forward(&self, x: &Array3<F>) -> (Array3<F>, GroupNormCtx<F>) {
        let (n, c, s) = x.dim();
        debug_assert_eq!(c, self.channels, "channel mismatch");
        let groups = self.groups();
        let m = F::from_usize(self.group_size * s).unwrap();

        let mut x_hat = Array3::zeros((n, c, s));
        let mut inv_std = Array2::zeros((n, groups));
        for b in 0..n {
            for g in 0..groups {
                let c0 = g * self.group_size;
                let c1 = c0 + self.group_size;
                let mut mean = F::zero();
                for ch in c0..c1 {
                    for i in 0..s {
                        mean += x[[b, ch, i]];
                    }
                }
                mean /= m;
                let mut var = F::zero();
                for ch in c0..c1 {
                    for i in 0..s {
                        let d = x[[b, ch, i]] - mean;
                        var += d * d;
                    }
                }
                var /= m;
                let inv = F::one() / (var + self.eps).sqrt();
                inv_std[[b, g]] = inv;
                for ch in c0..c1 {
                    for i in 0..s {
                        x_hat[[b, ch, i]] = (x[[b, ch, i]] - mean) * inv;
                    }
                }
            }
        }

        let mut y = Array3::zeros((n, c, s));
        for b in 0..n {
            for ch in 0..c {
                let (ga, be) = (self.gamma.value[[ch]], self.beta.value[[ch]]);
                for i in 0..s {
                    y[[b, ch, i]] = ga * x_hat[[b, ch, i]] + be;
                }
            }
        }
        (y, GroupNormCtx { x_hat, inv_std })
    }

    /// Backward on the canonical view; accumulates γ/β gradients and
    /// returns the input gradient.
    pub fn backward(&mut self, ctx: &GroupNormCtx<F>, dy: &Array3<F>) -> Array3<F> {
        let (n, c, s) = dy.dim();
        let groups = self.groups();
        let m = F::from_usize(self.group_size * s).unwrap();

        {
            let mut dgamma = Array1::zeros(c);
            let mut dbeta = Array1::zeros(c);
            for b in 0..n {
                for ch in 0..c {
                    for i in 0..s {
                        dgamma[ch] += dy[[b, ch, i]] * ctx.x_hat[[b, ch, i]];
                        dbeta[ch] += dy[[b, ch, i]];
                    }
                }
            }
            let mut gg = self.gamma.grad.view_mut();
            let mut bg = self.beta.grad.view_mut();
            for ch in 0..c {
                gg[[ch]] += dgamma[ch];
                bg[[ch]] += dbeta[ch];
            }
        }

        let mut dx = Array3::zeros((n, c, s));
        for b in 0..n {
            for g in 0..groups {
                let c0 = g * self.group_size;
                let c1 = c0 + self.group_size;
                // dx̂ = dy·γ; dx = inv·(dx̂ − mean(dx̂) − x̂·mean(dx̂·x̂)).
                let mut s1 = F::zero();
                let mut s2 = F::zero();
                for ch in c0..c1 {
                    let ga = self.gamma.value[[ch]];
                    for i in 0..s {
                        let dxh = dy[[b, ch, i]] * ga;
                        s1 += dxh;
                        s2 += dxh * ctx.x_hat[[b, ch, i]];
                    }
                }
                let (mu1, mu2) = (s1 / m, s2 / m);
                let inv = ctx.inv_std[[b, g]];
                for ch in c0..c1 {
                    let ga = self.gamma.value[[ch]];
                    for i in 0..s {
                        let dxh = dy[[b, ch, i]] * ga;
                        dx[[b, ch, i]] = inv * (dxh - mu1 - ctx.x_hat[[b, ch, i]] * mu2);
                    }
                }
            }
        }
        dx
    }

    /// Forward for `(N, C, L)` activations (temporal stack).
    pub fn forward3(&self, x: &Array3<F>) -> (Array3<F>, GroupNormCtx<F>) {
        self.forward(x)
    }

    /// Forward for `(N, C, H, W)` activations (planar stack).
    pub fn forward4(&self, x: &Array4<F>) -> (Array4<F>, GroupNormCtx<F>) {
        let (n, c, h, w) = x.dim();
        let flat = x
            .to_shape((n, c, h * w))
            .expect("contiguous activations")
            .into_owned();
        let (y, ctx) = self.forward(&flat);
        let y4 = y
            .to_shape((n, c, h, w))
            .expect("round-trip reshape")
            .into_owned();
        (y4, ctx)
    }

    /// Backward matching [`GroupNorm::forward4`].
    pub fn backward4(&mut self, ctx: &GroupNormCtx<F>, dy: &Array4<F>) -> Array4<F> {
        let (n, c, h, w) = dy.dim();
        let flat = dy
            .to_shape((n, c, h * w))
            .expect("contiguous gradient")
            .into_owned();
        let dx = self.backward(ctx, &flat);
        dx.to_shape((n, c, h, w))
            .expect("round-trip reshape")
            .into_owned()
    }
}

impl<F: Real> Module<F> for GroupNorm<F> {
    fn visit_params(&mut self, prefix: &str, visitor: &mut dyn ParamVisitor<F>) {
        visitor.visit(&format!("{prefix}.gamma"), &mut self.gamma);
        visitor.visit(&format!("{prefix}.beta"), &mut self.beta);
    }
}
