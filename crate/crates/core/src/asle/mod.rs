//! Scale-agnostic displacement estimator with Laplace uncertainty.
//!
//! The network maps a patched, gravity-aligned IMU window of *any* duration
//! to the distribution of the window's mean horizontal velocity: a point
//! estimate `v̂ ∈ R²` and a per-axis log Laplace scale `log b_v ∈ R²`.
//! Displacement statistics follow by pure arithmetic — `Δp̂ = t·v̂` and
//! `b̂ = t·exp(log b_v)` — so the duration never enters the network itself
//! and the any-scale property is exact by construction.
//!
//! Stages, in order:
//!
//! 1. **Embedding** — two strided temporal convolutions compress each patch
//!    (6 channels × `L` samples → `e` channels × `L′`), then one ReLU and
//!    one group norm. Patches are processed independently.
//! 2. **Per-patch extractor** — a stack of pre-activation 1D residual
//!    blocks (GN → ReLU → conv, twice; 1×1 projection shortcut on channel
//!    changes) that doubles channels per stage.
//! 3. **Context builder** — the patch and channel axes are transposed so
//!    `(B, P, C, W)` becomes an image-like `(B, C, P, W)`, and 3×3 2D
//!    residual blocks mix information *across* neighboring patches.
//! 4. **Pooling head** — adaptive pools collapse the variable patch axis
//!    to a fixed-width feature vector (mean over the extractor output, plus
//!    a multi-kernel pool set over the context output), which a two-layer
//!    perceptron maps to `(v̂, log b_v)`.
//!
//! Training minimizes a Laplace negative log-likelihood on the velocity
//! plus a self-supervised feature-matching term: a corrupted copy of the
//! batch (see [`crate::data::apply_all`]) must reproduce the clean batch's
//! context features, with the clean branch held constant (gradient-blocked)
//! so the features cannot collapse to a constant map.
//!
//! Everything is deterministic given seeds: initialization, dropout, and
//! the augmentations all consume explicit seeds, so a fixed seed replays a
//! training trajectory bit-for-bit on a single thread.

pub mod checkpoint;
pub mod training;

use ndarray::{concatenate, s, Array2, Array3, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{apply_all, derive_seed, AugmentationSpec, PatchTensor, SampleWindow};
use crate::nn::conv::{Conv1d, Conv1dCtx, Conv2d, Conv2dCtx};
use crate::nn::linear::{Linear, LinearCtx};
use crate::nn::norm::{GroupNorm, GroupNormCtx};
use crate::nn::pool::{
    adaptive_avg_pool2d, adaptive_avg_pool2d_backward, adaptive_max_pool2d,
    adaptive_max_pool2d_backward,
};
use crate::nn::{
    dropout, dropout_backward, relu, relu_backward, Adam, Module, ParamVisitor,
};
use crate::{Error, Real, Result};

/// Architecture hyperparameters.
///
/// [`AsleConfig::default`] is the full-size network; [`AsleConfig::compact`]
/// is a reduced preset that trains in minutes on one CPU core while keeping
/// every structural property (same stages, same pooling head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsleConfig {
    /// Patch length `L` the input tensor was cut with.
    pub patch_len: usize,
    /// Embedding channel count `e`.
    pub embed_channels: usize,
    /// Kernel size of both compressor convolutions.
    pub embed_kernel: usize,
    /// Stride of both compressor convolutions.
    pub embed_stride: usize,
    /// Channels per normalization group, everywhere group norm appears.
    pub group_size: usize,
    /// Output channels of the successive 1D residual stages.
    pub stage_channels: Vec<usize>,
    /// Number of 3×3 2D residual blocks in the context builder.
    pub context_blocks: usize,
    /// Hidden width of the regression head.
    pub head_hidden: usize,
    /// Dropout probability in the head (training only).
    pub dropout: f64,
}

impl Default for AsleConfig {
    fn default() -> Self {
        AsleConfig {
            patch_len: 100,
            embed_channels: 32,
            embed_kernel: 3,
            embed_stride: 3,
            group_size: 4,
            stage_channels: vec![64, 128, 256, 512],
            context_blocks: 2,
            head_hidden: 1024,
            dropout: 0.2,
        }
    }
}

impl AsleConfig {
    /// Small preset for CPU-budget training: same topology, fewer channels.
    pub fn compact() -> Self {
        AsleConfig {
            patch_len: 100,
            embed_channels: 16,
            embed_kernel: 3,
            embed_stride: 3,
            group_size: 4,
            stage_channels: vec![32, 64],
            context_blocks: 1,
            head_hidden: 128,
            dropout: 0.2,
        }
    }

    /// Channel count of the final stage (the context builder's width).
    pub fn context_channels(&self) -> usize {
        *self.stage_channels.last().expect("validated non-empty")
    }

    /// Width of the pooled feature vector entering the head: one global
    /// average of the extractor plus the {1, 2, 3, 3}-bin pool set over the
    /// context output, all of `context_channels` channels each.
    pub fn pooled_width(&self) -> usize {
        self.context_channels() * (1 + 1 + 2 + 3 + 3)
    }

    /// Checks dimension positivity and group-norm divisibility.
    pub fn validate(&self) -> Result<()> {
        if self.patch_len == 0
            || self.embed_channels == 0
            || self.embed_kernel == 0
            || self.embed_stride == 0
            || self.group_size == 0
            || self.head_hidden == 0
            || self.stage_channels.is_empty()
        {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        let divisible = |c: usize| c % self.group_size == 0;
        if !divisible(self.embed_channels) || !self.stage_channels.iter().all(|&c| divisible(c)) {
            return Err(Error::invalid(
                "every channel count must be a multiple of the group-norm group size",
            ));
        }
        Ok(())
    }
}

/// Inference mode: dropout off, fully deterministic.
/// Training mode: dropout on, driven by an explicit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Deterministic forward pass (dropout disabled).
    Eval,
    /// Stochastic forward pass; the seed fixes the dropout mask.
    Train {
        /// Seed for the head's dropout mask.
        dropout_seed: u64,
    },
}

impl Mode {
    fn dropout_args(self) -> (bool, u64) {
        match self {
            Mode::Eval => (false, 0),
            Mode::Train { dropout_seed } => (true, dropout_seed),
        }
    }
}

/// Batched network output in both velocity and displacement form.
#[derive(Debug, Clone)]
pub struct Prediction<F> {
    /// Mean-velocity estimate, `(B, 2)` m/s.
    pub v_hat: Array2<F>,
    /// Log Laplace scale of the velocity, `(B, 2)`.
    pub log_b_v: Array2<F>,
    /// Displacement estimate `t · v̂`, `(B, 2)` m.
    pub dp_hat: Array2<F>,
    /// Laplace scale of the displacement `t · exp(log b_v)`, `(B, 2)` m.
    pub b_hat: Array2<F>,
    /// Window duration in seconds.
    pub t: F,
}

/// The two internal feature maps the self-supervision compares.
#[derive(Debug, Clone)]
pub struct FeatureMap<F> {
    /// Context-builder output, `(B, C, P, W)`.
    pub context: Array4<F>,
    /// Per-patch extractor output, `(B, P, C, W)`.
    pub extractor: Array4<F>,
}

/// Embedding compressor: two strided convolutions, one ReLU, one group norm.
#[derive(Debug, Clone)]
struct Embed<F> {
    conv1: Conv1d<F>,
    conv2: Conv1d<F>,
    gn: GroupNorm<F>,
}

/// Backward context of [`Embed`].
#[derive(Debug)]
pub struct EmbedCache<F> {
    c1: Conv1dCtx<F>,
    c2: Conv1dCtx<F>,
    relu_out: Array3<F>,
    gn: GroupNormCtx<F>,
}

impl<F: Real> Embed<F> {
    fn new(cfg: &AsleConfig, rng: &mut ChaCha8Rng) -> Self {
        Embed {
            conv1: Conv1d::new(6, cfg.embed_channels, cfg.embed_kernel, cfg.embed_stride, rng),
            conv2: Conv1d::new(
                cfg.embed_channels,
                cfg.embed_channels,
                cfg.embed_kernel,
                cfg.embed_stride,
                rng,
            ),
            gn: GroupNorm::new(cfg.embed_channels, cfg.group_size, rng),
        }
    }

    fn forward(&self, x: &Array3<F>) -> (Array3<F>, EmbedCache<F>) {
        let (y1, c1) = self.conv1.forward(x);
        let (y2, c2) = self.conv2.forward(&y1);
        let r = relu(&y2);
        let (g, gn) = self.gn.forward3(&r);
        (g, EmbedCache { c1, c2, relu_out: r, gn })
    }

    fn backward(&mut self, cache: &EmbedCache<F>, dy: &Array3<F>) -> Array3<F> {
        let dr = self.gn.backward(&cache.gn, dy);
        let dy2 = relu_backward(&dr, &cache.relu_out);
        let dy1 = self.conv2.backward(&cache.c2, &dy2);
        self.conv1.backward(&cache.c1, &dy1)
    }

    fn visit(&mut self, visitor: &mut dyn ParamVisitor<F>) {
        visitor.visit("embed.conv1.w", &mut self.conv1.w);
        visitor.visit("embed.conv1.b", &mut self.conv1.b);
        visitor.visit("embed.conv2.w", &mut self.conv2.w);
        visitor.visit("embed.conv2.b", &mut self.conv2.b);
        visitor.visit("embed.gn.gamma", &mut self.gn.gamma);
        visitor.visit("embed.gn.beta", &mut self.gn.beta);
    }
}

/// Pre-activation 1D residual block: `x + conv(relu(gn(conv(relu(gn(x))))))`
/// with a 1×1 projection shortcut when the channel count changes. Zeroing
/// the final convolution reduces the block to its (projected) shortcut.
#[derive(Debug, Clone)]
struct ResBlock1d<F> {
    gn_a: GroupNorm<F>,
    conv_a: Conv1d<F>,
    gn_b: GroupNorm<F>,
    conv_b: Conv1d<F>,
    proj: Option<Conv1d<F>>,
}

/// Backward context of [`ResBlock1d`].
#[derive(Debug)]
pub struct Res1dCache<F> {
    gn_a: GroupNormCtx<F>,
    ra: Array3<F>,
    conv_a: Conv1dCtx<F>,
    gn_b: GroupNormCtx<F>,
    rb: Array3<F>,
    conv_b: Conv1dCtx<F>,
    proj: Option<Conv1dCtx<F>>,
}

impl<F: Real> ResBlock1d<F> {
    fn new(c_in: usize, c_out: usize, group_size: usize, rng: &mut ChaCha8Rng) -> Self {
        ResBlock1d {
            gn_a: GroupNorm::new(c_in, group_size, rng),
            conv_a: Conv1d::new(c_in, c_out, 3, 1, rng),
            gn_b: GroupNorm::new(c_out, group_size, rng),
            conv_b: Conv1d::new(c_out, c_out, 3, 1, rng),
            proj: (c_in != c_out).then(|| Conv1d::new(c_in, c_out, 1, 1, rng)),
        }
    }

    fn forward(&self, x: &Array3<F>) -> (Array3<F>, Res1dCache<F>) {
        let (a, gn_a) = self.gn_a.forward3(x);
        let ra = relu(&a);
        let (c1, conv_a) = self.conv_a.forward(&ra);
        let (b, gn_b) = self.gn_b.forward3(&c1);
        let rb = relu(&b);
        let (c2, conv_b) = self.conv_b.forward(&rb);
        let (shortcut, proj) = match &self.proj {
            Some(p) => {
                let (sx, ctx) = p.forward(x);
                (sx, Some(ctx))
            }
            None => (x.clone(), None),
        };
        (c2 + &shortcut, Res1dCache { gn_a, ra, conv_a, gn_b, rb, conv_b, proj })
    }

    fn backward(&mut self, cache: &Res1dCache<F>, dy: &Array3<F>) -> Array3<F> {
        let drb = self.conv_b.backward(&cache.conv_b, dy);
        let db = relu_backward(&drb, &cache.rb);
        let dc1 = self.gn_b.backward(&cache.gn_b, &db);
        let dra = self.conv_a.backward(&cache.conv_a, &dc1);
        let da = relu_backward(&dra, &cache.ra);
        let mut dx = self.gn_a.backward(&cache.gn_a, &da);
        match (&mut self.proj, &cache.proj) {
            (Some(p), Some(ctx)) => dx += &p.backward(ctx, dy),
            _ => dx += dy,
        }
        dx
    }

    fn visit(&mut self, prefix: &str, visitor: &mut dyn ParamVisitor<F>) {
        visitor.visit(&format!("{prefix}.gn_a.gamma"), &mut self.gn_a.gamma);
        visitor.visit(&format!("{prefix}.gn_a.beta"), &mut self.gn_a.beta);
        visitor.visit(&format!("{prefix}.conv_a.w"), &mut self.conv_a.w);
        visitor.visit(&format!("{prefix}.conv_a.b"), &mut self.conv_a.b);
        visitor.visit(&format!("{prefix}.gn_b.gamma"), &mut self.gn_b.gamma);
        visitor.visit(&format!("{prefix}.gn_b.beta"), &mut self.gn_b.beta);
        visitor.visit(&format!("{prefix}.conv_b.w"), &mut self.conv_b.w);
        visitor.visit(&format!("{prefix}.conv_b.b"), &mut self.conv_b.b);
        if let Some(p) = &mut self.proj {
            visitor.visit(&format!("{prefix}.proj.w"), &mut p.w);
            visitor.visit(&format!("{prefix}.proj.b"), &mut p.b);
        }
    }
}

/// Pre-activation 2D residual block at constant channel count (identity
/// shortcut, 3×3 kernels).
#[derive(Debug, Clone)]
struct ResBlock2d<F> {
    gn_a: GroupNorm<F>,
    conv_a: Conv2d<F>,
    gn_b: GroupNorm<F>,
    conv_b: Conv2d<F>,
}

/// Backward context of [`ResBlock2d`].
#[derive(Debug)]
pub struct Res2dCache<F> {
    gn_a: GroupNormCtx<F>,
    ra: Array4<F>,
    conv_a: Conv2dCtx<F>,
    gn_b: GroupNormCtx<F>,
    rb: Array4<F>,
    conv_b: Conv2dCtx<F>,
}

impl<F: Real> ResBlock2d<F> {
    fn new(channels: usize, group_size: usize, rng: &mut ChaCha8Rng) -> Self {
        ResBlock2d {
            gn_a: GroupNorm::new(channels, group_size, rng),
            conv_a: Conv2d::new(channels, channels, 3, 3, rng),
            gn_b: GroupNorm::new(channels, group_size, rng),
            conv_b: Conv2d::new(channels, channels, 3, 3, rng),
        }
    }

    fn forward(&self, x: &Array4<F>) -> (Array4<F>, Res2dCache<F>) {
        let (a, gn_a) = self.gn_a.forward4(x);
        let ra = relu(&a);
        let (c1, conv_a) = self.conv_a.forward(&ra);
        let (b, gn_b) = self.gn_b.forward4(&c1);
        let rb = relu(&b);
        let (c2, conv_b) = self.conv_b.forward(&rb);
        (c2 + x, Res2dCache { gn_a, ra, conv_a, gn_b, rb, conv_b })
    }

    fn backward(&mut self, cache: &Res2dCache<F>, dy: &Array4<F>) -> Array4<F> {
        let drb = self.conv_b.backward(&cache.conv_b, dy);
        let db = relu_backward(&drb, &cache.rb);
        let dc1 = self.gn_b.backward4(&cache.gn_b, &db);
        let dra = self.conv_a.backward(&cache.conv_a, &dc1);
        let da = relu_backward(&dra, &cache.ra);
        let dx = self.gn_a.backward4(&cache.gn_a, &da);
        dx + dy
    }

    fn visit(&mut self, prefix: &str, visitor: &mut dyn ParamVisitor<F>) {
        visitor.visit(&format!("{prefix}.gn_a.gamma"), &mut self.gn_a.gamma);
        visitor.visit(&format!("{prefix}.gn_a.beta"), &mut self.gn_a.beta);
        visitor.visit(&format!("{prefix}.conv_a.w"), &mut self.conv_a.w);
        visitor.visit(&format!("{prefix}.conv_a.b"), &mut self.conv_a.b);
        visitor.visit(&format!("{prefix}.gn_b.gamma"), &mut self.gn_b.gamma);
        visitor.visit(&format!("{prefix}.gn_b.beta"), &mut self.gn_b.beta);
        visitor.visit(&format!("{prefix}.conv_b.w"), &mut self.conv_b.w);
        visitor.visit(&format!("{prefix}.conv_b.b"), &mut self.conv_b.b);
    }
}

/// Backward context of the pooling head.
#[derive(Debug)]
pub struct PcoCache<F> {
    /// Pooled feature vector entering the head, `(B, 10·C)`; the first `C`
    /// columns are the extractor's global averages, then the context pools
    /// in `{avg 1×1, avg 2×1, avg 3×1, max 3×1}` order.  Public so the
    /// layout can be inspected and asserted on.
    pub feats: Array2<F>,
    fc1: LinearCtx<F>,
    relu_out: Array2<F>,
    mask: Option<Array2<F>>,
    fc2: LinearCtx<F>,
    arg_max3: Array4<usize>,
    extr_dims: (usize, usize, usize, usize),
    ctx_dims: (usize, usize, usize, usize),
}

/// Full backward context of one forward pass.
#[derive(Debug)]
pub struct Cache<F> {
    embed: EmbedCache<F>,
    stages: Vec<Res1dCache<F>>,
    context: Vec<Res2dCache<F>>,
    pco: PcoCache<F>,
    batch: usize,
}

/// One forward pass: the prediction, the feature maps the self-supervision
/// consumes, and the context needed to backpropagate through it.
#[derive(Debug)]
pub struct ForwardPass<F> {
    /// Network output in velocity and displacement form.
    pub prediction: Prediction<F>,
    /// Extractor and context feature maps.
    pub features: FeatureMap<F>,
    cache: Cache<F>,
}

/// The displacement-estimator network.
#[derive(Debug, Clone)]
pub struct Model<F> {
    config: AsleConfig,
    embed: Embed<F>,
    stages: Vec<ResBlock1d<F>>,
    context: Vec<ResBlock2d<F>>,
    fc1: Linear<F>,
    fc2: Linear<F>,
    step: u64,
}

/// `(B, P, C, W) → (B·P, C, W)`: fold patches into the batch axis so the
/// 1D layers treat every patch independently.
fn merge_bp<F: Real>(x: &Array4<F>) -> Array3<F> {
    let (b, p, c, w) = x.dim();
    x.to_shape((b * p, c, w)).expect("standard layout").into_owned()
}

/// Inverse of [`merge_bp`].
fn split_bp<F: Real>(x: &Array3<F>, b: usize, p: usize) -> Array4<F> {
    let (_, c, w) = x.dim();
    x.to_shape((b, p, c, w)).expect("standard layout").into_owned()
}

/// Swaps the patch and channel axes: `(B, P, C, W) ↔ (B, C, P, W)`.
/// Self-inverse, so it serves as its own gradient transport.
fn transpose_pc<F: Real>(x: &Array4<F>) -> Array4<F> {
    x.view().permuted_axes([0, 2, 1, 3]).as_standard_layout().into_owned()
}

/// Flattens `(N, C, OH, OW)` pooled maps to `(N, C·OH·OW)` rows.
fn flat_pool<F: Real>(x: &Array4<F>) -> Array2<F> {
    let (n, c, h, w) = x.dim();
    x.to_shape((n, c * h * w)).expect("standard layout").into_owned()
}

/// Reinflates a column slice of the pooled feature vector to `(N, C, OH, OW)`.
fn unflat_pool<F: Real>(
    cols: ndarray::ArrayView2<'_, F>,
    c: usize,
    oh: usize,
    ow: usize,
) -> Array4<F> {
    let n = cols.nrows();
    cols.to_owned().into_shape_with_order((n, c, oh, ow)).expect("column count matches")
}

impl<F: Real> Model<F> {
    /// Builds a freshly initialized model; `seed` fixes every weight.
    pub fn new(config: AsleConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed = Embed::new(&config, &mut rng);
        let mut stages = Vec::new();
        let mut c_in = config.embed_channels;
        for &c_out in &config.stage_channels {
            stages.push(ResBlock1d::new(c_in, c_out, config.group_size, &mut rng));
            c_in = c_out;
        }
        let context = (0..config.context_blocks)
            .map(|_| ResBlock2d::new(c_in, config.group_size, &mut rng))
            .collect();
        let fc1 = Linear::new(config.pooled_width(), config.head_hidden, &mut rng);
        let fc2 = Linear::new(config.head_hidden, 4, &mut rng);
        Ok(Model { config, embed, stages, context, fc1, fc2, step: 0 })
    }

    /// The architecture this model was built with.
    pub fn config(&self) -> &AsleConfig {
        &self.config
    }

    /// Number of optimizer updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Total number of learnable scalars.
    pub fn param_count(&mut self) -> usize {
        crate::nn::param_count(self)
    }

    /// Compresses patches: `(B, P, 6, L) → (B, P, e, L′)` with
    /// `L′ = ⌈⌈L/s⌉/s⌉`.
    ///
    /// # Errors
    /// [`Error::InvalidInput`] unless the input has 6 channels and at least
    /// `stride` samples per patch.
    pub fn embed(&self, x: &Array4<F>) -> Result<(Array4<F>, EmbedCache<F>)> {
        let (b, p, ch, l) = x.dim();
        if ch != 6 {
            return Err(Error::invalid(format!("expected 6 input channels, got {ch}")));
        }
        if l < self.config.embed_stride {
            return Err(Error::invalid(format!(
                "patch length {l} is shorter than the compressor stride {}",
                self.config.embed_stride
            )));
        }
        let (y, cache) = self.embed.forward(&merge_bp(x));
        Ok((split_bp(&y, b, p), cache))
    }

    /// Per-patch feature extraction: `(B, P, e, L′) → (B, P, C, W)` through
    /// the 1D residual stages. No cross-patch mixing happens here.
    pub fn extract_features(&self, xe: &Array4<F>) -> Result<(Array4<F>, Vec<Res1dCache<F>>)> {
        let (b, p, _, _) = xe.dim();
        let mut y = merge_bp(xe);
        let mut caches = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let (next, cache) = stage.forward(&y);
            caches.push(cache);
            y = next;
        }
        Ok((split_bp(&y, b, p), caches))
    }

    /// Cross-patch context: transposes to `(B, C, P, W)` and applies the 2D
    /// residual blocks. Each 3×3 convolution extends the influence of a
    /// patch by one neighbor on either side.
    pub fn build_context(&self, xf: &Array4<F>) -> Result<(Array4<F>, Vec<Res2dCache<F>>)> {
        let mut y = transpose_pc(xf);
        let mut caches = Vec::with_capacity(self.context.len());
        for block in &self.context {
            let (next, cache) = block.forward(&y);
            caches.push(cache);
            y = next;
        }
        Ok((y, caches))
    }

    /// Pooling head: collapses the patch axis adaptively and regresses the
    /// 4-vector `(v̂, log b_v)`.
    pub fn pco(
        &self,
        extractor: &Array4<F>,
        context: &Array4<F>,
        mode: Mode,
    ) -> Result<(Array2<F>, PcoCache<F>)> {
        let (b, p, c, w) = extractor.dim();
        let (bc, cc, pc, wc) = context.dim();
        if b != bc {
            return Err(Error::invalid("extractor and context batch sizes differ"));
        }
        let extr_t = transpose_pc(extractor);
        let f1 = adaptive_avg_pool2d(&extr_t, 1, 1);
        let a1 = adaptive_avg_pool2d(context, 1, 1);
        let a2 = adaptive_avg_pool2d(context, 2, 1);
        let a3 = adaptive_avg_pool2d(context, 3, 1);
        let (m3, arg_max3) = adaptive_max_pool2d(context, 3, 1);
        let feats = concatenate(
            Axis(1),
            &[
                flat_pool(&f1).view(),
                flat_pool(&a1).view(),
                flat_pool(&a2).view(),
                flat_pool(&a3).view(),
                flat_pool(&m3).view(),
            ],
        )
        .expect("pool widths agree");
        let (h, fc1) = self.fc1.forward(&feats);
        let r = relu(&h);
        let (training, seed) = mode.dropout_args();
        let (d, mask) = dropout(&r, F::of(self.config.dropout), training, seed);
        let (out, fc2) = self.fc2.forward(&d);
        let cache = PcoCache {
            feats,
            fc1,
            relu_out: r,
            mask,
            fc2,
            arg_max3,
            extr_dims: (b, p, c, w),
            ctx_dims: (bc, cc, pc, wc),
        };
        Ok((out, cache))
    }

    /// Full forward pass for a window of duration `t` seconds.
    ///
    /// # Errors
    /// [`Error::InvalidInput`] on a non-positive duration or malformed
    /// shapes; [`Error::Numeric`] when activations leave the finite range
    /// (model divergence).
    pub fn forward(&self, x: &PatchTensor<F>, t: F, mode: Mode) -> Result<ForwardPass<F>> {
        if t <= F::zero() {
            return Err(Error::invalid("window duration must be positive"));
        }
        let b = x.data.dim().0;
        let (xe, embed) = self.embed(&x.data)?;
        let (extr, stages) = self.extract_features(&xe)?;
        let (ctx, context) = self.build_context(&extr)?;
        let (out, pco) = self.pco(&extr, &ctx, mode)?;
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("model divergence: non-finite network output"));
        }
        let v_hat = out.slice(s![.., 0..2]).to_owned();
        let log_b_v = out.slice(s![.., 2..4]).to_owned();
        let dp_hat = &v_hat * t;
        let b_hat = log_b_v.mapv(|z| z.exp()) * t;
        Ok(ForwardPass {
            prediction: Prediction { v_hat, log_b_v, dp_hat, b_hat, t },
            features: FeatureMap { context: ctx, extractor: extr },
            cache: Cache { embed, stages, context, pco, batch: b },
        })
    }

    /// Backward of the pooling head; returns gradients with respect to the
    /// extractor `(B, P, C, W)` and context `(B, C, P, W)` feature maps.
    fn pco_backward(&mut self, cache: &PcoCache<F>, d_out: &Array2<F>) -> (Array4<F>, Array4<F>) {
        let dd = self.fc2.backward(&cache.fc2, d_out);
        let dr = dropout_backward(&dd, cache.mask.as_ref());
        let dh = relu_backward(&dr, &cache.relu_out);
        let dfeats = self.fc1.backward(&cache.fc1, &dh);
        let (_, p, c, w) = cache.extr_dims;
        let (_, cc, pc, wc) = cache.ctx_dims;
        let df1 = unflat_pool(dfeats.slice(s![.., 0..c]), c, 1, 1);
        let o1 = c;
        let da1 = unflat_pool(dfeats.slice(s![.., o1..o1 + cc]), cc, 1, 1);
        let o2 = o1 + cc;
        let da2 = unflat_pool(dfeats.slice(s![.., o2..o2 + 2 * cc]), cc, 2, 1);
        let o3 = o2 + 2 * cc;
        let da3 = unflat_pool(dfeats.slice(s![.., o3..o3 + 3 * cc]), cc, 3, 1);
        let o4 = o3 + 3 * cc;
        let dm3 = unflat_pool(dfeats.slice(s![.., o4..o4 + 3 * cc]), cc, 3, 1);
        let d_extr = transpose_pc(&adaptive_avg_pool2d_backward(&df1, p, w));
        let mut d_ctx = adaptive_avg_pool2d_backward(&da1, pc, wc);
        d_ctx += &adaptive_avg_pool2d_backward(&da2, pc, wc);
        d_ctx += &adaptive_avg_pool2d_backward(&da3, pc, wc);
        d_ctx += &adaptive_max_pool2d_backward(&dm3, &cache.arg_max3, pc, wc);
        (d_extr, d_ctx)
    }

    /// Accumulates parameter gradients for one forward pass.
    ///
    /// `d_v` and `d_log_b` are the loss gradients with respect to `v̂` and
    /// `log b_v`; `d_context` is an optional extra gradient on the context
    /// feature map (the feature-matching loss injects it here, downstream
    /// of the head).
    pub fn backward(
        &mut self,
        pass: &ForwardPass<F>,
        d_v: &Array2<F>,
        d_log_b: &Array2<F>,
        d_context: Option<&Array4<F>>,
    ) -> Result<()> {
        let cache = &pass.cache;
        let b = cache.batch;
        if d_v.dim() != (b, 2) || d_log_b.dim() != (b, 2) {
            return Err(Error::invalid("output gradient shapes must be (B, 2)"));
        }
        let mut d_out = Array2::zeros((b, 4));
        d_out.slice_mut(s![.., 0..2]).assign(d_v);
        d_out.slice_mut(s![.., 2..4]).assign(d_log_b);
        let (d_extr_head, mut d_ctx) = self.pco_backward(&cache.pco, &d_out);
        if let Some(extra) = d_context {
            if extra.dim() != d_ctx.dim() {
                return Err(Error::invalid("context gradient shape mismatch"));
            }
            d_ctx += extra;
        }
        for (block, ctx) in self.context.iter_mut().zip(&cache.context).rev() {
            d_ctx = block.backward(ctx, &d_ctx);
        }
        let d_extr = transpose_pc(&d_ctx) + &d_extr_head;
        let mut d = merge_bp(&d_extr);
        for (stage, ctx) in self.stages.iter_mut().zip(&cache.stages).rev() {
            d = stage.backward(ctx, &d);
        }
        self.embed.backward(&cache.embed, &d);
        Ok(())
    }
}

impl<F: Real> Module<F> for Model<F> {
    fn visit_params(&mut self, _prefix: &str, visitor: &mut dyn ParamVisitor<F>) {
        self.embed.visit(visitor);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            stage.visit(&format!("stage{i}"), visitor);
        }
        for (i, block) in self.context.iter_mut().enumerate() {
            block.visit(&format!("ctx{i}"), visitor);
        }
        visitor.visit("head.fc1.w", &mut self.fc1.w);
        visitor.visit("head.fc1.b", &mut self.fc1.b);
        visitor.visit("head.fc2.w", &mut self.fc2.w);
        visitor.visit("head.fc2.b", &mut self.fc2.b);
    }
}

/// Laplace negative log-likelihood of the velocity labels, averaged over
/// batch and axes:
///
/// ```text
/// mean( |v − v̂|·exp(−log b_v) + log b_v ) [+ ln t]
/// ```
///
/// The optional `ln t` term is an additive constant with zero gradient
/// (kept for loss-value parity across scales; off by default in training).
/// Returns the loss and its gradients with respect to `v̂` and `log b_v`.
pub fn nll_loss<F: Real>(
    v_hat: &Array2<F>,
    log_b_v: &Array2<F>,
    labels: &Array2<F>,
    t: F,
    include_log_t: bool,
) -> Result<(F, Array2<F>, Array2<F>)> {
    if v_hat.dim() != labels.dim() || v_hat.dim() != log_b_v.dim() {
        return Err(Error::invalid("prediction and label shapes must match"));
    }
    let n = F::from_usize(v_hat.len()).unwrap();
    let mut loss = F::zero();
    let mut d_v = Array2::zeros(v_hat.raw_dim());
    let mut d_log_b = Array2::zeros(v_hat.raw_dim());
    for ((idx, &vh), (&lb, &v)) in
        v_hat.indexed_iter().zip(log_b_v.iter().zip(labels.iter()))
    {
        let diff = vh - v;
        let inv_b = (-lb).exp();
        loss += diff.abs() * inv_b + lb;
        // Subgradient 0 at the kink, ±1 elsewhere.
        let sign = if diff > F::zero() {
            F::one()
        } else if diff < F::zero() {
            -F::one()
        } else {
            F::zero()
        };
        d_v[idx] = sign * inv_b / n;
        d_log_b[idx] = (F::one() - diff.abs() * inv_b) / n;
    }
    loss /= n;
    if include_log_t {
        loss += t.ln();
    }
    Ok((loss, d_v, d_log_b))
}

/// Mean squared difference between the context feature maps of a corrupted
/// pass and a clean pass. The clean map is the *target*: gradients flow
/// only to the corrupted branch (returned as `d_aug`), never to the clean
/// one, so the features cannot collapse to a trivial constant.
pub fn feature_match_loss<F: Real>(
    clean: &FeatureMap<F>,
    aug: &FeatureMap<F>,
) -> Result<(F, Array4<F>)> {
    if clean.context.dim() != aug.context.dim() {
        return Err(Error::invalid("feature maps must have identical shapes"));
    }
    let n = F::from_usize(aug.context.len()).unwrap();
    let diff = &aug.context - &clean.context;
    let loss = diff.iter().map(|&d| d * d).fold(F::zero(), |a, b| a + b) / n;
    let d_aug = diff * (F::of(2.0) / n);
    Ok((loss, d_aug))
}

/// Per-term components of one training step's objective.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown<F> {
    /// Laplace negative log-likelihood on the corrupted branch.
    pub nll: F,
    /// Feature-matching (self-supervision) term.
    pub feature_match: F,
    /// Sum the optimizer stepped on.
    pub total: F,
}

/// One optimizer update on a scale-homogeneous batch.
///
/// The clean batch provides the feature-matching target (no dropout, no
/// gradient); a corrupted copy built by [`apply_all`] drives both losses.
/// The labels follow the corruption (heading rotation rotates them), so the
/// likelihood stays consistent with what the network sees. Deterministic
/// given `seed`.
///
/// # Errors
/// [`Error::Numeric`] when the loss or any updated parameter leaves the
/// finite range; shape errors from the forward pass.
pub fn train_step<F: Real>(
    model: &mut Model<F>,
    x: &PatchTensor<F>,
    windows: &[SampleWindow<F>],
    optimizer: &mut Adam<F>,
    aug: &AugmentationSpec<F>,
    seed: u64,
) -> Result<LossBreakdown<F>> {
    let b = x.data.dim().0;
    if windows.len() != b {
        return Err(Error::invalid("one label window required per batch row"));
    }
    let t = x.duration;
    let clean = model.forward(x, t, Mode::Eval)?;
    let (x_aug, labels_aug) = apply_all(x, windows, aug, derive_seed(seed, 0));
    let aug_pass =
        model.forward(&x_aug, t, Mode::Train { dropout_seed: derive_seed(seed, 1) })?;
    let mut labels = Array2::zeros((b, 2));
    for (i, w) in labels_aug.iter().enumerate() {
        labels[[i, 0]] = w.speed[0];
        labels[[i, 1]] = w.speed[1];
    }
    let (nll, d_v, d_log_b) = nll_loss(
        &aug_pass.prediction.v_hat,
        &aug_pass.prediction.log_b_v,
        &labels,
        t,
        false,
    )?;
    let (fm, d_ctx) = feature_match_loss(&clean.features, &aug_pass.features)?;
    let total = nll + fm;
    if !total.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite training loss at step {}: nll = {nll}, feature match = {fm}",
            model.step
        )));
    }
    crate::nn::zero_grads(model);
    model.backward(&aug_pass, &d_v, &d_log_b, Some(&d_ctx))?;
    optimizer.step(model);
    model.step += 1;
    if !crate::nn::all_finite(model) {
        return Err(Error::numeric(format!(
            "non-finite parameter after optimizer step {}",
            model.step
        )));
    }
    Ok(LossBreakdown { nll, feature_match: fm, total })
}

/// Analytic multiply–accumulate count for one forward pass over a window
/// of `t` seconds sampled at `sample_rate` Hz. Counts convolution and
/// fully-connected MACs only (normalization, activations, and pooling are
/// negligible next to them).
pub fn flop_estimate(config: &AsleConfig, t: f64, sample_rate: f64) -> u64 {
    let samples = (t * sample_rate).ceil() as u64;
    let l = config.patch_len as u64;
    let p = samples.div_ceil(l);
    let s = config.embed_stride as u64;
    let k = config.embed_kernel as u64;
    let e = config.embed_channels as u64;
    let l1 = l.div_ceil(s);
    let l2 = l1.div_ceil(s);
    // Compressor: 6→e over l1 positions, e→e over l2 positions, per patch.
    let mut macs = p * (6 * k * e * l1 + e * k * e * l2);
    // 1D stages at width l2, stride 1, kernel 3 (+1×1 projection on change).
    let mut c_in = e;
    for &c_out in &config.stage_channels {
        let c_out = c_out as u64;
        let mut block = c_in * 3 * c_out + c_out * 3 * c_out;
        if c_in != c_out {
            block += c_in * c_out;
        }
        macs += p * l2 * block;
        c_in = c_out;
    }
    // 2D context blocks: two 3×3 convolutions at constant width over the
    // full (P, W) plane.
    let c = c_in;
    macs += (config.context_blocks as u64) * 2 * (c * 9 * c) * (p * l2);
    // Head.
    let pooled = (config.pooled_width()) as u64;
    let hidden = config.head_hidden as u64;
    macs += pooled * hidden + hidden * 4;
    macs
}
