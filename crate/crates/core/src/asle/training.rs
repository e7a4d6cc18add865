//! Epoch/batch training driver for the displacement estimator.
//!
//! [`train`] owns the full loop: per batch it draws a scale-homogeneous
//! window set from the pose-carrying sequences, assembles the patched input
//! tensor, and runs one [`train_step`](super::train_step) (clean pass for
//! the self-supervision target, corrupted pass for the losses, one Adam
//! update). One optimizer instance persists across epochs so moment
//! estimates survive epoch boundaries. Everything is deterministic given
//! [`TrainParams::seed`]: batch `k` of epoch `e` uses the derived stream
//! `e·batches_per_epoch + k`, so a re-run reproduces every draw exactly.
//!
//! [`validation`] measures held-out displacement error without touching the
//! model: windows are grouped by duration (the network requires every batch
//! row to share one time scale), forwarded in evaluation mode, and scored as
//! mean Euclidean displacement error. The returned baseline — the mean
//! displacement magnitude, i.e. the error of always predicting "didn't
//! move" — anchors the number: a useful estimator must land well below it.

use serde::{Deserialize, Serialize};

use super::{train_step, Mode, Model};
use crate::data::{
    assemble_batch, derive_seed, sample_scale_batch, AugmentationSpec, ImuSequence,
    SampleWindow, WindowDist,
};
use crate::nn::Adam;
use crate::{Error, Real, Result};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams<F> {
    /// Number of passes over the batch schedule.
    pub epochs: usize,
    /// Optimizer updates per epoch.
    pub batches_per_epoch: usize,
    /// Windows per batch (all sharing one duration).
    pub batch_size: usize,
    /// Adam learning rate.
    pub learning_rate: F,
    /// Distribution the per-batch window duration is drawn from.
    pub window: WindowDist<F>,
    /// Corruption strengths for the self-supervised branch.
    pub augmentation: AugmentationSpec<F>,
    /// Seed fixing every window draw, corruption, and dropout mask.
    pub seed: u64,
}

impl<F: Real> Default for TrainParams<F> {
    fn default() -> Self {
        TrainParams {
            epochs: 20,
            batches_per_epoch: 25,
            batch_size: 8,
            learning_rate: F::of(1e-3),
            window: WindowDist::LogUniform { min: F::of(2.0), max: F::of(10.0) },
            augmentation: AugmentationSpec::default(),
            seed: 0,
        }
    }
}

impl<F: Real> TrainParams<F> {
    /// Checks counts, the learning rate, and the window distribution.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::invalid("training counts must be positive"));
        }
        if !(self.learning_rate > F::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive and finite"));
        }
        self.window.validate()
    }
}

/// Mean loss components over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats<F> {
    /// Zero-based epoch index.
    pub epoch: usize,
    /// Mean Laplace negative log-likelihood.
    pub nll: F,
    /// Mean feature-matching term.
    pub feature_match: F,
    /// Mean optimized total.
    pub total: F,
}

/// Runs the full training loop, mutating `model` in place and returning one
/// stats row per epoch.
///
/// # Errors
/// [`Error::InvalidInput`] on bad hyperparameters, pose-less sequences, or
/// sequences shorter than a drawn window; [`Error::Numeric`] if the loss or
/// a parameter diverges.
pub fn train<F: Real>(
    model: &mut Model<F>,
    sequences: &[ImuSequence<F>],
    params: &TrainParams<F>,
) -> Result<Vec<EpochStats<F>>> {
    params.validate()?;
    let patch_len = model.config().patch_len;
    let mut optimizer = Adam::new(params.learning_rate);
    let mut stats = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let mut nll = F::zero();
        let mut fm = F::zero();
        let mut total = F::zero();
        for k in 0..params.batches_per_epoch {
            let stream = (epoch * params.batches_per_epoch + k) as u64;
            let batch_seed = derive_seed(params.seed, stream);
            let windows = sample_scale_batch(
                sequences,
                &params.window,
                params.batch_size,
                derive_seed(batch_seed, 0),
            )?;
            let (x, _) = assemble_batch(sequences, &windows, patch_len)?;
            let breakdown = train_step(
                model,
                &x,
                &windows,
                &mut optimizer,
                &params.augmentation,
                derive_seed(batch_seed, 1),
            )?;
            nll += breakdown.nll;
            fm += breakdown.feature_match;
            total += breakdown.total;
        }
        let n = F::from_usize(params.batches_per_epoch).unwrap();
        stats.push(EpochStats {
            epoch,
            nll: nll / n,
            feature_match: fm / n,
            total: total / n,
        });
    }
    Ok(stats)
}

/// Held-out displacement error of the current model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValStats<F> {
    /// Mean Euclidean error between predicted and true displacement, metres.
    pub mae: F,
    /// Mean true displacement magnitude — the error of the trivial
    /// "no movement" predictor, metres.
    pub zero_baseline: F,
}

/// Scores `model` on supervised windows without mutating it.
///
/// Windows are grouped into runs of equal duration (consecutive windows
/// sharing a duration form one forward batch), so callers may mix time
/// scales freely.
///
/// # Errors
/// [`Error::InvalidInput`] on an empty window list or windows referencing
/// missing sequences.
pub fn validation<F: Real>(
    model: &Model<F>,
    sequences: &[ImuSequence<F>],
    windows: &[SampleWindow<F>],
) -> Result<ValStats<F>> {
    if windows.is_empty() {
        return Err(Error::invalid("validation requires at least one window"));
    }
    let patch_len = model.config().patch_len;
    let mut err_sum = F::zero();
    let mut base_sum = F::zero();
    let mut start = 0;
    while start < windows.len() {
        let mut end = start + 1;
        while end < windows.len() && windows[end].duration == windows[start].duration {
            end += 1;
        }
        let group = &windows[start..end];
        let (x, _) = assemble_batch(sequences, group, patch_len)?;
        let pass = model.forward(&x, group[0].duration, Mode::Eval)?;
        for (i, w) in group.iter().enumerate() {
            let ex = pass.prediction.dp_hat[[i, 0]] - w.displacement[0];
            let ey = pass.prediction.dp_hat[[i, 1]] - w.displacement[1];
            err_sum += (ex * ex + ey * ey).sqrt();
            let (dx, dy) = (w.displacement[0], w.displacement[1]);
            base_sum += (dx * dx + dy * dy).sqrt();
        }
        start = end;
    }
    let n = F::from_usize(windows.len()).unwrap();
    Ok(ValStats { mae: err_sum / n, zero_baseline: base_sum / n })
}
