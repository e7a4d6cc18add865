//! Sequence containers, fixed-length patching, window sampling, and
//! training-time augmentations.
//!
//! The network consumes **aligned** 6-channel sequences: accelerometer and
//! gyroscope triples already rotated into the nav frame (gravity along
//! `-z`), at a uniform sample rate. [`ImuSequence`] is the shared container
//! for both raw device-frame streams (as produced by the synthetic
//! generator or loaded from disk) and aligned streams (as produced by the
//! orientation filter); which frame the channels live in is part of the
//! surrounding contract, not the type.
//!
//! [`patch`] reshapes one 6×T window into fixed-length patches so that
//! windows of *any* duration become a variable number of equally shaped
//! tokens; [`sample_windows`] draws training windows whose durations follow
//! a log-uniform law, making the scale distribution flat in log-space; and
//! the `augment_*` family implements the label-consistent corruptions used
//! for self-supervised feature matching during training.

use ndarray::{Array2, Array4, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geom::Vector3;
use crate::synthimu::PoseSample;
use crate::{Error, Real, Result};

/// Relative tolerance on timestamp uniformity (seconds).
const DT_TOLERANCE: f64 = 1e-6;

/// A uniformly sampled IMU stream with optional magnetometer channels and
/// optional ground-truth poses.
///
/// Accel/gyro channels may be raw (device frame) or aligned (nav frame)
/// depending on where the sequence came from; both use the same layout.
#[derive(Debug, Clone)]
pub struct ImuSequence<F> {
    /// Samples per second.
    pub sample_rate: F,
    /// Sample times, seconds, uniformly spaced.
    pub timestamps: Vec<F>,
    /// Accelerometer triples (m/s²), one per timestamp.
    pub accel: Vec<Vector3<F>>,
    /// Gyroscope triples (rad/s), one per timestamp.
    pub gyro: Vec<Vector3<F>>,
    /// Magnetometer triples (µT), when the device records them.
    pub mag: Option<Vec<Vector3<F>>>,
    /// Ground-truth poses, when known (synthetic data, survey rigs).
    pub poses: Option<Vec<PoseSample<F>>>,
}

impl<F: Real> ImuSequence<F> {
    /// Builds and validates a sequence.
    ///
    /// # Errors
    /// [`Error::InvalidInput`] when channel lengths disagree, the stream is
    /// empty, timestamps are not uniform within `1e-6` s of `1/sample_rate`,
    /// or any value is non-finite.
    pub fn new(
        sample_rate: F,
        timestamps: Vec<F>,
        accel: Vec<Vector3<F>>,
        gyro: Vec<Vector3<F>>,
        mag: Option<Vec<Vector3<F>>>,
        poses: Option<Vec<PoseSample<F>>>,
    ) -> Result<Self> {
        let seq = ImuSequence { sample_rate, timestamps, accel, gyro, mag, poses };
        seq.validate()?;
        Ok(seq)
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    /// True when the sequence holds no samples.
    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Nominal sample spacing, seconds.
    pub fn dt(&self) -> F {
        F::one() / self.sample_rate
    }

    /// Re-checks every container invariant; see [`ImuSequence::new`].
    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        if n == 0 {
            return Err(Error::invalid("IMU sequence must hold at least one sample"));
        }
        if self.accel.len() != n || self.gyro.len() != n {
            return Err(Error::invalid(format!(
                "channel length mismatch: {} timestamps, {} accel, {} gyro",
                n,
                self.accel.len(),
                self.gyro.len()
            )));
        }
        if let Some(m) = &self.mag {
            if m.len() != n {
                return Err(Error::invalid(format!(
                    "channel length mismatch: {} timestamps, {} mag",
                    n,
                    m.len()
                )));
            }
        }
        if let Some(p) = &self.poses {
            if p.len() != n {
                return Err(Error::invalid(format!(
                    "pose length mismatch: {} timestamps, {} poses",
                    n,
                    p.len()
                )));
            }
        }
        if !(self.sample_rate > F::zero()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let dt = self.dt().to_f64_lossy();
        for i in 1..n {
            let step = (self.timestamps[i] - self.timestamps[i - 1]).to_f64_lossy();
            if (step - dt).abs() > DT_TOLERANCE {
                return Err(Error::invalid(format!(
                    "non-uniform timestamps: step {step} at index {i}, expected {dt}"
                )));
            }
        }
        let finite = |v: &Vector3<F>| v.x.is_finite() && v.y.is_finite() && v.z.is_finite();
        if !self.accel.iter().all(finite) || !self.gyro.iter().all(finite) {
            return Err(Error::invalid("non-finite accel/gyro sample"));
        }
        if let Some(m) = &self.mag {
            if !m.iter().all(finite) {
                return Err(Error::invalid("non-finite mag sample"));
            }
        }
        Ok(())
    }

    /// The six aligned channels of `[start, end)` as a `6 × T` array in
    /// channel order `ax, ay, az, gx, gy, gz`.
    ///
    /// # Errors
    /// [`Error::InvalidInput`] on an empty or out-of-bounds range.
    pub fn channels(&self, start: usize, end: usize) -> Result<Array2<F>> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "window [{start}, {end}) out of bounds for {} samples",
                self.len()
            )));
        }
        let t = end - start;
        let mut out = Array2::zeros((6, t));
        for (j, i) in (start..end).enumerate() {
            let a = self.accel[i];
            let g = self.gyro[i];
            out[[0, j]] = a.x;
            out[[1, j]] = a.y;
            out[[2, j]] = a.z;
            out[[3, j]] = g.x;
            out[[4, j]] = g.y;
            out[[5, j]] = g.z;
        }
        Ok(out)
    }

    /// Rotates every accel/gyro/mag triple into the nav frame using the
    /// embedded ground-truth poses — the idealized version of what the
    /// orientation filter does online, used to build training targets.
    ///
    /// # Errors
    /// [`Error::InvalidInput`] when the sequence carries no poses.
    pub fn align_with_poses(&self) -> Result<ImuSequence<F>> {
        let poses = self
            .poses
            .as_ref()
            .ok_or_else(|| Error::invalid("alignment by truth requires embedded poses"))?;
        let accel = self
            .accel
            .iter()
            .zip(poses)
            .map(|(a, p)| p.q.rotate_to_nav(*a))
            .collect();
        let gyro = self
            .gyro
            .iter()
            .zip(poses)
            .map(|(g, p)| p.q.rotate_to_nav(*g))
            .collect();
        let mag = self.mag.as_ref().map(|ms| {
            ms.iter()
                .zip(poses)
                .map(|(m, p)| p.q.rotate_to_nav(*m))
                .collect()
        });
        ImuSequence::new(
            self.sample_rate,
            self.timestamps.clone(),
            accel,
            gyro,
            mag,
            Some(poses.clone()),
        )
    }
}

/// A batch of patched windows, shaped `(batch, patches, 6, patch_len)`.
///
/// All windows in one tensor share a duration, so they patch to the same
/// count; the trailing patch of each window carries the zero padding that
/// rounds the window up to a whole number of patches.
#[derive(Debug, Clone)]
pub struct PatchTensor<F> {
    /// Stacked patches, `(B, P, 6, L)`.
    pub data: Array4<F>,
    /// Number of valid (un-padded) samples in each window; the rest of the
    /// final patch is zero.
    pub valid_len: usize,
    /// Window duration in seconds (shared across the batch).
    pub duration: F,
}

/// Splits one `6 × T` window into `⌈T / L⌉` patches of length `L`,
/// zero-padding the tail.
///
/// Returns an `(P, 6, L)` array. Patching is pure reshaping: sample `t` of
/// the window lands at patch `t / L`, offset `t % L`.
///
/// # Errors
/// [`Error::InvalidInput`] when the window is empty or `patch_len` is zero.
pub fn patch<F: Real>(window: &Array2<F>, patch_len: usize) -> Result<ndarray::Array3<F>> {
    if window.nrows() != 6 {
        return Err(Error::invalid(format!(
            "expected 6 channels, got {}",
            window.nrows()
        )));
    }
    let t = window.ncols();
    if t == 0 || patch_len == 0 {
        return Err(Error::invalid("patching needs a non-empty window and patch length"));
    }
    let p = t.div_ceil(patch_len);
    let mut out = ndarray::Array3::zeros((p, 6, patch_len));
    for i in 0..t {
        let (pi, off) = (i / patch_len, i % patch_len);
        for c in 0..6 {
            out[[pi, c, off]] = window[[c, i]];
        }
    }
    Ok(out)
}

/// Stacks equally long `6 × T` windows into a [`PatchTensor`].
///
/// # Errors
/// [`Error::InvalidInput`] when the batch is empty or window lengths differ
/// (scale-homogeneous batching is a hard precondition).
pub fn patch_batch<F: Real>(
    windows: &[Array2<F>],
    patch_len: usize,
    sample_rate: F,
) -> Result<PatchTensor<F>> {
    let first = windows
        .first()
        .ok_or_else(|| Error::invalid("cannot patch an empty batch"))?;
    let t = first.ncols();
    if windows.iter().any(|w| w.ncols() != t) {
        return Err(Error::invalid(
            "all windows in a batch must share one duration; mix of lengths found",
        ));
    }
    let p = t.div_ceil(patch_len);
    let mut data = Array4::zeros((windows.len(), p, 6, patch_len));
    for (b, w) in windows.iter().enumerate() {
        let patched = patch(w, patch_len)?;
        data.index_axis_mut(Axis(0), b).assign(&patched);
    }
    Ok(PatchTensor {
        data,
        valid_len: t,
        duration: F::from_usize(t).unwrap() / sample_rate,
    })
}

/// Inverse of [`patch`]: concatenates patches and trims the zero padding,
/// recovering the original `6 × T` window exactly.
///
/// # Errors
/// [`Error::InvalidInput`] when `t` exceeds the tensor's capacity.
pub fn unpatch<F: Real>(patched: &ndarray::Array3<F>, t: usize) -> Result<Array2<F>> {
    let (p, c, l) = patched.dim();
    if c != 6 {
        return Err(Error::invalid(format!("expected 6 channels, got {c}")));
    }
    if t == 0 || t > p * l {
        return Err(Error::invalid(format!(
            "valid length {t} outside patch capacity {}",
            p * l
        )));
    }
    let mut out = Array2::zeros((6, t));
    for i in 0..t {
        let (pi, off) = (i / l, i % l);
        for ch in 0..6 {
            out[[ch, i]] = patched[[pi, ch, off]];
        }
    }
    Ok(out)
}

/// One training window between two demand points, with its supervision.
#[derive(Debug, Clone, Copy)]
pub struct SampleWindow<F> {
    /// Index of the source sequence within the dataset slice.
    pub sequence: usize,
    /// First sample index of the window (inclusive).
    pub start: usize,
    /// One past the last channel sample; the displacement label spans
    /// `[start, end]` in pose indices, i.e. `end - start` sample periods.
    pub end: usize,
    /// Window duration `(end - start) · dt`, seconds.
    pub duration: F,
    /// Horizontal ground-truth displacement over the window, metres.
    pub displacement: [F; 2],
    /// Mean horizontal velocity `displacement / duration`, m/s.
    pub speed: [F; 2],
}

/// Law for drawing window durations during training.
///
/// The log-uniform default makes the *scale* distribution flat in
/// log-space, so short and long demand intervals are equally represented
/// per octave.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub enum WindowDist<F> {
    /// Every window lasts exactly this many seconds.
    Fixed(F),
    /// `exp(U(ln min, ln max))` seconds.
    LogUniform {
        /// Shortest duration, seconds.
        min: F,
        /// Longest duration, seconds.
        max: F,
    },
}

impl<F: Real> WindowDist<F> {
    /// Checks positivity and ordering.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            WindowDist::Fixed(d) => d > F::zero(),
            WindowDist::LogUniform { min, max } => F::zero() < min && min <= max,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("window durations must be positive and ordered"))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> F {
        match *self {
            WindowDist::Fixed(d) => d,
            WindowDist::LogUniform { min, max } => {
                let (lo, hi) = (min.to_f64_lossy().ln(), max.to_f64_lossy().ln());
                F::of(rng.random_range(lo..=hi).exp())
            }
        }
    }
}

/// Draws `count` supervised windows from pose-carrying sequences, with
/// durations following `dist` (snapped to the sample grid) and uniformly
/// random placement.
///
/// Deterministic given `seed`.
///
/// # Errors
/// [`Error::InvalidInput`] when a sequence lacks poses or is shorter than
/// the requested duration.
pub fn sample_windows<F: Real>(
    sequences: &[ImuSequence<F>],
    dist: &WindowDist<F>,
    count: usize,
    seed: u64,
) -> Result<Vec<SampleWindow<F>>> {
    dist.validate()?;
    if sequences.is_empty() {
        return Err(Error::invalid("no sequences to sample from"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let si = rng.random_range(0..sequences.len());
        let duration = dist.draw(&mut rng);
        out.push(window_at_random_start(sequences, si, duration, &mut rng)?);
    }
    Ok(out)
}

/// Draws one batch of windows sharing a single duration (drawn once from
/// `dist`), as the scale-homogeneous batching the network requires.
///
/// # Errors
/// As [`sample_windows`].
pub fn sample_scale_batch<F: Real>(
    sequences: &[ImuSequence<F>],
    dist: &WindowDist<F>,
    batch: usize,
    seed: u64,
) -> Result<Vec<SampleWindow<F>>> {
    dist.validate()?;
    if sequences.is_empty() {
        return Err(Error::invalid("no sequences to sample from"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = dist.draw(&mut rng);
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let si = rng.random_range(0..sequences.len());
        out.push(window_at_random_start(sequences, si, duration, &mut rng)?);
    }
    Ok(out)
}

fn window_at_random_start<F: Real>(
    sequences: &[ImuSequence<F>],
    si: usize,
    duration: F,
    rng: &mut ChaCha8Rng,
) -> Result<SampleWindow<F>> {
    let seq = &sequences[si];
    let poses = seq
        .poses
        .as_ref()
        .ok_or_else(|| Error::invalid("window sampling requires ground-truth poses"))?;
    let rate = seq.sample_rate.to_f64_lossy();
    let span = (duration.to_f64_lossy() * rate).round().max(1.0) as usize;
    if span + 1 > seq.len() {
        return Err(Error::invalid(format!(
            "window of {span} sample periods exceeds sequence of {} samples",
            seq.len()
        )));
    }
    let start = rng.random_range(0..seq.len() - span);
    let end = start + span;
    let duration = F::from_usize(span).unwrap() / seq.sample_rate;
    let dp = poses[end].position - poses[start].position;
    let displacement = [dp.x, dp.y];
    let speed = [dp.x / duration, dp.y / duration];
    Ok(SampleWindow { sequence: si, start, end, duration, displacement, speed })
}

/// Gathers a scale-homogeneous window batch into one patched input tensor
/// plus its `(B, 2)` mean-velocity labels.
///
/// # Errors
/// [`Error::InvalidInput`] on an empty batch or mixed window lengths.
pub fn assemble_batch<F: Real>(
    sequences: &[ImuSequence<F>],
    windows: &[SampleWindow<F>],
    patch_len: usize,
) -> Result<(PatchTensor<F>, Array2<F>)> {
    let mut channels = Vec::with_capacity(windows.len());
    let mut labels = Array2::zeros((windows.len(), 2));
    for (i, w) in windows.iter().enumerate() {
        let seq = sequences
            .get(w.sequence)
            .ok_or_else(|| Error::invalid("window references a missing sequence"))?;
        channels.push(seq.channels(w.start, w.end)?);
        labels[[i, 0]] = w.speed[0];
        labels[[i, 1]] = w.speed[1];
    }
    let rate = sequences[windows[0].sequence].sample_rate;
    let tensor = patch_batch(&channels, patch_len, rate)?;
    Ok((tensor, labels))
}

/// Derives an independent per-task seed from a base seed and a stream
/// counter (splittable counter scheme; avalanche via the splitmix64
/// finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix64(base ^ splitmix64(stream))
}

/// Strengths of the five label-consistent training corruptions.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec<F> {
    /// Probability that each patch is fully zeroed (missing-data symbol).
    pub mask_prob: F,
    /// Max angle of the one small 3D rotation applied to all accel and gyro
    /// triples of a window, radians.
    pub quat_bias_max_angle: F,
    /// Gaussian noise σ on accelerometer channels, m/s².
    pub accel_noise_sigma: F,
    /// Gaussian noise σ on gyroscope channels, rad/s.
    pub gyro_noise_sigma: F,
    /// Heading rotation θ ~ U(−range, range), radians; rotates the
    /// horizontal channel pairs and the label together.
    pub heading_range: F,
    /// Smooth protrusions added per channel.
    pub protrusion_count: usize,
    /// Max |amplitude| of a protrusion (signal units).
    pub protrusion_amplitude: F,
    /// Protrusion Gaussian width, in samples.
    pub protrusion_width: F,
}

impl<F: Real> Default for AugmentationSpec<F> {
    fn default() -> Self {
        AugmentationSpec {
            mask_prob: F::of(0.1),
            quat_bias_max_angle: F::of(0.05),
            accel_noise_sigma: F::of(0.05),
            gyro_noise_sigma: F::of(0.005),
            heading_range: F::PI(),
            protrusion_count: 2,
            protrusion_amplitude: F::of(0.5),
            protrusion_width: F::of(5.0),
        }
    }
}

impl<F: Real> AugmentationSpec<F> {
    /// Checks ranges: probability in [0, 1], everything else non-negative,
    /// positive width whenever protrusions are enabled.
    pub fn validate(&self) -> Result<()> {
        let ok = (F::zero()..=F::one()).contains(&self.mask_prob)
            && self.quat_bias_max_angle >= F::zero()
            && self.accel_noise_sigma >= F::zero()
            && self.gyro_noise_sigma >= F::zero()
            && self.heading_range >= F::zero()
            && self.protrusion_amplitude >= F::zero()
            && (self.protrusion_count == 0 || self.protrusion_width > F::zero());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("augmentation strengths out of range"))
        }
    }
}

/// Zeroes whole patches with probability `mask_prob` each, independently.
/// The zero fill matches the padding symbol, so the network sees one
/// representation of "missing data". Labels are untouched.
pub fn augment_mask<F: Real>(
    x: &PatchTensor<F>,
    spec: &AugmentationSpec<F>,
    seed: u64,
) -> PatchTensor<F> {
    let mut out = x.clone();
    let p = spec.mask_prob.to_f64_lossy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b_n, p_n, _, _) = out.data.dim();
    for b in 0..b_n {
        for pi in 0..p_n {
            if rng.random::<f64>() < p {
                out.data
                    .slice_mut(ndarray::s![b, pi, .., ..])
                    .fill(F::zero());
            }
        }
    }
    out
}

/// Applies one small random 3D rotation (angle ≤ max, uniform axis) to
/// every accelerometer and gyroscope triple of each window. A miscarried
/// device orientation perturbs both triples identically, so the label
/// (a nav-frame displacement) is unchanged.
pub fn augment_quat_bias<F: Real>(
    x: &PatchTensor<F>,
    spec: &AugmentationSpec<F>,
    seed: u64,
) -> PatchTensor<F> {
    if spec.quat_bias_max_angle == F::zero() {
        return x.clone();
    }
    let mut out = x.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b_n, p_n, _, l_n) = out.data.dim();
    for b in 0..b_n {
        let axis = loop {
            let v = Vector3::new(
                F::of(StandardNormal.sample(&mut rng)),
                F::of(StandardNormal.sample(&mut rng)),
                F::of(StandardNormal.sample(&mut rng)),
            );
            if let Some(u) = v.normalized() {
                break u;
            }
        };
        let angle = spec.quat_bias_max_angle * F::of(rng.random::<f64>());
        let q = crate::geom::Quaternion::from_axis_angle(axis, angle);
        for pi in 0..p_n {
            for li in 0..l_n {
                for group in [0usize, 3] {
                    let v = Vector3::new(
                        out.data[[b, pi, group, li]],
                        out.data[[b, pi, group + 1, li]],
                        out.data[[b, pi, group + 2, li]],
                    );
                    let r = q.rotate_to_nav(v);
                    out.data[[b, pi, group, li]] = r.x;
                    out.data[[b, pi, group + 1, li]] = r.y;
                    out.data[[b, pi, group + 2, li]] = r.z;
                }
            }
        }
    }
    out
}

/// Adds zero-mean Gaussian noise to the valid region, with separate σ for
/// the accelerometer and gyroscope channel groups. Padding stays zero.
pub fn augment_gaussian<F: Real>(
    x: &PatchTensor<F>,
    spec: &AugmentationSpec<F>,
    seed: u64,
) -> PatchTensor<F> {
    let mut out = x.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b_n, _, _, l_n) = out.data.dim();
    for b in 0..b_n {
        for c in 0..6 {
            let sigma = if c < 3 { spec.accel_noise_sigma } else { spec.gyro_noise_sigma };
            for t in 0..out.valid_len {
                let (pi, li) = (t / l_n, t % l_n);
                let n: f64 = StandardNormal.sample(&mut rng);
                out.data[[b, pi, c, li]] += sigma * F::of(n);
            }
        }
    }
    out
}

/// Rotates the horizontal components of one `6 × T` window by `theta`
/// (counter-clockwise): channel pairs `(ax, ay)` and `(gx, gy)`. Vertical
/// channels pass through untouched.
///
/// # Errors
/// [`Error::InvalidInput`] on a non-6-row window.
pub fn rotate_heading_window<F: Real>(window: &Array2<F>, theta: F) -> Result<Array2<F>> {
    if window.nrows() != 6 {
        return Err(Error::invalid(format!(
            "expected 6 channels, got {}",
            window.nrows()
        )));
    }
    let (c, s) = (theta.cos(), theta.sin());
    let mut out = window.clone();
    for t in 0..window.ncols() {
        for pair in [(0usize, 1usize), (3, 4)] {
            let (x, y) = (window[[pair.0, t]], window[[pair.1, t]]);
            out[[pair.0, t]] = x * c - y * s;
            out[[pair.1, t]] = x * s + y * c;
        }
    }
    Ok(out)
}

/// Rotates a patched window batch and its labels by one fixed heading
/// angle `theta` (counter-clockwise): the whole tensor and every window's
/// label turn together, so supervision stays consistent. Vertical channels
/// and padding are untouched.
pub fn rotate_heading<F: Real>(
    x: &PatchTensor<F>,
    labels: &[SampleWindow<F>],
    theta: F,
) -> (PatchTensor<F>, Vec<SampleWindow<F>>) {
    let (c, s) = (theta.cos(), theta.sin());
    let mut out = x.clone();
    let (b_n, p_n, _, l_n) = out.data.dim();
    for b in 0..b_n {
        for pi in 0..p_n {
            for li in 0..l_n {
                for pair in [(0usize, 1usize), (3, 4)] {
                    let (vx, vy) = (x.data[[b, pi, pair.0, li]], x.data[[b, pi, pair.1, li]]);
                    out.data[[b, pi, pair.0, li]] = vx * c - vy * s;
                    out.data[[b, pi, pair.1, li]] = vx * s + vy * c;
                }
            }
        }
    }
    let rot2 = |v: [F; 2]| [v[0] * c - v[1] * s, v[0] * s + v[1] * c];
    let new_labels = labels
        .iter()
        .map(|l| {
            let mut nl = *l;
            nl.displacement = rot2(l.displacement);
            nl.speed = rot2(l.speed);
            nl
        })
        .collect();
    (out, new_labels)
}

/// Draws θ ~ U(−range, range) once and applies [`rotate_heading`] to the
/// entire tensor and all its labels.
pub fn augment_heading<F: Real>(
    x: &PatchTensor<F>,
    labels: &[SampleWindow<F>],
    spec: &AugmentationSpec<F>,
    seed: u64,
) -> (PatchTensor<F>, Vec<SampleWindow<F>>) {
    if spec.heading_range == F::zero() {
        return (x.clone(), labels.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = spec.heading_range.to_f64_lossy();
    let theta = F::of(rng.random_range(-r..=r));
    rotate_heading(x, labels, theta)
}

/// The additive profile of one smooth protrusion over a channel of
/// `length` samples: a Gaussian bump `amplitude · exp(−(i−center)²/2w²)`,
/// truncated to zero outside ±4 widths.
pub fn bump_profile<F: Real>(amplitude: F, width: F, length: usize, center: F) -> Vec<F> {
    let mut out = vec![F::zero(); length];
    let four_w = F::of(4.0) * width;
    for (i, v) in out.iter_mut().enumerate() {
        let d = F::from_usize(i).unwrap() - center;
        if d.abs() <= four_w {
            let z = d / width;
            *v = amplitude * (-z * z / F::of(2.0)).exp();
        }
    }
    out
}

/// Adds `protrusion_count` smooth Gaussian bumps per channel at uniform
/// random centers within the valid region, amplitudes U(−A, A). Models
/// transient unmodeled contact forces; labels are untouched.
pub fn augment_protrusions<F: Real>(
    x: &PatchTensor<F>,
    spec: &AugmentationSpec<F>,
    seed: u64,
) -> PatchTensor<F> {
    if spec.protrusion_count == 0 {
        return x.clone();
    }
    let mut out = x.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b_n, _, _, l_n) = out.data.dim();
    let amp = spec.protrusion_amplitude.to_f64_lossy();
    for b in 0..b_n {
        for c in 0..6 {
            for _ in 0..spec.protrusion_count {
                let center = F::of(rng.random_range(0.0..out.valid_len as f64));
                let amplitude = F::of(rng.random_range(-amp..=amp));
                let profile = bump_profile(amplitude, spec.protrusion_width, out.valid_len, center);
                for (t, dv) in profile.into_iter().enumerate() {
                    let (pi, li) = (t / l_n, t % l_n);
                    out.data[[b, pi, c, li]] += dv;
                }
            }
        }
    }
    out
}

/// Composes all five corruptions with independent sub-seeds, in an order
/// that keeps masked patches and padding exactly zero: rotation-like ops
/// first (quaternion bias, heading), then additive ones (noise,
/// protrusions), masking last.
pub fn apply_all<F: Real>(
    x: &PatchTensor<F>,
    labels: &[SampleWindow<F>],
    spec: &AugmentationSpec<F>,
    seed: u64,
) -> (PatchTensor<F>, Vec<SampleWindow<F>>) {
    let x1 = augment_quat_bias(x, spec, derive_seed(seed, 0));
    let (x2, labels) = augment_heading(&x1, labels, spec, derive_seed(seed, 1));
    let x3 = augment_gaussian(&x2, spec, derive_seed(seed, 2));
    let x4 = augment_protrusions(&x3, spec, derive_seed(seed, 3));
    (augment_mask(&x4, spec, derive_seed(seed, 4)), labels)
}
