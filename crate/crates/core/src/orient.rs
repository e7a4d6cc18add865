//! Motion-aware complementary orientation filter.
//!
//! The filter propagates a device-to-nav quaternion with the gyroscope at
//! sample rate, and corrects it from two windowed sources whose trust is
//! set adaptively by how much they look like what they claim to measure:
//!
//! * **Accelerometer windows** (one per `t_step` seconds, sized to a walking
//!   cycle): during quiet moments the window mean points along gravity, so a
//!   tilt-only correction rotates it onto nav `+z`. The blend weight on the
//!   gyro branch, [`accel_weight`], saturates toward 1 (ignore the
//!   correction) as the window's gravity-magnitude deviation and per-axis
//!   variance grow — i.e. while the wearer is actually moving.
//! * **Magnetometer windows** (one per `delta` metres of walked
//!   displacement, so disturbances are sampled spatially rather than
//!   temporally): the window mean, rotated into the nav frame, is compared
//!   against the running mean over previously accepted windows. A yaw-only
//!   correction aligns its horizontal direction with the stored reference
//!   field. [`mag_weight`] grows toward 1 as the field deviates from
//!   history, so the correction pairs the weight with trusting the
//!   magnetometer *more* under deviation; the `mag_weight_inverted` switch
//!   exposes the `1 − W_m` pairing for experiments, and defaults off.
//!
//! Corrections are constructed so they compose cleanly: the accel
//! correction replaces only the swing (tilt) factor of the quaternion's
//! swing-twist decomposition about nav `z`, and the mag correction
//! multiplies only the twist (yaw) factor. Tilt fixes therefore never move
//! yaw and yaw fixes never move tilt, exactly.
//!
//! Positions for the displacement trigger come from the caller
//! ([`FilterState::set_position`]): ground truth in tests, the chained
//! position estimate in the full pipeline. The filter never dead-reckons
//! position itself.

use crate::geom::{yaw_quat, Quaternion, Vector3};
use crate::{Error, Real, Result};

/// Tuning parameters; the defaults work for phone-grade IMUs at walking
/// dynamics.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams<F> {
    /// Gain on the window's mean gravity-magnitude deviation (accel weight).
    pub u: F,
    /// Gain on the window's summed per-axis variance (accel weight).
    pub v: F,
    /// Softness of the magnetometer deviation weighting.
    pub h: F,
    /// Gravity magnitude, m/s².
    pub gravity: F,
    /// Accelerometer window duration, seconds (about one walking cycle).
    pub t_step: F,
    /// Magnetometer window trigger displacement, metres.
    pub delta: F,
    /// Swap the magnetometer pairing to `1 − W_m` (experimental; see module
    /// docs). Off by default, keeping the weighting as written.
    pub mag_weight_inverted: bool,
    /// Apply accelerometer corrections (off = gyro-only on that branch).
    pub enable_accel: bool,
    /// Apply magnetometer corrections.
    pub enable_mag: bool,
}

impl<F: Real> Default for FilterParams<F> {
    fn default() -> Self {
        FilterParams {
            u: F::one(),
            v: F::of(1000.0),
            h: F::of(8.0),
            gravity: F::of(9.81),
            t_step: F::one(),
            delta: F::of(10.0),
            mag_weight_inverted: false,
            enable_accel: true,
            enable_mag: true,
        }
    }
}

impl<F: Real> FilterParams<F> {
    /// Checks that every tuning value is positive.
    pub fn validate(&self) -> Result<()> {
        let all_positive = self.u > F::zero()
            && self.v > F::zero()
            && self.h > F::zero()
            && self.gravity > F::zero()
            && self.t_step > F::zero()
            && self.delta > F::zero();
        if all_positive {
            Ok(())
        } else {
            Err(Error::invalid("filter parameters must all be positive"))
        }
    }
}

/// One raw 9-axis sample (device frame).
#[derive(Debug, Clone, Copy)]
pub struct ImuSample<F> {
    /// Specific force, m/s².
    pub accel: Vector3<F>,
    /// Body angular rate, rad/s.
    pub gyro: Vector3<F>,
    /// Magnetic field, µT, when the device records one.
    pub mag: Option<Vector3<F>>,
}

/// Running filter state for one stream.
///
/// Single-stream sequential: distinct streams may run on distinct threads,
/// but one state is never shared concurrently.
#[derive(Debug, Clone)]
pub struct FilterState<F> {
    q: Quaternion<F>,
    p: Vector3<F>,
    accel_window: Vec<Vector3<F>>,
    accel_capacity: usize,
    mag_window: Vec<Vector3<F>>,
    mag_anchor: Vector3<F>,
    /// Running mean of accepted window means plus how many were folded in.
    mag_history: Option<(Vector3<F>, usize)>,
    mag_ref: Option<Vector3<F>>,
    skipped_accel: usize,
    skipped_mag: usize,
}

impl<F: Real> FilterState<F> {
    /// Creates a state at an initial orientation.
    ///
    /// `sample_rate` sizes the accelerometer window to
    /// `⌈t_step · rate⌉` samples.
    ///
    /// # Errors
    /// [`Error::InvalidInput`] on a non-positive sample rate or invalid
    /// parameters.
    pub fn new(q0: Quaternion<F>, params: &FilterParams<F>, sample_rate: F) -> Result<Self> {
        params.validate()?;
        if !(sample_rate > F::zero()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let capacity = (params.t_step * sample_rate)
            .ceil()
            .to_usize()
            .ok_or_else(|| Error::invalid("accel window capacity overflow"))?
            .max(1);
        Ok(FilterState {
            q: q0.normalized()?,
            p: Vector3::zero(),
            accel_window: Vec::with_capacity(capacity),
            accel_capacity: capacity,
            mag_window: Vec::new(),
            mag_anchor: Vector3::zero(),
            mag_history: None,
            mag_ref: None,
            skipped_accel: 0,
            skipped_mag: 0,
        })
    }

    /// Current orientation estimate.
    pub fn q(&self) -> Quaternion<F> {
        self.q
    }

    /// Last injected position estimate.
    pub fn position(&self) -> Vector3<F> {
        self.p
    }

    /// Injects the current position estimate (ground truth or chained
    /// estimate); drives the magnetometer window displacement trigger.
    pub fn set_position(&mut self, p: Vector3<F>) {
        self.p = p;
    }

    /// How many (accel, mag) corrections were skipped because their window
    /// was degenerate or the blend was undefined.
    pub fn skipped_corrections(&self) -> (usize, usize) {
        (self.skipped_accel, self.skipped_mag)
    }
}

/// Per-step filter output.
#[derive(Debug, Clone, Copy)]
pub struct StepOutput<F> {
    /// Orientation after this step (post-correction when a window closed).
    pub q_new: Quaternion<F>,
    /// Gyro-branch blend weight of an accelerometer correction applied this
    /// step, when one was.
    pub w_a: Option<F>,
    /// Gyro-branch blend weight of a magnetometer correction applied this
    /// step, when one was.
    pub w_m: Option<F>,
    /// Nav-frame specific force (gravity retained along +z).
    pub aligned_accel: Vector3<F>,
    /// Nav-frame angular rate.
    pub aligned_gyro: Vector3<F>,
    /// Nav-frame magnetic field, when the sample had one.
    pub aligned_mag: Option<Vector3<F>>,
}

/// Logistic sigmoid.
fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Splits `q` into (swing, twist) about nav `z`: `q = swing ⊗ twist`, with
/// the twist a pure `z` rotation and the swing's axis horizontal.
fn swing_twist_z<F: Real>(q: Quaternion<F>) -> (Quaternion<F>, Quaternion<F>) {
    let n = (q.w * q.w + q.z * q.z).sqrt();
    if n < F::of(1e-12) {
        // Pure half-turn about a horizontal axis: yaw is undefined, treat
        // the whole rotation as swing.
        return (q, Quaternion::identity());
    }
    let twist = Quaternion::new(q.w / n, F::zero(), F::zero(), q.z / n);
    let swing = q.multiply(twist.conjugate());
    (swing, twist)
}

/// Adaptive gyro-branch weight for the accelerometer correction.
///
/// `W_a = 2σ(u/|D| · Σᵢ |‖aᵢ‖ − G| + v · Σⱼ Var(a_j)) − 1`, with the
/// per-axis population variance over the window. Zero for a perfectly
/// still window at exactly 1 g; approaches 1 with motion.
///
/// # Panics
/// Debug-asserts a non-empty window (documented precondition).
pub fn accel_weight<F: Real>(window: &[Vector3<F>], params: &FilterParams<F>) -> F {
    debug_assert!(!window.is_empty(), "accel_weight needs a non-empty window");
    let n = F::from_usize(window.len()).unwrap();
    let mut dev_sum = F::zero();
    let mut mean = Vector3::zero();
    for a in window {
        dev_sum += (a.norm() - params.gravity).abs();
        mean = mean + *a;
    }
    mean = mean / n;
    let mut var_sum = F::zero();
    for a in window {
        let d = *a - mean;
        var_sum += d.x * d.x + d.y * d.y + d.z * d.z;
    }
    var_sum = var_sum / n;
    let arg = params.u / n * dev_sum + params.v * var_sum;
    F::of(2.0) * sigmoid(arg) - F::one()
}

/// Adaptive gyro-branch weight for the magnetometer correction.
///
/// `W_m = 2σ(h / ‖history − mean(window)‖) − 1`, continuously extended to 1
/// at zero deviation. As written this *lowers* the gyro weight (trusts the
/// magnetometer more) when the field deviates from history; see the module
/// docs and `mag_weight_inverted`.
///
/// # Panics
/// Debug-asserts a non-empty window (documented precondition).
pub fn mag_weight<F: Real>(
    window: &[Vector3<F>],
    history_mean: Vector3<F>,
    params: &FilterParams<F>,
) -> F {
    debug_assert!(!window.is_empty(), "mag_weight needs a non-empty window");
    let n = F::from_usize(window.len()).unwrap();
    let mut mean = Vector3::zero();
    for m in window {
        mean = mean + *m;
    }
    mean = mean / n;
    let dev = (history_mean - mean).norm();
    if dev < F::of(1e-12) {
        return F::one();
    }
    F::of(2.0) * sigmoid(params.h / dev) - F::one()
}

/// Tilt-only accelerometer correction.
///
/// Replaces the swing factor of `q` so the window's mean specific force
/// (raw device frame) maps exactly onto nav `+z`; the yaw twist is carried
/// over bit-for-bit. The applied correction is the minimal tilt that makes
/// the current gravity estimate vertical.
///
/// # Errors
/// [`Error::Numeric`] when the window mean is degenerate
/// (`‖mean‖ ≤ 0.1·gravity`, e.g. free fall).
pub fn accel_orientation<F: Real>(
    window: &[Vector3<F>],
    q: Quaternion<F>,
    gravity: F,
) -> Result<Quaternion<F>> {
    let n = F::from_usize(window.len().max(1)).unwrap();
    let mut mean = Vector3::zero();
    for a in window {
        mean = mean + *a;
    }
    mean = mean / n;
    if mean.norm() <= F::of(0.1) * gravity {
        return Err(Error::numeric(
            "accel window mean degenerate (free fall); tilt correction undefined",
        ));
    }
    let m_hat = mean.normalized().expect("norm checked above");
    let (_, twist) = swing_twist_z(q);
    // Minimal rotation taking m̂ onto +ẑ; its axis m̂ × ẑ is horizontal, so
    // the replacement swing carries no yaw.
    let axis = m_hat.cross(Vector3::unit_z());
    let sin_t = axis.norm();
    let cos_t = m_hat.dot(Vector3::unit_z());
    let swing = if sin_t < F::of(1e-12) {
        if cos_t > F::zero() {
            Quaternion::identity()
        } else {
            // Gravity estimate points straight down: tip over about x.
            Quaternion::from_axis_angle(Vector3::unit_x(), -F::PI())
        }
    } else {
        Quaternion::from_axis_angle(axis, -sin_t.atan2(cos_t))
    };
    swing.multiply(twist).normalized()
}

/// Yaw-only magnetometer correction.
///
/// Multiplies a nav-frame `z` rotation onto `q` that aligns the horizontal
/// heading of the window's mean field (already nav frame) with the
/// horizontal heading of `ref_field`; the swing (roll/pitch) factor is
/// untouched by construction.
///
/// # Errors
/// [`Error::Numeric`] when either horizontal projection is below 1 µT and
/// the heading comparison is meaningless.
pub fn mag_orientation<F: Real>(
    window: &[Vector3<F>],
    q: Quaternion<F>,
    ref_field: Vector3<F>,
) -> Result<Quaternion<F>> {
    let n = F::from_usize(window.len().max(1)).unwrap();
    let mut mean = Vector3::zero();
    for m in window {
        mean = mean + *m;
    }
    mean = mean / n;
    let horiz = |v: Vector3<F>| (v.x * v.x + v.y * v.y).sqrt();
    if horiz(mean) <= F::one() || horiz(ref_field) <= F::one() {
        return Err(Error::numeric(
            "magnetic field nearly vertical; yaw correction undefined",
        ));
    }
    let alpha = ref_field.y.atan2(ref_field.x) - mean.y.atan2(mean.x);
    // Wrap to (-π, π] so the correction is minimal.
    let alpha = alpha.sin().atan2(alpha.cos());
    q.multiply(yaw_quat(alpha)).normalized()
}

/// Advances the filter by one sample.
///
/// Order per step: (i) gyro propagation; (ii) alignment of the sample with
/// the propagated (pre-correction) quaternion, which is also what the
/// windows accumulate; (iii) accelerometer correction when its window
/// fills; (iv) magnetometer correction when the injected position has moved
/// `delta` metres from the window anchor. Degenerate corrections (free
/// fall, vertical field, undefined blends) are skipped and counted, never
/// surfaced as errors.
pub fn filter_step<F: Real>(
    state: &mut FilterState<F>,
    sample: &ImuSample<F>,
    dt: F,
    params: &FilterParams<F>,
) -> StepOutput<F> {
    debug_assert!(dt > F::zero(), "filter_step needs dt > 0");
    // (i) propagate.
    state.q = state.q.integrate_gyro(sample.gyro, dt);
    let q_pre = state.q;

    // (ii) align with the pre-correction quaternion of this timestamp.
    let aligned_accel = q_pre.rotate_to_nav(sample.accel);
    let aligned_gyro = q_pre.rotate_to_nav(sample.gyro);
    let aligned_mag = sample.mag.map(|m| q_pre.rotate_to_nav(m));

    // (iii) accelerometer window: raw device-frame samples; the correction
    // rotates the mean itself.
    let mut w_a = None;
    if params.enable_accel {
        state.accel_window.push(sample.accel);
        if state.accel_window.len() >= state.accel_capacity {
            let wa = accel_weight(&state.accel_window, params);
            let corrected = accel_orientation(&state.accel_window, state.q, params.gravity)
                .and_then(|qa| state.q.blend(qa, wa));
            match corrected {
                Ok(qn) => {
                    state.q = qn;
                    w_a = Some(wa);
                }
                Err(_) => state.skipped_accel += 1,
            }
            state.accel_window.clear();
        }
    }

    // (iv) magnetometer window: nav-frame samples, displacement-triggered.
    let mut w_m = None;
    if params.enable_mag {
        if let Some(m) = aligned_mag {
            state.mag_window.push(m);
        }
        let moved = (state.p - state.mag_anchor).norm();
        if moved >= params.delta && !state.mag_window.is_empty() {
            let n = F::from_usize(state.mag_window.len()).unwrap();
            let mut mean = Vector3::zero();
            for m in &state.mag_window {
                mean = mean + *m;
            }
            mean = mean / n;
            match (state.mag_history, state.mag_ref) {
                (None, _) | (_, None) => {
                    // First accepted window seeds both the history mean and
                    // the reference field; no correction yet.
                    state.mag_history = Some((mean, 1));
                    state.mag_ref = Some(mean);
                }
                (Some((hist, count)), Some(reference)) => {
                    let wm_raw = mag_weight(&state.mag_window, hist, params);
                    let wm = if params.mag_weight_inverted {
                        F::one() - wm_raw
                    } else {
                        wm_raw
                    };
                    let corrected = mag_orientation(&state.mag_window, state.q, reference)
                        .and_then(|qm| state.q.blend(qm, wm));
                    match corrected {
                        Ok(qn) => {
                            state.q = qn;
                            w_m = Some(wm);
                            let cf = F::from_usize(count).unwrap();
                            let folded = (hist * cf + mean) / (cf + F::one());
                            state.mag_history = Some((folded, count + 1));
                        }
                        Err(_) => state.skipped_mag += 1,
                    }
                }
            }
            state.mag_window.clear();
            state.mag_anchor = state.p;
        }
    }

    StepOutput {
        q_new: state.q,
        w_a,
        w_m,
        aligned_accel,
        aligned_gyro,
        aligned_mag,
    }
}
