//! Synthetic walking trajectories and the inverse-strapdown IMU oracle.
//!
//! Training and validation need streams where the ground truth is exact.
//! This module builds them in two stages:
//!
//! 1. [`generate_trajectory`] lays out a smooth pedestrian pose path — a
//!    centerline (straight, circular, or a spline through waypoints)
//!    traversed with a periodic gait: speed modulation at step frequency,
//!    vertical bounce, lateral sway, and small yaw/pitch rocking. All
//!    components are analytic and at least C¹ in time, so differentiating
//!    them numerically is well behaved.
//! 2. [`inverse_imu`] runs strapdown mechanization backwards: finite
//!    differences recover the nav-frame acceleration and body rates the
//!    device must have sensed, and the pose quaternions rotate them into
//!    the device frame together with gravity and the reference magnetic
//!    field. Integrating the output forward again (gyro strapdown plus
//!    leapfrog double integration) reproduces the input poses to well under
//!    a millimetre over tens of seconds, which is the module's defining
//!    round-trip property.
//!
//! [`add_noise`] then corrupts a clean stream deterministically: per-axis
//! Gaussian noise, constant biases, and localized magnetic disturbance
//! patches that switch on only inside a given radius of a ground-truth
//! position (requiring embedded poses).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::ImuSequence;
use crate::geom::{pitch_quat, yaw_quat, Quaternion, Vector3};
use crate::{Error, Real, Result};

/// Standard gravity used throughout the pipeline (m/s²).
pub fn default_gravity<F: Real>() -> F {
    F::of(9.81)
}

/// Reference nav-frame magnetic field (µT): horizontal north component and
/// a realistic downward inclination.
pub fn default_mag_field<F: Real>() -> Vector3<F> {
    Vector3::new(F::zero(), F::of(22.0), F::of(-40.0))
}

/// One ground-truth pose: time, nav-frame position, and the device-to-nav
/// quaternion (see [`crate::geom`] for the sandwich convention).
#[derive(Debug, Clone, Copy)]
pub struct PoseSample<F> {
    /// Sample time, seconds.
    pub t: F,
    /// Nav-frame position, metres.
    pub position: Vector3<F>,
    /// Device-to-nav rotation.
    pub q: Quaternion<F>,
}

/// Periodic gait model layered on top of the centerline.
///
/// `speed` is the mean walking speed; the oscillatory fields default to a
/// plausible adult walk and may be zeroed individually. [`GaitModel::none`]
/// yields a perfectly smooth constant-velocity glide, useful for oracle
/// tests where the only acceleration should be gravity.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitModel<F> {
    /// Mean forward speed, m/s.
    pub speed: F,
    /// Step frequency, Hz (two steps per stride).
    pub step_freq: F,
    /// Vertical center-of-mass bounce amplitude, metres (at step frequency).
    pub bounce_amp: F,
    /// Yaw rocking amplitude, radians (at half the step frequency).
    pub sway_amp: F,
    /// Lateral path oscillation amplitude, metres (at half the step frequency).
    pub lateral_amp: F,
    /// Pitch rocking amplitude, radians (at step frequency).
    pub pitch_amp: F,
    /// Relative speed modulation depth at step frequency (dimensionless).
    /// The second harmonic is half this depth with a fixed phase offset,
    /// which makes forward and time-reversed gaits distinguishable.
    pub speed_mod: F,
}

impl<F: Real> Default for GaitModel<F> {
    fn default() -> Self {
        GaitModel {
            speed: F::of(1.4),
            step_freq: F::of(1.9),
            bounce_amp: F::of(0.02),
            sway_amp: F::of(0.06),
            lateral_amp: F::of(0.02),
            pitch_amp: F::of(0.04),
            speed_mod: F::of(0.25),
        }
    }
}

impl<F: Real> GaitModel<F> {
    /// A gait with every oscillation disabled: constant-velocity motion.
    pub fn none(speed: F) -> Self {
        GaitModel {
            speed,
            step_freq: F::zero(),
            bounce_amp: F::zero(),
            sway_amp: F::zero(),
            lateral_amp: F::zero(),
            pitch_amp: F::zero(),
            speed_mod: F::zero(),
        }
    }
}

/// Horizontal centerline shape.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub enum PathKind<F> {
    /// A ray from the origin at a fixed heading (radians, CCW from +x).
    Straight { heading: F },
    /// A circle of the given radius centred so the walk starts at the
    /// origin heading along +x; `ccw` picks the turn direction.
    Circle { radius: F, ccw: bool },
    /// A Catmull-Rom spline through 2D waypoints (at least two, with
    /// distinct consecutive points); the walk starts at the first waypoint
    /// and extends straight past the last if the duration outruns the path.
    Waypoints { points: Vec<[F; 2]> },
}

/// Full description of one synthetic walk.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec<F> {
    /// Walk duration, seconds.
    pub duration: F,
    /// Samples per second.
    pub sample_rate: F,
    /// Horizontal centerline.
    pub path: PathKind<F>,
    /// Gait oscillation model.
    pub gait: GaitModel<F>,
    /// Fixed device-to-body mounting rotation (how the device is carried).
    pub carry: Quaternion<F>,
}

impl<F: Real> TrajectorySpec<F> {
    /// A walk along +x at the default 200 Hz with an identity carry pose.
    pub fn straight(duration: F, gait: GaitModel<F>) -> Self {
        TrajectorySpec {
            duration,
            sample_rate: F::of(200.0),
            path: PathKind::Straight { heading: F::zero() },
            gait,
            carry: Quaternion::identity(),
        }
    }

    /// Checks the spec for generability.
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > F::zero()) {
            return Err(Error::invalid("trajectory duration must be positive"));
        }
        if !(self.sample_rate > F::zero()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.gait.speed < F::zero() {
            return Err(Error::invalid("gait speed must be non-negative"));
        }
        match &self.path {
            PathKind::Straight { .. } => {}
            PathKind::Circle { radius, .. } => {
                if !(*radius > F::zero()) {
                    return Err(Error::invalid("circle radius must be positive"));
                }
            }
            PathKind::Waypoints { points } => {
                if points.len() < 2 {
                    return Err(Error::invalid("waypoint path needs at least two points"));
                }
                for w in points.windows(2) {
                    let dx = w[1][0] - w[0][0];
                    let dy = w[1][1] - w[0][1];
                    if (dx * dx + dy * dy).sqrt() < F::of(1e-9) {
                        return Err(Error::invalid(
                            "consecutive waypoints must be distinct",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Internal arclength-parameterized (or knot-parameterized) centerline.
enum Centerline<F> {
    Line { dir: [F; 2] },
    Arc { center: [F; 2], radius: F, sign: F },
    Spline(CatmullRom<F>),
}

impl<F: Real> Centerline<F> {
    fn from_path(path: &PathKind<F>) -> Self {
        match path {
            PathKind::Straight { heading } => {
                Centerline::Line { dir: [heading.cos(), heading.sin()] }
            }
            PathKind::Circle { radius, ccw } => {
                let sign = if *ccw { F::one() } else { -F::one() };
                // Start at the origin heading along +x: center sits at
                // (0, ±radius).
                Centerline::Arc { center: [F::zero(), sign * *radius], radius: *radius, sign }
            }
            PathKind::Waypoints { points } => Centerline::Spline(CatmullRom::new(points)),
        }
    }

    /// Curve point at parameter `u` (arc length for lines/arcs, knot units
    /// for splines).
    fn point(&self, u: F) -> [F; 2] {
        match self {
            Centerline::Line { dir } => [dir[0] * u, dir[1] * u],
            Centerline::Arc { center, radius, sign } => {
                let ang = *sign * u / *radius - *sign * F::FRAC_PI_2();
                [center[0] + *radius * ang.cos(), center[1] + *radius * ang.sin()]
            }
            Centerline::Spline(s) => s.point(u),
        }
    }

    /// Curve derivative with respect to `u`.
    fn deriv(&self, u: F) -> [F; 2] {
        match self {
            Centerline::Line { dir } => *dir,
            Centerline::Arc { center: _, radius, sign } => {
                let ang = *sign * u / *radius - *sign * F::FRAC_PI_2();
                [-ang.sin() * *sign, ang.cos() * *sign]
            }
            Centerline::Spline(s) => s.deriv(u),
        }
    }

    /// True when `u` is arc length (unit-speed parameterization).
    fn unit_speed(&self) -> bool {
        !matches!(self, Centerline::Spline(_))
    }
}

/// Uniform Catmull-Rom spline through 2D points, extended linearly past
/// both ends. Parameter `u` counts segments: `point(k)` for integer `k`
/// returns waypoint `k` exactly.
struct CatmullRom<F> {
    pts: Vec<[F; 2]>,
}

impl<F: Real> CatmullRom<F> {
    fn new(points: &[[F; 2]]) -> Self {
        CatmullRom { pts: points.to_vec() }
    }

    fn segments(&self) -> usize {
        self.pts.len() - 1
    }

    fn control(&self, i: isize) -> [F; 2] {
        let n = self.pts.len() as isize;
        if i < 0 {
            // Reflect: P(-1) = 2 P0 - P1.
            let p0 = self.pts[0];
            let p1 = self.pts[1];
            [p0[0] + p0[0] - p1[0], p0[1] + p0[1] - p1[1]]
        } else if i >= n {
            let pa = self.pts[(n - 1) as usize];
            let pb = self.pts[(n - 2) as usize];
            [pa[0] + pa[0] - pb[0], pa[1] + pa[1] - pb[1]]
        } else {
            self.pts[i as usize]
        }
    }

    fn coeffs(&self, seg: usize) -> [[F; 2]; 4] {
        let i = seg as isize;
        let p0 = self.control(i - 1);
        let p1 = self.control(i);
        let p2 = self.control(i + 1);
        let p3 = self.control(i + 2);
        let half = F::of(0.5);
        let mut out = [[F::zero(); 2]; 4];
        for d in 0..2 {
            // Standard uniform Catmull-Rom basis.
            out[0][d] = p1[d];
            out[1][d] = half * (p2[d] - p0[d]);
            out[2][d] = half
                * (F::of(2.0) * p0[d] - F::of(5.0) * p1[d] + F::of(4.0) * p2[d] - p3[d]);
            out[3][d] = half
                * (F::of(3.0) * (p1[d] - p2[d]) + p3[d] - p0[d]);
        }
        out
    }

    fn point(&self, u: F) -> [F; 2] {
        let n = self.segments();
        let nf = F::from_usize(n).unwrap();
        if u < F::zero() {
            let d = self.deriv(F::zero());
            let p = self.pts[0];
            return [p[0] + d[0] * u, p[1] + d[1] * u];
        }
        if u >= nf {
            let d = self.deriv(nf - F::of(1e-9));
            let p = self.pts[n];
            let e = u - nf;
            return [p[0] + d[0] * e, p[1] + d[1] * e];
        }
        let seg = u.floor().to_usize().unwrap().min(n - 1);
        let t = u - F::from_usize(seg).unwrap();
        let c = self.coeffs(seg);
        let mut out = [F::zero(); 2];
        for d in 0..2 {
            out[d] = c[0][d] + t * (c[1][d] + t * (c[2][d] + t * c[3][d]));
        }
        out
    }

    fn deriv(&self, u: F) -> [F; 2] {
        let n = self.segments();
        let nf = F::from_usize(n).unwrap();
        let u = u.max(F::zero()).min(nf - F::of(1e-9));
        let seg = u.floor().to_usize().unwrap().min(n - 1);
        let t = u - F::from_usize(seg).unwrap();
        let c = self.coeffs(seg);
        let mut out = [F::zero(); 2];
        for d in 0..2 {
            out[d] = c[1][d] + t * (F::of(2.0) * c[2][d] + t * F::of(3.0) * c[3][d]);
        }
        out
    }
}

/// Gait arc-length law: closed-form distance and speed along the
/// centerline at time `t`, including the step-frequency speed modulation.
struct ArcLaw<F> {
    speed: F,
    w1: F,
    m1: F,
    m2: F,
    phi1: F,
    phi2: F,
}

impl<F: Real> ArcLaw<F> {
    fn new(gait: &GaitModel<F>, phase: F) -> Self {
        let w1 = F::of(2.0) * F::PI() * gait.step_freq;
        let (m1, m2) = if gait.step_freq > F::zero() {
            (gait.speed_mod, gait.speed_mod * F::of(0.5))
        } else {
            (F::zero(), F::zero())
        };
        ArcLaw {
            speed: gait.speed,
            w1,
            m1,
            m2,
            phi1: phase,
            // The fixed second-harmonic offset breaks time-reversal
            // symmetry: a reversed recording no longer looks like a valid
            // forward gait.
            phi2: F::of(2.0) * phase + F::of(0.9),
        }
    }

    /// Distance walked by time `t`.
    fn s(&self, t: F) -> F {
        if self.w1 == F::zero() || (self.m1 == F::zero() && self.m2 == F::zero()) {
            return self.speed * t;
        }
        let w1 = self.w1;
        let a = (w1 * t + self.phi1).cos() - self.phi1.cos();
        let b = (F::of(2.0) * w1 * t + self.phi2).cos() - self.phi2.cos();
        self.speed * (t - self.m1 / w1 * a - self.m2 / (F::of(2.0) * w1) * b)
    }

    /// Instantaneous speed at time `t`.
    fn s_dot(&self, t: F) -> F {
        if self.w1 == F::zero() {
            return self.speed;
        }
        let w1 = self.w1;
        self.speed
            * (F::one()
                + self.m1 * (w1 * t + self.phi1).sin()
                + self.m2 * (F::of(2.0) * w1 * t + self.phi2).sin())
    }
}

/// Generates the ground-truth pose stream for a walk.
///
/// Deterministic: the seed fixes only the gait phase, so two calls with the
/// same spec and seed are bit-identical. Samples run from `t = 0` to
/// `t = duration` inclusive at the spec's rate. Stored quaternions are kept
/// sign-continuous along the stream.
///
/// # Errors
/// [`Error::InvalidInput`] when the spec fails [`TrajectorySpec::validate`].
pub fn generate_trajectory<F: Real>(spec: &TrajectorySpec<F>, seed: u64) -> Result<Vec<PoseSample<F>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = F::of(rng.random_range(0.0..std::f64::consts::TAU));

    let curve = Centerline::from_path(&spec.path);
    let law = ArcLaw::new(&spec.gait, phase);
    let g = &spec.gait;
    let dt = F::one() / spec.sample_rate;
    let n = (spec.duration * spec.sample_rate).to_f64_lossy().round() as usize + 1;

    let w_step = F::of(2.0) * F::PI() * g.step_freq;
    let w_stride = F::PI() * g.step_freq;
    let phi_b = phase + F::of(0.3);
    let phi_l = phase + F::of(1.1);
    let phi_p = phase + F::of(2.0);

    let mut out = Vec::with_capacity(n);
    let mut u = F::zero();
    let mut prev_q: Option<Quaternion<F>> = None;
    for i in 0..n {
        let t = F::from_usize(i).unwrap() * dt;
        if curve.unit_speed() {
            u = law.s(t);
        } else if i > 0 {
            // u̇ = ṡ / ‖C'(u)‖, advanced by one RK4 step per sample.
            let t0 = F::from_usize(i - 1).unwrap() * dt;
            let f = |tt: F, uu: F| {
                let d = curve.deriv(uu);
                let n = (d[0] * d[0] + d[1] * d[1]).sqrt().max(F::of(1e-9));
                law.s_dot(tt) / n
            };
            let h = dt;
            let k1 = f(t0, u);
            let k2 = f(t0 + h / F::of(2.0), u + h / F::of(2.0) * k1);
            let k3 = f(t0 + h / F::of(2.0), u + h / F::of(2.0) * k2);
            let k4 = f(t0 + h, u + h * k3);
            u = u + h / F::of(6.0) * (k1 + F::of(2.0) * k2 + F::of(2.0) * k3 + k4);
        }

        let c = curve.point(u);
        let d = curve.deriv(u);
        let dn = (d[0] * d[0] + d[1] * d[1]).sqrt().max(F::of(1e-9));
        let tangent = [d[0] / dn, d[1] / dn];
        let normal = [-tangent[1], tangent[0]];

        let lat = g.lateral_amp * (w_stride * t + phi_l).sin();
        let z = g.bounce_amp * (w_step * t + phi_b).sin();
        let position = Vector3::new(c[0] + normal[0] * lat, c[1] + normal[1] * lat, z);

        let yaw = tangent[1].atan2(tangent[0]) + g.sway_amp * (w_stride * t + phi_l).sin();
        let pitch = g.pitch_amp * (w_step * t + phi_p).sin();
        let mut q = spec
            .carry
            .multiply(pitch_quat(pitch))
            .multiply(yaw_quat(yaw))
            .normalized()?;
        if let Some(p) = prev_q {
            if q.dot(p) < F::zero() {
                q = q.negate();
            }
        }
        prev_q = Some(q);

        out.push(PoseSample { t, position, q });
    }
    Ok(out)
}

/// Runs strapdown mechanization backwards: recovers the clean IMU stream a
/// device following `traj` must have produced.
///
/// Accelerometer samples are specific force in the device frame
/// (`rotate_from_nav(q, p̈ + g·ẑ)`, central differences for `p̈`), gyro
/// samples are body rates from quaternion log differences, and
/// magnetometer samples are the reference field rotated into the device
/// frame. Endpoint samples reuse their neighbours' finite differences.
/// The trajectory is embedded in the output as ground truth.
///
/// # Errors
/// [`Error::InvalidInput`] when the trajectory has fewer than three samples
/// or non-uniform timestamps.
pub fn inverse_imu<F: Real>(
    traj: &[PoseSample<F>],
    gravity: F,
    mag_field: Vector3<F>,
) -> Result<ImuSequence<F>> {
    if traj.len() < 3 {
        return Err(Error::invalid("inverse mechanization needs at least three samples"));
    }
    let dt = traj[1].t - traj[0].t;
    if !(dt > F::zero()) {
        return Err(Error::invalid("trajectory timestamps must be increasing"));
    }
    for w in traj.windows(2) {
        let step = w[1].t - w[0].t;
        if ((step - dt) / dt).abs() > F::of(1e-6) {
            return Err(Error::invalid("trajectory timestamps must be uniform"));
        }
    }
    let n = traj.len();
    let g_up = Vector3::new(F::zero(), F::zero(), gravity);

    // Nav-frame acceleration by central differences; endpoints copy their
    // interior neighbour.
    let mut acc_nav = vec![Vector3::zero(); n];
    for i in 1..n - 1 {
        let num = traj[i + 1].position + traj[i - 1].position - traj[i].position * F::of(2.0);
        acc_nav[i] = num / (dt * dt);
    }
    acc_nav[0] = acc_nav[1];
    acc_nav[n - 1] = acc_nav[n - 2];

    // Body rates from quaternion log differences. With the crate's gyro
    // convention q_{i+1} = exp(-ω·dt/2) ⊗ q_i, the one-sided difference
    // ω_i = -2·log(q_{i+1} ⊗ q_i⁻¹)/dt is the mean body rate over
    // [t_i, t_{i+1}] — the quantity an integrating gyro reports — and it
    // makes forward strapdown integration reproduce the source poses
    // exactly, which pins the round-trip property of this module.
    let mut gyro = vec![Vector3::zero(); n];
    for i in 0..n - 1 {
        let delta = traj[i + 1].q.multiply(traj[i].q.conjugate());
        gyro[i] = -delta.log_map() * (F::of(2.0) / dt);
    }
    gyro[n - 1] = gyro[n - 2];

    let mut accel = Vec::with_capacity(n);
    let mut mag = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    for (i, pose) in traj.iter().enumerate() {
        accel.push(pose.q.rotate_from_nav(acc_nav[i] + g_up));
        mag.push(pose.q.rotate_from_nav(mag_field));
        timestamps.push(pose.t);
    }

    ImuSequence::new(
        F::one() / dt,
        timestamps,
        accel,
        gyro,
        Some(mag),
        Some(traj.to_vec()),
    )
}

/// A localized magnetic disturbance: inside `radius` of `center`
/// (horizontal distance), the nav-frame field gains `offset`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagPatch<F> {
    /// Horizontal centre of the disturbed region, metres.
    pub center: [F; 2],
    /// Radius of effect, metres.
    pub radius: F,
    /// Nav-frame field offset inside the region, µT.
    pub offset: Vector3<F>,
}

/// Sensor corruption model for [`add_noise`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec<F> {
    /// Accelerometer white-noise σ per axis, m/s².
    pub accel_sigma: F,
    /// Constant accelerometer bias, device frame, m/s².
    pub accel_bias: Vector3<F>,
    /// Gyro white-noise σ per axis, rad/s.
    pub gyro_sigma: F,
    /// Constant gyro bias, device frame, rad/s.
    pub gyro_bias: Vector3<F>,
    /// Magnetometer white-noise σ per axis, µT.
    pub mag_sigma: F,
    /// Localized magnetic disturbances (require embedded poses).
    pub mag_patches: Vec<MagPatch<F>>,
}

impl<F: Real> NoiseSpec<F> {
    /// No corruption at all.
    pub fn clean() -> Self {
        NoiseSpec {
            accel_sigma: F::zero(),
            accel_bias: Vector3::zero(),
            gyro_sigma: F::zero(),
            gyro_bias: Vector3::zero(),
            mag_sigma: F::zero(),
            mag_patches: Vec::new(),
        }
    }

    /// Noise levels typical of a phone-grade MEMS IMU sampled at 200 Hz.
    pub fn consumer_grade() -> Self {
        NoiseSpec {
            accel_sigma: F::of(0.03),
            accel_bias: Vector3::new(F::of(0.05), F::of(-0.03), F::of(0.04)),
            gyro_sigma: F::of(0.002),
            gyro_bias: Vector3::new(F::of(0.0008), F::of(-0.0005), F::of(0.0006)),
            mag_sigma: F::of(0.3),
            mag_patches: Vec::new(),
        }
    }
}

/// Applies the corruption model to a clean stream, deterministically in the
/// seed. Ground-truth poses (if any) are carried through untouched.
///
/// # Errors
/// [`Error::InvalidInput`] when magnetic patches are requested but the
/// sequence carries no poses (patch activation needs positions), or when
/// patches are requested on a stream without magnetometer channels.
pub fn add_noise<F: Real>(
    seq: &ImuSequence<F>,
    spec: &NoiseSpec<F>,
    seed: u64,
) -> Result<ImuSequence<F>> {
    if !spec.mag_patches.is_empty() {
        if seq.poses.is_none() {
            return Err(Error::invalid(
                "magnetic disturbance patches need ground-truth poses to locate samples",
            ));
        }
        if seq.mag.is_none() {
            return Err(Error::invalid(
                "magnetic disturbance patches need magnetometer channels",
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |sigma: F| -> Vector3<F> {
        // Always consume three draws so channel streams stay aligned across
        // spec changes.
        let n: [f64; 3] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        Vector3::new(F::of(n[0]) * sigma, F::of(n[1]) * sigma, F::of(n[2]) * sigma)
    };

    let mut out = seq.clone();
    let n = seq.len();
    for i in 0..n {
        out.accel[i] = out.accel[i] + spec.accel_bias + draw(spec.accel_sigma);
        out.gyro[i] = out.gyro[i] + spec.gyro_bias + draw(spec.gyro_sigma);
        if let Some(mag) = out.mag.as_mut() {
            mag[i] = mag[i] + draw(spec.mag_sigma);
        }
    }
    if let (Some(mag), Some(poses)) = (out.mag.as_mut(), seq.poses.as_ref()) {
        for patch in &spec.mag_patches {
            for i in 0..n {
                let p = poses[i].position;
                let dx = p.x - patch.center[0];
                let dy = p.y - patch.center[1];
                if (dx * dx + dy * dy).sqrt() < patch.radius {
                    mag[i] = mag[i] + poses[i].q.rotate_from_nav(patch.offset);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, eps: f64) {
        assert!((a - b).abs() <= eps, "{a} vs {b} (eps {eps})");
    }

    #[test]
    fn straight_constant_walk_displacement_is_exact() {
        let spec = TrajectorySpec::straight(10.0, GaitModel::none(1.0));
        let traj = generate_trajectory(&spec, 7).unwrap();
        let last = traj.last().unwrap();
        close(last.t, 10.0, 1e-12);
        close(last.position.x, 10.0, 1e-9);
        close(last.position.y, 0.0, 1e-9);
        close(last.position.z, 0.0, 1e-9);
    }

    #[test]
    fn displacement_is_speed_times_duration_for_whole_strides() {
        // Integer step cycles over the window: the speed modulation
        // integrates to zero for any phase.
        let gait = GaitModel { step_freq: 2.0, ..GaitModel::default() };
        let spec = TrajectorySpec::straight(10.0, gait);
        for seed in [0, 1, 99] {
            let traj = generate_trajectory(&spec, seed).unwrap();
            let s: f64 = traj.last().unwrap().position.x;
            close(s, 14.0, 1e-9);
        }
    }

    #[test]
    fn constant_velocity_walk_senses_only_gravity() {
        let mut spec = TrajectorySpec::straight(5.0, GaitModel::none(1.3));
        spec.carry = Quaternion::from_axis_angle(Vector3::new(1.0, 0.4, -0.2), 0.8);
        let traj = generate_trajectory(&spec, 3).unwrap();
        let imu = inverse_imu(&traj, 9.81, default_mag_field()).unwrap();
        for i in 1..imu.len() - 1 {
            let expected = traj[i]
                .q
                .rotate_from_nav(Vector3::new(0.0, 0.0, 9.81));
            close((imu.accel[i] - expected).norm(), 0.0, 1e-9);
            close(imu.gyro[i].norm(), 0.0, 1e-9);
        }
    }

    #[test]
    fn circle_walk_centripetal_acceleration() {
        let radius = 20.0;
        let speed = 1.25;
        let spec = TrajectorySpec {
            duration: 8.0,
            sample_rate: 200.0,
            path: PathKind::Circle { radius, ccw: true },
            gait: GaitModel::none(speed),
            carry: Quaternion::identity(),
        };
        let traj = generate_trajectory(&spec, 0).unwrap();
        let imu = inverse_imu(&traj, 9.81, default_mag_field()).unwrap();
        let expect = speed * speed / radius;
        for i in (10..imu.len() - 10).step_by(97) {
            // Rotate the specific force back to nav and strip gravity.
            let a_nav = traj[i].q.rotate_to_nav(imu.accel[i]) - Vector3::new(0.0, 0.0, 9.81);
            close(a_nav.norm(), expect, expect * 0.01);
        }
    }

    #[test]
    fn waypoint_spline_interpolates_waypoints() {
        let pts = [[0.0, 0.0], [4.0, 1.0], [7.0, -2.0], [11.0, 0.5]];
        let spline = CatmullRom::new(&pts);
        for (k, p) in pts.iter().enumerate() {
            let q = spline.point(k as f64);
            close(q[0], p[0], 1e-3);
            close(q[1], p[1], 1e-3);
        }
        // And the generated walk starts at the first waypoint.
        let spec = TrajectorySpec {
            duration: 6.0,
            sample_rate: 200.0,
            path: PathKind::Waypoints { points: pts.to_vec() },
            gait: GaitModel::none(1.0),
            carry: Quaternion::identity(),
        };
        let traj = generate_trajectory(&spec, 0).unwrap();
        close(traj[0].position.x, 0.0, 1e-9);
        close(traj[0].position.y, 0.0, 1e-9);
    }

    #[test]
    fn spline_walk_speed_tracks_the_gait_law() {
        let pts = [[0.0, 0.0], [5.0, 2.0], [9.0, -1.0], [15.0, 1.0]];
        let spec = TrajectorySpec {
            duration: 8.0,
            sample_rate: 200.0,
            path: PathKind::Waypoints { points: pts.to_vec() },
            gait: GaitModel::none(1.2),
            carry: Quaternion::identity(),
        };
        let traj = generate_trajectory(&spec, 0).unwrap();
        let dt = 1.0 / 200.0;
        for i in (1..traj.len() - 1).step_by(151) {
            let v = (traj[i + 1].position - traj[i - 1].position).norm() / (2.0 * dt);
            close(v, 1.2, 0.01);
        }
    }

    #[test]
    fn roundtrip_reintegration_recovers_positions() {
        // Full default gait on a straight line; integrate the synthesized
        // IMU forward again and compare positions.
        let spec = TrajectorySpec::straight(10.0, GaitModel::default());
        let traj = generate_trajectory(&spec, 42).unwrap();
        let g = 9.81;
        let imu = inverse_imu(&traj, g, default_mag_field()).unwrap();
        let dt = 1.0 / 200.0;
        let n = traj.len();

        // Strapdown forward pass: gyro propagation, leapfrog position.
        let mut q = traj[0].q;
        let mut qs = Vec::with_capacity(n);
        qs.push(q);
        for i in 0..n - 1 {
            q = q.integrate_gyro(imu.gyro[i], dt);
            qs.push(q);
        }
        // The initial half-step velocity has already carried the walk from
        // p₀ to p₁, so integration starts from p₁.
        let mut p = traj[1].position;
        let mut v = (traj[1].position - traj[0].position) / dt;
        let mut worst: f64 = 0.0;
        for i in 1..n - 1 {
            let a = qs[i].rotate_to_nav(imu.accel[i]) - Vector3::new(0.0, 0.0, g);
            v = v + a * dt;
            p = p + v * dt;
            worst = worst.max((p - traj[i + 1].position).norm());
        }
        assert!(worst < 1e-3, "max reintegration error {worst}");
    }

    #[test]
    fn gait_energy_stays_near_gravity() {
        let spec = TrajectorySpec::straight(10.0, GaitModel::default());
        let traj = generate_trajectory(&spec, 5).unwrap();
        let imu = inverse_imu(&traj, 9.81, default_mag_field()).unwrap();
        let mean: f64 =
            imu.accel.iter().map(|a| a.norm()).sum::<f64>() / imu.accel.len() as f64;
        assert!((mean - 9.81).abs() < 0.2 * 9.81, "mean |a| = {mean}");
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = TrajectorySpec::straight(2.0, GaitModel::default());
        let a = generate_trajectory(&spec, 9).unwrap();
        let b = generate_trajectory(&spec, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.q.to_array(), y.q.to_array());
        }
        let c = generate_trajectory(&spec, 10).unwrap();
        assert!(a[400].position != c[400].position);
    }

    #[test]
    fn noise_statistics_match_the_spec() {
        let spec = TrajectorySpec::straight(20.0, GaitModel::none(1.0));
        let traj = generate_trajectory(&spec, 0).unwrap();
        let clean = inverse_imu(&traj, 9.81, default_mag_field()).unwrap();
        let noise = NoiseSpec {
            accel_sigma: 0.1,
            accel_bias: Vector3::new(0.05, -0.02, 0.0),
            gyro_sigma: 0.01,
            gyro_bias: Vector3::new(0.001, 0.0, -0.002),
            mag_sigma: 0.5,
            mag_patches: vec![],
        };
        let noisy = add_noise(&clean, &noise, 1234).unwrap();
        let n = clean.len() as f64;

        let errs: Vec<f64> = (0..clean.len())
            .map(|i| noisy.accel[i].x - clean.accel[i].x)
            .collect();
        let mean = errs.iter().sum::<f64>() / n;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        close(mean, 0.05, 4.0 * 0.1 / n.sqrt());
        assert!((var.sqrt() - 0.1).abs() < 0.05 * 0.1, "accel σ̂ = {}", var.sqrt());

        let gerrs: Vec<f64> = (0..clean.len())
            .map(|i| noisy.gyro[i].z - clean.gyro[i].z)
            .collect();
        let gmean = gerrs.iter().sum::<f64>() / n;
        close(gmean, -0.002, 4.0 * 0.01 / n.sqrt());
    }

    #[test]
    fn noise_is_deterministic_in_the_seed() {
        let spec = TrajectorySpec::straight(1.0, GaitModel::default());
        let traj = generate_trajectory(&spec, 0).unwrap();
        let clean = inverse_imu(&traj, 9.81, default_mag_field()).unwrap();
        let ns = NoiseSpec::consumer_grade();
        let a = add_noise(&clean, &ns, 77).unwrap();
        let b = add_noise(&clean, &ns, 77).unwrap();
        assert_eq!(a.accel[13], b.accel[13]);
        assert_eq!(a.gyro[101], b.gyro[101]);
        let c = add_noise(&clean, &ns, 78).unwrap();
        assert!(a.accel[13] != c.accel[13]);
    }

    #[test]
    fn mag_patch_applies_only_inside_its_radius() {
        let spec = TrajectorySpec::straight(10.0, GaitModel::none(1.0));
        let traj = generate_trajectory(&spec, 0).unwrap();
        let clean = inverse_imu(&traj, 9.81, default_mag_field()).unwrap();
        let mut ns = NoiseSpec::clean();
        let offset = Vector3::new(5.0, -3.0, 2.0);
        ns.mag_patches.push(MagPatch { center: [5.0, 0.0], radius: 1.0, offset });
        let noisy = add_noise(&clean, &ns, 0).unwrap();
        let mag_c = clean.mag.as_ref().unwrap();
        let mag_n = noisy.mag.as_ref().unwrap();
        // Walk is along +x at 1 m/s: inside the patch near t=5 s, outside at t=2 s.
        let i_in = 5 * 200;
        let i_out = 2 * 200;
        let expected = traj[i_in].q.rotate_from_nav(offset);
        close((mag_n[i_in] - mag_c[i_in] - expected).norm(), 0.0, 1e-12);
        close((mag_n[i_out] - mag_c[i_out]).norm(), 0.0, 0.0);
    }

    #[test]
    fn patches_require_poses() {
        let spec = TrajectorySpec::straight(1.0, GaitModel::none(1.0));
        let traj = generate_trajectory(&spec, 0).unwrap();
        let mut clean = inverse_imu(&traj, 9.81, default_mag_field()).unwrap();
        clean.poses = None;
        let mut ns = NoiseSpec::clean();
        ns.mag_patches.push(MagPatch {
            center: [0.0, 0.0],
            radius: 1.0,
            offset: Vector3::unit_x(),
        });
        assert!(add_noise(&clean, &ns, 0).is_err());
    }
}
