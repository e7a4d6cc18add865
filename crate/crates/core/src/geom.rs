//! Quaternion and 3-vector primitives with a fixed rotation convention.
//!
//! Every module in this crate moves vectors between two frames:
//!
//! * the **device frame** — the IMU's own axes, in which raw accelerometer,
//!   gyroscope, and magnetometer triples are reported;
//! * the **nav frame** — a local level frame with `+z` up and gravity along
//!   `-z`, in which trajectories, headings, and displacement labels live.
//!
//! The convention is pinned once, here: a pose quaternion `q` maps a
//! device-frame vector `v` into the nav frame via the sandwich
//!
//! ```text
//! v_nav = q⁻¹ ⊗ (0, v) ⊗ q
//! ```
//!
//! implemented by [`Quaternion::rotate_to_nav`]. The inverse sandwich
//! ([`Quaternion::rotate_from_nav`]) takes nav-frame vectors back into the
//! device frame. Quaternion composition follows from the sandwich: for unit
//! `a`, `b` and any `v`,
//!
//! ```text
//! rotate_to_nav(a ⊗ b, v) = rotate_to_nav(b, rotate_to_nav(a, v))
//! ```
//!
//! i.e. in a product `a ⊗ b` the left factor acts first. Gyroscope rates are
//! body-frame angular velocities; [`Quaternion::integrate_gyro`] advances a
//! pose under that reading (a positive `z` rate yaws the device
//! counter-clockwise when viewed from above).
//!
//! Quaternions double-cover rotations: `q` and `-q` encode the same
//! rotation. Comparisons, logs, and blends therefore hemisphere-align their
//! inputs first, and "equality" in tests means equality up to sign.

use crate::Real;

/// Quaternion with scalar part first: `w + x·i + y·j + z·k`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quaternion<F> {
    pub w: F,
    pub x: F,
    pub y: F,
    pub z: F,
}

/// Plain 3-vector used for IMU triples and positions.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vector3<F> {
    pub x: F,
    pub y: F,
    pub z: F,
}

impl<F: Real> Vector3<F> {
    /// Builds a vector from components.
    #[inline]
    pub fn new(x: F, y: F, z: F) -> Self {
        Vector3 { x, y, z }
    }

    /// The zero vector.
    #[inline]
    pub fn zero() -> Self {
        Vector3 { x: F::zero(), y: F::zero(), z: F::zero() }
    }

    /// Unit `x` axis.
    #[inline]
    pub fn unit_x() -> Self {
        Vector3::new(F::one(), F::zero(), F::zero())
    }

    /// Unit `y` axis.
    #[inline]
    pub fn unit_y() -> Self {
        Vector3::new(F::zero(), F::one(), F::zero())
    }

    /// Unit `z` axis (nav-frame "up").
    #[inline]
    pub fn unit_z() -> Self {
        Vector3::new(F::zero(), F::zero(), F::one())
    }

    /// Dot product.
    #[inline]
    pub fn dot(self, o: Self) -> F {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Cross product.
    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vector3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    /// Euclidean norm.
    #[inline]
    pub fn norm(self) -> F {
        self.dot(self).sqrt()
    }

    /// Squared Euclidean norm.
    #[inline]
    pub fn norm_sq(self) -> F {
        self.dot(self)
    }

    /// Returns the unit vector along `self`, or `None` when the norm is
    /// numerically zero.
    #[inline]
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n <= F::of(1e-30) {
            None
        } else {
            Some(self / n)
        }
    }

    /// Component array `[x, y, z]`, for serialization.
    #[inline]
    pub fn to_array(self) -> [F; 3] {
        [self.x, self.y, self.z]
    }

    /// Builds a vector from a component array.
    #[inline]
    pub fn from_array(a: [F; 3]) -> Self {
        Vector3::new(a[0], a[1], a[2])
    }
}

impl<F: Real> std::ops::Add for Vector3<F> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vector3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<F: Real> std::ops::Sub for Vector3<F> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vector3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<F: Real> std::ops::Mul<F> for Vector3<F> {
    type Output = Self;
    #[inline]
    fn mul(self, s: F) -> Self {
        Vector3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<F: Real> std::ops::Div<F> for Vector3<F> {
    type Output = Self;
    #[inline]
    fn div(self, s: F) -> Self {
        Vector3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<F: Real> std::ops::Neg for Vector3<F> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vector3::new(-self.x, -self.y, -self.z)
    }
}

impl<F: Real> Quaternion<F> {
    /// Builds a quaternion from components, scalar part first.
    #[inline]
    pub fn new(w: F, x: F, y: F, z: F) -> Self {
        Quaternion { w, x, y, z }
    }

    /// The identity rotation.
    #[inline]
    pub fn identity() -> Self {
        Quaternion::new(F::one(), F::zero(), F::zero(), F::zero())
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length;
    /// a zero axis yields the identity).
    pub fn from_axis_angle(axis: Vector3<F>, angle: F) -> Self {
        match axis.normalized() {
            None => Quaternion::identity(),
            Some(u) => {
                let half = angle / F::of(2.0);
                let (s, c) = (half.sin(), half.cos());
                Quaternion::new(c, u.x * s, u.y * s, u.z * s)
            }
        }
    }

    /// Hamilton product `self ⊗ rhs`.
    ///
    /// The basis satisfies `i⊗j = k` (and cyclic). Under the crate's
    /// sandwich convention the left factor is applied first when mapping
    /// device vectors to the nav frame.
    #[inline]
    pub fn multiply(self, r: Self) -> Self {
        let Quaternion { w: aw, x: ax, y: ay, z: az } = self;
        let Quaternion { w: bw, x: bx, y: by, z: bz } = r;
        Quaternion::new(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        )
    }

    /// Conjugate `(w, -x, -y, -z)`; equals the inverse for unit quaternions.
    #[inline]
    pub fn conjugate(self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Quaternion norm.
    #[inline]
    pub fn norm(self) -> F {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Four-dimensional dot product (used for hemisphere alignment).
    #[inline]
    pub fn dot(self, o: Self) -> F {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Scales all components, yielding a generally non-unit quaternion.
    #[inline]
    pub fn scale(self, s: F) -> Self {
        Quaternion::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Component-wise sum (an intermediate for blending, not a rotation).
    #[inline]
    pub fn add(self, o: Self) -> Self {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    /// Component-wise negation; encodes the same rotation.
    #[inline]
    pub fn negate(self) -> Self {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }

    /// Rescales to unit norm.
    ///
    /// # Errors
    /// [`crate::Error::Numeric`] when the norm is below `1e-12` and the
    /// direction is therefore meaningless.
    pub fn normalized(self) -> crate::Result<Self> {
        let n = self.norm();
        if n < F::of(1e-12) {
            return Err(crate::Error::numeric(format!(
                "cannot normalize quaternion with norm {n}"
            )));
        }
        Ok(self.scale(F::one() / n))
    }

    /// Maps a device-frame vector to the nav frame: `Im(q⁻¹ ⊗ (0,v) ⊗ q)`.
    pub fn rotate_to_nav(self, v: Vector3<F>) -> Vector3<F> {
        let p = Quaternion::new(F::zero(), v.x, v.y, v.z);
        let r = self.conjugate().multiply(p).multiply(self);
        Vector3::new(r.x, r.y, r.z)
    }

    /// Maps a nav-frame vector to the device frame: `Im(q ⊗ (0,v) ⊗ q⁻¹)`.
    pub fn rotate_from_nav(self, v: Vector3<F>) -> Vector3<F> {
        let p = Quaternion::new(F::zero(), v.x, v.y, v.z);
        let r = self.multiply(p).multiply(self.conjugate());
        Vector3::new(r.x, r.y, r.z)
    }

    /// Exponential map: `exp((0, u)) = (cos ‖u‖, sin ‖u‖ · û)`.
    ///
    /// The argument is a half-angle rotation vector: `quat_exp(axis · θ/2)`
    /// encodes a rotation by `θ` about `axis`.
    pub fn exp_map(u: Vector3<F>) -> Self {
        let n = u.norm();
        if n < F::of(1e-30) {
            // cos ≈ 1, sin(n)/n ≈ 1 - n²/6; the linear term keeps exp/log
            // round trips exact for tiny arguments.
            return Quaternion::new(F::one(), u.x, u.y, u.z).normalized().unwrap_or_else(|_| Quaternion::identity());
        }
        let (s, c) = (n.sin(), n.cos());
        let k = s / n;
        Quaternion::new(c, u.x * k, u.y * k, u.z * k)
    }

    /// Logarithm map, inverse of [`Quaternion::exp_map`] on unit quaternions.
    ///
    /// Hemisphere-aligns first, so the result is the minimal half-angle
    /// rotation vector (`‖log‖ ≤ π/2`) and `exp(log(q)) = ±q`.
    pub fn log_map(self) -> Vector3<F> {
        let q = if self.w < F::zero() { self.negate() } else { self };
        let vn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if vn < F::of(1e-30) {
            return Vector3::zero();
        }
        let half = vn.atan2(q.w);
        Vector3::new(q.x, q.y, q.z) * (half / vn)
    }

    /// Advances a pose by one gyroscope reading.
    ///
    /// `omega` is the body-frame angular rate (rad/s) held constant over
    /// `dt` seconds. Under the crate convention the update is
    /// `q' = exp(-ω·dt/2) ⊗ q`, renormalized. A positive `z` rate yaws the
    /// device counter-clockwise in the nav frame.
    pub fn integrate_gyro(self, omega: Vector3<F>, dt: F) -> Self {
        let half = omega * (-dt / F::of(2.0));
        let step = Quaternion::exp_map(half);
        step.multiply(self)
            .normalized()
            .expect("gyro step keeps unit norm")
    }

    /// Weighted blend of two unit quaternions (normalized linear
    /// interpolation), with `w` the weight on `self`.
    ///
    /// The second operand is hemisphere-aligned to the first before the
    /// component-wise blend, so the double cover cannot produce a long-way
    /// interpolation.
    ///
    /// # Errors
    /// [`crate::Error::Numeric`] when the two rotations are a quarter turn
    /// of the double cover apart (`|⟨q, r⟩| < 1e-6`): the blend direction is
    /// then undefined.
    pub fn blend(self, other: Self, w: F) -> crate::Result<Self> {
        let d = self.dot(other);
        if d.abs() < F::of(1e-6) {
            return Err(crate::Error::numeric(
                "quaternion blend undefined: operands are antipodal on the rotation manifold",
            ));
        }
        let other = if d < F::zero() { other.negate() } else { other };
        self.scale(w).add(other.scale(F::one() - w)).normalized()
    }

    /// Angle of the relative rotation between two unit quaternions, in
    /// radians within `[0, π]`. Sign-insensitive (double cover aware).
    pub fn rotation_angle_to(self, other: Self) -> F {
        let d = self.dot(other).abs().min(F::one());
        F::of(2.0) * d.acos()
    }

    /// Component array `[w, x, y, z]`, for serialization.
    #[inline]
    pub fn to_array(self) -> [F; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Builds a quaternion from a component array `[w, x, y, z]`.
    #[inline]
    pub fn from_array(a: [F; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }
}

/// Yaw rotation helper: the returned quaternion rotates device vectors by
/// `psi` radians counter-clockwise about nav `+z` (a device `x` axis maps to
/// heading `psi`).
pub fn yaw_quat<F: Real>(psi: F) -> Quaternion<F> {
    // Under the q⁻¹ v q sandwich, conjugation by q⁻¹ rotates by the negated
    // axis-angle, hence the sign flip.
    Quaternion::from_axis_angle(Vector3::unit_z(), -psi)
}

/// Pitch rotation helper: positive `theta` tips the device `x` axis below
/// the horizon (rotation about nav `+y` after yaw).
pub fn pitch_quat<F: Real>(theta: F) -> Quaternion<F> {
    Quaternion::from_axis_angle(Vector3::unit_y(), theta)
}

/// Roll rotation helper: rotation about the device `x` axis.
pub fn roll_quat<F: Real>(phi: F) -> Quaternion<F> {
    Quaternion::from_axis_angle(Vector3::unit_x(), -phi)
}
