//! Pedestrian inertial localization from body-worn IMU streams.
//!
//! The crate covers the full pipeline from raw 9-axis samples to fused
//! position beliefs:
//!
//! * [`geom`] — quaternion/vector primitives with a fixed device-to-nav
//!   rotation convention shared by every other module.
//! * [`synthimu`] — synthetic walking trajectories and the inverse-strapdown
//!   oracle that turns them into noisy IMU streams with known ground truth.
//! * [`orient`] — a motion-aware complementary orientation filter that
//!   weighs gyro propagation against accelerometer and magnetometer
//!   corrections, and emits gravity-aligned measurements.
//! * [`data`] — aligned-sequence containers, fixed-length patching,
//!   scale-free window sampling, and the training-time augmentations.
//! * [`nn`] — a small, deterministic neural-network toolkit (GEMM-backed
//!   convolutions, group norm, adaptive pooling, Adam) with hand-written
//!   backward passes.
//! * [`asle`] — the displacement-regression network: per-patch feature
//!   extraction, cross-patch context, and a pooling head that outputs a
//!   mean velocity together with a Laplace uncertainty scale.
//! * [`bayes`] — the chained position belief: Laplace process noise as a
//!   Gaussian scale mixture, dead-reckoning covariance growth, and a
//!   Kalman–Gibbs fusion step for external position observations.
//! * [`metrics`] — trajectory/orientation error metrics and
//!   uncertainty-calibration checks.
//! * [`io`] — the canonical CSV/TOML file formats used by the CLI.
//!
//! Numeric code is generic over the scalar type through the [`Real`] trait;
//! `f32` is the practical choice for network training while `f64` backs
//! geometry, filtering, and the finite-difference gradient checks. Concrete
//! aliases for the common instantiations live at the crate root.

pub mod asle;
pub mod bayes;
pub mod data;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod orient;
pub mod synthimu;

mod scalar;

pub use scalar::Real;

mod error;
pub use error::Error;

/// Crate-wide `Result` with the shared error type.
pub type Result<T> = std::result::Result<T, Error>;

/// Double-precision quaternion, the default for geometry and filtering.
pub type Quat = geom::Quaternion<f64>;
/// Single-precision quaternion.
pub type Quat32 = geom::Quaternion<f32>;
/// Double-precision 3-vector.
pub type Vec3 = geom::Vector3<f64>;
/// Single-precision 3-vector.
pub type Vec3f = geom::Vector3<f32>;
/// Double-precision IMU recording, the default for file I/O and filtering.
pub type ImuSeq = data::ImuSequence<f64>;
/// Double-precision pose sample (synthetic ground truth).
pub type Pose = synthimu::PoseSample<f64>;
/// Double-precision estimator network, shared by the CLI and the tests.
pub type Asle = asle::Model<f64>;
/// Double-precision orientation-filter parameter set.
pub type OrientParams = orient::FilterParams<f64>;
