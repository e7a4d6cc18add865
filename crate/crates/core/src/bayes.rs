//! Bayesian position inference over interval displacement predictions.
//!
//! The regression head emits, for each requested time interval, a mean planar
//! displacement and a per-axis Laplace scale.  This module turns those
//! predictions into a calibrated position belief:
//!
//! * **Dead-reckoning chain** — [`chain_step`] advances a Gaussian belief by
//!   one displacement interval.  A Laplace step with scale `b` has variance
//!   `2b²` per axis, so the covariance grows by `diag(2b̂ₓ², 2b̂ᵧ²)` while the
//!   mean shifts by the predicted displacement.
//! * **Scale-mixture sampling** — [`laplace_mixture_sample`] draws step noise
//!   through the exact Gaussian–exponential construction: with `τ ~ Exp(1)`
//!   and `w | τ ~ N(0, τ · 2b²)` per axis, the marginal of `w` is
//!   `Laplace(0, b)`.  The mixture form is what makes conditionally-Gaussian
//!   fusion possible.
//! * **Loose fusion** — [`fuse_step`] folds an external position-like
//!   observation `z = H·p + ε`, `ε ~ N(0, R)` into one chain step with a
//!   Rao-Blackwellised Kalman–Gibbs sweep: conditioned on the mixture
//!   variable τ the model is linear-Gaussian, so each sweep runs an exact
//!   Kalman predict/update with process noise `τ·Σ_w`, then resamples τ from
//!   its inverse-Gaussian conditional given the realized step mismatch.
//!   Post-burn-in sweeps are averaged; the covariance additionally picks up
//!   the between-sweep spread of the means (law of total variance).
//! * **Reporting** — [`uncertainty_ellipse`] converts a belief into a
//!   confidence ellipse.  For two degrees of freedom the chi-square quantile
//!   has the closed form `χ²₂(c) = −2·ln(1−c)`, so no special functions are
//!   needed.
//!
//! Everything here is `f64`: filter math is the one place in this crate where
//! double precision is non-negotiable (covariance conditioning), and the
//! matrix work leans on `nalgebra`, whose scalar trait family differs from the
//! crate-wide generic scalar.
//!
//! Seeded operations (`laplace_mixture_sample`, `gibbs_tau_resample`,
//! `fuse_step`) are deterministic functions of their inputs and the seed.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, InverseGaussian, StandardNormal};
use std::f64::consts::{FRAC_PI_2, PI};

/// Eigenvalues of a belief covariance may dip this far below zero before the
/// clip is considered a real loss of positive semi-definiteness (and logged).
const PSD_TOL: f64 = 1e-12;

/// Floor applied to Laplace scales before they enter a variance, so that a
/// degenerate (zero-uncertainty) prediction cannot produce a singular mixture.
const SCALE_FLOOR: f64 = 1e-9;

/// Value returned by the τ conditional when the step mismatch is exactly
/// zero, where the inverse-Gaussian parameters degenerate.
const TAU_FLOOR: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Gaussian belief over planar position at a given time.
///
/// The covariance is kept symmetric positive semi-definite by every operation
/// in this module: eigenvalues in `[-1e-12, 0)` are clipped to zero silently
/// (numerical round-off), anything below that is clipped with a warning.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionBelief {
    /// Mean position in the navigation frame, metres.
    pub mean: Vector2<f64>,
    /// Position covariance, m².
    pub cov: Matrix2<f64>,
    /// Time the belief refers to, seconds.
    pub timestamp: f64,
}

impl PositionBelief {
    /// Builds a belief, verifying finiteness and symmetry and clipping the
    /// covariance onto the PSD cone.
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>, timestamp: f64) -> Result<Self> {
        let mut belief = Self {
            mean,
            cov,
            timestamp,
        };
        belief.validate()?;
        belief.cov = clip_psd(&belief.cov);
        Ok(belief)
    }

    /// Checks finiteness of all fields and symmetry of the covariance.
    pub fn validate(&self) -> Result<()> {
        if !(self.mean.iter().all(|v| v.is_finite())
            && self.cov.iter().all(|v| v.is_finite())
            && self.timestamp.is_finite())
        {
            return Err(Error::invalid("position belief must be finite"));
        }
        let scale = 1.0 + self.cov.abs().max();
        if (self.cov[(0, 1)] - self.cov[(1, 0)]).abs() > 1e-9 * scale {
            return Err(Error::invalid("position covariance must be symmetric"));
        }
        Ok(())
    }
}

/// One displacement interval as predicted by the regression head: mean step,
/// per-axis Laplace scale of the step, and the interval length.
#[derive(Debug, Clone, PartialEq)]
pub struct AsleControl {
    /// Predicted displacement over the interval, metres.
    pub dp: Vector2<f64>,
    /// Per-axis Laplace scale of the displacement, metres.
    pub b: Vector2<f64>,
    /// Interval duration, seconds.
    pub dt: f64,
}

impl AsleControl {
    /// Checks finiteness, strictly positive scales, and positive duration.
    pub fn validate(&self) -> Result<()> {
        if !(self.dp.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.dt.is_finite())
        {
            return Err(Error::invalid("displacement control must be finite"));
        }
        if !(self.b.x > 0.0 && self.b.y > 0.0) {
            return Err(Error::invalid(
                "displacement scales must be strictly positive",
            ));
        }
        if self.dt <= 0.0 {
            return Err(Error::invalid("interval duration must be positive"));
        }
        Ok(())
    }

    /// Covariance of the Laplace step noise: `diag(2b̂ₓ², 2b̂ᵧ²)`, with the
    /// scales floored at `1e-9` so the matrix is always invertible.
    pub fn noise_cov(&self) -> Matrix2<f64> {
        let bx = self.b.x.max(SCALE_FLOOR);
        let by = self.b.y.max(SCALE_FLOOR);
        Matrix2::new(2.0 * bx * bx, 0.0, 0.0, 2.0 * by * by)
    }
}

/// External position-like observation `z = H·p + ε`, `ε ~ N(0, R)`, with `H`
/// of shape `k×2` mapping planar position to the `k`-dimensional measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalObservation {
    /// Measurement vector, length `k`.
    pub z: DVector<f64>,
    /// Measurement matrix, `k×2`.
    pub h: DMatrix<f64>,
    /// Measurement noise covariance, `k×k`, symmetric positive definite.
    pub r: DMatrix<f64>,
}

impl ExternalObservation {
    /// Checks dimensions, finiteness, symmetry, and positive definiteness.
    pub fn validate(&self) -> Result<()> {
        let k = self.z.len();
        if k == 0 {
            return Err(Error::invalid("observation must have at least one row"));
        }
        if self.h.nrows() != k || self.h.ncols() != 2 {
            return Err(Error::invalid(format!(
                "measurement matrix must be {k}x2, got {}x{}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.r.nrows() != k || self.r.ncols() != k {
            return Err(Error::invalid(format!(
                "observation noise must be {k}x{k}, got {}x{}",
                self.r.nrows(),
                self.r.ncols()
            )));
        }
        if !(self.z.iter().all(|v| v.is_finite())
            && self.h.iter().all(|v| v.is_finite())
            && self.r.iter().all(|v| v.is_finite()))
        {
            return Err(Error::invalid("observation must be finite"));
        }
        let scale = 1.0 + self.r.abs().max();
        if (&self.r - self.r.transpose()).abs().max() > 1e-9 * scale {
            return Err(Error::invalid("observation noise must be symmetric"));
        }
        if self.r.clone().cholesky().is_none() {
            return Err(Error::invalid(
                "observation noise must be positive definite",
            ));
        }
        Ok(())
    }
}

/// Sweep schedule for the Gibbs loop inside [`fuse_step`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    /// Total Gibbs sweeps per fused step.
    pub sweeps: usize,
    /// Leading sweeps discarded before averaging.
    pub burn_in: usize,
    /// Seed for the τ resampling stream.
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            sweeps: 5,
            burn_in: 2,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    /// Requires `sweeps > burn_in` so at least one sweep survives burn-in.
    pub fn validate(&self) -> Result<()> {
        if self.sweeps <= self.burn_in {
            return Err(Error::invalid(
                "gibbs sweeps must exceed burn-in so at least one sweep is kept",
            ));
        }
        Ok(())
    }
}

/// Auxiliary quantities of the Gaussian–exponential mixture for one step:
/// the mixing variable τ, the step-noise covariance `Σ_w = diag(2b̂²)`, and
/// the raw scale matrix `Σ_b = diag(b̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureAux {
    /// Mixing variable scaling the step-noise covariance.
    pub tau: f64,
    /// Step-noise covariance `diag(2b̂ₓ², 2b̂ᵧ²)`.
    pub sigma_w: Matrix2<f64>,
    /// Diagonal matrix of the raw Laplace scales.
    pub sigma_b: Matrix2<f64>,
}

impl MixtureAux {
    /// Derives the mixture quantities for one control at a given τ.
    pub fn from_control(u: &AsleControl, tau: f64) -> Self {
        let bx = u.b.x.max(SCALE_FLOOR);
        let by = u.b.y.max(SCALE_FLOOR);
        Self {
            tau,
            sigma_w: u.noise_cov(),
            sigma_b: Matrix2::new(bx, 0.0, 0.0, by),
        }
    }
}

/// Confidence ellipse of a position belief.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    /// Ellipse centre (the belief mean).
    pub center: Vector2<f64>,
    /// Semi-axis along the dominant eigenvector, metres.
    pub semi_major: f64,
    /// Semi-axis along the orthogonal eigenvector, metres.
    pub semi_minor: f64,
    /// Direction of the major axis, radians in `(-π/2, π/2]` (an ellipse is
    /// symmetric under rotation by π).
    pub orientation: f64,
}

impl Ellipse {
    /// Samples the ellipse boundary as `points` vertices, starting on the
    /// major axis and walking counter-clockwise.
    pub fn polyline(&self, points: usize) -> Vec<[f64; 2]> {
        let (sin_o, cos_o) = self.orientation.sin_cos();
        (0..points)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / points as f64;
                let x = self.semi_major * t.cos();
                let y = self.semi_minor * t.sin();
                [
                    self.center.x + cos_o * x - sin_o * y,
                    self.center.y + sin_o * x + cos_o * y,
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Covariance hygiene
// ---------------------------------------------------------------------------

/// Projects a covariance onto the symmetric PSD cone.  Symmetric PSD input is
/// returned unchanged (bit-exact); eigenvalues below `-1e-12` indicate a real
/// loss of semi-definiteness and are logged before clipping.
fn clip_psd(cov: &Matrix2<f64>) -> Matrix2<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return sym;
    }
    if min < -PSD_TOL {
        log::warn!("covariance eigenvalue {min:.3e} clipped to zero");
    }
    let lam = eig.eigenvalues.map(|l| l.max(0.0));
    eig.eigenvectors * Matrix2::from_diagonal(&lam) * eig.eigenvectors.transpose()
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Draws one planar Laplace noise sample through the Gaussian–exponential
/// mixture: per axis, `τ ~ Exp(1)` then `w = √(2τ)·b·n` with `n ~ N(0,1)`,
/// whose marginal is exactly `Laplace(0, b)`.
///
/// Scales must be finite and non-negative; a floor of `1e-9` is applied so a
/// zero scale yields (essentially) zero noise rather than a degenerate
/// distribution.  The draw order per axis is (τₓ, nₓ, τᵧ, nᵧ), so a given
/// seed always produces the same sample.
pub fn laplace_mixture_sample(b: &Vector2<f64>, seed: u64) -> Result<Vector2<f64>> {
    if !(b.x.is_finite() && b.y.is_finite()) || b.x < 0.0 || b.y < 0.0 {
        return Err(Error::invalid(
            "Laplace scales must be finite and non-negative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wx = mixture_draw(b.x, &mut rng);
    let wy = mixture_draw(b.y, &mut rng);
    Ok(Vector2::new(wx, wy))
}

fn mixture_draw(b: f64, rng: &mut ChaCha8Rng) -> f64 {
    let exp = Exp::new(1.0).expect("unit-rate exponential is always valid");
    let tau: f64 = exp.sample(rng);
    let n: f64 = StandardNormal.sample(rng);
    (2.0 * tau).sqrt() * b.max(SCALE_FLOOR) * n
}

/// Advances the dead-reckoning chain by one displacement interval: the mean
/// shifts by the predicted step, the covariance grows by the Laplace step
/// variance `diag(2b̂ₓ², 2b̂ᵧ²)`, and the timestamp advances by the interval.
pub fn chain_step(belief: &PositionBelief, u: &AsleControl) -> Result<PositionBelief> {
    belief.validate()?;
    u.validate()?;
    PositionBelief::new(
        belief.mean + u.dp,
        belief.cov + u.noise_cov(),
        belief.timestamp + u.dt,
    )
}

/// Squared Mahalanobis mismatch of a position step under the step-noise
/// covariance: `δ = (p_prev − p_curr)ᵀ Σ_w⁻¹ (p_prev − p_curr)`.
pub fn gibbs_delta(
    p_prev: &Vector2<f64>,
    p_curr: &Vector2<f64>,
    sigma_w: &Matrix2<f64>,
) -> Result<f64> {
    if !(p_prev.iter().all(|v| v.is_finite())
        && p_curr.iter().all(|v| v.is_finite())
        && sigma_w.iter().all(|v| v.is_finite()))
    {
        return Err(Error::invalid("gibbs delta inputs must be finite"));
    }
    let inv = sigma_w
        .try_inverse()
        .ok_or_else(|| Error::invalid("singular step-noise covariance"))?;
    let d = p_prev - p_curr;
    Ok((d.transpose() * inv * d)[(0, 0)])
}

/// Resamples the mixture variable τ from its conditional given a step
/// mismatch δ: one inverse-Gaussian draw with mean `√δ` and shape `δ`.
/// `δ = 0` degenerates the parameters, so a floor value of `1e-6` is
/// returned instead.
pub fn gibbs_tau_resample(delta: f64, seed: u64) -> Result<f64> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::invalid(
            "step mismatch must be finite and non-negative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(tau_conditional_draw(delta, &mut rng))
}

fn tau_conditional_draw(delta: f64, rng: &mut ChaCha8Rng) -> f64 {
    if delta <= 0.0 {
        return TAU_FLOOR;
    }
    let ig = InverseGaussian::new(delta.sqrt(), delta)
        .expect("positive mean and shape are valid inverse-Gaussian parameters");
    let draw: f64 = ig.sample(rng);
    // The sampling transform is positive in exact arithmetic; guard the
    // floating-point edge so τ can never poison a covariance with zero.
    draw.max(f64::MIN_POSITIVE)
}

/// Fuses one displacement interval with an external observation.
///
/// Conditioned on τ the model is linear-Gaussian, so each Gibbs sweep runs an
/// exact Kalman step against the *prior* belief: predict with process noise
/// `τ·Σ_w`, update on the observation (Joseph form), measure the step
/// mismatch δ between predicted and updated means, and resample τ for the
/// next sweep.  τ starts at 1 (the prior mean of `Exp(1)`), so a single-sweep
/// schedule reproduces a textbook Kalman filter step exactly.
///
/// The returned belief averages the post-burn-in sweep posteriors; its
/// covariance is the mean sweep covariance plus the between-sweep spread of
/// the means.
pub fn fuse_step(
    belief: &PositionBelief,
    u: &AsleControl,
    obs: &ExternalObservation,
    cfg: &GibbsConfig,
) -> Result<PositionBelief> {
    belief.validate()?;
    u.validate()?;
    obs.validate()?;
    cfg.validate()?;

    let sigma_w = u.noise_cov();
    let prior_cov = clip_psd(&belief.cov);
    let m_pred = belief.mean + u.dp;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tau = 1.0_f64;

    let kept = cfg.sweeps - cfg.burn_in;
    let mut means: Vec<Vector2<f64>> = Vec::with_capacity(kept);
    let mut covs: Vec<Matrix2<f64>> = Vec::with_capacity(kept);
    for sweep in 0..cfg.sweeps {
        let p_pred = clip_psd(&(prior_cov + sigma_w * tau));
        let (m_upd, p_upd) = kalman_update(&m_pred, &p_pred, obs)?;
        let delta = gibbs_delta(&m_pred, &m_upd, &sigma_w)?.max(0.0);
        tau = tau_conditional_draw(delta, &mut rng);
        if sweep >= cfg.burn_in {
            means.push(m_upd);
            covs.push(p_upd);
        }
    }

    let n = kept as f64;
    let mut mean = Vector2::zeros();
    for m in &means {
        mean += m;
    }
    mean /= n;
    let mut cov = Matrix2::zeros();
    for p in &covs {
        cov += p;
    }
    cov /= n;
    for m in &means {
        let d = m - mean;
        cov += d * d.transpose() / n;
    }

    PositionBelief::new(mean, cov, belief.timestamp + u.dt)
}

/// One exact Kalman measurement update in Joseph form (numerically PSD even
/// with a suboptimal gain).
fn kalman_update(
    m_pred: &Vector2<f64>,
    p_pred: &Matrix2<f64>,
    obs: &ExternalObservation,
) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let hp = &obs.h * dmat2(p_pred); // k×2
    let s = &hp * obs.h.transpose() + &obs.r; // k×k innovation covariance
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric(
            "innovation covariance overflowed in fusion update",
        ));
    }
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::numeric("singular innovation covariance in fusion update"))?;
    let gain = chol.solve(&hp).transpose(); // 2×k, equals P_pred Hᵀ S⁻¹
    let innovation = &obs.z - &obs.h * dvec2(m_pred);
    let m_upd = m_pred + v2(&(&gain * &innovation));
    let i_kh = Matrix2::identity() - m2(&(&gain * &obs.h));
    let p_upd =
        i_kh * p_pred * i_kh.transpose() + m2(&(&gain * &obs.r * gain.transpose()));
    Ok((m_upd, clip_psd(&p_upd)))
}

/// Converts a belief into the confidence ellipse that contains the stated
/// probability mass.  For 2 degrees of freedom the chi-square quantile is
/// `χ²₂(c) = −2·ln(1−c)`; the semi-axes are `√(χ²·λᵢ)` along the covariance
/// eigenvectors.
pub fn uncertainty_ellipse(belief: &PositionBelief, confidence: f64) -> Result<Ellipse> {
    belief.validate()?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("confidence must lie strictly in (0, 1)"));
    }
    let chi2 = -2.0 * (1.0 - confidence).ln();
    let eig = SymmetricEigen::new(clip_psd(&belief.cov));
    let (i_major, i_minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let semi_major = (chi2 * eig.eigenvalues[i_major].max(0.0)).sqrt();
    let semi_minor = (chi2 * eig.eigenvalues[i_minor].max(0.0)).sqrt();
    let axis = eig.eigenvectors.column(i_major);
    let mut orientation = axis[1].atan2(axis[0]);
    if orientation <= -FRAC_PI_2 {
        orientation += PI;
    } else if orientation > FRAC_PI_2 {
        orientation -= PI;
    }
    Ok(Ellipse {
        center: belief.mean,
        semi_major,
        semi_minor,
        orientation,
    })
}

// ---------------------------------------------------------------------------
// Static/dynamic shims (nalgebra keeps the 2-dimensional state static while
// observations are dynamically sized).
// ---------------------------------------------------------------------------

fn dmat2(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

fn dvec2(v: &Vector2<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[v.x, v.y])
}

fn m2(m: &DMatrix<f64>) -> Matrix2<f64> {
    debug_assert_eq!((m.nrows(), m.ncols()), (2, 2));
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

fn v2(v: &DVector<f64>) -> Vector2<f64> {
    debug_assert_eq!(v.len(), 2);
    Vector2::new(v[0], v[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Inverse-CDF Laplace sampler, independent of the mixture construction,
    /// used as the oracle noise source in Monte-Carlo tests.
    fn laplace_inv_cdf(u: f64, b: f64) -> f64 {
        let c = u - 0.5;
        -b * c.signum() * (1.0 - 2.0 * c.abs()).ln()
    }

    fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
        rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12)
    }

    fn laplace_cdf(x: f64, b: f64) -> f64 {
        if x < 0.0 {
            0.5 * (x / b).exp()
        } else {
            1.0 - 0.5 * (-x / b).exp()
        }
    }

    fn random_spd2(rng: &mut ChaCha8Rng, ridge: f64) -> Matrix2<f64> {
        let a = Matrix2::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        );
        a * a.transpose() + Matrix2::identity() * ridge
    }

    fn random_spd(rng: &mut ChaCha8Rng, k: usize, ridge: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(k, k) * ridge
    }

    // -- scale-mixture sampler ------------------------------------------------

    #[test]
    fn mixture_marginal_matches_laplace_moments() {
        let n = 1_000_000usize;
        let b = Vector2::new(1.0, 1.0);
        let mut sum = Vector2::zeros();
        let mut sum2 = Vector2::zeros();
        let mut sum4 = Vector2::zeros();
        for i in 0..n {
            let w = laplace_mixture_sample(&b, i as u64).unwrap();
            sum += w;
            sum2 += w.map(|x| x * x);
            sum4 += w.map(|x| x * x * x * x);
        }
        let nf = n as f64;
        for axis in 0..2 {
            let mean = sum[axis] / nf;
            let var = sum2[axis] / nf - mean * mean;
            let m4 = sum4[axis] / nf;
            let excess_kurtosis = m4 / (var * var) - 3.0;
            assert!(mean.abs() < 0.01, "mean {mean} axis {axis}");
            // Laplace(0, 1): variance 2b² = 2, excess kurtosis 3.
            assert!(
                (1.96..=2.04).contains(&var),
                "variance {var} axis {axis} outside [1.96, 2.04]"
            );
            assert!(
                (2.7..=3.3).contains(&excess_kurtosis),
                "excess kurtosis {excess_kurtosis} axis {axis} outside [2.7, 3.3]"
            );
        }
    }

    #[test]
    fn mixture_marginal_passes_ks_against_laplace_cdf() {
        let n = 100_000usize;
        let b = Vector2::new(1.0, 0.5);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let w = laplace_mixture_sample(&b, 777_000 + i as u64).unwrap();
            xs.push(w.x);
            ys.push(w.y);
        }
        for (samples, scale) in [(&mut xs, 1.0), (&mut ys, 0.5)] {
            samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut d: f64 = 0.0;
            for (i, &x) in samples.iter().enumerate() {
                let f = laplace_cdf(x, scale);
                let hi = (i + 1) as f64 / n as f64 - f;
                let lo = f - i as f64 / n as f64;
                d = d.max(hi).max(lo);
            }
            let stat = d * (n as f64).sqrt();
            // 1.6276 is the asymptotic Kolmogorov-Smirnov critical value at α = 0.01.
            assert!(stat < 1.6276, "KS statistic {stat} at scale {scale}");
        }
    }

    #[test]
    fn mixture_floors_zero_scale_and_rejects_bad_input() {
        for seed in 0..100 {
            let w = laplace_mixture_sample(&Vector2::new(0.0, 1.0), seed).unwrap();
            assert!(w.x.abs() < 1e-6, "floored axis produced {}", w.x);
            assert!(w.x.is_finite() && w.y.is_finite());
        }
        assert!(laplace_mixture_sample(&Vector2::new(-1.0, 1.0), 0).is_err());
        assert!(laplace_mixture_sample(&Vector2::new(f64::NAN, 1.0), 0).is_err());
    }

    #[test]
    fn mixture_is_deterministic_in_the_seed() {
        let b = Vector2::new(0.8, 1.3);
        let w1 = laplace_mixture_sample(&b, 99).unwrap();
        let w2 = laplace_mixture_sample(&b, 99).unwrap();
        let w3 = laplace_mixture_sample(&b, 100).unwrap();
        assert_eq!(w1, w2);
        assert_ne!(w1, w3);
    }

    // -- dead-reckoning chain -------------------------------------------------

    #[test]
    fn chain_accumulates_mean_covariance_and_time_exactly() {
        let mut belief = PositionBelief {
            mean: Vector2::new(1.0, -2.0),
            cov: Matrix2::new(0.5, 0.0, 0.0, 0.25),
            timestamp: 10.0,
        };
        let u = AsleControl {
            dp: Vector2::new(0.5, 0.25),
            b: Vector2::new(1.0, 1.0),
            dt: 2.0,
        };
        for _ in 0..7 {
            belief = chain_step(&belief, &u).unwrap();
        }
        // Seven exact additions: mean += dp, cov += diag(2, 2), t += dt.
        assert_eq!(belief.mean, Vector2::new(4.5, -0.25));
        assert_eq!(belief.cov, Matrix2::new(14.5, 0.0, 0.0, 14.25));
        assert_eq!(belief.timestamp, 24.0);
    }

    #[test]
    fn chain_rejects_degenerate_controls() {
        let belief = PositionBelief {
            mean: Vector2::zeros(),
            cov: Matrix2::zeros(),
            timestamp: 0.0,
        };
        let ok = AsleControl {
            dp: Vector2::zeros(),
            b: Vector2::new(0.1, 0.1),
            dt: 1.0,
        };
        assert!(chain_step(&belief, &ok).is_ok());
        let mut bad = ok.clone();
        bad.dt = 0.0;
        assert!(chain_step(&belief, &bad).is_err());
        let mut bad = ok.clone();
        bad.b.y = 0.0;
        assert!(chain_step(&belief, &bad).is_err());
        let mut bad = ok;
        bad.dp.x = f64::INFINITY;
        assert!(chain_step(&belief, &bad).is_err());
    }

    #[test]
    fn chain_covariance_matches_monte_carlo_spread() {
        let steps = 20usize;
        let chains = 10_000usize;
        let b = Vector2::new(0.7, 1.2);
        let dp = Vector2::new(0.3, -0.1);
        let u = AsleControl { dp, b, dt: 1.0 };

        let mut belief = PositionBelief {
            mean: Vector2::zeros(),
            cov: Matrix2::zeros(),
            timestamp: 0.0,
        };
        for _ in 0..steps {
            belief = chain_step(&belief, &u).unwrap();
        }

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut sum = Vector2::zeros();
        let mut sum_outer = Matrix2::zeros();
        for _ in 0..chains {
            let mut pos = Vector2::zeros();
            for _ in 0..steps {
                let wx = laplace_inv_cdf(uniform_open(&mut rng), b.x);
                let wy = laplace_inv_cdf(uniform_open(&mut rng), b.y);
                pos += dp + Vector2::new(wx, wy);
            }
            sum += pos;
            sum_outer += pos * pos.transpose();
        }
        let nf = chains as f64;
        let emp_mean = sum / nf;
        let emp_cov = sum_outer / nf - emp_mean * emp_mean.transpose();

        assert!((emp_mean - belief.mean).abs().max() < 0.3);
        for axis in 0..2 {
            let ana = belief.cov[(axis, axis)];
            let emp = emp_cov[(axis, axis)];
            assert!(
                ((emp - ana) / ana).abs() < 0.05,
                "axis {axis}: analytic {ana}, empirical {emp}"
            );
        }
        assert!(emp_cov[(0, 1)].abs() < 1.5);
    }

    #[test]
    fn chain_covariance_eigenvalues_never_decrease() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut belief = PositionBelief::new(
            Vector2::zeros(),
            random_spd2(&mut rng, 0.01),
            0.0,
        )
        .unwrap();
        for _ in 0..30 {
            let u = AsleControl {
                dp: Vector2::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                b: Vector2::new(
                    0.05 + rng.random::<f64>(),
                    0.05 + rng.random::<f64>(),
                ),
                dt: 0.5 + rng.random::<f64>(),
            };
            let next = chain_step(&belief, &u).unwrap();
            let mut before = SymmetricEigen::new(belief.cov).eigenvalues;
            let mut after = SymmetricEigen::new(next.cov).eigenvalues;
            before.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap());
            after.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap());
            for i in 0..2 {
                assert!(
                    after[i] >= before[i] - 1e-12,
                    "eigenvalue {i} shrank: {} -> {}",
                    before[i],
                    after[i]
                );
            }
            belief = next;
        }
    }

    #[test]
    fn chain_ellipse_covers_true_terminal_position() {
        let chains = 10_000usize;
        let steps = 20usize;
        let b = Vector2::new(0.5, 0.8);
        let dp = Vector2::new(0.4, 0.2);
        let u = AsleControl { dp, b, dt: 1.0 };
        let chi2 = -2.0 * (1.0 - 0.997f64).ln();

        let mut belief = PositionBelief {
            mean: Vector2::zeros(),
            cov: Matrix2::zeros(),
            timestamp: 0.0,
        };
        for _ in 0..steps {
            belief = chain_step(&belief, &u).unwrap();
        }
        let inv = belief.cov.try_inverse().unwrap();

        let mut hits = 0usize;
        for i in 0..chains {
            let mut rng = ChaCha8Rng::seed_from_u64(9_000 + i as u64);
            let mut truth = Vector2::zeros();
            for _ in 0..steps {
                let wx = laplace_inv_cdf(uniform_open(&mut rng), b.x);
                let wy = laplace_inv_cdf(uniform_open(&mut rng), b.y);
                truth += dp + Vector2::new(wx, wy);
            }
            let d = truth - belief.mean;
            if (d.transpose() * inv * d)[(0, 0)] <= chi2 {
                hits += 1;
            }
        }
        let rate = hits as f64 / chains as f64;
        assert!(
            rate >= 0.990,
            "99.7% ellipse covered only {:.2}% of terminal positions",
            rate * 100.0
        );
    }

    // -- Gibbs pieces -----------------------------------------------------------

    #[test]
    fn gibbs_delta_matches_quadratic_form() {
        let sigma = Matrix2::new(2.0, 0.0, 0.0, 2.0);
        let zero = gibbs_delta(&Vector2::new(1.0, 2.0), &Vector2::new(1.0, 2.0), &sigma).unwrap();
        assert_eq!(zero, 0.0);

        // Unit offset along x under diag(2, 2): δ = 1 / 2.
        let d = gibbs_delta(&Vector2::new(1.0, 0.0), &Vector2::new(0.0, 0.0), &sigma).unwrap();
        assert_eq!(d, 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let s = random_spd2(&mut rng, 0.1);
            let a = Vector2::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let bb = Vector2::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let delta = gibbs_delta(&a, &bb, &s).unwrap();
            let diff = a - bb;
            let reference = (diff.transpose() * s.try_inverse().unwrap() * diff)[(0, 0)];
            assert!((delta - reference).abs() <= 1e-12 * (1.0 + reference.abs()));
            assert!(delta >= 0.0);
        }

        let singular = Matrix2::new(0.0, 0.0, 0.0, 1.0);
        assert!(gibbs_delta(&Vector2::zeros(), &Vector2::new(1.0, 0.0), &singular).is_err());
    }

    #[test]
    fn tau_resample_matches_inverse_gaussian_moments() {
        // mean √δ = 2 and shape δ = 4 give variance mean³/shape = 2.
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut min = f64::INFINITY;
        for i in 0..n {
            let tau = gibbs_tau_resample(4.0, i as u64).unwrap();
            sum += tau;
            sum2 += tau * tau;
            min = min.min(tau);
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = sum2 / nf - mean * mean;
        assert!(min > 0.0);
        assert!((1.99..=2.01).contains(&mean), "mean {mean}");
        assert!((var - 2.0).abs() / 2.0 < 0.05, "variance {var}");
    }

    #[test]
    fn tau_resample_floors_zero_mismatch() {
        assert_eq!(gibbs_tau_resample(0.0, 123).unwrap(), 1e-6);
        assert!(gibbs_tau_resample(-1.0, 0).is_err());
        assert!(gibbs_tau_resample(f64::NAN, 0).is_err());
        let a = gibbs_tau_resample(2.5, 5).unwrap();
        let b = gibbs_tau_resample(2.5, 5).unwrap();
        let c = gibbs_tau_resample(2.5, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    // -- fusion -----------------------------------------------------------------

    /// Textbook Kalman predict/update written directly against nalgebra's
    /// dynamic types with an explicit matrix inverse, as an independent oracle.
    fn kalman_oracle(
        belief: &PositionBelief,
        u: &AsleControl,
        obs: &ExternalObservation,
    ) -> (Vector2<f64>, Matrix2<f64>) {
        let m_pred = dvec2(&(belief.mean + u.dp));
        let p_pred = dmat2(&(belief.cov + u.noise_cov()));
        let s = &obs.h * &p_pred * obs.h.transpose() + &obs.r;
        let s_inv = s.try_inverse().unwrap();
        let gain = &p_pred * obs.h.transpose() * s_inv;
        let m = &m_pred + &gain * (&obs.z - &obs.h * &m_pred);
        let i_kh = DMatrix::identity(2, 2) - &gain * &obs.h;
        let p = &i_kh * &p_pred * i_kh.transpose() + &gain * &obs.r * gain.transpose();
        (v2(&m), m2(&p))
    }

    #[test]
    fn single_sweep_fusion_equals_textbook_kalman() {
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        let cfg = GibbsConfig {
            sweeps: 1,
            burn_in: 0,
            seed: 0,
        };
        for case in 0..100 {
            let k = 1 + case % 3;
            let belief = PositionBelief::new(
                Vector2::new(rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0),
                random_spd2(&mut rng, 0.1),
                case as f64,
            )
            .unwrap();
            let u = AsleControl {
                dp: Vector2::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                b: Vector2::new(
                    0.2 + 1.8 * rng.random::<f64>(),
                    0.2 + 1.8 * rng.random::<f64>(),
                ),
                dt: 1.0,
            };
            let obs = ExternalObservation {
                z: DVector::from_fn(k, |_, _| rng.random::<f64>() * 6.0 - 3.0),
                h: DMatrix::from_fn(k, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0),
                r: random_spd(&mut rng, k, 0.5),
            };

            let fused = fuse_step(&belief, &u, &obs, &cfg).unwrap();
            let (m_ref, p_ref) = kalman_oracle(&belief, &u, &obs);
            assert!(
                (fused.mean - m_ref).abs().max() <= 1e-9,
                "case {case}: mean mismatch {:?} vs {:?}",
                fused.mean,
                m_ref
            );
            assert!(
                (fused.cov - p_ref).abs().max() <= 1e-9,
                "case {case}: covariance mismatch"
            );
            assert_eq!(fused.timestamp, belief.timestamp + u.dt);
        }
    }

    #[test]
    fn uninformative_observation_reduces_to_chain() {
        let belief = PositionBelief::new(
            Vector2::new(2.0, -1.0),
            Matrix2::new(0.4, 0.1, 0.1, 0.3),
            5.0,
        )
        .unwrap();
        let u = AsleControl {
            dp: Vector2::new(1.2, 0.4),
            b: Vector2::new(0.6, 0.9),
            dt: 2.0,
        };
        let obs = ExternalObservation {
            z: DVector::from_column_slice(&[5.0, -3.0]),
            h: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2) * 1e12,
        };
        let chained = chain_step(&belief, &u).unwrap();

        // In the Kalman regime (single sweep, τ = 1) the huge-R limit must
        // reproduce the pure chain in both moments.
        let kalman_cfg = GibbsConfig {
            sweeps: 1,
            burn_in: 0,
            seed: 0,
        };
        let fused = fuse_step(&belief, &u, &obs, &kalman_cfg).unwrap();
        for i in 0..2 {
            let m_ref = chained.mean[i];
            assert!((fused.mean[i] - m_ref).abs() <= 1e-6 * (1.0 + m_ref.abs()));
            for j in 0..2 {
                let c_ref = chained.cov[(i, j)];
                assert!((fused.cov[(i, j)] - c_ref).abs() <= 1e-6 * (1.0 + c_ref.abs()));
            }
        }

        // Multi-sweep Gibbs: the mean still reduces to the chain (the gain is
        // ~1e-12 in every sweep).  The kept-sweep covariances run at the
        // resampled τ, which collapses when the observation carries no
        // information, so covariance equality is specific to the single-sweep
        // schedule above.
        let fused = fuse_step(&belief, &u, &obs, &GibbsConfig::default()).unwrap();
        for i in 0..2 {
            let m_ref = chained.mean[i];
            assert!((fused.mean[i] - m_ref).abs() <= 1e-6 * (1.0 + m_ref.abs()));
        }
    }

    #[test]
    fn near_exact_observation_pins_mean_to_measurement() {
        let belief = PositionBelief::new(
            Vector2::new(0.0, 0.0),
            Matrix2::new(0.5, 0.0, 0.0, 0.5),
            0.0,
        )
        .unwrap();
        let u = AsleControl {
            dp: Vector2::new(1.0, 1.0),
            b: Vector2::new(0.5, 0.5),
            dt: 1.0,
        };
        let z = Vector2::new(3.5, -1.25);
        let obs = ExternalObservation {
            z: dvec2(&z),
            h: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2) * 1e-12,
        };
        let fused = fuse_step(&belief, &u, &obs, &GibbsConfig::default()).unwrap();
        assert!((fused.mean - z).abs().max() <= 1e-6 * (1.0 + z.abs().max()));
        assert!(fused.cov.trace() < 1e-9);
    }

    #[test]
    fn fusion_never_increases_trace_for_direct_position_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..20 {
            let belief = PositionBelief::new(
                Vector2::new(rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0),
                random_spd2(&mut rng, 0.05),
                0.0,
            )
            .unwrap();
            let u = AsleControl {
                dp: Vector2::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                b: Vector2::new(
                    0.2 + rng.random::<f64>(),
                    0.2 + rng.random::<f64>(),
                ),
                dt: 1.0,
            };
            let m_pred = belief.mean + u.dp;
            let obs = ExternalObservation {
                z: DVector::from_column_slice(&[
                    m_pred.x + 2.0 * (rng.random::<f64>() - 0.5),
                    m_pred.y + 2.0 * (rng.random::<f64>() - 0.5),
                ]),
                h: DMatrix::identity(2, 2),
                r: random_spd(&mut rng, 2, 0.3),
            };
            let cfg = GibbsConfig {
                seed: case,
                ..GibbsConfig::default()
            };
            let fused = fuse_step(&belief, &u, &obs, &cfg).unwrap();
            let chained = chain_step(&belief, &u).unwrap();
            assert!(
                fused.cov.trace() <= chained.cov.trace() + 1e-12,
                "case {case}: fusion grew the trace: {} > {}",
                fused.cov.trace(),
                chained.cov.trace()
            );
        }
    }

    #[test]
    fn fusion_is_deterministic_in_the_seed() {
        let belief = PositionBelief::new(
            Vector2::new(1.0, 1.0),
            Matrix2::new(0.3, 0.05, 0.05, 0.2),
            0.0,
        )
        .unwrap();
        let u = AsleControl {
            dp: Vector2::new(0.8, -0.2),
            b: Vector2::new(0.4, 0.6),
            dt: 1.0,
        };
        let obs = ExternalObservation {
            z: DVector::from_column_slice(&[3.0, 1.5]),
            h: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2) * 0.5,
        };
        let cfg = GibbsConfig {
            seed: 31,
            ..GibbsConfig::default()
        };
        let a = fuse_step(&belief, &u, &obs, &cfg).unwrap();
        let b = fuse_step(&belief, &u, &obs, &cfg).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.cov, b.cov);

        let other = fuse_step(
            &belief,
            &u,
            &obs,
            &GibbsConfig {
                seed: 32,
                ..GibbsConfig::default()
            },
        )
        .unwrap();
        assert_ne!(a.mean, other.mean);
    }

    #[test]
    fn fusion_surfaces_numeric_breakdown() {
        let belief = PositionBelief::new(Vector2::zeros(), Matrix2::identity(), 0.0).unwrap();
        let u = AsleControl {
            dp: Vector2::zeros(),
            b: Vector2::new(1.0, 1.0),
            dt: 1.0,
        };
        // Validation passes (R is SPD, H finite) but the innovation
        // covariance overflows to infinity during the sweep.
        let obs = ExternalObservation {
            z: DVector::from_column_slice(&[0.0]),
            h: DMatrix::from_row_slice(1, 2, &[1e200, 0.0]),
            r: DMatrix::identity(1, 1),
        };
        let err = fuse_step(&belief, &u, &obs, &GibbsConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
    }

    // -- ellipse ------------------------------------------------------------------

    #[test]
    fn ellipse_quantile_matches_closed_form() {
        let belief =
            PositionBelief::new(Vector2::new(1.0, 2.0), Matrix2::identity(), 0.0).unwrap();
        let e = uncertainty_ellipse(&belief, 0.997).unwrap();
        // χ²₂(0.997) = −2 ln(0.003) ⇒ semi-axes √χ² ≈ 3.4086 for unit covariance.
        let expected = (-2.0 * 0.003f64.ln()).sqrt();
        assert!((e.semi_major - expected).abs() < 1e-9);
        assert!((e.semi_minor - expected).abs() < 1e-9);
        assert!((e.semi_major - 3.409).abs() < 1e-3);
        assert_eq!(e.center, belief.mean);

        let wide =
            PositionBelief::new(Vector2::zeros(), Matrix2::new(4.0, 0.0, 0.0, 1.0), 0.0).unwrap();
        let e = uncertainty_ellipse(&wide, 0.997).unwrap();
        assert_eq!(e.semi_major / e.semi_minor, 2.0);
        assert!(e.orientation.abs() < 1e-9, "major axis should align with x");

        // Containment mass grows with the confidence level.
        let lo = uncertainty_ellipse(&belief, 0.5).unwrap();
        let hi = uncertainty_ellipse(&belief, 0.9).unwrap();
        assert!(hi.semi_major > lo.semi_major);

        assert!(uncertainty_ellipse(&belief, 0.0).is_err());
        assert!(uncertainty_ellipse(&belief, 1.0).is_err());
    }

    #[test]
    fn ellipse_orientation_follows_the_covariance_eigenvectors() {
        let theta: f64 = 30.0_f64.to_radians();
        let rot = Matrix2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos());
        let cov = rot * Matrix2::new(4.0, 0.0, 0.0, 1.0) * rot.transpose();
        let belief = PositionBelief::new(Vector2::zeros(), cov, 0.0).unwrap();
        let e = uncertainty_ellipse(&belief, 0.9).unwrap();
        assert!((e.orientation - theta).abs() < 1e-9, "{}", e.orientation);
        let chi2 = -2.0 * (1.0 - 0.9f64).ln();
        assert!((e.semi_major - (chi2 * 4.0).sqrt()).abs() < 1e-9);
        assert!((e.semi_minor - chi2.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ellipse_polyline_lies_on_the_boundary() {
        let theta: f64 = -55.0_f64.to_radians();
        let rot = Matrix2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos());
        let cov = rot * Matrix2::new(2.25, 0.0, 0.0, 0.49) * rot.transpose();
        let belief = PositionBelief::new(Vector2::new(-3.0, 7.0), cov, 0.0).unwrap();
        let e = uncertainty_ellipse(&belief, 0.95).unwrap();
        let pts = e.polyline(64);
        assert_eq!(pts.len(), 64);
        let (sin_o, cos_o) = e.orientation.sin_cos();
        for p in &pts {
            let dx = p[0] - e.center.x;
            let dy = p[1] - e.center.y;
            // Rotate back into the ellipse frame and check the implicit equation.
            let x = cos_o * dx + sin_o * dy;
            let y = -sin_o * dx + cos_o * dy;
            let v = (x / e.semi_major).powi(2) + (y / e.semi_minor).powi(2);
            assert!((v - 1.0).abs() < 1e-9);
        }
        // First vertex sits on the major axis.
        assert!((pts[0][0] - (e.center.x + e.semi_major * cos_o)).abs() < 1e-9);
        assert!((pts[0][1] - (e.center.y + e.semi_major * sin_o)).abs() < 1e-9);
    }

    // -- validation and hygiene ------------------------------------------------------

    #[test]
    fn belief_constructor_clips_and_rejects() {
        // A covariance that fails PSD by a hair is clipped silently.
        let eps = 5e-14;
        let nearly = Matrix2::new(1.0, 1.0 + eps, 1.0 + eps, 1.0);
        let belief = PositionBelief::new(Vector2::zeros(), nearly, 0.0).unwrap();
        let eig = SymmetricEigen::new(belief.cov);
        // Re-decomposing the clipped matrix reintroduces round-off at the
        // 1e-16 level; the documented invariant is eigenvalues ≥ -1e-12.
        assert!(eig.eigenvalues.min() >= -1e-15);
        assert!((belief.cov - nearly).abs().max() < 1e-12);

        // A genuinely indefinite covariance is projected onto the PSD cone.
        let indefinite = Matrix2::new(1.0, 0.0, 0.0, -0.5);
        let belief = PositionBelief::new(Vector2::zeros(), indefinite, 0.0).unwrap();
        assert!((belief.cov - Matrix2::new(1.0, 0.0, 0.0, 0.0)).abs().max() < 1e-12);

        let asymmetric = Matrix2::new(1.0, 0.3, 0.7, 1.0);
        assert!(PositionBelief::new(Vector2::zeros(), asymmetric, 0.0).is_err());
        assert!(PositionBelief::new(
            Vector2::new(f64::NAN, 0.0),
            Matrix2::identity(),
            0.0
        )
        .is_err());
    }

    #[test]
    fn gibbs_config_requires_surviving_sweeps() {
        assert!(GibbsConfig::default().validate().is_ok());
        let bad = GibbsConfig {
            sweeps: 2,
            burn_in: 2,
            seed: 0,
        };
        assert!(bad.validate().is_err());
        let bad = GibbsConfig {
            sweeps: 0,
            burn_in: 0,
            seed: 0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn observation_validation_rejects_malformed_inputs() {
        let ok = ExternalObservation {
            z: DVector::from_column_slice(&[1.0]),
            h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            r: DMatrix::identity(1, 1),
        };
        assert!(ok.validate().is_ok());

        let mut bad = ok.clone();
        bad.h = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.z = DVector::from_column_slice(&[1.0, 2.0]);
        assert!(bad.validate().is_err());

        let bad = ExternalObservation {
            z: DVector::from_column_slice(&[1.0, 2.0]),
            h: DMatrix::identity(2, 2),
            r: DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.4, 1.0]),
        };
        assert!(bad.validate().is_err(), "asymmetric noise accepted");

        let bad = ExternalObservation {
            z: DVector::from_column_slice(&[1.0, 2.0]),
            h: DMatrix::identity(2, 2),
            r: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        };
        assert!(bad.validate().is_err(), "indefinite noise accepted");
    }

    #[test]
    fn mixture_aux_exposes_both_scale_matrices() {
        let u = AsleControl {
            dp: Vector2::zeros(),
            b: Vector2::new(0.5, 2.0),
            dt: 1.0,
        };
        let aux = MixtureAux::from_control(&u, 1.5);
        assert_eq!(aux.tau, 1.5);
        assert_eq!(aux.sigma_w, Matrix2::new(0.5, 0.0, 0.0, 8.0));
        assert_eq!(aux.sigma_b, Matrix2::new(0.5, 0.0, 0.0, 2.0));
    }
}
