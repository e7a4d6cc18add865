//! Trajectory evaluation metrics and the uncertainty-calibration harness.
//!
//! Position metrics compare an estimated trajectory against ground truth
//! after nearest-neighbour timestamp matching:
//!
//! * **MAE** — mean Euclidean distance `‖p̂ − p‖₂` over matched points,
//!   metres.
//! * **ADE** — mean velocity-error magnitude `‖Δp̂ − Δp‖₂ / Δt` over
//!   consecutive matched points, metres per second.
//! * **HE** — mean absolute heading difference, where heading is the
//!   direction `atan2(Δy, Δx)` of each per-step displacement, differences are
//!   wrapped to `(−π, π]`, and steps shorter than 1 cm are skipped because a
//!   stationary step has no defined heading.  Radians.
//!
//! Orientation metrics compare aligned quaternion streams:
//!
//! * **QAE** — mean rotation angle between paired attitudes,
//!   `2·arccos(|⟨q̂, q⟩|)`, radians.  The absolute value makes the metric
//!   blind to the global quaternion double-cover sign.
//! * **CS** — mean cosine similarity `⟨q̂, q⟩ / (‖q̂‖·‖q‖)` with the pairs
//!   hemisphere-aligned first, so 1 means identical attitude.
//!
//! [`coverage`] checks uncertainty calibration: a displacement predictor that
//! reports per-axis Laplace scales `b̂` is calibrated when the fraction of
//! residuals inside the central Laplace interval of mass `level`
//! (half-width `b̂·ln(1/(1−level))`) matches `level` itself.
//!
//! [`format_report`] renders metric values as the documented `key = value`
//! text format consumed by the evaluation command.

use crate::geom::Quaternion;
use crate::{Error, Result};

/// Minimum per-step displacement (metres) for heading to be well defined.
const HEADING_MIN_STEP: f64 = 0.01;

/// A timestamped planar trajectory with optional attitude and per-point
/// Laplace scales.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    /// Sample times, seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    /// Planar positions, metres.
    pub positions: Vec<[f64; 2]>,
    /// Optional attitude stream aligned with `timestamps`.
    pub quaternions: Option<Vec<Quaternion<f64>>>,
    /// Optional per-point Laplace scales (uncertainty), metres.
    pub scales: Option<Vec<[f64; 2]>>,
}

impl TrajectoryEstimate {
    /// Builds a position-only trajectory.
    pub fn new(timestamps: Vec<f64>, positions: Vec<[f64; 2]>) -> Result<Self> {
        let est = Self {
            timestamps,
            positions,
            quaternions: None,
            scales: None,
        };
        est.validate()?;
        Ok(est)
    }

    /// Checks strictly increasing, finite timestamps, and that every optional
    /// stream matches the timestamp count.
    pub fn validate(&self) -> Result<()> {
        if self.timestamps.is_empty() {
            return Err(Error::invalid("trajectory must contain at least one sample"));
        }
        if self.positions.len() != self.timestamps.len() {
            return Err(Error::invalid(format!(
                "trajectory has {} timestamps but {} positions",
                self.timestamps.len(),
                self.positions.len()
            )));
        }
        if !self
            .timestamps
            .iter()
            .all(|t| t.is_finite())
        {
            return Err(Error::invalid("trajectory timestamps must be finite"));
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "trajectory timestamps must be strictly increasing",
            ));
        }
        if !self
            .positions
            .iter()
            .all(|p| p[0].is_finite() && p[1].is_finite())
        {
            return Err(Error::invalid("trajectory positions must be finite"));
        }
        if let Some(q) = &self.quaternions {
            if q.len() != self.timestamps.len() {
                return Err(Error::invalid("quaternion stream length mismatch"));
            }
        }
        if let Some(s) = &self.scales {
            if s.len() != self.timestamps.len() {
                return Err(Error::invalid("scale stream length mismatch"));
            }
        }
        Ok(())
    }
}

/// Pairs every estimate sample with the nearest truth sample, keeping pairs
/// whose time difference is at most half the median truth sampling interval.
///
/// Returns `(estimate index, truth index)` pairs in time order, or an error
/// when the two trajectories share no overlap.
pub fn match_indices(est_t: &[f64], truth_t: &[f64]) -> Result<Vec<(usize, usize)>> {
    if est_t.is_empty() || truth_t.is_empty() {
        return Err(Error::invalid("cannot match empty trajectories"));
    }
    let tolerance = if truth_t.len() < 2 {
        f64::INFINITY
    } else {
        let mut gaps: Vec<f64> = truth_t.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.5 * gaps[gaps.len() / 2]
    };
    let mut pairs = Vec::new();
    for (i, &t) in est_t.iter().enumerate() {
        let j = match truth_t.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(j) => j,
            Err(j) => {
                // `j` is the insertion point; the nearest sample is either side.
                if j == 0 {
                    0
                } else if j == truth_t.len() {
                    truth_t.len() - 1
                } else if (t - truth_t[j - 1]) <= (truth_t[j] - t) {
                    j - 1
                } else {
                    j
                }
            }
        };
        if (t - truth_t[j]).abs() <= tolerance {
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::invalid(
            "estimate and truth trajectories have no overlapping samples",
        ));
    }
    Ok(pairs)
}

/// Mean absolute position error: mean Euclidean distance between matched
/// points, metres.
pub fn mae(est: &TrajectoryEstimate, truth: &TrajectoryEstimate) -> Result<f64> {
    est.validate()?;
    truth.validate()?;
    let pairs = match_indices(&est.timestamps, &truth.timestamps)?;
    let sum: f64 = pairs
        .iter()
        .map(|&(i, j)| dist(est.positions[i], truth.positions[j]))
        .sum();
    Ok(sum / pairs.len() as f64)
}

/// Absolute displacement error: mean `‖Δp̂ − Δp‖₂ / Δt` over consecutive
/// matched points, metres per second.
pub fn ade(est: &TrajectoryEstimate, truth: &TrajectoryEstimate) -> Result<f64> {
    est.validate()?;
    truth.validate()?;
    let pairs = match_indices(&est.timestamps, &truth.timestamps)?;
    if pairs.len() < 2 {
        return Err(Error::invalid(
            "displacement error needs at least two matched samples",
        ));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in pairs.windows(2) {
        let (i0, j0) = w[0];
        let (i1, j1) = w[1];
        let dt = est.timestamps[i1] - est.timestamps[i0];
        if dt <= 0.0 {
            continue;
        }
        let de = [
            est.positions[i1][0] - est.positions[i0][0],
            est.positions[i1][1] - est.positions[i0][1],
        ];
        let dg = [
            truth.positions[j1][0] - truth.positions[j0][0],
            truth.positions[j1][1] - truth.positions[j0][1],
        ];
        sum += ((de[0] - dg[0]).powi(2) + (de[1] - dg[1]).powi(2)).sqrt() / dt;
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid(
            "displacement error needs at least one positive-duration step",
        ));
    }
    Ok(sum / count as f64)
}

/// Heading error: mean absolute wrapped difference between per-step movement
/// directions, radians.  Steps where either trajectory moves less than 1 cm
/// are skipped (heading is undefined when stationary); if no step qualifies
/// the error is 0.
pub fn he(est: &TrajectoryEstimate, truth: &TrajectoryEstimate) -> Result<f64> {
    est.validate()?;
    truth.validate()?;
    let pairs = match_indices(&est.timestamps, &truth.timestamps)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in pairs.windows(2) {
        let (i0, j0) = w[0];
        let (i1, j1) = w[1];
        let de = [
            est.positions[i1][0] - est.positions[i0][0],
            est.positions[i1][1] - est.positions[i0][1],
        ];
        let dg = [
            truth.positions[j1][0] - truth.positions[j0][0],
            truth.positions[j1][1] - truth.positions[j0][1],
        ];
        if (de[0].powi(2) + de[1].powi(2)).sqrt() < HEADING_MIN_STEP
            || (dg[0].powi(2) + dg[1].powi(2)).sqrt() < HEADING_MIN_STEP
        {
            continue;
        }
        let diff = wrap_angle(de[1].atan2(de[0]) - dg[1].atan2(dg[0]));
        sum += diff.abs();
        count += 1;
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(sum / count as f64)
}

/// Quaternion angle error: mean rotation angle `2·arccos(|⟨q̂, q⟩|)` between
/// paired attitudes, radians.
pub fn qae(est_q: &[Quaternion<f64>], truth_q: &[Quaternion<f64>]) -> Result<f64> {
    check_quaternion_streams(est_q, truth_q)?;
    let sum: f64 = est_q
        .iter()
        .zip(truth_q)
        .map(|(a, b)| {
            let d = unit_dot(*a, *b).abs().min(1.0);
            2.0 * d.acos()
        })
        .sum();
    Ok(sum / est_q.len() as f64)
}

/// Cosine similarity of paired attitudes after hemisphere alignment: 1 means
/// identical, and the value is insensitive to global quaternion sign flips.
pub fn cs(est_q: &[Quaternion<f64>], truth_q: &[Quaternion<f64>]) -> Result<f64> {
    check_quaternion_streams(est_q, truth_q)?;
    let sum: f64 = est_q
        .iter()
        .zip(truth_q)
        .map(|(a, b)| unit_dot(*a, *b).abs())
        .sum();
    Ok(sum / est_q.len() as f64)
}

fn check_quaternion_streams(
    est_q: &[Quaternion<f64>],
    truth_q: &[Quaternion<f64>],
) -> Result<()> {
    if est_q.is_empty() {
        return Err(Error::invalid("quaternion streams must be non-empty"));
    }
    if est_q.len() != truth_q.len() {
        return Err(Error::invalid(format!(
            "quaternion stream lengths differ: {} vs {}",
            est_q.len(),
            truth_q.len()
        )));
    }
    Ok(())
}

/// Inner product of two quaternions normalized to unit length (inputs are
/// normalized defensively so slightly denormalized streams still score
/// sensibly).
fn unit_dot(a: Quaternion<f64>, b: Quaternion<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// Fraction of per-axis displacement residuals that fall inside the central
/// Laplace interval of each requested mass.
///
/// For a Laplace distribution with scale `b`, the symmetric interval holding
/// probability `level` has half-width `b·ln(1/(1−level))`.  A calibrated
/// predictor therefore produces `coverage ≈ level` at every level.
///
/// `pred` pairs each predicted displacement with its per-axis scales;
/// `truth` holds the realized displacements.  Both axes of every sample count
/// separately.
pub fn coverage(
    pred: &[([f64; 2], [f64; 2])],
    truth: &[[f64; 2]],
    levels: &[f64],
) -> Result<Vec<f64>> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "coverage needs matching non-empty inputs, got {} predictions and {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred
        .iter()
        .any(|(_, b)| !(b[0] > 0.0 && b[1] > 0.0 && b[0].is_finite() && b[1].is_finite()))
    {
        return Err(Error::invalid("predicted scales must be strictly positive"));
    }
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::invalid("coverage levels must lie strictly in (0, 1)"));
    }
    let total = (2 * pred.len()) as f64;
    let mut rates = Vec::with_capacity(levels.len());
    for &level in levels {
        let factor = (1.0 / (1.0 - level)).ln();
        let mut hits = 0usize;
        for ((dp, b), t) in pred.iter().zip(truth) {
            for axis in 0..2 {
                if (t[axis] - dp[axis]).abs() <= b[axis] * factor {
                    hits += 1;
                }
            }
        }
        rates.push(hits as f64 / total);
    }
    Ok(rates)
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = angle % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Renders metric values as the `key = value` report format consumed by the
/// evaluation command.  One metric per line; values use shortest-round-trip
/// decimal so the file re-parses exactly.
pub fn format_report<'a>(entries: impl IntoIterator<Item = (&'a str, f64)>) -> String {
    let mut out = String::new();
    for (key, value) in entries {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value.to_string());
        out.push('\n');
    }
    out
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A gently curving walk with ~0.35 m steps, long enough that every step
    /// clears the heading threshold.
    fn walk(n: usize, dt: f64) -> TrajectoryEstimate {
        let mut positions = Vec::with_capacity(n);
        let mut timestamps = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * dt;
            positions.push([0.35 * k as f64, (0.05 * k as f64).sin()]);
            timestamps.push(t);
        }
        TrajectoryEstimate::new(timestamps, positions).unwrap()
    }

    fn translated(est: &TrajectoryEstimate, offset: [f64; 2]) -> TrajectoryEstimate {
        TrajectoryEstimate::new(
            est.timestamps.clone(),
            est.positions
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1]])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_trajectories_score_zero() {
        let truth = walk(100, 0.1);
        assert_eq!(mae(&truth, &truth).unwrap(), 0.0);
        assert_eq!(ade(&truth, &truth).unwrap(), 0.0);
        assert_eq!(he(&truth, &truth).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_gives_euclidean_mae_and_zero_ade() {
        let truth = walk(50, 0.1);
        let est = translated(&truth, [3.0, 4.0]);
        // Every matched point is 5 m away (up to the rounding of x+3 vs x);
        // displacements are untouched.
        assert!((mae(&est, &truth).unwrap() - 5.0).abs() < 1e-12);
        assert!(ade(&est, &truth).unwrap() < 1e-12);
        assert!(he(&est, &truth).unwrap() < 1e-12);
    }

    #[test]
    fn random_pair_matches_per_formula_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200usize;
        let dt = 0.25;
        let mut t_pos = [0.0f64, 0.0];
        let mut e_pos = [0.0f64, 0.0];
        let mut truth_p = Vec::new();
        let mut est_p = Vec::new();
        let mut times = Vec::new();
        for k in 0..n {
            times.push(k as f64 * dt);
            truth_p.push(t_pos);
            est_p.push(e_pos);
            t_pos[0] += 0.3 + 0.1 * (rng.random::<f64>() - 0.5);
            t_pos[1] += 0.2 * (rng.random::<f64>() - 0.5);
            e_pos[0] = t_pos[0] + 0.5 * (rng.random::<f64>() - 0.5);
            e_pos[1] = t_pos[1] + 0.5 * (rng.random::<f64>() - 0.5);
        }
        let truth = TrajectoryEstimate::new(times.clone(), truth_p.clone()).unwrap();
        let est = TrajectoryEstimate::new(times, est_p.clone()).unwrap();

        let mut mae_ref = 0.0;
        for k in 0..n {
            mae_ref += ((est_p[k][0] - truth_p[k][0]).powi(2)
                + (est_p[k][1] - truth_p[k][1]).powi(2))
            .sqrt();
        }
        mae_ref /= n as f64;

        let mut ade_ref = 0.0;
        let mut he_ref = 0.0;
        let mut he_n = 0usize;
        for k in 1..n {
            let de = [est_p[k][0] - est_p[k - 1][0], est_p[k][1] - est_p[k - 1][1]];
            let dg = [
                truth_p[k][0] - truth_p[k - 1][0],
                truth_p[k][1] - truth_p[k - 1][1],
            ];
            ade_ref += ((de[0] - dg[0]).powi(2) + (de[1] - dg[1]).powi(2)).sqrt() / dt;
            let ne = (de[0].powi(2) + de[1].powi(2)).sqrt();
            let ng = (dg[0].powi(2) + dg[1].powi(2)).sqrt();
            if ne >= 0.01 && ng >= 0.01 {
                he_ref += wrap_angle(de[1].atan2(de[0]) - dg[1].atan2(dg[0])).abs();
                he_n += 1;
            }
        }
        ade_ref /= (n - 1) as f64;
        he_ref /= he_n as f64;

        assert!((mae(&est, &truth).unwrap() - mae_ref).abs() < 1e-12);
        assert!((ade(&est, &truth).unwrap() - ade_ref).abs() < 1e-12);
        assert!((he(&est, &truth).unwrap() - he_ref).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_invariant_under_rigid_translation() {
        let truth = walk(80, 0.1);
        let est = translated(&truth, [0.4, -0.7]);
        let m0 = mae(&est, &truth).unwrap();
        let a0 = ade(&est, &truth).unwrap();
        let shift = [12.5, -3.25];
        let m1 = mae(&translated(&est, shift), &translated(&truth, shift)).unwrap();
        let a1 = ade(&translated(&est, shift), &translated(&truth, shift)).unwrap();
        assert!((m0 - m1).abs() < 1e-9);
        assert!((a0 - a1).abs() < 1e-9);
    }

    #[test]
    fn matching_picks_nearest_sample_and_rejects_disjoint_ranges() {
        let truth_t: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        // Jittered estimate times still match their nearest neighbours.
        let est_t: Vec<f64> = (0..11).map(|k| k as f64 * 0.1 + 0.03).collect();
        let pairs = match_indices(&est_t, &truth_t).unwrap();
        assert_eq!(pairs.len(), 11);
        assert!(pairs.iter().all(|&(i, j)| i == j));

        // A sample beyond tolerance is dropped, the rest survive.
        let est_t = vec![0.0, 0.1, 5.0];
        let pairs = match_indices(&est_t, &truth_t).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);

        // No overlap at all is an error.
        let est_t = vec![50.0, 51.0];
        assert!(match_indices(&est_t, &truth_t).is_err());
    }

    #[test]
    fn heading_error_recovers_a_known_rotation_and_skips_stationary_steps() {
        let phi = 10.0_f64.to_radians();
        let n = 60usize;
        let mut truth_p = Vec::new();
        let mut est_p = Vec::new();
        let mut times = Vec::new();
        let mut tp = [0.0f64, 0.0];
        let mut ep = [0.0f64, 0.0];
        for k in 0..n {
            times.push(k as f64 * 0.5);
            truth_p.push(tp);
            est_p.push(ep);
            // A stationary stretch in the middle: sub-centimetre steps that
            // must not contribute heading samples.
            let step = if (20..30).contains(&k) { 0.004 } else { 0.5 };
            let dir = 0.02 * k as f64;
            let d = [step * dir.cos(), step * dir.sin()];
            tp = [tp[0] + d[0], tp[1] + d[1]];
            // The estimate walks the same steps rotated by phi.
            ep = [
                ep[0] + d[0] * phi.cos() - d[1] * phi.sin(),
                ep[1] + d[0] * phi.sin() + d[1] * phi.cos(),
            ];
        }
        let truth = TrajectoryEstimate::new(times.clone(), truth_p).unwrap();
        let est = TrajectoryEstimate::new(times, est_p).unwrap();
        assert!((he(&est, &truth).unwrap() - phi).abs() < 1e-12);
    }

    #[test]
    fn heading_differences_wrap_across_the_half_turn() {
        // Truth heads at +179°, estimate at −179°: the wrapped error is 2°.
        let t179 = 179.0_f64.to_radians();
        let truth = TrajectoryEstimate::new(
            vec![0.0, 1.0],
            vec![[0.0, 0.0], [t179.cos(), t179.sin()]],
        )
        .unwrap();
        let est = TrajectoryEstimate::new(
            vec![0.0, 1.0],
            vec![[0.0, 0.0], [(-t179).cos(), (-t179).sin()]],
        )
        .unwrap();
        let expected = 2.0_f64.to_radians();
        assert!((he(&est, &truth).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn quaternion_metrics_hit_closed_forms() {
        let truth: Vec<Quaternion<f64>> = (0..50).map(|_| Quaternion::identity()).collect();
        assert_eq!(qae(&truth, &truth).unwrap(), 0.0);
        assert_eq!(cs(&truth, &truth).unwrap(), 1.0);

        // Uniform 90° rotation about z: QAE = π/2.
        let quarter = Quaternion::from_axis_angle(
            Vector3::unit_z(),
            std::f64::consts::FRAC_PI_2,
        );
        let est: Vec<Quaternion<f64>> = truth.iter().map(|q| quarter.multiply(*q)).collect();
        assert!((qae(&est, &truth).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        // cos(45°) between unit quaternions a quarter turn apart.
        assert!((cs(&est, &truth).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn quaternion_metrics_ignore_sign_flips_and_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut est = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..100 {
            let axis = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let q = Quaternion::from_axis_angle(axis, rng.random::<f64>() * 3.0);
            let perturb = Quaternion::from_axis_angle(
                Vector3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ),
                rng.random::<f64>() * 0.3,
            );
            truth.push(q);
            est.push(perturb.multiply(q));
        }

        // Independent per-pair reference.
        let mut qae_ref = 0.0;
        let mut cs_ref = 0.0;
        for (a, b) in est.iter().zip(&truth) {
            let d = (a.dot(*b) / (a.norm() * b.norm())).abs().min(1.0);
            qae_ref += 2.0 * d.acos();
            cs_ref += d;
        }
        qae_ref /= est.len() as f64;
        cs_ref /= est.len() as f64;
        assert!((qae(&est, &truth).unwrap() - qae_ref).abs() < 1e-12);
        assert!((cs(&est, &truth).unwrap() - cs_ref).abs() < 1e-12);

        // Flipping the sign of every estimate quaternion changes nothing.
        let flipped: Vec<Quaternion<f64>> = est.iter().map(|q| q.negate()).collect();
        assert!((qae(&flipped, &truth).unwrap() - qae_ref).abs() < 1e-12);
        assert!((cs(&flipped, &truth).unwrap() - cs_ref).abs() < 1e-12);

        assert!(cs(&est, &truth).unwrap() <= 1.0);
        assert!(qae(&est, &truth).unwrap() >= 0.0);
    }

    #[test]
    fn coverage_is_self_consistent_on_laplace_residuals() {
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        let mut pred = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for _ in 0..n {
            let dp = [
                4.0 * (rng.random::<f64>() - 0.5),
                4.0 * (rng.random::<f64>() - 0.5),
            ];
            let b = [
                0.3 + 1.7 * rng.random::<f64>(),
                0.3 + 1.7 * rng.random::<f64>(),
            ];
            let mut t = [0.0f64; 2];
            for axis in 0..2 {
                let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12) - 0.5;
                let noise = -b[axis] * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                t[axis] = dp[axis] + noise;
            }
            pred.push((dp, b));
            truth.push(t);
        }
        let levels = [0.683, 0.95, 0.997];
        let rates = coverage(&pred, &truth, &levels).unwrap();
        for (rate, level) in rates.iter().zip(levels) {
            assert!(
                (rate - level).abs() <= 0.015,
                "coverage {rate:.4} at level {level}"
            );
        }
    }

    #[test]
    fn coverage_saturates_as_scales_blow_up() {
        let pred = vec![([0.0, 0.0], [1e12, 1e12]); 100];
        let truth: Vec<[f64; 2]> = (0..100).map(|k| [k as f64, -(k as f64)]).collect();
        let rates = coverage(&pred, &truth, &[0.5, 0.9, 0.99]).unwrap();
        assert_eq!(rates, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn coverage_validates_inputs() {
        let good = vec![([0.0, 0.0], [1.0, 1.0])];
        let truth = vec![[0.0, 0.0]];
        assert!(coverage(&good, &truth, &[0.5]).is_ok());
        let bad_scale = vec![([0.0, 0.0], [0.0, 1.0])];
        assert!(coverage(&bad_scale, &truth, &[0.5]).is_err());
        assert!(coverage(&good, &truth, &[1.0]).is_err());
        assert!(coverage(&good, &truth, &[0.0]).is_err());
        assert!(coverage(&good, &[], &[0.5]).is_err());
    }

    #[test]
    fn trajectory_validation_rejects_malformed_streams() {
        assert!(TrajectoryEstimate::new(vec![], vec![]).is_err());
        assert!(TrajectoryEstimate::new(vec![0.0, 0.0], vec![[0.0; 2], [1.0; 2]]).is_err());
        assert!(TrajectoryEstimate::new(vec![1.0, 0.5], vec![[0.0; 2], [1.0; 2]]).is_err());
        assert!(TrajectoryEstimate::new(vec![0.0], vec![[f64::NAN; 2]]).is_err());
        assert!(TrajectoryEstimate::new(vec![0.0], vec![[0.0; 2], [1.0; 2]]).is_err());
    }

    #[test]
    fn report_renders_keys_and_roundtrip_values() {
        let report = format_report([("mae_m", 0.125), ("ade_mps", 3.5), ("he_rad", 0.0)]);
        assert_eq!(report, "mae_m = 0.125\nade_mps = 3.5\nhe_rad = 0\n");
        // Shortest-round-trip rendering re-parses to the same bits.
        let value = 0.1 + 0.2;
        let line = format_report([("x", value)]);
        let parsed: f64 = line.trim().rsplit(' ').next().unwrap().parse().unwrap();
        assert_eq!(parsed, value);
    }

    #[test]
    fn wrap_angle_covers_the_boundary() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(2.0 * PI)).abs() < 1e-12);
        assert!((wrap_angle(PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }
}
