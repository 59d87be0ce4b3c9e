//! Trajectory evaluation metrics.
//!
//! Conventions, pinned here and relied on by the tests:
//! - `delta_avg`: fraction of valid steps with L2 error strictly below each
//!   threshold in {1, 2, 4, 8, 16}, averaged over the five thresholds.
//! - `mte`: median L2 error over all valid steps of all pairs; even counts
//!   take the mean of the two central values.
//! - `survival`: first step whose error strictly exceeds the threshold,
//!   divided by T (T when none does). Invalid steps cannot fail.
//! - `feature_age`: survival averaged over the integer thresholds 1..=31.
//! - `expected_feature_age`: stable-track ratio (FA > 0) times the mean FA
//!   over stable tracks.
//! - `weighted_mae`: sum over steps i = 1..T of gamma^(T-i) times the L1
//!   coordinate error, so late steps weigh the most.

use alloc::vec::Vec;

use crate::geom::Vec2;
use crate::math;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction has {pred} steps but ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("no valid steps to evaluate")]
    NoValidSteps,
}

/// One prediction/ground-truth pairing with a per-step validity mask.
#[derive(Clone, Debug)]
pub struct EvalPair {
    pred: Vec<Vec2>,
    gt: Vec<Vec2>,
    valid: Vec<bool>,
}

impl EvalPair {
    pub fn new(pred: Vec<Vec2>, gt: Vec<Vec2>, valid: Vec<bool>) -> Result<Self, MetricsError> {
        if pred.len() != gt.len() || pred.len() != valid.len() {
            return Err(MetricsError::LengthMismatch {
                pred: pred.len(),
                gt: gt.len().min(valid.len()),
            });
        }
        if !valid.iter().any(|&v| v) {
            return Err(MetricsError::NoValidSteps);
        }
        Ok(EvalPair { pred, gt, valid })
    }

    /// All steps valid.
    pub fn dense(pred: Vec<Vec2>, gt: Vec<Vec2>) -> Result<Self, MetricsError> {
        let valid = alloc::vec![true; pred.len()];
        EvalPair::new(pred, gt, valid)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pred.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }

    #[inline]
    fn error_l2(&self, i: usize) -> f64 {
        (self.pred[i] - self.gt[i]).norm()
    }

    #[inline]
    fn error_l1(&self, i: usize) -> f64 {
        math::abs(self.pred[i].x - self.gt[i].x) + math::abs(self.pred[i].y - self.gt[i].y)
    }
}

const DELTA_THRESHOLDS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Mean inlier fraction over the pixel thresholds {1, 2, 4, 8, 16}.
pub fn delta_avg(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    let mut total_valid = 0usize;
    let mut inliers = [0usize; 5];
    for pair in pairs {
        for i in 0..pair.len() {
            if !pair.valid[i] {
                continue;
            }
            total_valid += 1;
            let e = pair.error_l2(i);
            for (k, th) in DELTA_THRESHOLDS.iter().enumerate() {
                if e < *th {
                    inliers[k] += 1;
                }
            }
        }
    }
    if total_valid == 0 {
        return Err(MetricsError::NoValidSteps);
    }
    Ok(inliers
        .iter()
        .map(|&n| n as f64 / total_valid as f64)
        .sum::<f64>()
        / DELTA_THRESHOLDS.len() as f64)
}

/// Median trajectory error in pixels over all valid steps of all pairs.
pub fn mte(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    let mut errors: Vec<f64> = Vec::new();
    for pair in pairs {
        for i in 0..pair.len() {
            if pair.valid[i] {
                errors.push(pair.error_l2(i));
            }
        }
    }
    if errors.is_empty() {
        return Err(MetricsError::NoValidSteps);
    }
    errors.sort_unstable_by(|a, b| a.partial_cmp(b).expect("errors are finite"));
    let n = errors.len();
    Ok(if n % 2 == 1 {
        errors[n / 2]
    } else {
        0.5 * (errors[n / 2 - 1] + errors[n / 2])
    })
}

/// Fraction of the sequence elapsed before the first step whose error
/// strictly exceeds `threshold`.
pub fn survival(pair: &EvalPair, threshold: f64) -> f64 {
    let t_total = pair.len();
    let mut first_failure = t_total;
    for i in 0..t_total {
        if pair.valid[i] && pair.error_l2(i) > threshold {
            first_failure = i;
            break;
        }
    }
    first_failure as f64 / t_total as f64
}

/// Survival averaged over the integer thresholds 1..=31.
pub fn feature_age(pair: &EvalPair) -> f64 {
    let thresholds: Vec<f64> = (1..=31).map(|t| t as f64).collect();
    feature_age_with_thresholds(pair, &thresholds)
}

/// Feature age over a caller-chosen threshold set.
pub fn feature_age_with_thresholds(pair: &EvalPair, thresholds: &[f64]) -> f64 {
    if thresholds.is_empty() {
        return 0.0;
    }
    thresholds
        .iter()
        .map(|&th| survival(pair, th))
        .sum::<f64>()
        / thresholds.len() as f64
}

/// Stable-track ratio scaled by the mean feature age of stable tracks, where
/// a track is stable when its FA exceeds zero.
pub fn expected_feature_age(pairs: &[EvalPair]) -> f64 {
    expected_feature_age_with(pairs, 0.0)
}

/// EFA with an explicit stability cutoff: tracks with `FA > stable_min_fa`
/// count as stable.
pub fn expected_feature_age_with(pairs: &[EvalPair], stable_min_fa: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let ages: Vec<f64> = pairs.iter().map(feature_age).collect();
    let stable: Vec<f64> = ages.iter().copied().filter(|&a| a > stable_min_fa).collect();
    if stable.is_empty() {
        return 0.0;
    }
    let ratio = stable.len() as f64 / pairs.len() as f64;
    ratio * (stable.iter().sum::<f64>() / stable.len() as f64)
}

/// Exponentially weighted L1 loss: `sum_i gamma^(T-i) * |e_i|` for i = 1..T,
/// with the per-step error summed over both coordinates. Invalid steps
/// contribute nothing.
pub fn weighted_mae(pair: &EvalPair, gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    let t_total = pair.len();
    let mut loss = 0.0;
    for i in 0..t_total {
        if !pair.valid[i] {
            continue;
        }
        // Step index is 1-based in the weighting.
        let exponent = (t_total - (i + 1)) as i32;
        loss += powi(gamma, exponent) * pair.error_l1(i);
    }
    loss
}

fn powi(base: f64, mut exp: i32) -> f64 {
    debug_assert!(exp >= 0);
    let mut acc = 1.0;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        b *= b;
        exp >>= 1;
    }
    acc
}

/// Evaluation configuration carried into the report.
#[derive(Clone, Copy, Debug)]
pub struct MetricsParams {
    pub survival_threshold: f64,
    pub gamma: f64,
}

impl Default for MetricsParams {
    fn default() -> Self {
        MetricsParams {
            survival_threshold: 50.0,
            gamma: 0.8,
        }
    }
}

/// Every reported quantity plus the configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub delta_avg: f64,
    pub mte: f64,
    /// Mean survival over pairs at `survival_threshold`.
    pub survival: f64,
    pub survival_threshold: f64,
    /// Mean feature age over pairs.
    pub fa: f64,
    pub efa: f64,
    /// Mean weighted-MAE loss over pairs.
    pub weighted_mae: f64,
    pub gamma: f64,
    pub timesteps: usize,
}

pub fn compute_report(
    pairs: &[EvalPair],
    params: &MetricsParams,
) -> Result<MetricsReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoValidSteps);
    }
    let n = pairs.len() as f64;
    Ok(MetricsReport {
        delta_avg: delta_avg(pairs)?,
        mte: mte(pairs)?,
        survival: pairs
            .iter()
            .map(|p| survival(p, params.survival_threshold))
            .sum::<f64>()
            / n,
        survival_threshold: params.survival_threshold,
        fa: pairs.iter().map(feature_age).sum::<f64>() / n,
        efa: expected_feature_age(pairs),
        weighted_mae: pairs
            .iter()
            .map(|p| weighted_mae(p, params.gamma))
            .sum::<f64>()
            / n,
        gamma: params.gamma,
        timesteps: pairs.iter().map(|p| p.len()).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pair_with_errors(errors: &[f64]) -> EvalPair {
        // Error along x only, ground truth at the origin line.
        let gt: Vec<Vec2> = (0..errors.len()).map(|i| Vec2::new(0.0, i as f64)).collect();
        let pred: Vec<Vec2> = errors
            .iter()
            .enumerate()
            .map(|(i, &e)| Vec2::new(e, i as f64))
            .collect();
        EvalPair::dense(pred, gt).unwrap()
    }

    #[test]
    fn delta_avg_perfect_is_one() {
        let p = pair_with_errors(&[0.0, 0.0, 0.0]);
        assert_eq!(delta_avg(&[p]).unwrap(), 1.0);
    }

    #[test]
    fn delta_avg_constant_three_pixels() {
        let p = pair_with_errors(&[3.0; 10]);
        let d = delta_avg(&[p]).unwrap();
        assert!((d - 0.6).abs() < 1e-12);
    }

    #[test]
    fn delta_avg_mixed_errors_match_bruteforce() {
        let errors = [0.5, 3.0, 20.0];
        let p = pair_with_errors(&errors);
        // Brute-force oracle: count inliers per threshold directly.
        let mut expected = 0.0;
        for th in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let frac = errors.iter().filter(|&&e| e < th).count() as f64 / errors.len() as f64;
            expected += frac / 5.0;
        }
        assert!((delta_avg(&[p]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - (1.0 / 3.0 + 1.0 / 3.0 + 2.0 / 3.0 + 2.0 / 3.0 + 2.0 / 3.0) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn mte_zero_for_exact_match() {
        let p = pair_with_errors(&[0.0, 0.0]);
        assert_eq!(mte(&[p]).unwrap(), 0.0);
    }

    #[test]
    fn mte_is_robust_median_odd() {
        let p = pair_with_errors(&[1.0, 2.0, 100.0]);
        assert_eq!(mte(&[p]).unwrap(), 2.0);
    }

    #[test]
    fn mte_even_count_averages_central_values() {
        let p = pair_with_errors(&[1.0, 2.0, 3.0, 100.0]);
        assert!((mte(&[p]).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn survival_never_exceeding_is_one() {
        let p = pair_with_errors(&[1.0; 48]);
        assert_eq!(survival(&p, 50.0), 1.0);
    }

    #[test]
    fn survival_half_sequence() {
        let mut errors = vec![1.0; 48];
        for e in errors.iter_mut().skip(24) {
            *e = 60.0;
        }
        let p = pair_with_errors(&errors);
        assert_eq!(survival(&p, 50.0), 0.5);
    }

    #[test]
    fn survival_immediate_failure_is_zero() {
        let p = pair_with_errors(&[60.0, 0.0]);
        assert_eq!(survival(&p, 50.0), 0.0);
    }

    #[test]
    fn survival_threshold_is_strict() {
        let p = pair_with_errors(&[50.0; 10]);
        assert_eq!(survival(&p, 50.0), 1.0);
    }

    #[test]
    fn feature_age_perfect_track() {
        let p = pair_with_errors(&[0.0; 20]);
        assert_eq!(feature_age(&p), 1.0);
    }

    #[test]
    fn feature_age_constant_huge_error_is_zero() {
        let p = pair_with_errors(&[100.0; 20]);
        assert_eq!(feature_age(&p), 0.0);
    }

    #[test]
    fn feature_age_partial_thresholds_survive() {
        // 16.5 px error fails thresholds 1..=16 at step 0 and survives 17..=31.
        let p = pair_with_errors(&[16.5; 20]);
        let fa = feature_age(&p);
        assert!((fa - 15.0 / 31.0).abs() < 1e-12);
    }

    #[test]
    fn efa_conventions() {
        let perfect = pair_with_errors(&[0.0; 10]);
        assert_eq!(expected_feature_age(&[perfect.clone()]), 1.0);

        let dead = pair_with_errors(&[100.0; 10]);
        let efa = expected_feature_age(&[perfect, dead.clone()]);
        assert!((efa - 0.5).abs() < 1e-12);

        assert_eq!(expected_feature_age(&[dead]), 0.0);
    }

    #[test]
    fn weighted_mae_direct_substitution() {
        // Unit L1 error at every step, gamma = 0.8, T = 3.
        let p = pair_with_errors(&[1.0, 1.0, 1.0]);
        let l = weighted_mae(&p, 0.8);
        assert!((l - 2.44).abs() < 1e-12, "loss {l}");
    }

    #[test]
    fn weighted_mae_zero_error() {
        let p = pair_with_errors(&[0.0; 5]);
        assert_eq!(weighted_mae(&p, 0.8), 0.0);
    }

    #[test]
    fn weighted_mae_gamma_one_is_plain_l1() {
        let p = pair_with_errors(&[1.0, 2.0, 3.0]);
        assert!((weighted_mae(&p, 1.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn weight_sum_closed_form() {
        // sum of gamma^(T-i) over i = 1..T equals (1 - gamma^T) / (1 - gamma).
        let gamma: f64 = 0.8;
        let t = 48usize;
        let p = pair_with_errors(&vec![0.5; t]);
        // L1 error is 0.5 everywhere, so loss = 0.5 * weight sum.
        let loss = weighted_mae(&p, gamma);
        let expected = 0.5 * (1.0 - powi(gamma, t as i32)) / (1.0 - gamma);
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn no_valid_steps_is_an_error() {
        assert!(EvalPair::new(
            vec![Vec2::ZERO],
            vec![Vec2::ZERO],
            vec![false]
        )
        .is_err());
    }

    #[test]
    fn report_collects_everything() {
        let p = pair_with_errors(&[0.0, 1.5, 3.0, 60.0]);
        let report = compute_report(&[p], &MetricsParams::default()).unwrap();
        assert_eq!(report.survival_threshold, 50.0);
        assert_eq!(report.timesteps, 4);
        assert_eq!(report.survival, 0.75);
        assert!(report.delta_avg > 0.0 && report.delta_avg < 1.0);
        assert!(report.mte > 0.0);
    }
}
