//! Two-sample hypothesis tests on survival data: the log-rank test, generic
//! weighted log-rank tests, the pre-specified-weight variant built on the
//! switching model, Fleming-Harrington tests, the four-component max-combo
//! test, and the restricted-mean difference test.
//!
//! Orientation is fixed throughout: U sums observed-minus-expected control
//! deaths over distinct event times, so z > 0 is evidence that the
//! experimental arm survives longer, and the reported p-value is the
//! one-sided upper tail 1 - Phi(z).

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};
use crate::model::{self, SwitchModelParams};
use crate::mvn::{self, std_normal_sf};
use crate::survdata::{
    build_risk_table, kaplan_meier, minimax_time, rmst, Arm, KMCurve, RiskRow, SurvivalDataset,
};

/// Outcome of a single test: the score statistic, its null variance, the
/// standardized z, and the one-sided p-value. For weighted log-rank family
/// tests `weights` holds the weight applied at each distinct event time (in
/// time order); the restricted-mean test reports an empty list.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TestResult {
    pub statistic_u: f64,
    pub variance_v: f64,
    pub z: f64,
    pub p_one_sided: f64,
    pub weights: Vec<f64>,
}

/// Fleming-Harrington weight exponents: w(t) = S(t-)^rho * (1 - S(t-))^gamma
/// on the pooled Kaplan-Meier estimate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FHParams {
    pub rho: f64,
    pub gamma: f64,
}

impl FHParams {
    pub fn new(rho: f64, gamma: f64) -> Result<Self> {
        let params = FHParams { rho, gamma };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) || !(self.gamma.is_finite() && self.gamma >= 0.0)
        {
            return Err(Error::InvalidParams(format!(
                "Fleming-Harrington exponents must be finite and non-negative, got rho={} gamma={}",
                self.rho, self.gamma
            )));
        }
        Ok(())
    }
}

/// The fixed component set of the max-combo test, in reporting order.
pub const MAX_COMBO_COMPONENTS: [FHParams; 4] = [
    FHParams { rho: 0.0, gamma: 0.0 },
    FHParams { rho: 1.0, gamma: 0.0 },
    FHParams { rho: 0.0, gamma: 1.0 },
    FHParams { rho: 1.0, gamma: 1.0 },
];

/// Max-combo outcome: the four component tests (ordered as
/// [`MAX_COMBO_COMPONENTS`]), their estimated correlation matrix, the
/// largest component z, and its multiplicity-adjusted one-sided p-value.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MaxComboResult {
    pub components: [TestResult; 4],
    pub correlation: [[f64; 4]; 4],
    pub z_max: f64,
    pub p_one_sided: f64,
}

impl MaxComboResult {
    /// Index of the component attaining `z_max` (first on exact ties).
    pub fn best_component(&self) -> usize {
        let mut best = 0;
        for i in 1..4 {
            if self.components[i].z > self.components[best].z {
                best = i;
            }
        }
        best
    }
}

/// Per-row score contribution d0 - d * n0 / n (observed minus expected
/// control deaths under the null).
fn row_score(row: &RiskRow) -> f64 {
    let n = row.at_risk() as f64;
    row.deaths_control as f64 - row.deaths() as f64 * (row.at_risk_control as f64) / n
}

/// Per-row hypergeometric variance n0*n1*d*(n-d) / (n^2*(n-1)); a row with a
/// single subject at risk contributes zero (the 0/0 is defined as 0).
fn row_variance(row: &RiskRow) -> f64 {
    if row.at_risk() <= 1 {
        return 0.0;
    }
    let n = row.at_risk() as f64;
    let d = row.deaths() as f64;
    (row.at_risk_control as f64) * (row.at_risk_experimental as f64) * d * (n - d)
        / (n * n * (n - 1.0))
}

/// Shared core: combine per-row weights with the risk-table score and
/// variance terms into a standardized test result.
fn weighted_from_rows(rows: &[RiskRow], weights: Vec<f64>) -> Result<TestResult> {
    debug_assert_eq!(rows.len(), weights.len());
    for (row, w) in rows.iter().zip(&weights) {
        if !w.is_finite() {
            return Err(Error::InvalidParams(format!(
                "non-finite weight {w} at event time {}",
                row.time
            )));
        }
    }
    let mut u = 0.0;
    let mut v = 0.0;
    for (row, w) in rows.iter().zip(&weights) {
        u += w * row_score(row);
        v += w * w * row_variance(row);
    }
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(
            "weighted log-rank variance is zero; the weighted risk table carries no information"
                .into(),
        ));
    }
    let z = u / v.sqrt();
    Ok(TestResult { statistic_u: u, variance_v: v, z, p_one_sided: std_normal_sf(z), weights })
}

/// Standard (unweighted) log-rank test.
pub fn logrank(data: &SurvivalDataset) -> Result<TestResult> {
    weighted_logrank(data, |_| 1.0)
}

/// Weighted log-rank test with an arbitrary weight function evaluated at
/// each distinct event time. The weight must be finite at every event time;
/// an all-zero weighting is rejected as degenerate.
pub fn weighted_logrank<F: Fn(f64) -> f64>(data: &SurvivalDataset, weight: F) -> Result<TestResult> {
    let table = build_risk_table(data)?;
    let weights: Vec<f64> = table.rows().iter().map(|row| weight(row.time)).collect();
    weighted_from_rows(table.rows(), weights)
}

/// Weighted log-rank test with the design weights w(t) = -log eta(t) of the
/// switching model under the *assumed* parameters. The weights never look at
/// the data beyond its event times, so they can be fixed before unblinding.
///
/// The usual one-sided operating characteristics assume the weight curve is
/// non-negative and non-increasing, which holds whenever the assumed
/// experimental median exceeds the assumed control median.
pub fn mwlr(data: &SurvivalDataset, assumed: &SwitchModelParams) -> Result<TestResult> {
    weighted_logrank(data, |t| model::weight_function(assumed, t))
}

/// Weight vector of a Fleming-Harrington test over the risk-table rows,
/// built from the left-continuous pooled Kaplan-Meier curve.
fn fh_weights(rows: &[RiskRow], pooled: &KMCurve, fh: FHParams) -> Vec<f64> {
    rows.iter()
        .map(|row| {
            let s = pooled.survival_before(row.time);
            // (1 - s) can go a hair negative from rounding; clamp before the
            // fractional power. Rust defines 0^0 = 1, which is exactly the
            // rho = gamma = 0 unit-weight case.
            s.powf(fh.rho) * (1.0 - s).max(0.0).powf(fh.gamma)
        })
        .collect()
}

/// Fleming-Harrington (rho, gamma) weighted log-rank test. Weights are
/// S(t-)^rho * (1-S(t-))^gamma with S the pooled Kaplan-Meier estimate and
/// S(t-) its left limit, so the first event always gets weight 0 when
/// rho = 0 and gamma > 0.
pub fn fleming_harrington(data: &SurvivalDataset, fh: FHParams) -> Result<TestResult> {
    fh.validate()?;
    let table = build_risk_table(data)?;
    let pooled = kaplan_meier(&data.time_event_pairs(None))?;
    let weights = fh_weights(table.rows(), &pooled, fh);
    weighted_from_rows(table.rows(), weights)
}

/// Fixed internal seed for the quasi-Monte Carlo p-value evaluation, so the
/// max-combo test is a deterministic function of the data.
const MAX_COMBO_QMC_SEED: u64 = 0x6d61_7863_6f6d_626f;
const MAX_COMBO_QMC_TOL: f64 = 1e-4;
const MAX_COMBO_QMC_BUDGET: u64 = 200_000;

/// Max-combo test: the maximum of the four Fleming-Harrington z-statistics
/// (0,0), (1,0), (0,1), (1,1), with a one-sided p-value computed from the
/// joint normal approximation of the component scores.
///
/// The component covariance is estimated by the Gram sum
/// cov(a, b) = sum_j w_j^(a) * w_j^(b) * v_j, which makes the correlation
/// matrix positive semidefinite by construction; an eigenvalue below -1e-8
/// after symmetrization is still rejected defensively. The returned p-value
/// is clamped into its Bonferroni envelope
/// [1 - Phi(z_max), 4 * (1 - Phi(z_max))].
pub fn max_combo(data: &SurvivalDataset) -> Result<MaxComboResult> {
    let table = build_risk_table(data)?;
    let rows = table.rows();
    let pooled = kaplan_meier(&data.time_event_pairs(None))?;

    let weight_vectors: Vec<Vec<f64>> =
        MAX_COMBO_COMPONENTS.iter().map(|&fh| fh_weights(rows, &pooled, fh)).collect();
    let variances: Vec<f64> =
        rows.iter().map(row_variance).collect();

    let mut components: Vec<TestResult> = Vec::with_capacity(4);
    for w in &weight_vectors {
        components.push(weighted_from_rows(rows, w.clone())?);
    }
    let components: [TestResult; 4] = components.try_into().expect("exactly four components");

    let mut correlation = [[0.0f64; 4]; 4];
    for a in 0..4 {
        correlation[a][a] = 1.0;
        for b in 0..a {
            let cov: f64 = (0..rows.len())
                .map(|j| weight_vectors[a][j] * weight_vectors[b][j] * variances[j])
                .sum();
            let r = cov / (components[a].variance_v * components[b].variance_v).sqrt();
            correlation[a][b] = r;
            correlation[b][a] = r;
        }
    }

    let matrix = Matrix4::from_fn(|i, j| correlation[i][j]);
    let min_eigenvalue = matrix.symmetric_eigen().eigenvalues.min();
    if min_eigenvalue < -1e-8 {
        return Err(Error::Data(format!(
            "max-combo correlation matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})"
        )));
    }

    let z_max = components.iter().map(|c| c.z).fold(f64::NEG_INFINITY, f64::max);
    let rectangle = mvn::mvn_rectangle_cdf(
        &[z_max; 4],
        &DMatrix::from_fn(4, 4, |i, j| correlation[i][j]),
        MAX_COMBO_QMC_TOL,
        MAX_COMBO_QMC_BUDGET,
        MAX_COMBO_QMC_SEED,
    )?;
    let univariate_tail = std_normal_sf(z_max);
    let p_one_sided =
        (1.0 - rectangle.value).clamp(univariate_tail, (4.0 * univariate_tail).min(1.0));

    Ok(MaxComboResult { components, correlation, z_max, p_one_sided })
}

/// Greenwood-type variance of the restricted mean up to `tau` for one arm:
/// sum over event times t_j <= tau of A_j^2 * d_j / (n_j * (n_j - d_j))
/// with A_j the area under the curve from t_j to tau. A time where everyone
/// at risk dies contributes zero when no area remains beyond it, and is a
/// degenerate-variance error otherwise (the term would be infinite).
fn rmst_variance(curve: &KMCurve, tau: f64) -> Result<f64> {
    let times = curve.times();
    let survival = curve.survival();
    let at_risk = curve.at_risk();
    let deaths = curve.deaths();
    let mut variance = 0.0;
    let mut area = 0.0;
    let mut upper = tau;
    for i in (0..times.len()).rev() {
        if times[i] > tau {
            continue;
        }
        area += survival[i] * (upper - times[i]);
        upper = times[i];
        if at_risk[i] == deaths[i] {
            if area > 0.0 {
                return Err(Error::DegenerateVariance(format!(
                    "restricted-mean variance term at time {} is infinite: all {} subjects at risk died",
                    times[i], at_risk[i]
                )));
            }
            continue;
        }
        let n = at_risk[i] as f64;
        let d = deaths[i] as f64;
        variance += area * area * d / (n * (n - d));
    }
    Ok(variance)
}

/// Restricted-mean survival-time difference test, truncated at the minimax
/// time (the smaller of the two arms' largest observed times, so both
/// restricted means are identified). The statistic is
/// RMST_experimental(tau) - RMST_control(tau); its variance is the sum of
/// the per-arm Greenwood-type variances. A zero total variance (for example
/// no deaths before tau in either arm) is a degenerate-variance error.
pub fn rmst_test(data: &SurvivalDataset) -> Result<TestResult> {
    let tau = minimax_time(data)?;
    let mut rmst_by_arm = [0.0f64; 2];
    let mut variance = 0.0;
    for (slot, arm) in [Arm::Control, Arm::Experimental].into_iter().enumerate() {
        let curve = kaplan_meier(&data.time_event_pairs(Some(arm)))?;
        rmst_by_arm[slot] = rmst(&curve, tau)?;
        variance += rmst_variance(&curve, tau)?;
    }
    let u = rmst_by_arm[1] - rmst_by_arm[0];
    if !(variance > 0.0) {
        return Err(Error::DegenerateVariance(
            "restricted-mean difference has zero variance; no deaths before the truncation time"
                .into(),
        ));
    }
    let z = u / variance.sqrt();
    Ok(TestResult {
        statistic_u: u,
        variance_v: variance,
        z,
        p_one_sided: std_normal_sf(z),
        weights: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SwitchModelParams;
    use crate::mvn::std_normal_cdf;
    use crate::survdata::{six_subject_dataset, SubjectRecord};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::collection::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: &[(f64, bool, Arm)]) -> SurvivalDataset {
        SurvivalDataset::new(
            rows.iter()
                .map(|&(time, event, arm)| SubjectRecord { time, event, arm, switch_time: None })
                .collect(),
        )
        .unwrap()
    }

    fn swap_arms(data: &SurvivalDataset) -> SurvivalDataset {
        SurvivalDataset::new(
            data.records()
                .iter()
                .map(|r| SubjectRecord {
                    arm: match r.arm {
                        Arm::Control => Arm::Experimental,
                        Arm::Experimental => Arm::Control,
                    },
                    ..*r
                })
                .collect(),
        )
        .unwrap()
    }

    // The six-subject fixture enumerated by hand. Risk rows (time, n0, n1,
    // d0, d1): (1,3,3,1,0) (2,2,3,0,1) (4,2,2,1,0) (5,1,2,0,1) (6,1,1,1,0).
    // Pooled KM left limits at those times: 1, 5/6, 2/3, 1/2, 1/3.

    #[test]
    fn logrank_matches_hand_computation() {
        let result = logrank(&six_subject_dataset()).unwrap();
        assert_relative_eq!(result.statistic_u, 23.0 / 30.0, max_relative = 1e-12);
        assert_relative_eq!(result.variance_v, 1091.0 / 900.0, max_relative = 1e-12);
        assert_relative_eq!(result.z, 23.0 / 1091.0_f64.sqrt(), max_relative = 1e-12);
        assert_abs_diff_eq!(
            result.p_one_sided,
            1.0 - std_normal_cdf(result.z),
            epsilon = 1e-12
        );
        assert_eq!(result.weights, vec![1.0; 5]);
    }

    #[test]
    fn single_control_event_in_closed_form() {
        // One death at t=1 among 2 control and 3 experimental at risk:
        // U = 1 - 2/5, V = 2*3/25.
        let data = dataset(&[
            (1.0, true, Arm::Control),
            (3.0, false, Arm::Control),
            (3.0, false, Arm::Experimental),
            (4.0, false, Arm::Experimental),
            (5.0, false, Arm::Experimental),
        ]);
        let result = logrank(&data).unwrap();
        assert_relative_eq!(result.statistic_u, 3.0 / 5.0, max_relative = 1e-12);
        assert_relative_eq!(result.variance_v, 6.0 / 25.0, max_relative = 1e-12);
    }

    #[test]
    fn constant_weights_reproduce_logrank_z() {
        let data = six_subject_dataset();
        let base = logrank(&data).unwrap();
        for c in [0.25, 1.0, 7.5] {
            let scaled = weighted_logrank(&data, |_| c).unwrap();
            assert_relative_eq!(scaled.z, base.z, max_relative = 1e-12);
            assert_relative_eq!(scaled.p_one_sided, base.p_one_sided, max_relative = 1e-12);
            assert_relative_eq!(scaled.statistic_u, c * base.statistic_u, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let err = weighted_logrank(&six_subject_dataset(), |_| 0.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance(_)));
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        let err = weighted_logrank(&six_subject_dataset(), |t| 1.0 / (t - 4.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
        let err = weighted_logrank(&six_subject_dataset(), |_| f64::NAN).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
    }

    #[test]
    fn all_censored_data_is_a_data_error() {
        let data = dataset(&[(1.0, false, Arm::Control), (2.0, false, Arm::Experimental)]);
        assert!(matches!(logrank(&data).unwrap_err(), Error::Data(_)));
    }

    #[test]
    fn fh_unit_weights_match_logrank() {
        let data = six_subject_dataset();
        let base = logrank(&data).unwrap();
        let fh = fleming_harrington(&data, FHParams::new(0.0, 0.0).unwrap()).unwrap();
        assert_relative_eq!(fh.z, base.z, max_relative = 1e-12);
        assert_relative_eq!(fh.statistic_u, base.statistic_u, max_relative = 1e-12);
    }

    #[test]
    fn fh_late_weights_vanish_at_first_event() {
        let fh = fleming_harrington(&six_subject_dataset(), FHParams::new(0.0, 1.0).unwrap())
            .unwrap();
        assert_eq!(fh.weights[0], 0.0);
    }

    #[test]
    fn fh_components_match_hand_computation() {
        let data = six_subject_dataset();

        let early = fleming_harrington(&data, FHParams::new(1.0, 0.0).unwrap()).unwrap();
        assert_relative_eq!(early.statistic_u, 0.5, max_relative = 1e-12);
        assert_relative_eq!(early.variance_v, 11.0 / 18.0, max_relative = 1e-12);
        assert_relative_eq!(early.z, 0.5 * (18.0_f64 / 11.0).sqrt(), max_relative = 1e-12);

        let late = fleming_harrington(&data, FHParams::new(0.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(late.statistic_u, 4.0 / 15.0, max_relative = 1e-12);
        assert_relative_eq!(late.variance_v, 181.0 / 900.0, max_relative = 1e-12);

        let middle = fleming_harrington(&data, FHParams::new(1.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(middle.statistic_u, 1.0 / 12.0, max_relative = 1e-12);
        assert_relative_eq!(middle.variance_v, 7.0 / 162.0, max_relative = 1e-12);
    }

    #[test]
    fn fh_rejects_bad_exponents() {
        assert!(FHParams::new(-1.0, 0.0).is_err());
        assert!(FHParams::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn design_weighted_test_with_no_assumed_switching_matches_logrank() {
        let data = six_subject_dataset();
        let assumed = SwitchModelParams::new(2.0, 10.0, 15.0, 0.0).unwrap();
        let weighted = mwlr(&data, &assumed).unwrap();
        let base = logrank(&data).unwrap();
        assert_relative_eq!(weighted.z, base.z, max_relative = 1e-12);
        assert_relative_eq!(weighted.p_one_sided, base.p_one_sided, max_relative = 1e-12);
    }

    #[test]
    fn design_weights_are_recorded_and_non_increasing() {
        let data = six_subject_dataset();
        let assumed = SwitchModelParams::new(2.0, 10.0, 15.0, 1.0).unwrap();
        let result = mwlr(&data, &assumed).unwrap();
        assert_eq!(result.weights.len(), 5);
        for (row, w) in
            crate::survdata::build_risk_table(&data).unwrap().rows().iter().zip(&result.weights)
        {
            assert_relative_eq!(*w, model::weight_function(&assumed, row.time), max_relative = 1e-12);
        }
        // Weights decrease over time and start below the t=0 value log(1.5).
        assert!(result.weights.windows(2).all(|w| w[1] <= w[0]));
        assert!(result.weights[0] < 1.5_f64.ln());
        assert!(result.weights[4] > 0.0);
    }

    #[test]
    fn max_combo_matches_hand_computation() {
        let result = max_combo(&six_subject_dataset()).unwrap();

        // Component order: (0,0), (1,0), (0,1), (1,1).
        assert_relative_eq!(result.components[0].variance_v, 1091.0 / 900.0, max_relative = 1e-12);
        assert_relative_eq!(result.components[1].variance_v, 11.0 / 18.0, max_relative = 1e-12);
        assert_relative_eq!(result.components[2].variance_v, 181.0 / 900.0, max_relative = 1e-12);
        assert_relative_eq!(result.components[3].variance_v, 7.0 / 162.0, max_relative = 1e-12);

        // The plain log-rank component has the largest z here.
        assert_eq!(result.best_component(), 0);
        assert_relative_eq!(result.z_max, 23.0 / 1091.0_f64.sqrt(), max_relative = 1e-12);

        // cov(logrank, FH(1,0)) = 73/90 by direct enumeration.
        let expected_r01 =
            (73.0 / 90.0) / ((1091.0_f64 / 900.0) * (11.0 / 18.0)).sqrt();
        assert_relative_eq!(result.correlation[0][1], expected_r01, max_relative = 1e-12);
        assert_eq!(result.correlation[0][1], result.correlation[1][0]);
        for i in 0..4 {
            assert_eq!(result.correlation[i][i], 1.0);
        }

        let tail = std_normal_sf(result.z_max);
        assert!(result.p_one_sided >= tail);
        assert!(result.p_one_sided <= (4.0 * tail).min(1.0));
    }

    #[test]
    fn max_combo_needs_every_component_variance() {
        // Two deaths at a single time: the pooled KM left limit is 1 there,
        // so the gamma components carry zero weight and the test degenerates.
        let data = dataset(&[
            (1.0, true, Arm::Control),
            (1.0, true, Arm::Experimental),
            (2.0, false, Arm::Control),
            (2.0, false, Arm::Experimental),
        ]);
        assert!(matches!(max_combo(&data).unwrap_err(), Error::DegenerateVariance(_)));
    }

    /// Plain Monte Carlo check of the max-combo p-value: draw from the
    /// fitted 4-variate normal via a hand-rolled Cholesky factor and count
    /// exceedances of z_max.
    #[test]
    fn max_combo_p_value_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(90210);
        let mut random_dataset = |n: usize| {
            let rows: Vec<SubjectRecord> = (0..n)
                .map(|_| SubjectRecord {
                    time: 0.5 + 20.0 * rng.random::<f64>(),
                    event: rng.random::<f64>() < 0.75,
                    arm: if rng.random::<f64>() < 0.5 { Arm::Control } else { Arm::Experimental },
                    switch_time: None,
                })
                .collect();
            SurvivalDataset::new(rows).unwrap()
        };

        for data in [six_subject_dataset(), random_dataset(40), random_dataset(80)] {
            let result = match max_combo(&data) {
                Ok(r) => r,
                Err(Error::DegenerateVariance(_)) => continue,
                Err(e) => panic!("unexpected error: {e}"),
            };

            // Lower-triangular factor of the correlation matrix.
            let mut l = [[0.0f64; 4]; 4];
            for j in 0..4 {
                let mut pivot = result.correlation[j][j];
                for k in 0..j {
                    pivot -= l[j][k] * l[j][k];
                }
                l[j][j] = pivot.max(0.0).sqrt();
                for i in (j + 1)..4 {
                    let mut s = result.correlation[i][j];
                    for k in 0..j {
                        s -= l[i][k] * l[j][k];
                    }
                    l[i][j] = if l[j][j] > 0.0 { s / l[j][j] } else { 0.0 };
                }
            }

            let draws = 200_000usize;
            let mut mc_rng = ChaCha8Rng::seed_from_u64(7777);
            let mut exceed = 0usize;
            for _ in 0..draws {
                let g: [f64; 4] = std::array::from_fn(|_| {
                    mc_rng.sample::<f64, _>(rand_distr::StandardNormal)
                });
                let mut any_above = false;
                for i in 0..4 {
                    let mut zi = 0.0;
                    for k in 0..=i {
                        zi += l[i][k] * g[k];
                    }
                    if zi > result.z_max {
                        any_above = true;
                        break;
                    }
                }
                if any_above {
                    exceed += 1;
                }
            }
            let p_mc = exceed as f64 / draws as f64;
            let se = (p_mc * (1.0 - p_mc) / draws as f64).sqrt();
            assert!(
                (result.p_one_sided - p_mc).abs() <= 3.0 * se + 2e-3,
                "p={} vs MC {} (se {})",
                result.p_one_sided,
                p_mc,
                se
            );
        }
    }

    #[test]
    fn rmst_matches_hand_computation() {
        // tau = 6; control mean 11/3 (variance 38/27), experimental mean
        // 13/3 (variance 26/27); the control death at t=6 leaves no area
        // beyond it and contributes nothing.
        let result = rmst_test(&six_subject_dataset()).unwrap();
        assert_relative_eq!(result.statistic_u, 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(result.variance_v, 64.0 / 27.0, max_relative = 1e-12);
        assert_relative_eq!(result.z, 3.0_f64.sqrt() / 4.0, max_relative = 1e-12);
        assert!(result.weights.is_empty());
    }

    #[test]
    fn rmst_on_identical_arms_is_exactly_zero() {
        let rows = [
            (1.0, true),
            (2.0, false),
            (3.0, true),
            (5.0, true),
            (8.0, false),
        ];
        let mut records = Vec::new();
        for &(time, event) in &rows {
            for arm in [Arm::Control, Arm::Experimental] {
                records.push(SubjectRecord { time, event, arm, switch_time: None });
            }
        }
        let result = rmst_test(&SurvivalDataset::new(records).unwrap()).unwrap();
        assert_eq!(result.statistic_u, 0.0);
        assert_eq!(result.z, 0.0);
        assert!(result.variance_v > 0.0);
    }

    #[test]
    fn rmst_without_events_is_degenerate() {
        let data = dataset(&[
            (3.0, false, Arm::Control),
            (4.0, false, Arm::Control),
            (5.0, false, Arm::Experimental),
        ]);
        assert!(matches!(rmst_test(&data).unwrap_err(), Error::DegenerateVariance(_)));
    }

    #[test]
    fn rmst_recovers_exponential_mean_difference() {
        // Two exponential arms with medians 10 and 15, administratively
        // censored at 12 so the truncation lands at exactly 12; the
        // restricted means then have closed forms.
        let lambda0 = 2.0_f64.ln() / 10.0;
        let lambda1 = 2.0_f64.ln() / 15.0;
        let cutoff = 12.0;
        let n = 3000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(314159);
        let mut records = Vec::with_capacity(2 * n);
        for (arm, lambda) in [(Arm::Control, lambda0), (Arm::Experimental, lambda1)] {
            for _ in 0..n {
                let t = -(1.0 - rng.random::<f64>()).ln() / lambda;
                records.push(SubjectRecord {
                    time: t.min(cutoff),
                    event: t <= cutoff,
                    arm,
                    switch_time: None,
                });
            }
        }
        let result = rmst_test(&SurvivalDataset::new(records).unwrap()).unwrap();
        let expected = (1.0 - (-cutoff * lambda1).exp()) / lambda1
            - (1.0 - (-cutoff * lambda0).exp()) / lambda0;
        assert!(
            (result.statistic_u - expected).abs() <= 3.0 * result.variance_v.sqrt(),
            "difference {} vs closed form {expected}",
            result.statistic_u
        );
    }

    /// Light null-calibration check: on data where both arms share one
    /// exponential law, each test rejects at close to the nominal 2.5%.
    #[test]
    fn tests_hold_their_size_under_the_null()
    {
        let lambda = 2.0_f64.ln() / 10.0;
        let assumed = SwitchModelParams::new(2.0, 10.0, 15.0, 1.0).unwrap();
        let critical = crate::mvn::std_normal_quantile(0.975);
        let replications = 800;
        let n_per_arm = 80;
        let mut rng = ChaCha8Rng::seed_from_u64(20_26);
        let mut rejections = [0usize; 3];
        for _ in 0..replications {
            let mut records = Vec::with_capacity(2 * n_per_arm);
            for arm in [Arm::Control, Arm::Experimental] {
                for _ in 0..n_per_arm {
                    let t = -(1.0 - rng.random::<f64>()).ln() / lambda;
                    records.push(SubjectRecord {
                        time: t.min(30.0),
                        event: t <= 30.0,
                        arm,
                        switch_time: None,
                    });
                }
            }
            let data = SurvivalDataset::new(records).unwrap();
            let zs = [
                logrank(&data).unwrap().z,
                mwlr(&data, &assumed).unwrap().z,
                rmst_test(&data).unwrap().z,
            ];
            for (slot, z) in zs.iter().enumerate() {
                if *z > critical {
                    rejections[slot] += 1;
                }
            }
        }
        for (slot, count) in rejections.iter().enumerate() {
            let rate = *count as f64 / replications as f64;
            assert!(
                (rate - 0.025).abs() < 0.02,
                "test {slot} rejected at rate {rate}"
            );
        }
    }

    // Property tests over small random datasets with gridded times (to
    // exercise ties) and a mix of arms and censoring.

    fn arbitrary_dataset() -> impl Strategy<Value = SurvivalDataset> {
        let record = (1u32..=24, any::<bool>(), any::<bool>()).prop_map(
            |(half_months, event, experimental)| SubjectRecord {
                time: half_months as f64 / 2.0,
                event,
                arm: if experimental { Arm::Experimental } else { Arm::Control },
                switch_time: None,
            },
        );
        vec(record, 6..50).prop_map(|records| SurvivalDataset::new(records).unwrap())
    }

    proptest! {
        #[test]
        fn arm_swap_negates_u_and_z(data in arbitrary_dataset()) {
            if let Ok(base) = logrank(&data) {
                let flipped = logrank(&swap_arms(&data)).unwrap();
                prop_assert!((base.statistic_u + flipped.statistic_u).abs() < 1e-12);
                prop_assert!((base.variance_v - flipped.variance_v).abs() < 1e-12);
                prop_assert!((base.z + flipped.z).abs() < 1e-12);
            }
        }

        #[test]
        fn weight_rescaling_leaves_z_alone(data in arbitrary_dataset(), c in 0.01f64..100.0) {
            let base = weighted_logrank(&data, |t| 1.0 / (1.0 + t));
            let scaled = weighted_logrank(&data, |t| c / (1.0 + t));
            match (base, scaled) {
                (Ok(b), Ok(s)) => {
                    prop_assert!((b.z - s.z).abs() < 1e-12);
                    prop_assert!((b.p_one_sided - s.p_one_sided).abs() < 1e-12);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "scaling changed the error outcome"),
            }
        }

        #[test]
        fn indicator_weights_match_administrative_truncation(
            data in arbitrary_dataset(),
            cut_halves in 2u32..=24,
        ) {
            let cut = cut_halves as f64 / 2.0;
            let truncated = SurvivalDataset::new(
                data.records()
                    .iter()
                    .map(|r| SubjectRecord { event: r.event && r.time <= cut, ..*r })
                    .collect(),
            )
            .unwrap();
            let indicator = weighted_logrank(&data, |t| f64::from(t <= cut));
            let direct = logrank(&truncated);
            match (indicator, direct) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a.statistic_u - b.statistic_u).abs() < 1e-12);
                    prop_assert!((a.variance_v - b.variance_v).abs() < 1e-12);
                    prop_assert!((a.z - b.z).abs() < 1e-12);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "truncation changed the error outcome"),
            }
        }

        #[test]
        fn no_assumed_switching_coincides_with_logrank_on_every_dataset(
            data in arbitrary_dataset(),
            med_pfs in 1.0f64..8.0,
            benefit in 1.05f64..3.0,
        ) {
            let med_os0 = med_pfs + 4.0;
            let assumed =
                SwitchModelParams::new(med_pfs, med_os0, med_os0 * benefit, 0.0).unwrap();
            if let Ok(base) = logrank(&data) {
                let weighted = mwlr(&data, &assumed).unwrap();
                prop_assert!((weighted.z - base.z).abs() < 1e-12);
            }
        }

        #[test]
        fn max_combo_p_respects_bonferroni_envelope(data in arbitrary_dataset()) {
            if let Ok(result) = max_combo(&data) {
                let tail = std_normal_sf(result.z_max);
                prop_assert!(result.p_one_sided >= tail - 1e-15);
                prop_assert!(result.p_one_sided <= (4.0 * tail).min(1.0) + 1e-15);
                for c in &result.components {
                    prop_assert!((c.p_one_sided - (1.0 - std_normal_cdf(c.z))).abs() < 1e-12);
                }
            }
        }
    }
}
