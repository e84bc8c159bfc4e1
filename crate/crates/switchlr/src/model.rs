//! Three-state exponential model for a control arm with treatment switching.
//!
//! A control patient starts alive and not progressed, with constant death
//! hazard `lambda_os0` and progression hazard `lambda_p0` acting as competing
//! exponentials. On progression the patient switches to the experimental
//! treatment with probability `p` (death hazard becomes `lambda_os1`) or stays
//! on control (hazard keeps `lambda_os0`). Every state occupancy probability
//! then has a closed form, and so do the control arm's marginal survival and
//! hazard, the experimental-to-control hazard ratio `eta(t)`, and the
//! log-rank weight function `w(t) = -ln eta(t)`.
//!
//! Everything in this module is a function of design assumptions alone. In
//! particular the weight function is fixed before any data are seen, which is
//! what keeps the weighted log-rank test built on it valid under the null.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative gap under which `lambda_pfs0` and `lambda_os1` are treated as
/// equal and the removable-singularity limit formulas are used.
const SINGULAR_REL_TOL: f64 = 1e-9;

/// Design medians (months) and the switch probability.
///
/// Construction validates: all medians positive and finite, overall-survival
/// median strictly above the PFS median (otherwise the implied progression
/// rate is not positive), and `switch_prob` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchModelParams {
    median_pfs_control: f64,
    median_os_control: f64,
    median_os_experimental: f64,
    switch_prob: f64,
}

impl SwitchModelParams {
    pub fn new(
        median_pfs_control: f64,
        median_os_control: f64,
        median_os_experimental: f64,
        switch_prob: f64,
    ) -> Result<Self> {
        let medians = [
            ("median_pfs_control", median_pfs_control),
            ("median_os_control", median_os_control),
            ("median_os_experimental", median_os_experimental),
        ];
        for (name, value) in medians {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be a positive finite number of months, got {value}"
                )));
            }
        }
        if median_os_control <= median_pfs_control {
            return Err(Error::InvalidParams(format!(
                "median_os_control ({median_os_control}) must exceed median_pfs_control \
                 ({median_pfs_control}); otherwise the implied progression rate is not positive"
            )));
        }
        if !(0.0..=1.0).contains(&switch_prob) {
            return Err(Error::InvalidParams(format!(
                "switch_prob must lie in [0, 1], got {switch_prob}"
            )));
        }
        Ok(Self {
            median_pfs_control,
            median_os_control,
            median_os_experimental,
            switch_prob,
        })
    }

    pub fn median_pfs_control(&self) -> f64 {
        self.median_pfs_control
    }

    pub fn median_os_control(&self) -> f64 {
        self.median_os_control
    }

    pub fn median_os_experimental(&self) -> f64 {
        self.median_os_experimental
    }

    pub fn switch_prob(&self) -> f64 {
        self.switch_prob
    }

    /// Median of the latent time-to-progression implied by the PFS and OS
    /// medians: `m_pfs * m_os / (m_os - m_pfs)`.
    pub fn median_time_to_progression(&self) -> f64 {
        self.median_pfs_control * self.median_os_control
            / (self.median_os_control - self.median_pfs_control)
    }
}

/// Exponential rates (per month) implied by a parameter set.
///
/// `lambda_p0` is the latent progression rate and always equals
/// `lambda_pfs0 - lambda_os0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    pub lambda_pfs0: f64,
    pub lambda_os0: f64,
    pub lambda_os1: f64,
    pub lambda_p0: f64,
}

/// Converts medians to exponential rates via `lambda = ln 2 / median`.
pub fn rates_from_medians(params: &SwitchModelParams) -> RateSet {
    let lambda_pfs0 = LN_2 / params.median_pfs_control();
    let lambda_os0 = LN_2 / params.median_os_control();
    let lambda_os1 = LN_2 / params.median_os_experimental();
    RateSet {
        lambda_pfs0,
        lambda_os0,
        lambda_os1,
        lambda_p0: lambda_pfs0 - lambda_os0,
    }
}

/// Long-run fraction of control subjects that eventually switch: the
/// probability that progression precedes death, `1 - m_pfs/m_os`, times the
/// switch probability.
pub fn switch_fraction_q(params: &SwitchModelParams) -> f64 {
    (1.0 - params.median_pfs_control() / params.median_os_control()) * params.switch_prob()
}

/// Occupancy probabilities of the three alive states at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateProbabilities {
    /// Alive, not yet progressed.
    pub not_progressed: f64,
    /// Alive, progressed, switched onto the experimental treatment.
    pub progressed_switched: f64,
    /// Alive, progressed, still on control.
    pub progressed_not_switched: f64,
}

impl StateProbabilities {
    /// Total probability of being alive: the control-arm survival function.
    pub fn alive(&self) -> f64 {
        self.not_progressed + self.progressed_switched + self.progressed_not_switched
    }
}

fn is_singular(rates: &RateSet) -> bool {
    (rates.lambda_pfs0 - rates.lambda_os1).abs() < SINGULAR_REL_TOL * rates.lambda_os1
}

/// `(exp(-a t) - exp(-b t)) / (b - a)` with the removable singularity at
/// `a == b` and no catastrophic cancellation: the slower decay is factored
/// out so the difference is an `exp_m1` of a non-positive argument.
fn dexp_ratio(a: f64, b: f64, t: f64) -> f64 {
    let (lo, gap) = if a <= b { (a, b - a) } else { (b, a - b) };
    if gap == 0.0 {
        return t * (-lo * t).exp();
    }
    (-lo * t).exp() * (-(-gap * t).exp_m1()) / gap
}

/// Closed-form state occupancies at time `t >= 0`.
pub fn state_probabilities(rates: &RateSet, switch_prob: f64, t: f64) -> StateProbabilities {
    let RateSet {
        lambda_pfs0,
        lambda_os0,
        lambda_os1,
        lambda_p0,
    } = *rates;
    let not_progressed = (-lambda_pfs0 * t).exp();
    // (1 - p) * (exp(-lambda_os0 t) - exp(-lambda_pfs0 t)), cancellation-free.
    let progressed_not_switched =
        (1.0 - switch_prob) * (-lambda_os0 * t).exp() * (-(-lambda_p0 * t).exp_m1());
    let progressed_switched = if is_singular(rates) {
        switch_prob * lambda_p0 * t * (-lambda_os1 * t).exp()
    } else {
        switch_prob * lambda_p0 * dexp_ratio(lambda_os1, lambda_pfs0, t)
    };
    StateProbabilities {
        not_progressed,
        progressed_switched,
        progressed_not_switched,
    }
}

/// Control-arm survival `S0(t)`: the sum of the three alive-state occupancies.
pub fn control_survival(rates: &RateSet, switch_prob: f64, t: f64) -> f64 {
    state_probabilities(rates, switch_prob, t).alive()
}

/// Control-arm marginal hazard `h0(t) = -d/dt ln S0(t)`.
///
/// The closed form is a ratio of three exponential terms whose multipliers
/// happen to equal their own decay rates. The slowest decay among terms with
/// a nonzero coefficient is factored out of numerator and denominator, so the
/// ratio stays finite long after each raw `exp(-lambda t)` would underflow;
/// a term whose remaining exponential underflows to zero drops out, leaving
/// the dominant-term limit. When `lambda_pfs0` and `lambda_os1` coincide the
/// closed form is 0/0, and the hazard is instead assembled from the limit
/// state occupancies weighted by their per-state death hazards.
pub fn control_hazard(rates: &RateSet, switch_prob: f64, t: f64) -> f64 {
    let RateSet {
        lambda_pfs0,
        lambda_os0,
        lambda_os1,
        lambda_p0,
    } = *rates;
    let p = switch_prob;
    if is_singular(rates) {
        let s = state_probabilities(rates, p, t);
        return (lambda_os0 * (s.not_progressed + s.progressed_not_switched)
            + lambda_os1 * s.progressed_switched)
            / s.alive();
    }
    let coef = [
        (1.0 - p) * (lambda_pfs0 - lambda_os1),
        p * lambda_p0,
        p * (lambda_os0 - lambda_os1),
    ];
    let rate = [lambda_os0, lambda_os1, lambda_pfs0];
    let lambda_ref = coef
        .iter()
        .zip(rate)
        .filter(|(c, _)| **c != 0.0)
        .map(|(_, r)| r)
        .fold(f64::INFINITY, f64::min);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        if coef[i] == 0.0 {
            continue;
        }
        let scaled = (-(rate[i] - lambda_ref) * t).exp();
        num += coef[i] * rate[i] * scaled;
        den += coef[i] * scaled;
    }
    num / den
}

/// Experimental-to-control hazard ratio `eta(t) = lambda_os1 / h0(t)`.
///
/// Starts at the proportional-hazards value `m_os0 / m_os1` and, with
/// switching and a beneficial experimental arm, climbs toward 1 as the
/// surviving control mix fills with switched patients.
pub fn hazard_ratio(rates: &RateSet, switch_prob: f64, t: f64) -> f64 {
    rates.lambda_os1 / control_hazard(rates, switch_prob, t)
}

/// Design weight for the weighted log-rank test: `w(t) = -ln eta(t)` under
/// the assumed parameter set.
///
/// With `switch_prob = 0` this is the constant `ln(m_os1/m_os0)` and the test
/// reduces to the ordinary log-rank test up to a positive scalar. With a
/// beneficial experimental arm the weights decrease toward zero,
/// de-emphasizing late events where switching has washed out the contrast.
/// A harmful assumed experimental arm flips the sign.
pub fn weight_function(assumed: &SwitchModelParams, t: f64) -> f64 {
    let rates = rates_from_medians(assumed);
    -hazard_ratio(&rates, assumed.switch_prob(), t).ln()
}
