//! Trial simulator: latent per-subject event times under the switching
//! mechanism, uniform accrual, and an administrative cutoff at the calendar
//! time of the target-th death.
//!
//! Randomness discipline: every subject draws from its own counter-mode
//! stream keyed by (scenario seed, subject index), so the generated trial is
//! a pure function of the scenario regardless of generation order or thread
//! count. Within a subject the draw order is fixed: enrollment first, then
//! the arm-specific event times, then (control only, on progression) the
//! switch coin and the post-switch residual.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rates_from_medians, SwitchModelParams};
use crate::survdata::{Arm, SubjectRecord, SurvivalDataset};

/// Generative description of one trial: arm sizes, accrual window, analysis
/// trigger, the true switching-model parameters, and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialScenario {
    pub n_control: usize,
    pub n_experimental: usize,
    pub accrual_months: f64,
    /// The analysis happens at the calendar time of this death.
    pub target_deaths: usize,
    pub true_params: SwitchModelParams,
    pub seed: u64,
}

impl TrialScenario {
    /// The reference trial shape used throughout: 139 control and 277
    /// experimental subjects enrolled uniformly over 12 months, analyzed at
    /// the 221st death.
    pub fn reference_design(true_params: SwitchModelParams, seed: u64) -> Self {
        TrialScenario {
            n_control: 139,
            n_experimental: 277,
            accrual_months: 12.0,
            target_deaths: 221,
            true_params,
            seed,
        }
    }

    pub fn n_total(&self) -> usize {
        self.n_control + self.n_experimental
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_control < 1 || self.n_experimental < 1 {
            return Err(Error::InvalidParams("both arms need at least one subject".into()));
        }
        if self.target_deaths < 1 || self.target_deaths > self.n_total() {
            return Err(Error::InvalidParams(format!(
                "target_deaths must be in 1..={} (total subjects), got {}",
                self.n_total(),
                self.target_deaths
            )));
        }
        if !(self.accrual_months.is_finite() && self.accrual_months >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "accrual_months must be finite and non-negative, got {}",
                self.accrual_months
            )));
        }
        Ok(())
    }
}

/// Scenario file schema (TOML): flat keys with the reference design as
/// defaults, so a minimal file only has to pick the switch probability.
/// The seed may live in the file or arrive as an override.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_n_control")]
    pub n_control: usize,
    #[serde(default = "default_n_experimental")]
    pub n_experimental: usize,
    #[serde(default = "default_accrual_months")]
    pub accrual_months: f64,
    #[serde(default = "default_target_deaths")]
    pub target_deaths: usize,
    #[serde(default = "default_median_pfs_control")]
    pub median_pfs_control: f64,
    #[serde(default = "default_median_os_control")]
    pub median_os_control: f64,
    #[serde(default = "default_median_os_experimental")]
    pub median_os_experimental: f64,
    #[serde(default = "default_switch_prob")]
    pub switch_prob: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_n_control() -> usize {
    139
}
fn default_n_experimental() -> usize {
    277
}
fn default_accrual_months() -> f64 {
    12.0
}
fn default_target_deaths() -> usize {
    221
}
fn default_median_pfs_control() -> f64 {
    2.0
}
fn default_median_os_control() -> f64 {
    10.0
}
fn default_median_os_experimental() -> f64 {
    15.0
}
fn default_switch_prob() -> f64 {
    1.0
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_control: default_n_control(),
            n_experimental: default_n_experimental(),
            accrual_months: default_accrual_months(),
            target_deaths: default_target_deaths(),
            median_pfs_control: default_median_pfs_control(),
            median_os_control: default_median_os_control(),
            median_os_experimental: default_median_os_experimental(),
            switch_prob: default_switch_prob(),
            seed: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))
    }

    /// Resolves the config into a validated scenario. `seed_override` wins
    /// over a seed in the file; having neither is an error because every
    /// simulation must be reproducible from its recorded inputs.
    pub fn into_scenario(self, seed_override: Option<u64>) -> Result<TrialScenario> {
        let seed = seed_override.or(self.seed).ok_or_else(|| {
            Error::Config("no seed: set `seed` in the scenario file or pass --seed".into())
        })?;
        let true_params = SwitchModelParams::new(
            self.median_pfs_control,
            self.median_os_control,
            self.median_os_experimental,
            self.switch_prob,
        )?;
        let scenario = TrialScenario {
            n_control: self.n_control,
            n_experimental: self.n_experimental,
            accrual_months: self.accrual_months,
            target_deaths: self.target_deaths,
            true_params,
            seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Latent outcome of one subject, before any censoring is applied.
/// Experimental subjects never carry progression or switch information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedSubject {
    pub arm: Arm,
    /// Calendar enrollment time in [0, accrual_months].
    pub enroll_calendar: f64,
    /// Time from randomization to progression, when progression happens
    /// before death.
    pub progression_time: Option<f64>,
    pub switched: bool,
    /// Time from randomization to death.
    pub death_time: f64,
}

/// The RNG stream for one subject: same key for the whole trial, one
/// counter-mode stream per subject index.
pub fn subject_rng(seed: u64, subject_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject_index);
    rng
}

/// Inverse-CDF exponential draw. Uses 1 - u with u in [0, 1) so the log
/// argument is never zero.
fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Draws one subject. Control subjects race an exponential progression
/// clock against an exponential death clock; on progression they switch
/// with the scenario's probability, which replaces the remaining lifetime
/// with a fresh draw at the experimental death rate. Non-switchers keep the
/// original death draw: by memorylessness the remaining exponential
/// lifetime after progression has the same law, so no redraw is needed.
/// The switch coin is consumed on every progression regardless of outcome,
/// keeping the stream layout independent of the coin.
pub fn simulate_subject(scenario: &TrialScenario, arm: Arm, rng: &mut ChaCha8Rng) -> SimulatedSubject {
    let rates = rates_from_medians(&scenario.true_params);
    let enroll_calendar = scenario.accrual_months * rng.random::<f64>();
    match arm {
        Arm::Experimental => SimulatedSubject {
            arm,
            enroll_calendar,
            progression_time: None,
            switched: false,
            death_time: exp_draw(rng, rates.lambda_os1),
        },
        Arm::Control => {
            let progression = exp_draw(rng, rates.lambda_p0);
            let death = exp_draw(rng, rates.lambda_os0);
            if progression >= death {
                SimulatedSubject {
                    arm,
                    enroll_calendar,
                    progression_time: None,
                    switched: false,
                    death_time: death,
                }
            } else {
                let switched = rng.random::<f64>() < scenario.true_params.switch_prob();
                let death_time = if switched {
                    progression + exp_draw(rng, rates.lambda_os1)
                } else {
                    death
                };
                SimulatedSubject {
                    arm,
                    enroll_calendar,
                    progression_time: Some(progression),
                    switched,
                    death_time,
                }
            }
        }
    }
}

/// One realized trial: the analysis dataset, the calendar cutoff that
/// defined it, and the latent subjects for diagnostics.
#[derive(Debug, Clone)]
pub struct SimulatedTrial {
    pub dataset: SurvivalDataset,
    /// Calendar time of the target-th death, where follow-up stops.
    pub cutoff_calendar: f64,
    pub subjects: Vec<SimulatedSubject>,
}

/// Simulates a full trial: control subjects take indices
/// 0..n_control, experimental subjects the rest. The cutoff is the
/// target-th smallest calendar death time; deaths by the cutoff
/// (inclusive, so ties all count) become events, everyone else is censored
/// at their follow-up max(0, cutoff - enrollment). Subjects enrolled after
/// the cutoff stay in the dataset censored at time zero.
///
/// A switch time is recorded on a subject's record only when the switch had
/// happened by the end of that subject's observed time.
pub fn simulate_trial(scenario: &TrialScenario) -> Result<SimulatedTrial> {
    scenario.validate()?;
    let n_total = scenario.n_total();
    let mut subjects = Vec::with_capacity(n_total);
    for index in 0..n_total {
        let arm = if index < scenario.n_control { Arm::Control } else { Arm::Experimental };
        let mut rng = subject_rng(scenario.seed, index as u64);
        subjects.push(simulate_subject(scenario, arm, &mut rng));
    }

    let calendar_deaths: Vec<f64> =
        subjects.iter().map(|s| s.enroll_calendar + s.death_time).collect();
    let mut sorted = calendar_deaths.clone();
    sorted.sort_by(f64::total_cmp);
    let cutoff_calendar = sorted[scenario.target_deaths - 1];

    let records: Vec<SubjectRecord> = subjects
        .iter()
        .zip(&calendar_deaths)
        .map(|(subject, &calendar_death)| {
            if calendar_death <= cutoff_calendar {
                SubjectRecord {
                    time: subject.death_time,
                    event: true,
                    arm: subject.arm,
                    switch_time: if subject.switched { subject.progression_time } else { None },
                }
            } else {
                let follow_up = (cutoff_calendar - subject.enroll_calendar).max(0.0);
                let switch_time = if subject.switched {
                    subject.progression_time.filter(|&tp| tp <= follow_up)
                } else {
                    None
                };
                SubjectRecord { time: follow_up, event: false, arm: subject.arm, switch_time }
            }
        })
        .collect();

    Ok(SimulatedTrial { dataset: SurvivalDataset::new(records)?, cutoff_calendar, subjects })
}
