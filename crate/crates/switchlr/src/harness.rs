//! Monte Carlo power and efficiency studies over scenario grids.
//!
//! A study expands a declarative config into a grid of scenarios, simulates
//! M trials per scenario, and runs every requested test on each simulated
//! dataset (paired: all tests see the same data within a replication).
//! Replications are generated from per-replication seeds mixed out of
//! (study seed, scenario index, replication index), and aggregation folds
//! results in replication order, so the output is byte-identical no matter
//! how many worker threads rayon uses.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypotests::{
    fleming_harrington, logrank, max_combo, mwlr, rmst_test, FHParams,
};
use crate::model::SwitchModelParams;
use crate::mvn::std_normal_quantile;
use crate::sim::{simulate_trial, TrialScenario};
use crate::survdata::SurvivalDataset;

/// Tests the harness can run. `Fh` is the single Fleming-Harrington test
/// with the early-emphasis exponents (rho=1, gamma=0); the four-component
/// combination is `MaxCombo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Lr,
    Mwlr,
    Fh,
    MaxCombo,
    Rmst,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::Lr => "lr",
            TestKind::Mwlr => "mwlr",
            TestKind::Fh => "fh",
            TestKind::MaxCombo => "maxcombo",
            TestKind::Rmst => "rmst",
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

const FH_DEFAULT: FHParams = FHParams { rho: 1.0, gamma: 0.0 };

/// A config value that may be a scalar or a list in the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

impl<T> From<T> for OneOrMany<T> {
    fn from(v: T) -> Self {
        OneOrMany::One(v)
    }
}

impl<T> From<Vec<T>> for OneOrMany<T> {
    fn from(vs: Vec<T>) -> Self {
        OneOrMany::Many(vs)
    }
}

fn default_pfs0_grid() -> OneOrMany<f64> {
    OneOrMany::One(2.0)
}
fn default_os1() -> f64 {
    15.0
}
fn default_target_deaths_grid() -> OneOrMany<usize> {
    OneOrMany::One(221)
}
fn default_replications() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.025
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

/// Declarative study description (TOML). Grid keys accept a scalar or a
/// list; the scenario grid is the cartesian product of all grid keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerStudyConfig {
    /// True control PFS median grid.
    #[serde(default = "default_pfs0_grid")]
    pub median_pfs_control: OneOrMany<f64>,
    /// True control OS median grid.
    pub median_os_control: OneOrMany<f64>,
    /// True (and assumed) experimental OS median.
    #[serde(default = "default_os1")]
    pub median_os_experimental: f64,
    /// True switch probability grid (p).
    pub switch_prob: OneOrMany<f64>,
    /// Assumed switch probability grid used for the design weights (p').
    pub design_switch_prob: OneOrMany<f64>,
    /// Assumed control OS median for the design weights. Defaults to the
    /// true control OS median of each scenario; setting it decouples the
    /// weight design from the generating truth (needed, for instance, to
    /// give the weighted test something to do under a null simulation).
    #[serde(default)]
    pub design_median_os_control: Option<f64>,
    /// Analysis trigger grid: death count at which follow-up stops.
    #[serde(default = "default_target_deaths_grid")]
    pub target_deaths: OneOrMany<usize>,
    #[serde(default = "default_n_control")]
    pub n_control: usize,
    #[serde(default = "default_n_experimental")]
    pub n_experimental: usize,
    #[serde(default = "default_accrual_months")]
    pub accrual_months: f64,
    /// Replications per scenario.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// One-sided significance level.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Tests to run on every replication.
    pub tests: Vec<TestKind>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Where the CLI writes results.csv and manifest.json.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// One cell of the expanded scenario grid, with every knob resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioPoint {
    pub median_pfs_control: f64,
    pub median_os_control: f64,
    pub median_os_experimental: f64,
    pub switch_prob: f64,
    pub design_switch_prob: f64,
    pub design_median_os_control: f64,
    pub target_deaths: usize,
    pub n_control: usize,
    pub n_experimental: usize,
    pub accrual_months: f64,
}

impl ScenarioPoint {
    /// Ratio of the unadjusted medians, the conventional label for scenario
    /// strength (smaller means a larger benefit).
    pub fn hazard_ratio_unadjusted(&self) -> f64 {
        self.median_os_control / self.median_os_experimental
    }

    pub fn true_params(&self) -> Result<SwitchModelParams> {
        SwitchModelParams::new(
            self.median_pfs_control,
            self.median_os_control,
            self.median_os_experimental,
            self.switch_prob,
        )
    }

    /// Parameters the weighted test is *designed* against; these are fixed
    /// before any data exist.
    pub fn design_params(&self) -> Result<SwitchModelParams> {
        SwitchModelParams::new(
            self.median_pfs_control,
            self.design_median_os_control,
            self.median_os_experimental,
            self.design_switch_prob,
        )
    }
}

impl PowerStudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("study config: {e}")))
    }

    fn validate_scalars(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!("alpha must be in (0, 0.5), got {}", self.alpha)));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("at least one test must be requested".into()));
        }
        for (i, t) in self.tests.iter().enumerate() {
            if self.tests[..i].contains(t) {
                return Err(Error::Config(format!("duplicate test `{t}` in config")));
            }
        }
        Ok(())
    }

    /// Expands the grid in a fixed nesting order (PFS median outermost,
    /// then OS median, true p, design p', target deaths innermost) and
    /// validates every cell's true and design parameters up front.
    pub fn expand_grid(&self) -> Result<Vec<ScenarioPoint>> {
        let pfs0s = self.median_pfs_control.values();
        let os0s = self.median_os_control.values();
        let ps = self.switch_prob.values();
        let p_primes = self.design_switch_prob.values();
        let deaths = self.target_deaths.values();
        for (name, len) in [
            ("median_pfs_control", pfs0s.len()),
            ("median_os_control", os0s.len()),
            ("switch_prob", ps.len()),
            ("design_switch_prob", p_primes.len()),
            ("target_deaths", deaths.len()),
        ] {
            if len == 0 {
                return Err(Error::Config(format!("grid `{name}` is empty")));
            }
        }

        let mut points = Vec::new();
        for &pfs0 in &pfs0s {
            for &os0 in &os0s {
                for &p in &ps {
                    for &p_prime in &p_primes {
                        for &target in &deaths {
                            let point = ScenarioPoint {
                                median_pfs_control: pfs0,
                                median_os_control: os0,
                                median_os_experimental: self.median_os_experimental,
                                switch_prob: p,
                                design_switch_prob: p_prime,
                                design_median_os_control: self
                                    .design_median_os_control
                                    .unwrap_or(os0),
                                target_deaths: target,
                                n_control: self.n_control,
                                n_experimental: self.n_experimental,
                                accrual_months: self.accrual_months,
                            };
                            point.true_params()?;
                            point.design_params()?;
                            TrialScenario {
                                n_control: point.n_control,
                                n_experimental: point.n_experimental,
                                accrual_months: point.accrual_months,
                                target_deaths: point.target_deaths,
                                true_params: point.true_params()?,
                                seed: 0,
                            }
                            .validate()?;
                            points.push(point);
                        }
                    }
                }
            }
        }
        Ok(points)
    }
}

/// Aggregated outcome of one test on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestSummary {
    pub test: TestKind,
    /// Fraction of replications with z above the critical value.
    pub power: f64,
    /// Binomial Monte Carlo standard error sqrt(power*(1-power)/M).
    pub power_se: f64,
    /// Mean z over non-degenerate replications (NaN if all degenerate).
    pub mean_z: f64,
    /// Replications whose test had no usable variance; they count as
    /// non-rejections.
    pub degenerate: usize,
    /// Squared mean-z ratio against the plain log-rank test, in percent;
    /// absent when the log-rank test was not run or its mean z is not
    /// positive.
    pub efficiency_vs_lr: Option<f64>,
    /// Fraction of replications where this test's p-value is strictly
    /// below the log-rank p-value; absent for the log-rank row itself.
    pub p_dominance_vs_lr: Option<f64>,
}

/// Full outcome of one scenario: the resolved point, per-test summaries in
/// config order, the per-replication z and p values (outer index = test),
/// and a digest of every simulated dataset in replication order.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub point: ScenarioPoint,
    pub summaries: Vec<TestSummary>,
    pub z_values: Vec<Vec<f64>>,
    pub p_values: Vec<Vec<f64>>,
    pub dataset_digest: u64,
}

#[derive(Debug, Clone)]
pub struct PowerStudyResult {
    pub config: PowerStudyConfig,
    pub seed: u64,
    pub critical_z: f64,
    pub scenarios: Vec<ScenarioResult>,
}

impl PowerStudyResult {
    pub fn tests(&self) -> &[TestKind] {
        &self.config.tests
    }

    pub fn test_index(&self, kind: TestKind) -> Option<usize> {
        self.config.tests.iter().position(|&t| t == kind)
    }

    /// True when some test produced no usable replication at all in some
    /// scenario; the CLI maps this to the degeneracy exit code.
    pub fn fully_degenerate(&self) -> bool {
        self.scenarios
            .iter()
            .any(|s| s.summaries.iter().any(|t| t.degenerate == self.config.replications))
    }

    /// Tidy results table: one row per (scenario, test, metric).
    pub fn results_csv_string(&self) -> String {
        let mut out = String::from(
            "median_pfs_control,median_os_control,median_os_experimental,switch_prob,\
             design_switch_prob,design_median_os_control,target_deaths,hr_unadjusted,\
             test,metric,value\n",
        );
        for scenario in &self.scenarios {
            let p = &scenario.point;
            let prefix = format!(
                "{},{},{},{},{},{},{},{}",
                p.median_pfs_control,
                p.median_os_control,
                p.median_os_experimental,
                p.switch_prob,
                p.design_switch_prob,
                p.design_median_os_control,
                p.target_deaths,
                p.hazard_ratio_unadjusted(),
            );
            for summary in &scenario.summaries {
                let mut push = |metric: &str, value: String| {
                    out.push_str(&prefix);
                    out.push(',');
                    out.push_str(summary.test.name());
                    out.push(',');
                    out.push_str(metric);
                    out.push(',');
                    out.push_str(&value);
                    out.push('\n');
                };
                push("power", format!("{}", summary.power));
                push("power_se", format!("{}", summary.power_se));
                push("mean_z", format!("{}", summary.mean_z));
                push("degenerate", format!("{}", summary.degenerate));
                if let Some(eff) = summary.efficiency_vs_lr {
                    push("efficiency_vs_lr_pct", format!("{eff}"));
                }
                if let Some(dom) = summary.p_dominance_vs_lr {
                    push("p_dominance_vs_lr", format!("{dom}"));
                }
            }
        }
        out
    }

    /// Reproducibility manifest: tool version, the full config echo, the
    /// derived critical value, and one dataset digest per scenario.
    pub fn manifest_json(&self) -> String {
        #[derive(Serialize)]
        struct Manifest<'a> {
            version: &'a str,
            seed: u64,
            critical_z: f64,
            config: &'a PowerStudyConfig,
            scenario_digests: Vec<String>,
        }
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            critical_z: self.critical_z,
            config: &self.config,
            scenario_digests: self
                .scenarios
                .iter()
                .map(|s| format!("{:016x}", s.dataset_digest))
                .collect(),
        };
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail")
    }
}

/// Squared ratio of mean z-statistics, as a percentage. The lists must be
/// paired (same replications); entries that are not finite (degenerate
/// replications) are excluded from each mean. Returns None when the
/// reference mean is not positive, where the ratio loses its sample-size
/// interpretation.
pub fn efficiency(z_test: &[f64], z_reference: &[f64]) -> Result<Option<f64>> {
    if z_test.len() != z_reference.len() || z_test.is_empty() {
        return Err(Error::InvalidParams(
            "efficiency needs two non-empty paired lists of equal length".into(),
        ));
    }
    let finite_mean = |values: &[f64]| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for v in values {
            if v.is_finite() {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    };
    let mean_test = finite_mean(z_test);
    let mean_reference = finite_mean(z_reference);
    if !(mean_reference > 0.0) || !mean_test.is_finite() {
        return Ok(None);
    }
    let ratio = mean_test / mean_reference;
    Ok(Some(ratio * ratio * 100.0))
}

/// Fraction of replications where the first test's p-value is strictly
/// smaller than the second's. Pairs with a NaN (degenerate) entry never
/// count as dominance.
pub fn p_value_dominance(p_test: &[f64], p_reference: &[f64]) -> Result<f64> {
    if p_test.len() != p_reference.len() || p_test.is_empty() {
        return Err(Error::InvalidParams(
            "dominance needs two non-empty paired lists of equal length".into(),
        ));
    }
    let wins = p_test.iter().zip(p_reference).filter(|(a, b)| a < b).count();
    Ok(wins as f64 / p_test.len() as f64)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one replication, a pure function of (study seed, scenario index,
/// replication index) so any replication can be regenerated in isolation.
fn replication_seed(seed: u64, scenario_index: u64, replication: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0x9E37_79B9_7F4A_7C15);
    h = splitmix64(h ^ scenario_index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    splitmix64(h ^ replication.wrapping_mul(0x94D0_49BB_1331_11EB))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a_bytes(hash: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *hash ^= b as u64;
        *hash = hash.wrapping_mul(FNV_PRIME);
    }
}

/// Order-sensitive digest of a dataset's exact bit content, used to verify
/// that every test within a replication saw the same data and that reruns
/// reproduce it.
pub fn dataset_digest(data: &SurvivalDataset) -> u64 {
    let mut hash = FNV_OFFSET;
    for record in data.records() {
        fnv1a_bytes(&mut hash, &record.time.to_bits().to_le_bytes());
        fnv1a_bytes(&mut hash, &[record.event as u8, record.arm.code()]);
        match record.switch_time {
            Some(t) => {
                fnv1a_bytes(&mut hash, &[1]);
                fnv1a_bytes(&mut hash, &t.to_bits().to_le_bytes());
            }
            None => fnv1a_bytes(&mut hash, &[0]),
        }
    }
    hash
}

struct RepRow {
    digest: u64,
    z: Vec<f64>,
    p: Vec<f64>,
    degenerate: Vec<bool>,
}

/// Runs one test, mapping a degenerate variance to a (NaN, NaN) outcome
/// that the aggregation counts as a non-rejection. Any other error is a
/// real failure and aborts the study.
fn evaluate_test(
    kind: TestKind,
    data: &SurvivalDataset,
    design: &SwitchModelParams,
) -> Result<(f64, f64, bool)> {
    let outcome = match kind {
        TestKind::Lr => logrank(data),
        TestKind::Mwlr => mwlr(data, design),
        TestKind::Fh => fleming_harrington(data, FH_DEFAULT),
        TestKind::Rmst => rmst_test(data),
        TestKind::MaxCombo => {
            return match max_combo(data) {
                // The combination test's raw z is the maximum of four
                // correlated statistics, so it is not standard normal and
                // cannot share the plain critical value. Its replication z
                // is therefore the standard-normal equivalent of its
                // multiplicity-adjusted p-value: the shared threshold then
                // rejects exactly when the adjusted p is below alpha, and
                // mean-z comparisons across tests stay on one scale.
                Ok(result) => {
                    let z = -std_normal_quantile(result.p_one_sided);
                    Ok((z, result.p_one_sided, false))
                }
                Err(Error::DegenerateVariance(_)) => Ok((f64::NAN, f64::NAN, true)),
                Err(e) => Err(e),
            };
        }
    };
    match outcome {
        Ok(result) => Ok((result.z, result.p_one_sided, false)),
        Err(Error::DegenerateVariance(_)) => Ok((f64::NAN, f64::NAN, true)),
        Err(e) => Err(e),
    }
}

/// Runs the full study. Scenarios run sequentially; replications within a
/// scenario run in parallel on the current rayon pool and are collected in
/// replication order, so the result does not depend on the worker count.
pub fn run_power_study(config: &PowerStudyConfig) -> Result<PowerStudyResult> {
    config.validate_scalars()?;
    let points = config.expand_grid()?;
    let seed = config
        .seed
        .ok_or_else(|| Error::Config("no seed: set `seed` in the config or pass --seed".into()))?;
    let critical_z = std_normal_quantile(1.0 - config.alpha);
    let tests = config.tests.clone();
    let m = config.replications;

    let mut scenarios = Vec::with_capacity(points.len());
    for (scenario_index, point) in points.iter().enumerate() {
        let true_params = point.true_params()?;
        let design = point.design_params()?;
        let rows: Vec<RepRow> = (0..m)
            .into_par_iter()
            .map(|rep| -> Result<RepRow> {
                let scenario = TrialScenario {
                    n_control: point.n_control,
                    n_experimental: point.n_experimental,
                    accrual_months: point.accrual_months,
                    target_deaths: point.target_deaths,
                    true_params,
                    seed: replication_seed(seed, scenario_index as u64, rep as u64),
                };
                let trial = simulate_trial(&scenario)?;
                let mut z = Vec::with_capacity(tests.len());
                let mut p = Vec::with_capacity(tests.len());
                let mut degenerate = Vec::with_capacity(tests.len());
                for &kind in &tests {
                    let (zi, pi, deg) = evaluate_test(kind, &trial.dataset, &design)?;
                    z.push(zi);
                    p.push(pi);
                    degenerate.push(deg);
                }
                Ok(RepRow { digest: dataset_digest(&trial.dataset), z, p, degenerate })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut z_values = vec![Vec::with_capacity(m); tests.len()];
        let mut p_values = vec![Vec::with_capacity(m); tests.len()];
        let mut degenerate_counts = vec![0usize; tests.len()];
        let mut digest = FNV_OFFSET;
        for row in &rows {
            fnv1a_bytes(&mut digest, &row.digest.to_le_bytes());
            for t in 0..tests.len() {
                z_values[t].push(row.z[t]);
                p_values[t].push(row.p[t]);
                degenerate_counts[t] += row.degenerate[t] as usize;
            }
        }

        let lr_index = tests.iter().position(|&t| t == TestKind::Lr);
        let mut summaries = Vec::with_capacity(tests.len());
        for (t, &kind) in tests.iter().enumerate() {
            let rejections = z_values[t].iter().filter(|&&z| z > critical_z).count();
            let power = rejections as f64 / m as f64;
            let power_se = (power * (1.0 - power) / m as f64).sqrt();
            let finite: Vec<f64> = z_values[t].iter().copied().filter(|z| z.is_finite()).collect();
            let mean_z = if finite.is_empty() {
                f64::NAN
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            let efficiency_vs_lr = match lr_index {
                Some(lr) => efficiency(&z_values[t], &z_values[lr])?,
                None => None,
            };
            let p_dominance_vs_lr = match lr_index {
                Some(lr) if t != lr => Some(p_value_dominance(&p_values[t], &p_values[lr])?),
                _ => None,
            };
            summaries.push(TestSummary {
                test: kind,
                power,
                power_se,
                mean_z,
                degenerate: degenerate_counts[t],
                efficiency_vs_lr,
                p_dominance_vs_lr,
            });
        }
        scenarios.push(ScenarioResult {
            point: *point,
            summaries,
            z_values,
            p_values,
            dataset_digest: digest,
        });
    }

    Ok(PowerStudyResult { config: config.clone(), seed, critical_z, scenarios })
}

/// Power-versus-events sweep: a study whose target-death grid is a strictly
/// ascending list. The result carries one scenario per (grid cell, death
/// count); consumers read the power column per death count.
pub fn events_sweep(config: &PowerStudyConfig) -> Result<PowerStudyResult> {
    let deaths = config.target_deaths.values();
    if deaths.len() < 1 {
        return Err(Error::Config("events sweep needs a non-empty target_deaths list".into()));
    }
    if deaths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("events sweep needs a strictly ascending target_deaths list".into()));
    }
    run_power_study(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Small fast study config used across the tests.
    fn mini_config() -> PowerStudyConfig {
        PowerStudyConfig {
            median_pfs_control: 2.0.into(),
            median_os_control: 6.0.into(),
            median_os_experimental: 15.0,
            switch_prob: 1.0.into(),
            design_switch_prob: 1.0.into(),
            design_median_os_control: None,
            target_deaths: 50usize.into(),
            n_control: 30,
            n_experimental: 30,
            accrual_months: 6.0,
            replications: 40,
            alpha: 0.025,
            tests: vec![TestKind::Lr, TestKind::Mwlr],
            seed: Some(4242),
            out_dir: None,
        }
    }

    #[test]
    fn toml_defaults_and_one_or_many_forms() {
        let config = PowerStudyConfig::from_toml_str(
            "median_os_control = [5.0, 7.5]\nswitch_prob = 1.0\ndesign_switch_prob = [0.7, 1.0]\ntests = [\"lr\", \"mwlr\"]\n",
        )
        .unwrap();
        assert_eq!(config.replications, 10_000);
        assert_eq!(config.alpha, 0.025);
        assert_eq!(config.median_pfs_control.values(), vec![2.0]);
        assert_eq!(config.median_os_experimental, 15.0);
        assert_eq!(config.target_deaths.values(), vec![221]);
        assert_eq!(config.n_control, 139);
        assert_eq!(config.n_experimental, 277);
        assert_eq!(config.expand_grid().unwrap().len(), 4);
        assert!(config.seed.is_none());

        assert!(PowerStudyConfig::from_toml_str("median_os_contrl = 5.0").is_err());
    }

    #[test]
    fn grid_expansion_order_is_fixed() {
        let mut config = mini_config();
        config.median_os_control = vec![6.0, 9.0].into();
        config.switch_prob = vec![0.0, 1.0].into();
        let points = config.expand_grid().unwrap();
        assert_eq!(points.len(), 4);
        let key: Vec<(f64, f64)> =
            points.iter().map(|p| (p.median_os_control, p.switch_prob)).collect();
        assert_eq!(key, vec![(6.0, 0.0), (6.0, 1.0), (9.0, 0.0), (9.0, 1.0)]);
        // Unset design median resolves to each scenario's true value.
        assert!(points.iter().all(|p| p.design_median_os_control == p.median_os_control));
    }

    #[test]
    fn config_validation_catches_bad_cells() {
        let mut config = mini_config();
        config.alpha = 0.5;
        assert!(run_power_study(&config).is_err());

        config = mini_config();
        config.tests = vec![];
        assert!(run_power_study(&config).is_err());

        config = mini_config();
        config.tests = vec![TestKind::Lr, TestKind::Lr];
        assert!(run_power_study(&config).is_err());

        config = mini_config();
        config.seed = None;
        assert!(matches!(run_power_study(&config).unwrap_err(), Error::Config(_)));

        // Design medians must form a valid parameter set too.
        config = mini_config();
        config.design_median_os_control = Some(1.0);
        assert!(config.expand_grid().is_err());

        // Target deaths beyond the enrollment is impossible.
        config = mini_config();
        config.target_deaths = 1000usize.into();
        assert!(config.expand_grid().is_err());
    }

    #[test]
    fn efficiency_of_a_test_against_itself_is_exactly_100() {
        let z = vec![0.3, 1.2, 2.2, -0.4];
        assert_eq!(efficiency(&z, &z).unwrap(), Some(100.0));
    }

    #[test]
    fn efficiency_tracks_the_squared_mean_ratio() {
        let base = vec![0.5, 1.5, 2.0];
        let doubled: Vec<f64> = base.iter().map(|z| 2.0 * z).collect();
        assert_relative_eq!(
            efficiency(&doubled, &base).unwrap().unwrap(),
            400.0,
            max_relative = 1e-12
        );
        // Non-positive reference mean has no sample-size reading.
        assert_eq!(efficiency(&base, &[-1.0, 0.5, 0.4]).unwrap(), None);
        // NaN entries (degenerate replications) are excluded, not poisoned.
        let with_nan = vec![0.5, f64::NAN, 1.5, 2.0];
        let reference = vec![0.5, 0.7, 1.5, 2.0];
        assert!(efficiency(&with_nan, &reference).unwrap().is_some());
        assert!(efficiency(&base, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dominance_counts_strict_wins_only() {
        let a = vec![0.01, 0.2, 0.3];
        assert_eq!(p_value_dominance(&a, &a).unwrap(), 0.0);
        let halves: Vec<f64> = a.iter().map(|p| p / 2.0).collect();
        assert_eq!(p_value_dominance(&halves, &a).unwrap(), 1.0);
        // NaN pairs and exact ties both count as non-dominance; only the
        // final pair (0.1 < 0.3) is a strict win.
        let with_nan = vec![0.01, f64::NAN, 0.1];
        assert_relative_eq!(
            p_value_dominance(&with_nan, &a).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn study_is_deterministic_and_worker_count_invariant() {
        let config = mini_config();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_power_study(&config).unwrap())
        };
        let single = run(1);
        let multi = run(4);
        assert_eq!(single.results_csv_string(), multi.results_csv_string());
        assert_eq!(single.manifest_json(), multi.manifest_json());
        assert_eq!(
            single.scenarios[0].dataset_digest,
            multi.scenarios[0].dataset_digest
        );
        // z values are identical replication by replication, not just in
        // aggregate.
        assert_eq!(single.scenarios[0].z_values, multi.scenarios[0].z_values);
    }

    #[test]
    fn summary_invariants_hold_on_a_small_run() {
        let result = run_power_study(&mini_config()).unwrap();
        assert_eq!(result.scenarios.len(), 1);
        let scenario = &result.scenarios[0];
        let m = result.config.replications;
        for summary in &scenario.summaries {
            assert!((0.0..=1.0).contains(&summary.power));
            let expected_se = (summary.power * (1.0 - summary.power) / m as f64).sqrt();
            assert!((summary.power_se - expected_se).abs() < 1e-12);
            assert!(summary.mean_z.is_finite());
        }
        let lr = &scenario.summaries[0];
        assert_eq!(lr.test, TestKind::Lr);
        assert_eq!(lr.efficiency_vs_lr, Some(100.0));
        assert_eq!(lr.p_dominance_vs_lr, None);
        let mwlr = &scenario.summaries[1];
        assert!(mwlr.efficiency_vs_lr.is_some());
        assert!(mwlr.p_dominance_vs_lr.is_some());
        assert!(!result.fully_degenerate());

        let csv = result.results_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("median_pfs_control,"));
        assert!(lines[0].ends_with("test,metric,value"));
        // Header, then per test 4 base metrics + efficiency, + dominance
        // for the non-reference test.
        assert_eq!(lines.len(), 1 + 5 + 6);

        let manifest = result.manifest_json();
        assert!(manifest.contains("\"version\""));
        assert!(manifest.contains("\"scenario_digests\""));
        assert!(manifest.contains(&format!("{:016x}", scenario.dataset_digest)));
    }

    #[test]
    fn degenerate_tests_count_as_non_rejections() {
        // Designing the weights against equal OS medians with no assumed
        // switching makes the weight curve identically zero, so every
        // replication of the weighted test is degenerate.
        let mut config = mini_config();
        config.median_os_control = 15.0.into();
        config.design_switch_prob = 0.0.into();
        config.replications = 25;
        let result = run_power_study(&config).unwrap();
        let scenario = &result.scenarios[0];
        let mwlr = &scenario.summaries[1];
        assert_eq!(mwlr.test, TestKind::Mwlr);
        assert_eq!(mwlr.degenerate, 25);
        assert_eq!(mwlr.power, 0.0);
        assert!(mwlr.mean_z.is_nan());
        assert_eq!(mwlr.efficiency_vs_lr, None);
        assert_eq!(mwlr.p_dominance_vs_lr, Some(0.0));
        assert!(result.fully_degenerate());
        // The log-rank column is untouched by its neighbor's degeneracy.
        assert!(scenario.summaries[0].mean_z.is_finite());
    }

    #[test]
    fn events_sweep_requires_ascending_deaths() {
        let mut config = mini_config();
        config.target_deaths = vec![40usize, 30].into();
        assert!(events_sweep(&config).is_err());
        config.target_deaths = vec![20usize, 40].into();
        let result = events_sweep(&config).unwrap();
        assert_eq!(result.scenarios.len(), 2);
        assert_eq!(result.scenarios[0].point.target_deaths, 20);
        assert_eq!(result.scenarios[1].point.target_deaths, 40);
    }

    #[test]
    fn replication_seeds_do_not_collide_trivially() {
        let mut seen = std::collections::HashSet::new();
        for scenario in 0..8u64 {
            for rep in 0..1000u64 {
                assert!(seen.insert(replication_seed(1, scenario, rep)));
            }
        }
        // Different study seeds shift everything.
        assert_ne!(replication_seed(1, 0, 0), replication_seed(2, 0, 0));
    }
}
