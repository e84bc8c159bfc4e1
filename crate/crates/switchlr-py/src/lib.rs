//! Python bindings for the `switchlr` survival-analysis library.
//!
//! The module mirrors the Rust API at the level a statistician scripts
//! against: the treatment-switching hazard model, right-censored two-arm
//! datasets, the test battery, and the trial simulator. Heavy lifting stays
//! in Rust; every method releases no state between calls, so objects are
//! safe to share across Python threads in the usual GIL-bound way.

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use switchlr::hypotests::{self, FHParams};
use switchlr::model::{
    self, rates_from_medians, RateSet, SwitchModelParams,
};
use switchlr::sim::{simulate_trial, TrialScenario};
use switchlr::survdata::{Arm, SubjectRecord, SurvivalDataset};

fn pyerr(e: switchlr::Error) -> PyErr {
    match e {
        switchlr::Error::InvalidParams(_) | switchlr::Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        switchlr::Error::Data(_) => PyValueError::new_err(e.to_string()),
        switchlr::Error::DegenerateVariance(_) => PyArithmeticError::new_err(e.to_string()),
        switchlr::Error::Io(_) => PyIOError::new_err(e.to_string()),
    }
}

fn parse_arm(code: u8) -> PyResult<Arm> {
    match code {
        0 => Ok(Arm::Control),
        1 => Ok(Arm::Experimental),
        other => Err(PyValueError::new_err(format!(
            "arm must be 0 (control) or 1 (experimental), got {other}"
        ))),
    }
}

/// Three-state exponential model of a control arm with treatment switching
/// at progression, plus the weight curve it induces for the weighted
/// log-rank test.
#[pyclass(frozen)]
struct SwitchModel {
    params: SwitchModelParams,
    rates: RateSet,
}

impl SwitchModel {
    fn from_params(params: SwitchModelParams) -> Self {
        let rates = rates_from_medians(&params);
        SwitchModel { params, rates }
    }
}

#[pymethods]
impl SwitchModel {
    /// Build a model from the three design medians (months) and the
    /// probability that a control subject switches at progression.
    #[new]
    fn new(
        median_pfs_control: f64,
        median_os_control: f64,
        median_os_experimental: f64,
        switch_prob: f64,
    ) -> PyResult<Self> {
        let params = SwitchModelParams::new(
            median_pfs_control,
            median_os_control,
            median_os_experimental,
            switch_prob,
        )
        .map_err(pyerr)?;
        Ok(SwitchModel::from_params(params))
    }

    #[getter]
    fn median_pfs_control(&self) -> f64 {
        self.params.median_pfs_control()
    }

    #[getter]
    fn median_os_control(&self) -> f64 {
        self.params.median_os_control()
    }

    #[getter]
    fn median_os_experimental(&self) -> f64 {
        self.params.median_os_experimental()
    }

    #[getter]
    fn switch_prob(&self) -> f64 {
        self.params.switch_prob()
    }

    /// Median of the progression-only component implied by the PFS and OS
    /// medians.
    #[getter]
    fn median_time_to_progression(&self) -> f64 {
        self.params.median_time_to_progression()
    }

    /// Unconditional probability that a control subject progresses and
    /// switches before dying.
    fn switch_fraction_q(&self) -> f64 {
        model::switch_fraction_q(&self.params)
    }

    /// Control-arm survival S0(t) under the switching model.
    fn control_survival(&self, t: f64) -> f64 {
        model::control_survival(&self.rates, self.params.switch_prob(), t)
    }

    /// Control-arm hazard h0(t) under the switching model.
    fn control_hazard(&self, t: f64) -> f64 {
        model::control_hazard(&self.rates, self.params.switch_prob(), t)
    }

    /// Experimental-to-control hazard ratio eta(t).
    fn hazard_ratio(&self, t: f64) -> f64 {
        model::hazard_ratio(&self.rates, self.params.switch_prob(), t)
    }

    /// Test weight w(t) = -log eta(t); equals log(mOS1/mOS0) at t = 0 and
    /// decays toward zero as switching erodes the arm contrast.
    fn weight(&self, t: f64) -> f64 {
        model::weight_function(&self.params, t)
    }

    /// Occupancy probabilities of the three control-arm states at time t:
    /// (not progressed, progressed and switched, progressed not switched).
    fn state_probabilities(&self, t: f64) -> (f64, f64, f64) {
        let s = model::state_probabilities(&self.rates, self.params.switch_prob(), t);
        (
            s.not_progressed,
            s.progressed_switched,
            s.progressed_not_switched,
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "SwitchModel(median_pfs_control={}, median_os_control={}, median_os_experimental={}, switch_prob={})",
            self.params.median_pfs_control(),
            self.params.median_os_control(),
            self.params.median_os_experimental(),
            self.params.switch_prob(),
        )
    }
}

/// Right-censored two-arm dataset: one (time, event, arm) record per
/// subject, arm coded 0 = control, 1 = experimental.
#[pyclass(frozen)]
struct Dataset {
    inner: SurvivalDataset,
}

#[pymethods]
impl Dataset {
    /// Build a dataset from an iterable of (time, event, arm) triples.
    #[new]
    fn new(records: Vec<(f64, bool, u8)>) -> PyResult<Self> {
        let records = records
            .into_iter()
            .map(|(time, event, arm)| {
                Ok(SubjectRecord {
                    time,
                    event,
                    arm: parse_arm(arm)?,
                    switch_time: None,
                })
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = SurvivalDataset::new(records).map_err(pyerr)?;
        Ok(Dataset { inner })
    }

    /// Read a dataset from a CSV file with header time,event,arm.
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let inner = SurvivalDataset::read_csv_path(path).map_err(pyerr)?;
        Ok(Dataset { inner })
    }

    /// Parse a dataset from CSV text with header time,event,arm.
    #[staticmethod]
    fn from_csv_text(text: &str) -> PyResult<Self> {
        let inner = SurvivalDataset::from_csv_str(text).map_err(pyerr)?;
        Ok(Dataset { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Number of records with an observed event.
    #[getter]
    fn n_events(&self) -> usize {
        self.inner.n_events()
    }

    /// All records as (time, event, arm) triples, arm coded 0/1.
    fn records(&self) -> Vec<(f64, bool, u8)> {
        self.inner
            .records()
            .iter()
            .map(|r| (r.time, r.event, r.arm.code()))
            .collect()
    }

    /// The dataset serialized as CSV text with header time,event,arm.
    fn to_csv_text(&self) -> String {
        self.inner.to_csv_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, events={})",
            self.inner.len(),
            self.inner.n_events()
        )
    }
}

/// Outcome of a score-type test: the score statistic U, its null variance
/// V, the standardized z = U/sqrt(V), and the one-sided p-value P(Z > z).
#[pyclass(frozen)]
struct TestOutcome {
    #[pyo3(get)]
    u: f64,
    #[pyo3(get)]
    v: f64,
    #[pyo3(get)]
    z: f64,
    #[pyo3(get)]
    p_one_sided: f64,
}

impl TestOutcome {
    fn from_result(r: hypotests::TestResult) -> Self {
        TestOutcome {
            u: r.statistic_u,
            v: r.variance_v,
            z: r.z,
            p_one_sided: r.p_one_sided,
        }
    }
}

#[pymethods]
impl TestOutcome {
    fn __repr__(&self) -> String {
        format!(
            "TestOutcome(u={:.6}, v={:.6}, z={:.6}, p_one_sided={:.6})",
            self.u, self.v, self.z, self.p_one_sided
        )
    }
}

/// Outcome of the four-component combination test: per-component z-values
/// in the order (rho,gamma) = (0,0), (1,0), (0,1), (1,1), the largest of
/// them, the index attaining it, and the multiplicity-adjusted one-sided
/// p-value from the estimated joint normal distribution.
#[pyclass(frozen)]
struct MaxComboOutcome {
    #[pyo3(get)]
    component_z: [f64; 4],
    #[pyo3(get)]
    z_max: f64,
    #[pyo3(get)]
    best_component: usize,
    #[pyo3(get)]
    p_one_sided: f64,
}

#[pymethods]
impl MaxComboOutcome {
    fn __repr__(&self) -> String {
        format!(
            "MaxComboOutcome(z_max={:.6}, best_component={}, p_one_sided={:.6})",
            self.z_max, self.best_component, self.p_one_sided
        )
    }
}

/// Standard (unweighted) log-rank test, one-sided in favor of the
/// experimental arm.
#[pyfunction]
fn logrank(data: &Dataset) -> PyResult<TestOutcome> {
    hypotests::logrank(&data.inner)
        .map(TestOutcome::from_result)
        .map_err(pyerr)
}

/// Weighted log-rank test with the switching-model weights w(t) =
/// -log eta(t) taken from `model`. With switch_prob = 0 the weights are
/// flat and the test coincides with the plain log-rank test.
#[pyfunction]
fn mwlr(data: &Dataset, model: &SwitchModel) -> PyResult<TestOutcome> {
    hypotests::mwlr(&data.inner, &model.params)
        .map(TestOutcome::from_result)
        .map_err(pyerr)
}

/// Fleming-Harrington (rho, gamma) weighted log-rank test on the pooled
/// Kaplan-Meier estimate.
#[pyfunction]
fn fleming_harrington(data: &Dataset, rho: f64, gamma: f64) -> PyResult<TestOutcome> {
    let fh = FHParams::new(rho, gamma).map_err(pyerr)?;
    hypotests::fleming_harrington(&data.inner, fh)
        .map(TestOutcome::from_result)
        .map_err(pyerr)
}

/// Restricted-mean survival time difference test, truncated at the
/// minimax follow-up time.
#[pyfunction]
fn rmst_test(data: &Dataset) -> PyResult<TestOutcome> {
    hypotests::rmst_test(&data.inner)
        .map(TestOutcome::from_result)
        .map_err(pyerr)
}

/// Combination test: the maximum of the four Fleming-Harrington component
/// z-values with a joint-normal multiplicity adjustment.
#[pyfunction]
fn max_combo(data: &Dataset) -> PyResult<MaxComboOutcome> {
    let r = hypotests::max_combo(&data.inner).map_err(pyerr)?;
    let mut component_z = [0.0; 4];
    for (slot, component) in component_z.iter_mut().zip(&r.components) {
        *slot = component.z;
    }
    Ok(MaxComboOutcome {
        component_z,
        z_max: r.z_max,
        best_component: r.best_component(),
        p_one_sided: r.p_one_sided,
    })
}

/// A two-arm trial design to simulate: arm sizes, uniform accrual window,
/// the death count that triggers the analysis cutoff, the true switching
/// model, and the RNG seed.
#[pyclass(frozen)]
struct Scenario {
    inner: TrialScenario,
}

#[pymethods]
impl Scenario {
    #[new]
    fn new(
        n_control: usize,
        n_experimental: usize,
        accrual_months: f64,
        target_deaths: usize,
        model: &SwitchModel,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = TrialScenario {
            n_control,
            n_experimental,
            accrual_months,
            target_deaths,
            true_params: model.params.clone(),
            seed,
        };
        inner.validate().map_err(pyerr)?;
        Ok(Scenario { inner })
    }

    /// The bundled reference design: 139 control and 277 experimental
    /// subjects enrolled uniformly over 12 months, analyzed at the 221st
    /// death.
    #[staticmethod]
    fn reference_design(model: &SwitchModel, seed: u64) -> Self {
        Scenario {
            inner: TrialScenario::reference_design(model.params.clone(), seed),
        }
    }

    #[getter]
    fn n_control(&self) -> usize {
        self.inner.n_control
    }

    #[getter]
    fn n_experimental(&self) -> usize {
        self.inner.n_experimental
    }

    #[getter]
    fn accrual_months(&self) -> f64 {
        self.inner.accrual_months
    }

    #[getter]
    fn target_deaths(&self) -> usize {
        self.inner.target_deaths
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Simulate one trial; returns the analysis dataset and the calendar
    /// time of the data cutoff. Deterministic in the scenario seed.
    fn simulate(&self) -> PyResult<(Dataset, f64)> {
        let trial = simulate_trial(&self.inner).map_err(pyerr)?;
        Ok((Dataset { inner: trial.dataset }, trial.cutoff_calendar))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(n_control={}, n_experimental={}, accrual_months={}, target_deaths={}, seed={})",
            self.inner.n_control,
            self.inner.n_experimental,
            self.inner.accrual_months,
            self.inner.target_deaths,
            self.inner.seed,
        )
    }
}

#[pymodule]
fn switchlr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SwitchModel>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<TestOutcome>()?;
    m.add_class::<MaxComboOutcome>()?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(logrank, m)?)?;
    m.add_function(wrap_pyfunction!(mwlr, m)?)?;
    m.add_function(wrap_pyfunction!(fleming_harrington, m)?)?;
    m.add_function(wrap_pyfunction!(rmst_test, m)?)?;
    m.add_function(wrap_pyfunction!(max_combo, m)?)?;
    Ok(())
}
