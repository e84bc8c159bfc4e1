//! Subject-level datasets, risk tables, Kaplan-Meier curves, and restricted
//! mean survival time: the shared substrate for every hypothesis test.
//!
//! Tie convention used throughout: a censoring time equal to a death time is
//! treated as occurring after the death, so the censored subject still counts
//! as at risk there. Deaths tied across arms at one time aggregate into a
//! single risk-table row.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Trial arm. Serialized as 0 (control) and 1 (experimental).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Control,
    Experimental,
}

impl Arm {
    pub fn code(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Experimental => 1,
        }
    }
}

/// One subject: follow-up time (months from randomization), event indicator
/// (true = death observed), arm, and optionally the observed switch time.
/// The switch time is diagnostic only; no test reads it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectRecord {
    pub time: f64,
    pub event: bool,
    pub arm: Arm,
    pub switch_time: Option<f64>,
}

fn record_problem(r: &SubjectRecord) -> Option<String> {
    if !r.time.is_finite() || r.time < 0.0 {
        return Some(format!("time must be finite and non-negative, got {}", r.time));
    }
    if let Some(st) = r.switch_time {
        if !st.is_finite() || st < 0.0 {
            return Some(format!("switch_time must be finite and non-negative, got {st}"));
        }
        if st > r.time {
            return Some(format!(
                "switch_time ({st}) must not exceed the follow-up time ({})",
                r.time
            ));
        }
    }
    None
}

/// Validated, order-preserving collection of subject records.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    records: Vec<SubjectRecord>,
}

impl SurvivalDataset {
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("dataset must contain at least one subject".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if let Some(problem) = record_problem(r) {
                return Err(Error::Data(format!("subject {i}: {problem}")));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    /// (time, event) pairs, optionally restricted to one arm.
    pub fn time_event_pairs(&self, arm: Option<Arm>) -> Vec<(f64, bool)> {
        self.records
            .iter()
            .filter(|r| arm.map_or(true, |a| r.arm == a))
            .map(|r| (r.time, r.event))
            .collect()
    }

    /// Reads the CSV schema `time,event,arm[,switch_time]`. Event must be 0
    /// or 1; arm may be 0/1 or control/experimental; an empty switch_time
    /// field means absent. Errors carry 1-based line numbers (header = 1).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => return Err(Error::Data("empty input: expected a header line".into())),
        };
        let header = header.trim_start_matches('\u{feff}').trim();
        let has_switch = match header {
            "time,event,arm" => false,
            "time,event,arm,switch_time" => true,
            other => {
                return Err(Error::Data(format!(
                    "line 1: unrecognized header {other:?}; expected \"time,event,arm\" \
                     or \"time,event,arm,switch_time\""
                )))
            }
        };
        let mut records = Vec::new();
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let expected = if has_switch { 4 } else { 3 };
            if fields.len() != expected {
                return Err(Error::Data(format!(
                    "line {lineno}: expected {expected} comma-separated fields, found {}",
                    fields.len()
                )));
            }
            let time = parse_number(fields[0], lineno, "time")?;
            let event = match fields[1].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Data(format!(
                        "line {lineno}: event must be 0 or 1, got {other:?}"
                    )))
                }
            };
            let arm = match fields[2].trim() {
                "0" | "control" => Arm::Control,
                "1" | "experimental" => Arm::Experimental,
                other => {
                    return Err(Error::Data(format!(
                        "line {lineno}: arm must be 0, 1, control, or experimental, got {other:?}"
                    )))
                }
            };
            let switch_time = if has_switch {
                let raw = fields[3].trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(parse_number(raw, lineno, "switch_time")?)
                }
            } else {
                None
            };
            let record = SubjectRecord { time, event, arm, switch_time };
            if let Some(problem) = record_problem(&record) {
                return Err(Error::Data(format!("line {lineno}: {problem}")));
            }
            records.push(record);
        }
        Self::new(records)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes())
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Data(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::read_csv(file)
    }

    /// Writes the same schema `read_csv` accepts, with arms coded 0/1. Floats
    /// use Rust's shortest round-trip formatting, so write-then-read is the
    /// identity on records.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let has_switch = self.records.iter().any(|r| r.switch_time.is_some());
        let mut out = String::new();
        out.push_str(if has_switch {
            "time,event,arm,switch_time\n"
        } else {
            "time,event,arm\n"
        });
        for r in &self.records {
            let _ = write!(out, "{},{},{}", r.time, r.event as u8, r.arm.code());
            if has_switch {
                match r.switch_time {
                    Some(st) => {
                        let _ = write!(out, ",{st}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn parse_number(raw: &str, lineno: usize, field: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| {
        Error::Data(format!("line {lineno}: {field} is not a number: {raw:?}"))
    })?;
    if !value.is_finite() {
        return Err(Error::Data(format!(
            "line {lineno}: {field} must be finite, got {raw:?}"
        )));
    }
    if value < 0.0 {
        return Err(Error::Data(format!(
            "line {lineno}: {field} must be non-negative, got {raw}"
        )));
    }
    Ok(value)
}

/// Risk-set and death counts at one distinct death time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRow {
    pub time: f64,
    pub at_risk_control: usize,
    pub at_risk_experimental: usize,
    pub deaths_control: usize,
    pub deaths_experimental: usize,
}

impl RiskRow {
    pub fn at_risk(&self) -> usize {
        self.at_risk_control + self.at_risk_experimental
    }

    pub fn deaths(&self) -> usize {
        self.deaths_control + self.deaths_experimental
    }
}

/// One row per distinct death time, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    rows: Vec<RiskRow>,
}

impl RiskTable {
    pub fn rows(&self) -> &[RiskRow] {
        &self.rows
    }
}

/// Builds the per-death-time risk table. Subjects censored exactly at a death
/// time remain in that risk set.
pub fn build_risk_table(data: &SurvivalDataset) -> Result<RiskTable> {
    let mut subjects: Vec<&SubjectRecord> = data.records().iter().collect();
    subjects.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut n_control = subjects.iter().filter(|r| r.arm == Arm::Control).count();
    let mut n_experimental = subjects.len() - n_control;
    let mut rows = Vec::new();
    let mut i = 0;
    while i < subjects.len() {
        let t = subjects[i].time;
        let (mut d0, mut d1, mut out0, mut out1) = (0usize, 0usize, 0usize, 0usize);
        let mut j = i;
        while j < subjects.len() && subjects[j].time == t {
            match (subjects[j].arm, subjects[j].event) {
                (Arm::Control, true) => d0 += 1,
                (Arm::Experimental, true) => d1 += 1,
                (Arm::Control, false) => out0 += 1,
                (Arm::Experimental, false) => out1 += 1,
            }
            j += 1;
        }
        if d0 + d1 > 0 {
            rows.push(RiskRow {
                time: t,
                at_risk_control: n_control,
                at_risk_experimental: n_experimental,
                deaths_control: d0,
                deaths_experimental: d1,
            });
        }
        n_control -= d0 + out0;
        n_experimental -= d1 + out1;
        i = j;
    }
    if rows.is_empty() {
        return Err(Error::Data("dataset contains no events".into()));
    }
    Ok(RiskTable { rows })
}

/// Kaplan-Meier product-limit curve. Jumps happen only at death times; the
/// per-jump at-risk and death counts are kept for variance formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct KMCurve {
    times: Vec<f64>,
    survival: Vec<f64>,
    at_risk: Vec<usize>,
    deaths: Vec<usize>,
    max_time: f64,
}

impl KMCurve {
    /// Distinct death times, ascending.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Post-jump survival values aligned with `times`.
    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    pub fn at_risk(&self) -> &[usize] {
        &self.at_risk
    }

    pub fn deaths(&self) -> &[usize] {
        &self.deaths
    }

    /// Largest observed time (death or censoring): the curve's support.
    pub fn max_time(&self) -> f64 {
        self.max_time
    }

    /// Right-continuous evaluation S(t).
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&jump| jump <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// Left limit S(t-): the value just before t. Equals 1 at and before the
    /// first death time.
    pub fn survival_before(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&jump| jump < t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }
}

/// Product-limit estimate over (time, event) pairs, with the same tie
/// convention as [`build_risk_table`].
pub fn kaplan_meier(subjects: &[(f64, bool)]) -> Result<KMCurve> {
    if subjects.is_empty() {
        return Err(Error::Data("Kaplan-Meier needs at least one subject".into()));
    }
    for &(t, _) in subjects {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Data(format!(
                "Kaplan-Meier times must be finite and non-negative, got {t}"
            )));
        }
    }
    let mut sorted: Vec<(f64, bool)> = subjects.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_time = sorted.last().expect("non-empty").0;
    let mut times = Vec::new();
    let mut survival = Vec::new();
    let mut at_risk = Vec::new();
    let mut deaths = Vec::new();
    let mut remaining = sorted.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut d = 0usize;
        let mut gone = 0usize;
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == t {
            if sorted[j].1 {
                d += 1;
            }
            gone += 1;
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / remaining as f64;
            times.push(t);
            survival.push(s);
            at_risk.push(remaining);
            deaths.push(d);
        }
        remaining -= gone;
        i = j;
    }
    Ok(KMCurve {
        times,
        survival,
        at_risk,
        deaths,
        max_time,
    })
}

/// Restricted mean survival time: the exact step-function integral of the KM
/// curve over [0, tau]. `tau` must be positive and within the curve's support.
pub fn rmst(curve: &KMCurve, tau: f64) -> Result<f64> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "rmst truncation time must be positive and finite, got {tau}"
        )));
    }
    if tau > curve.max_time() {
        return Err(Error::InvalidParams(format!(
            "rmst truncation time {tau} exceeds the largest observed time {}",
            curve.max_time()
        )));
    }
    let mut area = 0.0;
    let mut prev_time = 0.0;
    let mut prev_surv = 1.0;
    for (i, &t) in curve.times().iter().enumerate() {
        if t > tau {
            break;
        }
        area += prev_surv * (t - prev_time);
        prev_time = t;
        prev_surv = curve.survival()[i];
    }
    area += prev_surv * (tau - prev_time);
    Ok(area)
}

/// Smallest per-arm maximum of observed times: the pre-specified truncation
/// time for RMST comparisons. Errors if either arm is absent.
pub fn minimax_time(data: &SurvivalDataset) -> Result<f64> {
    let mut max_control: Option<f64> = None;
    let mut max_experimental: Option<f64> = None;
    for r in data.records() {
        let slot = match r.arm {
            Arm::Control => &mut max_control,
            Arm::Experimental => &mut max_experimental,
        };
        *slot = Some(slot.map_or(r.time, |m: f64| m.max(r.time)));
    }
    match (max_control, max_experimental) {
        (Some(a), Some(b)) => Ok(a.min(b)),
        _ => Err(Error::Data(
            "minimax time needs at least one subject in each arm".into(),
        )),
    }
}

/// Control deaths at 1, 4, 6; experimental deaths at 2, 5 and a censoring
/// at 7. Small enough to enumerate every statistic by hand; shared across
/// the crate's unit tests as a common oracle fixture.
#[cfg(test)]
pub(crate) fn six_subject_dataset() -> SurvivalDataset {
    let rows = [
        (1.0, true, Arm::Control),
        (4.0, true, Arm::Control),
        (6.0, true, Arm::Control),
        (2.0, true, Arm::Experimental),
        (5.0, true, Arm::Experimental),
        (7.0, false, Arm::Experimental),
    ];
    SurvivalDataset::new(
        rows.iter()
            .map(|&(time, event, arm)| SubjectRecord { time, event, arm, switch_time: None })
            .collect(),
    )
    .unwrap()
}
