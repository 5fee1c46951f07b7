//! Tool-wear ingestion and the degradation-probability table.
//!
//! Wear curves are reduced to Euler wear rates, split by tool age class
//! (new tool: health level at most [`NEW_TOOL_MAX_LEVEL`]), scaled from
//! millimetres per minute to the expected fraction of one health level
//! consumed per decision epoch, and rounded.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest health level still classed as a new tool.
pub const NEW_TOOL_MAX_LEVEL: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeClass {
    New,
    Old,
}

impl AgeClass {
    pub fn of(lambda: u8) -> Self {
        if lambda <= NEW_TOOL_MAX_LEVEL {
            AgeClass::New
        } else {
            AgeClass::Old
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeClass::New => "new",
            AgeClass::Old => "old",
        }
    }
}

impl fmt::Display for AgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AgeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "new" => Ok(AgeClass::New),
            "old" => Ok(AgeClass::Old),
            other => Err(Error::Data(format!("unknown age class {other:?}"))),
        }
    }
}

/// One-step degradation probability per (operating condition, age class).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DegradationTable {
    prob: BTreeMap<(u8, AgeClass), f64>,
}

impl DegradationTable {
    /// Table from per-condition columns; `new[i]` and `old[i]` belong to
    /// operating condition `i + 1`.
    pub fn from_columns(new: &[f64], old: &[f64]) -> Result<Self> {
        if new.len() != old.len() {
            return Err(Error::Length {
                field: "degradation.old".into(),
                expected: new.len(),
                actual: old.len(),
            });
        }
        let mut table = Self::default();
        for (i, (&pn, &po)) in new.iter().zip(old).enumerate() {
            let e = u8::try_from(i + 1).map_err(|_| Error::Overflow("operating conditions".into()))?;
            table.insert(e, AgeClass::New, pn)?;
            table.insert(e, AgeClass::Old, po)?;
        }
        Ok(table)
    }

    /// Degradation probabilities of the milling case study.
    pub fn case_study() -> Self {
        Self::from_columns(&[0.1, 0.2, 0.3, 0.4], &[0.2, 0.3, 0.4, 0.5]).expect("static table")
    }

    pub fn insert(&mut self, condition: u8, class: AgeClass, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Data(format!(
                "degradation probability {p} for condition {condition} ({class}) outside [0, 1]"
            )));
        }
        self.prob.insert((condition, class), p);
        Ok(())
    }

    pub fn get(&self, condition: u8, class: AgeClass) -> Result<f64> {
        self.prob
            .get(&(condition, class))
            .copied()
            .ok_or(Error::MissingTableEntry {
                condition,
                class: class.as_str(),
            })
    }

    /// Probability for a machine at health `lambda` under `condition`.
    pub fn for_health(&self, condition: u8, lambda: u8) -> Result<f64> {
        self.get(condition, AgeClass::of(lambda))
    }

    pub fn entries(&self) -> impl Iterator<Item = (u8, AgeClass, f64)> + '_ {
        self.prob.iter().map(|(&(e, c), &p)| (e, c, p))
    }

    /// Entries absent for conditions `1..=conditions`.
    pub fn missing(&self, conditions: u8) -> Vec<(u8, AgeClass)> {
        (1..=conditions)
            .flat_map(|e| [(e, AgeClass::New), (e, AgeClass::Old)])
            .filter(|key| !self.prob.contains_key(key))
            .collect()
    }

    pub fn require_complete(&self, conditions: u8) -> Result<()> {
        match self.missing(conditions).first() {
            Some(&(condition, class)) => Err(Error::MissingTableEntry {
                condition,
                class: class.as_str(),
            }),
            None => Ok(()),
        }
    }

    /// CSV `op_condition,age_class,probability`, condition-major with the
    /// new-tool row first. `decimals` fixes the printed precision.
    pub fn write_csv<W: Write>(&self, out: W, decimals: Option<usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["op_condition", "age_class", "probability"])?;
        for (e, class, p) in self.entries() {
            let p = match decimals {
                Some(k) => format!("{p:.k$}"),
                None => p.to_string(),
            };
            w.write_record([e.to_string(), class.to_string(), p])?;
        }
        w.flush().map_err(|e| Error::io("degradation table", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["op_condition", "age_class", "probability"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header op_condition,age_class,probability, got {headers:?}"),
            });
        }
        let mut table = Self::default();
        for row in r.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Parse { line, message };
            let e: u8 = row[0]
                .parse()
                .map_err(|_| bad(format!("bad op_condition {:?}", &row[0])))?;
            let class: AgeClass = row[1].parse().map_err(|err: Error| bad(err.to_string()))?;
            let p: f64 = row[2]
                .parse()
                .map_err(|_| bad(format!("bad probability {:?}", &row[2])))?;
            table.insert(e, class, p).map_err(|err| bad(err.to_string()))?;
        }
        Ok(table)
    }
}

/// Ascending degradation-percentage thresholds; level `k` (1-based)
/// covers `[thresholds[k-2], thresholds[k-1])`, and reaching the last
/// threshold is failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HealthMap {
    thresholds: Vec<f64>,
}

impl HealthMap {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Config("health map needs at least one threshold".into()));
        }
        if !(thresholds[0] > 0.0) {
            return Err(Error::Config(format!(
                "first health threshold must be positive, got {}",
                thresholds[0]
            )));
        }
        if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "health thresholds must be strictly ascending: {thresholds:?}"
            )));
        }
        Ok(Self { thresholds })
    }

    /// 7% steps up to level 3, 10% steps after, failure at 44%.
    pub fn case_study() -> Self {
        Self::new(vec![7.0, 14.0, 24.0, 34.0, 44.0]).expect("static map")
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Number of working levels `L`.
    pub fn working_levels(&self) -> u8 {
        self.thresholds.len() as u8
    }

    pub fn failure_code(&self) -> u8 {
        self.working_levels() + 1
    }

    /// Width in percent of working level `level` (1-based).
    pub fn level_width(&self, level: u8) -> f64 {
        let k = usize::from(level) - 1;
        let lower = if k == 0 { 0.0 } else { self.thresholds[k - 1] };
        self.thresholds[k] - lower
    }

    /// Percent width used to scale rates for an age class: the first level
    /// for new tools, the last working level for old tools.
    pub fn class_width(&self, class: AgeClass) -> f64 {
        match class {
            AgeClass::New => self.level_width(1),
            AgeClass::Old => self.level_width(self.working_levels()),
        }
    }

    pub fn validate_levels(&self, levels: u8) -> Result<()> {
        if self.working_levels() != levels {
            return Err(Error::Config(format!(
                "health map has {} levels but the model uses L = {levels}",
                self.working_levels()
            )));
        }
        Ok(())
    }
}

/// Health code for a cumulative degradation percentage.
pub fn wear_to_lambda(percent: f64, map: &HealthMap) -> u8 {
    let crossed = map.thresholds.iter().take_while(|&&t| percent >= t).count();
    crossed as u8 + 1
}

/// Health code for a consumed tool-life fraction supplied from outside
/// the model.
pub fn exogenous_lambda(usage_fraction: f64, map: &HealthMap) -> u8 {
    wear_to_lambda(usage_fraction * 100.0, map)
}

/// Constants of the tool-life relation `V · life^exponent = C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorLifeParams {
    pub c: f64,
    pub exponent: f64,
}

impl TaylorLifeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.exponent > 0.0) {
            return Err(Error::Config(format!(
                "Taylor constants must be positive, got C = {}, n = {}",
                self.c, self.exponent
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorLife {
    pub life: f64,
    /// False when the life falls outside `(0, 1]`.
    pub in_model: bool,
}

pub fn taylor_life(cutting_speed: f64, params: &TaylorLifeParams) -> Result<TaylorLife> {
    params.validate()?;
    if !(cutting_speed > 0.0) {
        return Err(Error::Data(format!(
            "cutting speed must be positive, got {cutting_speed}"
        )));
    }
    let life = (params.c / cutting_speed).powf(1.0 / params.exponent);
    Ok(TaylorLife {
        life,
        in_model: life > 0.0 && life <= 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WearRecord {
    pub case_id: String,
    pub time_min: f64,
    pub wear_mm: f64,
    pub op_condition: u8,
}

const WEAR_HEADER: [&str; 4] = ["case", "time_min", "wear_mm", "op_condition"];

/// Parses the `case,time_min,wear_mm,op_condition` extract. Field errors
/// carry the 1-based file line.
pub fn parse_wear_csv<R: Read>(source: R) -> Result<Vec<WearRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let headers = r.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Data("empty wear file".into()));
    }
    let mut columns = [0usize; 4];
    for (slot, name) in columns.iter_mut().zip(WEAR_HEADER) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column {name:?}"),
        })?;
    }
    let mut records = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            row.get(columns[i]).ok_or(Error::Parse {
                line,
                message: format!("missing field {:?}", WEAR_HEADER[i]),
            })
        };
        let number = |i: usize| -> Result<f64> {
            let raw = field(i)?;
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(Error::Parse {
                line,
                message: format!("{} is not a number: {raw:?}", WEAR_HEADER[i]),
            })
        };
        let condition_raw = field(3)?;
        let op_condition = condition_raw
            .parse::<u8>()
            .ok()
            .filter(|&e| e >= 1)
            .ok_or(Error::Parse {
                line,
                message: format!("op_condition must be a positive integer: {condition_raw:?}"),
            })?;
        records.push(WearRecord {
            case_id: field(0)?.to_string(),
            time_min: number(1)?,
            wear_mm: number(2)?,
            op_condition,
        });
    }
    if records.is_empty() {
        return Err(Error::Data("wear file has no records".into()));
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub enum WearIssue {
    NegativeTime { case_id: String, time_min: f64 },
    NegativeWear { case_id: String, wear_mm: f64 },
    TimeNotSorted { case_id: String, time_min: f64 },
    WearDecreases { case_id: String, time_min: f64 },
    MixedConditions { case_id: String },
}

/// Reports record-invariant violations without altering the data.
pub fn check_wear_records(records: &[WearRecord]) -> Vec<WearIssue> {
    let mut issues = Vec::new();
    for (case_id, case) in group_cases(records) {
        let case_id = case_id.to_string();
        for r in &case {
            if r.time_min < 0.0 {
                issues.push(WearIssue::NegativeTime {
                    case_id: case_id.clone(),
                    time_min: r.time_min,
                });
            }
            if r.wear_mm < 0.0 {
                issues.push(WearIssue::NegativeWear {
                    case_id: case_id.clone(),
                    wear_mm: r.wear_mm,
                });
            }
        }
        for w in case.windows(2) {
            if w[1].time_min < w[0].time_min {
                issues.push(WearIssue::TimeNotSorted {
                    case_id: case_id.clone(),
                    time_min: w[1].time_min,
                });
            } else if w[1].wear_mm < w[0].wear_mm {
                issues.push(WearIssue::WearDecreases {
                    case_id: case_id.clone(),
                    time_min: w[1].time_min,
                });
            }
        }
        if case.iter().any(|r| r.op_condition != case[0].op_condition) {
            issues.push(WearIssue::MixedConditions { case_id });
        }
    }
    issues
}

/// Records grouped by case in order of first appearance.
fn group_cases(records: &[WearRecord]) -> Vec<(&str, Vec<&WearRecord>)> {
    let mut groups: Vec<(&str, Vec<&WearRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(id, _)| *id == r.case_id) {
            Some((_, v)) => v.push(r),
            None => groups.push((&r.case_id, vec![r])),
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WearRate {
    pub mm_per_min: f64,
    /// Net wear went down between the endpoints.
    pub suspicious: bool,
}

/// Euler difference quotient between the first and last record.
pub fn wear_rate(records: &[WearRecord]) -> Result<WearRate> {
    let (first, last) = match records {
        [first, .., last] => (first, last),
        _ => {
            return Err(Error::Data(format!(
                "wear rate needs at least 2 records, got {}",
                records.len()
            )))
        }
    };
    let span = last.time_min - first.time_min;
    if !(span > 0.0) {
        return Err(Error::Data(format!(
            "case {}: zero or negative time span ({} -> {} min)",
            first.case_id, first.time_min, last.time_min
        )));
    }
    let rate = (last.wear_mm - first.wear_mm) / span;
    Ok(WearRate {
        mm_per_min: rate,
        suspicious: rate < 0.0,
    })
}

/// Expected fraction of one health level consumed in one epoch, used as
/// the one-step degradation probability. Saturates at 1.
pub fn rate_to_epoch_probability(rate_mm_per_min: f64, epoch_seconds: f64, wear_per_level_mm: f64) -> Result<f64> {
    if !(wear_per_level_mm > 0.0) {
        return Err(Error::Data(format!(
            "wear per level must be positive, got {wear_per_level_mm}"
        )));
    }
    if !(epoch_seconds > 0.0) {
        return Err(Error::Data(format!(
            "epoch length must be positive, got {epoch_seconds}"
        )));
    }
    let p = rate_mm_per_min.max(0.0) * epoch_seconds / 60.0 / wear_per_level_mm;
    Ok(p.min(1.0))
}

pub fn round_to(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Scaling inputs for [`build_degradation_table`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WearScaling {
    pub epoch_seconds: f64,
    /// Flank wear corresponding to 100% degradation.
    pub reference_wear_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRate {
    pub condition: u8,
    pub class: AgeClass,
    pub cases: usize,
    pub mean_rate_mm_per_min: f64,
    pub raw_probability: f64,
    pub probability: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationBuild {
    pub table: DegradationTable,
    pub rates: Vec<ClassRate>,
    pub issues: Vec<WearIssue>,
    /// Cases whose segment rate came out negative.
    pub suspicious_cases: Vec<String>,
}

/// Per-condition, per-age-class mean Euler rates converted to rounded
/// epoch probabilities.
///
/// Each case is split by the health level of each record: records at or
/// below [`NEW_TOOL_MAX_LEVEL`] form the new-tool segment, the rest the
/// old-tool segment. A segment contributes a rate when it has at least two
/// records spanning positive time.
pub fn build_degradation_table(
    records: &[WearRecord],
    map: &HealthMap,
    scaling: &WearScaling,
    rounding: u32,
) -> Result<DegradationBuild> {
    if !(scaling.reference_wear_mm > 0.0) {
        return Err(Error::Config(format!(
            "reference wear must be positive, got {}",
            scaling.reference_wear_mm
        )));
    }
    if records.is_empty() {
        return Err(Error::Data("no wear records".into()));
    }
    let issues = check_wear_records(records);
    let mut sums: BTreeMap<(u8, AgeClass), (f64, usize)> = BTreeMap::new();
    let mut suspicious_cases = Vec::new();
    for (case_id, case) in group_cases(records) {
        let condition = case[0].op_condition;
        for class in [AgeClass::New, AgeClass::Old] {
            let segment: Vec<WearRecord> = case
                .iter()
                .filter(|r| {
                    let pct = r.wear_mm / scaling.reference_wear_mm * 100.0;
                    AgeClass::of(wear_to_lambda(pct, map)) == class
                })
                .map(|r| (*r).clone())
                .collect();
            if segment.len() < 2 || !(segment[segment.len() - 1].time_min > segment[0].time_min) {
                continue;
            }
            let rate = wear_rate(&segment)?;
            if rate.suspicious {
                suspicious_cases.push(case_id.to_string());
            }
            let slot = sums.entry((condition, class)).or_insert((0.0, 0));
            slot.0 += rate.mm_per_min;
            slot.1 += 1;
        }
    }
    if sums.is_empty() {
        return Err(Error::Data("no case has enough records to compute a wear rate".into()));
    }

    let mut table = DegradationTable::default();
    let mut rates = Vec::new();
    for (&(condition, class), &(sum, cases)) in &sums {
        let mean = sum / cases as f64;
        let width_mm = map.class_width(class) / 100.0 * scaling.reference_wear_mm;
        let unclamped = mean.max(0.0) * scaling.epoch_seconds / 60.0 / width_mm;
        let raw = rate_to_epoch_probability(mean, scaling.epoch_seconds, width_mm)?;
        let probability = round_to(raw, rounding);
        table.insert(condition, class, probability)?;
        rates.push(ClassRate {
            condition,
            class,
            cases,
            mean_rate_mm_per_min: mean,
            raw_probability: raw,
            probability,
            clamped: unclamped > 1.0,
        });
    }
    Ok(DegradationBuild {
        table,
        rates,
        issues,
        suspicious_cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(case: &str, t: f64, w: f64, e: u8) -> WearRecord {
        WearRecord {
            case_id: case.into(),
            time_min: t,
            wear_mm: w,
            op_condition: e,
        }
    }

    #[test]
    fn parse_well_formed() {
        let text = "case,time_min,wear_mm,op_condition\n1,0,0.0,1\n1,2,0.1,1\n2,0,0.0,2\n";
        let records = parse_wear_csv(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[1], rec("1", 2.0, 0.1, 1));
    }

    #[test]
    fn parse_names_bad_line() {
        let text = "case,time_min,wear_mm,op_condition\n1,0,0.0,1\n1,2,abc,1\n";
        match parse_wear_csv(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("wear_mm"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_missing_column_and_empty() {
        assert!(matches!(
            parse_wear_csv("case,time_min,op_condition\n1,0,1\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_wear_csv("".as_bytes()).is_err());
        assert!(parse_wear_csv("case,time_min,wear_mm,op_condition\n".as_bytes()).is_err());
    }

    #[test]
    fn out_of_order_times_are_reported() {
        let records = vec![rec("a", 0.0, 0.0, 1), rec("a", 5.0, 0.2, 1), rec("a", 3.0, 0.3, 1)];
        let issues = check_wear_records(&records);
        assert_eq!(
            issues,
            vec![WearIssue::TimeNotSorted {
                case_id: "a".into(),
                time_min: 3.0
            }]
        );
    }

    #[test]
    fn euler_rate() {
        let r = wear_rate(&[rec("a", 0.0, 0.1, 1), rec("a", 20.0, 0.5, 1)]).unwrap();
        assert!((r.mm_per_min - 0.02).abs() < 1e-15);
        assert!(!r.suspicious);
        let flat = wear_rate(&[rec("a", 0.0, 0.3, 1), rec("a", 9.0, 0.3, 1)]).unwrap();
        assert_eq!(flat.mm_per_min, 0.0);
        let down = wear_rate(&[rec("a", 0.0, 0.3, 1), rec("a", 10.0, 0.2, 1)]).unwrap();
        assert!(down.mm_per_min < 0.0 && down.suspicious);
    }

    #[test]
    fn euler_rate_errors() {
        assert!(wear_rate(&[rec("a", 0.0, 0.1, 1)]).is_err());
        assert!(wear_rate(&[rec("a", 4.0, 0.1, 1), rec("a", 4.0, 0.2, 1)]).is_err());
    }

    #[test]
    fn epoch_probability() {
        // one level of 0.06 mm every 10 epochs of 10 s: 0.006 mm per epoch = 0.036 mm/min
        let p = rate_to_epoch_probability(0.036, 10.0, 0.06).unwrap();
        assert!((p - 0.1).abs() < 1e-12);
        assert_eq!(rate_to_epoch_probability(0.72, 10.0, 0.06).unwrap(), 1.0);
        assert!(rate_to_epoch_probability(0.1, 10.0, 0.0).is_err());
    }

    #[test]
    fn health_map_levels() {
        let map = HealthMap::case_study();
        assert_eq!(wear_to_lambda(0.0, &map), 1);
        assert_eq!(wear_to_lambda(6.99, &map), 1);
        assert_eq!(wear_to_lambda(7.0, &map), 2);
        assert_eq!(wear_to_lambda(14.0, &map), 3);
        assert_eq!(wear_to_lambda(23.9, &map), 3);
        assert_eq!(wear_to_lambda(24.0, &map), 4);
        assert_eq!(wear_to_lambda(34.0, &map), 5);
        assert_eq!(wear_to_lambda(44.0, &map), 6);
        assert_eq!(map.failure_code(), 6);
        assert_eq!(map.class_width(AgeClass::New), 7.0);
        assert_eq!(map.class_width(AgeClass::Old), 10.0);
    }

    #[test]
    fn health_map_validation() {
        assert!(HealthMap::new(vec![]).is_err());
        assert!(HealthMap::new(vec![0.0, 5.0]).is_err());
        assert!(HealthMap::new(vec![5.0, 5.0]).is_err());
    }

    #[test]
    fn exogenous_levels() {
        let map = HealthMap::case_study();
        assert_eq!(exogenous_lambda(0.0, &map), 1);
        assert_eq!(exogenous_lambda(0.10, &map), 2);
        assert_eq!(exogenous_lambda(1.0, &map), map.failure_code());
    }

    #[test]
    fn taylor_plug_in() {
        let p = TaylorLifeParams { c: 50.0, exponent: 1.0 };
        assert!((taylor_life(100.0, &p).unwrap().life - 0.5).abs() < 1e-15);
        let p = TaylorLifeParams {
            c: 100.0,
            exponent: 2.0,
        };
        assert!((taylor_life(400.0, &p).unwrap().life - 0.5).abs() < 1e-15);
        let p = TaylorLifeParams { c: 80.0, exponent: 0.3 };
        assert_eq!(taylor_life(80.0, &p).unwrap().life, 1.0);
        let slow = taylor_life(10.0, &p).unwrap();
        assert!(!slow.in_model);
        assert!(taylor_life(0.0, &p).is_err());
    }

    #[test]
    fn single_condition_leaves_others_missing() {
        let records = vec![rec("a", 0.0, 0.0, 2), rec("a", 1.0, 0.05, 2), rec("a", 2.0, 0.10, 2)];
        let scaling = WearScaling {
            epoch_seconds: 10.0,
            reference_wear_mm: 1.0,
        };
        let built = build_degradation_table(&records, &HealthMap::case_study(), &scaling, 1).unwrap();
        assert!(built.table.get(2, AgeClass::New).is_ok());
        let missing = built.table.missing(4);
        assert!(missing.contains(&(1, AgeClass::New)));
        assert!(missing.contains(&(2, AgeClass::Old)));
        assert!(matches!(
            built.table.require_complete(4),
            Err(Error::MissingTableEntry { condition: 1, .. })
        ));
    }

    #[test]
    fn rounding_only_changes_decimals() {
        let records = vec![rec("a", 0.0, 0.0, 1), rec("a", 3.0, 0.1234, 1)];
        let scaling = WearScaling {
            epoch_seconds: 10.0,
            reference_wear_mm: 1.0,
        };
        let map = HealthMap::case_study();
        let coarse = build_degradation_table(&records, &map, &scaling, 1).unwrap();
        let fine = build_degradation_table(&records, &map, &scaling, 3).unwrap();
        let pc = coarse.table.get(1, AgeClass::New).unwrap();
        let pf = fine.table.get(1, AgeClass::New).unwrap();
        assert_eq!(round_to(pf, 1), pc);
        assert_eq!(pf, 0.098);
        assert_eq!(pc, 0.1);
    }

    #[test]
    fn table_csv_roundtrip() {
        let table = DegradationTable::case_study();
        let mut buf = Vec::new();
        table.write_csv(&mut buf, Some(1)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("op_condition,age_class,probability\n1,new,0.1\n1,old,0.2\n"));
        assert_eq!(DegradationTable::read_csv(buf.as_slice()).unwrap(), table);
    }
}
