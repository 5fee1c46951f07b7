//! Decision histograms over solved policies and the trend summary built
//! from them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::mdp::Policy;

/// Count of states per decision label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecisionHistogram {
    pub bins: BTreeMap<String, usize>,
}

impl DecisionHistogram {
    pub fn total(&self) -> usize {
        self.bins.values().sum()
    }

    pub fn count(&self, label: &str) -> usize {
        self.bins.get(label).copied().unwrap_or(0)
    }
}

/// Bins every state of `policy` under `labeler(decision_index)`.
pub fn policy_histogram<F>(policy: &Policy, labeler: F) -> DecisionHistogram
where
    F: Fn(usize) -> String,
{
    let mut per_decision: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in policy.as_slice() {
        *per_decision.entry(d).or_default() += 1;
    }
    let mut bins = BTreeMap::new();
    for (d, count) in per_decision {
        *bins.entry(labeler(d)).or_default() += count;
    }
    DecisionHistogram { bins }
}

/// Writes `decision_label,count`, labels in lexicographic order.
pub fn export_histogram_csv<W: Write>(histogram: &DecisionHistogram, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["decision_label", "count"])?;
    for (label, count) in &histogram.bins {
        w.write_record([label.as_str(), &count.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("histogram", e))?;
    Ok(())
}

pub fn read_histogram_csv<R: Read>(source: R) -> Result<DecisionHistogram> {
    let mut r = csv::Reader::from_reader(source);
    if r.headers()?.iter().collect::<Vec<_>>() != ["decision_label", "count"] {
        return Err(Error::Parse {
            line: 1,
            message: "expected header decision_label,count".into(),
        });
    }
    let mut bins = BTreeMap::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let count = row[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad count {:?}", &row[1]),
        })?;
        if bins.insert(row[0].to_string(), count).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate label {:?}", &row[0]),
            });
        }
    }
    Ok(DecisionHistogram { bins })
}

fn parse_label(label: &str) -> Result<Vec<u8>> {
    label
        .split(',')
        .map(|c| {
            c.trim()
                .parse()
                .map_err(|_| Error::Data(format!("decision label {label:?} is not a comma-separated code list")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrendReport {
    /// States whose maintenance decision has every intensity at most 1.
    pub minor_maintenance: usize,
    /// States whose maintenance decision has some intensity of 3.
    pub major_maintenance: usize,
    pub maintenance_states: usize,
    pub all_assigned: usize,
    pub partially_assigned: usize,
    pub none_assigned: usize,
    pub assignment_states: usize,
    /// Machine slots per code over all states; index 0 counts unassigned slots.
    pub task_frequency: Vec<usize>,
}

impl TrendReport {
    pub fn major_at_least_minor(&self) -> bool {
        self.major_maintenance >= self.minor_maintenance
    }

    pub fn all_exceeds_partial(&self) -> bool {
        self.all_assigned > self.partially_assigned
    }

    /// Frequency of the highest task index against task 1.
    pub fn last_task_at_least_first(&self) -> bool {
        match self.task_frequency.len() {
            0 | 1 => false,
            n => self.task_frequency[n - 1] >= self.task_frequency[1],
        }
    }
}

pub fn trend_report(maintenance: &DecisionHistogram, assignment: &DecisionHistogram) -> Result<TrendReport> {
    let mut report = TrendReport {
        minor_maintenance: 0,
        major_maintenance: 0,
        maintenance_states: maintenance.total(),
        all_assigned: 0,
        partially_assigned: 0,
        none_assigned: 0,
        assignment_states: assignment.total(),
        task_frequency: Vec::new(),
    };
    for (label, &count) in &maintenance.bins {
        let d = parse_label(label)?;
        if d.iter().all(|&x| x <= 1) {
            report.minor_maintenance += count;
        }
        if d.iter().any(|&x| x >= 3) {
            report.major_maintenance += count;
        }
    }
    for (label, &count) in &assignment.bins {
        let a = parse_label(label)?;
        let assigned = a.iter().filter(|&&x| x != 0).count();
        match assigned {
            0 => report.none_assigned += count,
            k if k == a.len() => report.all_assigned += count,
            _ => report.partially_assigned += count,
        }
        for &task in &a {
            let t = usize::from(task);
            if report.task_frequency.len() <= t {
                report.task_frequency.resize(t + 1, 0);
            }
            report.task_frequency[t] += count;
        }
    }
    Ok(report)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "does not hold"
    }
}

impl fmt::Display for TrendReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "maintenance policy ({} states)", self.maintenance_states)?;
        writeln!(f, "  minor (all intensities <= 1): {}", self.minor_maintenance)?;
        writeln!(f, "  major (some intensity = 3):   {}", self.major_maintenance)?;
        writeln!(f, "  major >= minor: {}", verdict(self.major_at_least_minor()))?;
        writeln!(f, "assignment policy ({} states)", self.assignment_states)?;
        writeln!(f, "  all machines assigned: {}", self.all_assigned)?;
        writeln!(f, "  partially assigned:    {}", self.partially_assigned)?;
        writeln!(f, "  none assigned:         {}", self.none_assigned)?;
        writeln!(f, "  all > partial: {}", verdict(self.all_exceeds_partial()))?;
        for (task, n) in self.task_frequency.iter().enumerate() {
            match task {
                0 => writeln!(f, "  unassigned slots: {n}")?,
                t => writeln!(f, "  task {t}: {n}")?,
            }
        }
        write!(f, "  last task >= task 1: {}", verdict(self.last_task_at_least_first()))
    }
}
