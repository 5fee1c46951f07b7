//! CSV files for value functions and policies.
//!
//! Both start with a comment line `# num_states=N,discount=G,tolerance=T`
//! followed by a header and one row per state in index order. Values are
//! printed in shortest round-trip form, so reading back is lossless.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::mdp::{Policy, ValueFunction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveMeta {
    pub num_states: usize,
    pub discount: f64,
    pub tolerance: f64,
}

impl SolveMeta {
    fn line(&self) -> String {
        format!(
            "# num_states={},discount={},tolerance={}",
            self.num_states, self.discount, self.tolerance
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = |message: String| Error::Parse { line: 1, message };
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| bad(format!("expected metadata comment, got {line:?}")))?;
        let (mut n, mut g, mut t) = (None, None, None);
        for field in body.trim().split(',') {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("bad metadata field {field:?}")))?;
            let v = v.trim();
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad {k} value {v:?}")));
            match k.trim() {
                "num_states" => n = Some(v.parse::<usize>().map_err(|_| bad(format!("bad num_states {v:?}")))?),
                "discount" => g = Some(num(v)?),
                "tolerance" => t = Some(num(v)?),
                other => return Err(bad(format!("unknown metadata key {other:?}"))),
            }
        }
        match (n, g, t) {
            (Some(num_states), Some(discount), Some(tolerance)) => Ok(Self {
                num_states,
                discount,
                tolerance,
            }),
            _ => Err(bad("metadata needs num_states, discount and tolerance".into())),
        }
    }
}

fn write_rows<W: Write, T: ToString>(mut out: W, meta: &SolveMeta, column: &str, rows: &[T]) -> Result<()> {
    if rows.len() != meta.num_states {
        return Err(Error::Length {
            field: column.into(),
            expected: meta.num_states,
            actual: rows.len(),
        });
    }
    let io_err = |e| Error::io(column, e);
    writeln!(out, "{}", meta.line()).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state_index", column])?;
    for (i, v) in rows.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn read_rows<R: Read, T: std::str::FromStr>(source: R, column: &str) -> Result<(SolveMeta, Vec<T>)> {
    let mut reader = BufReader::new(source);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(column, e))?;
    let meta = SolveMeta::parse(first.trim_end())?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if r.headers()?.iter().collect::<Vec<_>>() != ["state_index", column] {
        return Err(Error::Parse {
            line: 2,
            message: format!("expected header state_index,{column}"),
        });
    }
    let mut rows = Vec::with_capacity(meta.num_states);
    for (expected, row) in r.records().enumerate() {
        let row = row?;
        // The metadata comment is not seen by the CSV reader.
        let line = row.position().map_or(0, |p| p.line() + 1);
        let bad = |message: String| Error::Parse { line, message };
        let index: usize = row[0]
            .parse()
            .map_err(|_| bad(format!("bad state index {:?}", &row[0])))?;
        if index != expected {
            return Err(bad(format!("state index {index} out of order, expected {expected}")));
        }
        rows.push(row[1].parse().map_err(|_| bad(format!("bad {column} {:?}", &row[1])))?);
    }
    if rows.len() != meta.num_states {
        return Err(Error::Length {
            field: column.into(),
            expected: meta.num_states,
            actual: rows.len(),
        });
    }
    Ok((meta, rows))
}

pub fn write_values<W: Write>(out: W, meta: &SolveMeta, values: &ValueFunction) -> Result<()> {
    write_rows(out, meta, "value", &values.0)
}

pub fn read_values<R: Read>(source: R) -> Result<(SolveMeta, ValueFunction)> {
    let (meta, rows) = read_rows(source, "value")?;
    Ok((meta, ValueFunction(rows)))
}

pub fn write_policy<W: Write>(out: W, meta: &SolveMeta, policy: &Policy) -> Result<()> {
    write_rows(out, meta, "decision_index", &policy.0)
}

pub fn read_policy<R: Read>(source: R) -> Result<(SolveMeta, Policy)> {
    let (meta, rows) = read_rows(source, "decision_index")?;
    Ok((meta, Policy(rows)))
}
