//! Plain-text file formats.
//!
//! * Demonstration sets: tab-separated, one tuple per line, columns
//!   `r1 r2 u1 u2 r1_next r2_next reward`, with a `#` header line.
//! * Parameter files: a `#` header naming the eight features in order, then
//!   one tab-separated line of values.
//! * Tables (cohort rows, curves): comma-separated with a header row.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! gives the same bits.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::SupervisedComparison;
use crate::lspi::{Demo, DemoSet, ValueParams, FEATURE_DIM, FEATURE_NAMES};
use crate::skills::{Action, SkillId, State};

const DEMO_HEADER: &str = "# r1\tr2\tu1\tu2\tr1_next\tr2_next\treward";

#[derive(Serialize, Deserialize)]
struct DemoRow {
    r1: f64,
    r2: f64,
    u1: f64,
    u2: f64,
    r1_next: f64,
    r2_next: f64,
    reward: f64,
}

fn tsv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').has_headers(false).from_writer(w)
}

fn tsv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub fn write_demo_set<W: Write>(mut w: W, demos: &DemoSet) -> Result<()> {
    writeln!(w, "{DEMO_HEADER}")?;
    let mut out = tsv_writer(w);
    for d in &demos.demos {
        out.serialize(DemoRow {
            r1: d.state.r1,
            r2: d.state.r2,
            u1: d.action.u1,
            u2: d.action.u2,
            r1_next: d.next_state.r1,
            r2_next: d.next_state.r2,
            reward: d.reward,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_demo_set<R: Read>(r: R) -> Result<DemoSet> {
    let mut demos = Vec::new();
    for row in tsv_reader(r).deserialize::<DemoRow>() {
        let row = row?;
        let values = [row.r1, row.r2, row.u1, row.u2, row.r1_next, row.r2_next, row.reward];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("non-finite value in demonstration {}", demos.len() + 1)));
        }
        demos.push(Demo {
            state: State::new(row.r1, row.r2),
            action: Action::new(row.u1, row.u2),
            next_state: State::new(row.r1_next, row.r2_next),
            reward: row.reward,
        });
    }
    Ok(DemoSet { demos })
}

pub fn write_theta<W: Write>(mut w: W, theta: &ValueParams) -> Result<()> {
    writeln!(w, "# {}", FEATURE_NAMES.join("\t"))?;
    let mut out = tsv_writer(w);
    out.serialize(theta.0)?;
    out.flush()?;
    Ok(())
}

pub fn read_theta<R: Read>(r: R) -> Result<ValueParams> {
    let mut rows = tsv_reader(r).into_deserialize::<[f64; FEATURE_DIM]>();
    let theta = rows
        .next()
        .ok_or_else(|| Error::Parse("parameter file has no values".into()))??;
    if rows.next().is_some() {
        return Err(Error::Parse("parameter file has more than one line of values".into()));
    }
    Ok(ValueParams::new(theta))
}

/// Writes rows as CSV with a header taken from the field names.
pub fn write_table<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_table<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r)
        .into_deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// One line of a supervised-comparison curve file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub skill: SkillId,
    pub horizon: usize,
    /// Empty when the reward learner produced no policy.
    pub armse_rlfd: Option<f64>,
    pub armse_supervised: f64,
}

pub fn curve_rows(comparison: &SupervisedComparison) -> Vec<CurveRow> {
    comparison
        .skills
        .iter()
        .flat_map(|s| {
            s.curve.iter().map(move |p| CurveRow {
                skill: s.skill,
                horizon: p.horizon,
                armse_rlfd: p.armse_rlfd,
                armse_supervised: p.armse_supervised,
            })
        })
        .collect()
}
