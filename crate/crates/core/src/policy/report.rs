use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{efficient_frontier, OpenMask, ScenarioOutcome};
use crate::data::N_CONTAINMENT;
use crate::error::{Error, Result};

const SOURCE: &str = "scenario table";

/// Writes `mask,d_employment_pp,d_cases` rows with `C1+C2` style labels.
pub fn write_scenarios_csv<W: Write>(rows: &[(OpenMask, ScenarioOutcome)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mask", "d_employment_pp", "d_cases"])?;
    for (mask, o) in rows {
        w.write_record([mask.to_string(), o.d_employment.to_string(), o.d_cases.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(SOURCE, e))
}

/// Reads the format written by [`write_scenarios_csv`].
pub fn read_scenarios_csv<R: Read>(input: R) -> Result<Vec<(OpenMask, ScenarioOutcome)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                source_name: SOURCE.into(),
                column: name.into(),
            })
    };
    let (mc, ec, cc) = (col("mask")?, col("d_employment_pp")?, col("d_cases")?);
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let number = |c: usize| {
            field(c)
                .parse::<f64>()
                .map_err(|_| Error::format(SOURCE, format!("row {}: bad number `{}`", line + 1, field(c))))
        };
        rows.push((
            field(mc).parse::<OpenMask>()?,
            ScenarioOutcome {
                d_employment: number(ec)?,
                d_cases: number(cc)?,
            },
        ));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub mask: OpenMask,
    pub label: String,
    pub open: [bool; N_CONTAINMENT],
    pub d_employment_pp: f64,
    pub d_cases: f64,
}

/// Non-dominated scenarios, cheapest in cases first.
pub fn frontier_points(rows: &[(OpenMask, ScenarioOutcome)]) -> Vec<FrontierPoint> {
    let outcomes: Vec<ScenarioOutcome> = rows.iter().map(|r| r.1).collect();
    efficient_frontier(&outcomes)
        .into_iter()
        .map(|i| {
            let (mask, o) = rows[i];
            FrontierPoint {
                mask,
                label: mask.to_string(),
                open: mask.to_bools(),
                d_employment_pp: o.d_employment,
                d_cases: o.d_cases,
            }
        })
        .collect()
}
