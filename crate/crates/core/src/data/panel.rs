use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::blm::compute_blm_index;
use super::series::{fill_daily, interpolate_weekly_to_daily, smooth_columns};
use super::{content_hash, Demographics, RawSources, N_MOBILITY, N_POLICY};
use crate::error::{Error, Result};

/// One day of the national panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    /// Percent change from baseline, as published.
    pub mobility_raw: [f64; N_MOBILITY],
    /// Trailing 7-day mean of `mobility_raw`.
    pub mobility: [f64; N_MOBILITY],
    /// Percent, interpolated from weekly values.
    pub unemployment: f64,
    pub new_confirmed: f64,
    pub new_recovered: f64,
    pub new_dead: f64,
    /// Smoothed policy indicators in [0, 1].
    pub policy: [f64; N_POLICY],
    pub blm: f64,
    pub cum_confirmed: f64,
    /// Cumulative recovered plus dead.
    pub cum_removed: f64,
}

impl DailyRecord {
    pub fn active(&self) -> f64 {
        (self.cum_confirmed - self.cum_removed).max(0.0)
    }
}

/// Consecutive daily records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub records: Vec<DailyRecord>,
}

const CUMULATIVE_TOLERANCE: f64 = 1e-9;

fn header() -> Vec<String> {
    let mut h = vec!["date".to_string()];
    h.extend((0..N_MOBILITY).map(|k| format!("mobility_raw_{k}")));
    h.extend((0..N_MOBILITY).map(|k| format!("mobility_{k}")));
    h.extend(["unemployment", "new_confirmed", "new_recovered", "new_dead"].map(String::from));
    h.extend((0..N_POLICY).map(|k| format!("policy_{k}")));
    h.extend(["blm", "cum_confirmed", "cum_removed"].map(String::from));
    h
}

impl Panel {
    pub fn new(records: Vec<DailyRecord>) -> Result<Self> {
        let p = Panel { records };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn start(&self) -> NaiveDate {
        self.records[0].date
    }

    pub fn end(&self) -> NaiveDate {
        self.records[self.records.len() - 1].date
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.records.first()?.date).num_days();
        usize::try_from(offset).ok().filter(|&i| i < self.records.len())
    }

    pub fn column(&self, f: impl Fn(&DailyRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let name = "panel";
        if self.records.is_empty() {
            return Err(Error::Range("panel is empty".into()));
        }
        for (k, r) in self.records.iter().enumerate() {
            let bad = |msg: String| Err(Error::format(name, format!("{}: {msg}", r.date)));
            if k > 0 {
                let prev = &self.records[k - 1];
                if prev.date.succ_opt() != Some(r.date) {
                    return Err(Error::Ordering {
                        source_name: name.into(),
                        date: r.date.to_string(),
                    });
                }
                let expect_c = prev.cum_confirmed + r.new_confirmed;
                let expect_r = prev.cum_removed + r.new_recovered + r.new_dead;
                if (r.cum_confirmed - expect_c).abs() > CUMULATIVE_TOLERANCE * expect_c.abs().max(1.0)
                    || (r.cum_removed - expect_r).abs() > CUMULATIVE_TOLERANCE * expect_r.abs().max(1.0)
                {
                    return bad("cumulative counts do not match daily counts".into());
                }
            }
            if r.policy.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return bad("policy value outside [0, 1]".into());
            }
            if !(0.0..=1.0).contains(&r.blm) {
                return bad(format!("blm value {} outside [0, 1]", r.blm));
            }
            if [r.new_confirmed, r.new_recovered, r.new_dead]
                .iter()
                .any(|v| !(*v >= 0.0))
            {
                return bad("negative daily count".into());
            }
            let finite = r
                .mobility_raw
                .iter()
                .chain(&r.mobility)
                .chain(&r.policy)
                .all(|v| v.is_finite())
                && [r.unemployment, r.cum_confirmed, r.cum_removed]
                    .iter()
                    .all(|v| v.is_finite());
            if !finite {
                return bad("non-finite value".into());
            }
        }
        Ok(())
    }

    /// Records for `start..=end` as a new panel.
    pub fn between(&self, start: NaiveDate, end: NaiveDate) -> Result<Panel> {
        let (Some(a), Some(b)) = (self.index_of(start), self.index_of(end)) else {
            return Err(Error::Range(format!(
                "{start}..={end} is not inside {}..={}",
                self.start(),
                self.end()
            )));
        };
        if b < a {
            return Err(Error::Range(format!("{start}..={end}")));
        }
        Ok(Panel {
            records: self.records[a..=b].to_vec(),
        })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header())?;
        for r in &self.records {
            let mut row = vec![r.date.to_string()];
            row.extend(r.mobility_raw.iter().map(f64::to_string));
            row.extend(r.mobility.iter().map(f64::to_string));
            row.extend(
                [r.unemployment, r.new_confirmed, r.new_recovered, r.new_dead]
                    .iter()
                    .map(f64::to_string),
            );
            row.extend(r.policy.iter().map(f64::to_string));
            row.extend([r.blm, r.cum_confirmed, r.cum_removed].iter().map(f64::to_string));
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("panel", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv<R: Read>(reader: R, name: &str) -> Result<Panel> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let expected = header();
        for col in &expected {
            if !found.contains(col) {
                return Err(Error::MissingColumn {
                    source_name: name.to_string(),
                    column: col.clone(),
                });
            }
        }
        let idx: Vec<usize> = expected
            .iter()
            .map(|c| found.iter().position(|f| f == c).unwrap())
            .collect();
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let get = |k: usize| rec.get(idx[k]).unwrap_or("");
            let date = NaiveDate::parse_from_str(get(0), "%Y-%m-%d")
                .map_err(|e| Error::format(name, format!("bad date `{}`: {e}", get(0))))?;
            let mut nums = Vec::with_capacity(expected.len() - 1);
            for k in 1..expected.len() {
                let v = get(k)
                    .parse::<f64>()
                    .map_err(|_| Error::format(name, format!("{date}: bad value `{}` in {}", get(k), expected[k])))?;
                nums.push(v);
            }
            let mut it = nums.into_iter();
            let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
            let mobility_raw: [f64; N_MOBILITY] = take(N_MOBILITY).try_into().unwrap();
            let mobility: [f64; N_MOBILITY] = take(N_MOBILITY).try_into().unwrap();
            let counts = take(4);
            let policy: [f64; N_POLICY] = take(N_POLICY).try_into().unwrap();
            let tail = take(3);
            records.push(DailyRecord {
                date,
                mobility_raw,
                mobility,
                unemployment: counts[0],
                new_confirmed: counts[1],
                new_recovered: counts[2],
                new_dead: counts[3],
                policy,
                blm: tail[0],
                cum_confirmed: tail[1],
                cum_removed: tail[2],
            });
        }
        Panel::new(records)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Panel> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Panel::from_csv(file, &path.display().to_string())
    }

    /// Provenance hash of the panel's CSV form.
    pub fn content_hash(&self) -> Result<String> {
        Ok(content_hash(self.to_csv_string()?.as_bytes()))
    }
}

fn span<T>(rows: &[(NaiveDate, T)]) -> Option<(NaiveDate, NaiveDate)> {
    Some((rows.first()?.0, rows.last()?.0))
}

/// Aligns every source onto the common daily date range.
///
/// Mobility, policy and BLM are smoothed over each source's full extent before
/// the intersection is taken; cumulative counts include days before the panel
/// starts.
pub fn build_panel(raw: &RawSources, demographics: &Demographics) -> Result<(Panel, Demographics)> {
    demographics.validate()?;
    let (mob_start, mob_raw) = fill_daily("mobility", &raw.mobility)?;
    let mob_smooth = smooth_columns(&mob_raw)?;
    let (pol_start, pol_raw) = fill_daily("policy", &raw.policy)?;
    let pol_smooth = smooth_columns(&pol_raw)?;
    let (u_start, u_daily) = interpolate_weekly_to_daily(&raw.claims)?;
    let (epi_start, epi) = fill_daily("epi", &raw.epi)?;

    let spans = [
        span(&raw.mobility),
        span(&raw.policy),
        Some((u_start, u_start + chrono::Duration::days(u_daily.len() as i64 - 1))),
        span(&raw.epi),
    ];
    let start = spans.iter().flatten().map(|s| s.0).max().expect("four spans");
    let end = spans.iter().flatten().map(|s| s.1).min().expect("four spans");
    if start > end {
        return Err(Error::Range(format!(
            "sources do not overlap (latest start {start}, earliest end {end})"
        )));
    }
    let blm = compute_blm_index(&raw.protests, &raw.state_epi, start, end)?;

    let offset = |from: NaiveDate, day: NaiveDate| (day - from).num_days() as usize;
    let mut cum_c = 0.0;
    let mut cum_r = 0.0;
    for row in &epi[..offset(epi_start, start)] {
        cum_c += row[0];
        cum_r += row[1] + row[2];
    }
    let mut records = Vec::new();
    let mut day = start;
    let mut k = 0;
    while day <= end {
        let e = epi[offset(epi_start, day)];
        cum_c += e[0];
        cum_r += e[1] + e[2];
        records.push(DailyRecord {
            date: day,
            mobility_raw: mob_raw[offset(mob_start, day)],
            mobility: mob_smooth[offset(mob_start, day)],
            unemployment: u_daily[offset(u_start, day)],
            new_confirmed: e[0],
            new_recovered: e[1],
            new_dead: e[2],
            policy: pol_smooth[offset(pol_start, day)].map(|v| v.clamp(0.0, 1.0)),
            blm: blm.index[k].clamp(0.0, 1.0),
            cum_confirmed: cum_c,
            cum_removed: cum_r,
        });
        k += 1;
        day = day.succ_opt().expect("date in range");
    }
    Ok((Panel::new(records)?, *demographics))
}
