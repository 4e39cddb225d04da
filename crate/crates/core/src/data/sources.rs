use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use super::oxford::{normalize_indicator, POLICY_INDICATORS};
use super::{is_state_code, Demographics, ProtestRecord, StateEpiRecord, MOBILITY_CATEGORIES, N_MOBILITY, N_POLICY};
use crate::error::{Error, Result};

/// Row counts for one parsed source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub source: String,
    pub accepted: usize,
    /// Rows dropped because a required value did not parse.
    pub rejected: usize,
    /// Rows kept after clipping a negative count to zero.
    pub clipped: usize,
}

/// Every source at its native frequency.
#[derive(Debug, Clone, Default)]
pub struct RawSources {
    pub mobility: Vec<(NaiveDate, [f64; N_MOBILITY])>,
    /// Normalized indicator values in [0, 1], unsmoothed.
    pub policy: Vec<(NaiveDate, [f64; N_POLICY])>,
    /// Weekly insured unemployment rate in percent.
    pub claims: Vec<(NaiveDate, f64)>,
    /// National `[new_confirmed, new_recovered, new_dead]`.
    pub epi: Vec<(NaiveDate, [f64; 3])>,
    pub state_epi: Vec<StateEpiRecord>,
    pub protests: Vec<ProtestRecord>,
    pub reports: Vec<ParseReport>,
}

/// Locations of the raw input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePaths {
    pub mobility: PathBuf,
    pub oxford: PathBuf,
    pub claims: PathBuf,
    pub epi: PathBuf,
    pub state_epi: PathBuf,
    pub protests: PathBuf,
    pub demographics: PathBuf,
}

impl SourcePaths {
    /// Conventional file names inside one data directory.
    pub fn in_dir(dir: &Path) -> Self {
        SourcePaths {
            mobility: dir.join("mobility.csv"),
            oxford: dir.join("oxford.csv"),
            claims: dir.join("claims.csv"),
            epi: dir.join("epi.csv"),
            state_epi: dir.join("epi_state.csv"),
            protests: dir.join("protests.csv"),
            demographics: dir.join("demographics.json"),
        }
    }
}

pub fn ingest_sources(paths: &SourcePaths) -> Result<(RawSources, Demographics)> {
    let open = |p: &Path| File::open(p).map_err(|e| Error::io(p, e));
    let name = |p: &Path| p.display().to_string();
    let (mobility, r1) = read_mobility(open(&paths.mobility)?, &name(&paths.mobility))?;
    let (policy, r2) = read_oxford(open(&paths.oxford)?, &name(&paths.oxford))?;
    let (claims, r3) = read_claims(open(&paths.claims)?, &name(&paths.claims))?;
    let (epi, r4) = read_epi(open(&paths.epi)?, &name(&paths.epi))?;
    let (state_epi, r5) = read_state_epi(open(&paths.state_epi)?, &name(&paths.state_epi))?;
    let (protests, r6) = read_protests(open(&paths.protests)?, &name(&paths.protests))?;
    let demographics = load_demographics(&paths.demographics)?;
    let reports = vec![r1, r2, r3, r4, r5, r6];
    for r in &reports {
        if r.rejected > 0 || r.clipped > 0 {
            log::warn!(
                "{}: {} rows accepted, {} rejected, {} clipped",
                r.source,
                r.accepted,
                r.rejected,
                r.clipped
            );
        }
    }
    Ok((
        RawSources {
            mobility,
            policy,
            claims,
            epi,
            state_epi,
            protests,
            reports,
        },
        demographics,
    ))
}

pub fn load_demographics(path: &Path) -> Result<Demographics> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d: Demographics = serde_json::from_str(&text)?;
    d.validate()?;
    Ok(d)
}

/// A CSV source with case-insensitive header lookup.
struct Table<R: Read> {
    name: String,
    headers: Vec<String>,
    reader: csv::Reader<R>,
}

impl<R: Read> Table<R> {
    fn new(reader: R, name: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = reader.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        Ok(Table {
            name: name.to_string(),
            headers,
            reader,
        })
    }

    fn find(&self, column: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == column)
    }

    fn require(&self, column: &str) -> Result<usize> {
        self.find(column).ok_or_else(|| Error::MissingColumn {
            source_name: self.name.clone(),
            column: column.to_string(),
        })
    }

    fn records(&mut self) -> impl Iterator<Item = Result<csv::StringRecord>> + '_ {
        self.reader.records().map(|r| r.map_err(Error::from))
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .ok()
}

fn parse_f64(s: Option<&str>) -> Option<f64> {
    s.and_then(|v| v.parse::<f64>().ok()).filter(|v| v.is_finite())
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize) -> Option<&'a str> {
    rec.get(idx).filter(|s| !s.is_empty())
}

fn check_increasing<T>(name: &str, rows: &[(NaiveDate, T)]) -> Result<()> {
    for pair in rows.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::Ordering {
                source_name: name.to_string(),
                date: pair[1].0.to_string(),
            });
        }
    }
    Ok(())
}

fn clip_count(v: f64, clipped: &mut bool) -> f64 {
    if v < 0.0 {
        *clipped = true;
        0.0
    } else {
        v
    }
}

/// Daily national mobility. Rows with a non-empty sub-region or metro area are
/// skipped when those columns exist.
pub fn read_mobility<R: Read>(reader: R, name: &str) -> Result<(Vec<(NaiveDate, [f64; N_MOBILITY])>, ParseReport)> {
    let mut t = Table::new(reader, name)?;
    let date_col = t.require("date")?;
    let mut cols = [0usize; N_MOBILITY];
    for (k, cat) in MOBILITY_CATEGORIES.iter().enumerate() {
        cols[k] = t.require(&format!("{cat}_percent_change_from_baseline"))?;
    }
    let regional: Vec<usize> = ["sub_region_1", "sub_region_2", "metro_area"]
        .iter()
        .filter_map(|c| t.find(c))
        .collect();
    let mut report = ParseReport {
        source: name.to_string(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for rec in t.records() {
        let rec = rec?;
        if regional.iter().any(|&c| field(&rec, c).is_some()) {
            continue;
        }
        let date = field(&rec, date_col).and_then(parse_date);
        let mut vals = [0.0; N_MOBILITY];
        let mut ok = date.is_some();
        for (k, &c) in cols.iter().enumerate() {
            match parse_f64(field(&rec, c)) {
                Some(v) => vals[k] = v,
                None => ok = false,
            }
        }
        match (ok, date) {
            (true, Some(d)) => {
                rows.push((d, vals));
                report.accepted += 1;
            }
            _ => report.rejected += 1,
        }
    }
    check_increasing(name, &rows)?;
    Ok((rows, report))
}

/// Finds the level column of an indicator (`C1_School closing`, `C1M_...`)
/// and its flag column (`C1_Flag`, `C1M_Flag`).
fn indicator_columns(headers: &[String], code: &str) -> (Option<usize>, Option<usize>) {
    let code = code.to_ascii_lowercase();
    let mut level = None;
    let mut flag = None;
    for (i, h) in headers.iter().enumerate() {
        let Some((prefix, rest)) = h.split_once('_') else {
            continue;
        };
        let Some(suffix) = prefix.strip_prefix(&code) else {
            continue;
        };
        if !suffix.chars().all(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        if rest == "flag" {
            flag = flag.or(Some(i));
        } else if !rest.contains("notes") {
            level = level.or(Some(i));
        }
    }
    (level, flag)
}

/// Daily national policy indicators, normalized to [0, 1].
pub fn read_oxford<R: Read>(reader: R, name: &str) -> Result<(Vec<(NaiveDate, [f64; N_POLICY])>, ParseReport)> {
    let mut t = Table::new(reader, name)?;
    let date_col = t.require("date")?;
    let mut cols = Vec::with_capacity(N_POLICY);
    for ind in &POLICY_INDICATORS {
        let (level, flag) = indicator_columns(&t.headers, ind.code);
        let level = level.ok_or_else(|| Error::MissingColumn {
            source_name: name.to_string(),
            column: format!("{}_{}", ind.code, ind.name),
        })?;
        cols.push((level, if ind.has_flag { flag } else { None }));
    }
    let jurisdiction = t.find("jurisdiction");
    let region = t.find("regionname");
    let mut report = ParseReport {
        source: name.to_string(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for rec in t.records() {
        let rec = rec?;
        if let Some(j) = jurisdiction {
            if field(&rec, j).is_some_and(|v| v != "NAT_TOTAL") {
                continue;
            }
        }
        if region.is_some_and(|r| field(&rec, r).is_some()) {
            continue;
        }
        let date = field(&rec, date_col).and_then(parse_date);
        let mut vals = [0.0; N_POLICY];
        let mut ok = date.is_some();
        for (k, (ind, &(lc, fc))) in POLICY_INDICATORS.iter().zip(&cols).enumerate() {
            match parse_f64(field(&rec, lc)) {
                Some(level) => {
                    let flag = fc.and_then(|c| parse_f64(field(&rec, c)));
                    vals[k] = normalize_indicator(ind, level, flag);
                }
                None => ok = false,
            }
        }
        match (ok, date) {
            (true, Some(d)) => {
                rows.push((d, vals));
                report.accepted += 1;
            }
            _ => report.rejected += 1,
        }
    }
    check_increasing(name, &rows)?;
    Ok((rows, report))
}

/// Weekly insured unemployment rate (percent).
pub fn read_claims<R: Read>(reader: R, name: &str) -> Result<(Vec<(NaiveDate, f64)>, ParseReport)> {
    let mut t = Table::new(reader, name)?;
    let date_col = t.require("week_ending_date")?;
    let rate_col = t.require("insured_unemployment_rate")?;
    let mut report = ParseReport {
        source: name.to_string(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for rec in t.records() {
        let rec = rec?;
        match (
            field(&rec, date_col).and_then(parse_date),
            parse_f64(field(&rec, rate_col)),
        ) {
            (Some(d), Some(v)) if v >= 0.0 => {
                rows.push((d, v));
                report.accepted += 1;
            }
            _ => report.rejected += 1,
        }
    }
    check_increasing(name, &rows)?;
    Ok((rows, report))
}

fn read_counts(rec: &csv::StringRecord, cols: &[usize; 3], clipped: &mut bool) -> Option<[f64; 3]> {
    let mut out = [0.0; 3];
    for (k, &c) in cols.iter().enumerate() {
        out[k] = clip_count(parse_f64(field(rec, c))?, clipped);
    }
    Some(out)
}

/// National daily `[new_confirmed, new_recovered, new_dead]`.
pub fn read_epi<R: Read>(reader: R, name: &str) -> Result<(Vec<(NaiveDate, [f64; 3])>, ParseReport)> {
    let mut t = Table::new(reader, name)?;
    let date_col = t.require("date")?;
    let cols = [
        t.require("new_confirmed")?,
        t.require("new_recovered")?,
        t.require("new_dead")?,
    ];
    let mut report = ParseReport {
        source: name.to_string(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for rec in t.records() {
        let rec = rec?;
        let mut clipped = false;
        match (
            field(&rec, date_col).and_then(parse_date),
            read_counts(&rec, &cols, &mut clipped),
        ) {
            (Some(d), Some(v)) => {
                rows.push((d, v));
                report.accepted += 1;
                report.clipped += clipped as usize;
            }
            _ => report.rejected += 1,
        }
    }
    check_increasing(name, &rows)?;
    Ok((rows, report))
}

pub fn read_state_epi<R: Read>(reader: R, name: &str) -> Result<(Vec<StateEpiRecord>, ParseReport)> {
    let mut t = Table::new(reader, name)?;
    let date_col = t.require("date")?;
    let state_col = t.require("state")?;
    let cols = [
        t.require("new_confirmed")?,
        t.require("new_recovered")?,
        t.require("new_dead")?,
    ];
    let mut report = ParseReport {
        source: name.to_string(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for rec in t.records() {
        let rec = rec?;
        let mut clipped = false;
        let date = field(&rec, date_col).and_then(parse_date);
        let state = field(&rec, state_col).filter(|s| is_state_code(s));
        match (date, state, read_counts(&rec, &cols, &mut clipped)) {
            (Some(date), Some(state), Some([c, r, d])) => {
                rows.push(StateEpiRecord {
                    date,
                    state: state.to_string(),
                    new_confirmed: c,
                    new_recovered: r,
                    new_dead: d,
                });
                report.accepted += 1;
                report.clipped += clipped as usize;
            }
            _ => report.rejected += 1,
        }
    }
    Ok((rows, report))
}

pub fn read_protests<R: Read>(reader: R, name: &str) -> Result<(Vec<ProtestRecord>, ParseReport)> {
    let mut t = Table::new(reader, name)?;
    let date_col = t.require("date")?;
    let city_col = t.require("city")?;
    let state_col = t.require("state")?;
    let att_col = t.require("attendance")?;
    let mut report = ParseReport {
        source: name.to_string(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for rec in t.records() {
        let rec = rec?;
        let date = field(&rec, date_col).and_then(parse_date);
        let city = field(&rec, city_col);
        let state = field(&rec, state_col).filter(|s| is_state_code(s));
        let att = parse_f64(field(&rec, att_col)).filter(|v| *v >= 0.0);
        match (date, city, state, att) {
            (Some(date), Some(city), Some(state), Some(attendance)) => {
                rows.push(ProtestRecord {
                    date,
                    city: city.to_string(),
                    state: state.to_string(),
                    attendance,
                });
                report.accepted += 1;
            }
            _ => report.rejected += 1,
        }
    }
    Ok((rows, report))
}
