//! Daily series helpers: trailing smoothing, weekly-to-daily interpolation and
//! short-gap filling.

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Window length of the trailing mean (current day plus six previous days).
pub const SMOOTHING_WINDOW: usize = 7;

/// Longest run of missing days that may be forward-filled inside a range.
pub const MAX_FILL_GAP: i64 = 3;

/// Trailing 7-day mean. The first six entries average the available prefix.
pub fn smooth_trailing7(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Domain("cannot smooth an empty series".into()));
    }
    let out = (0..series.len())
        .map(|t| {
            let lo = t.saturating_sub(SMOOTHING_WINDOW - 1);
            let window = &series[lo..=t];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect::<Vec<_>>();
    Ok(out)
}

/// Smooths each column of a row-major table independently.
pub fn smooth_columns<const N: usize>(rows: &[[f64; N]]) -> Result<Vec<[f64; N]>> {
    if rows.is_empty() {
        return Err(Error::Domain("cannot smooth an empty series".into()));
    }
    let mut out = vec![[0.0; N]; rows.len()];
    for col in 0..N {
        let column: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        for (dst, v) in out.iter_mut().zip(smooth_trailing7(&column)?) {
            dst[col] = v;
        }
    }
    Ok(out)
}

/// Linear interpolation of weekly knots onto every calendar day between the
/// first and last knot (inclusive). Returns the start date and daily values.
pub fn interpolate_weekly_to_daily(weekly: &[(NaiveDate, f64)]) -> Result<(NaiveDate, Vec<f64>)> {
    if weekly.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 weekly points to interpolate, got {}",
            weekly.len()
        )));
    }
    for pair in weekly.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::Ordering {
                source_name: "weekly series".into(),
                date: pair[1].0.to_string(),
            });
        }
    }
    let start = weekly[0].0;
    let mut out = Vec::new();
    for pair in weekly.windows(2) {
        let (d0, v0) = pair[0];
        let (d1, v1) = pair[1];
        let span = (d1 - d0).num_days();
        for k in 0..span {
            let w = k as f64 / span as f64;
            // Exact at the left knot; the right knot is emitted by the next
            // segment or the final push below.
            out.push(if k == 0 { v0 } else { v0 + (v1 - v0) * w });
        }
    }
    out.push(weekly[weekly.len() - 1].1);
    Ok((start, out))
}

/// Converts a dated, strictly increasing series into a gap-free daily series,
/// forward-filling runs of up to [`MAX_FILL_GAP`] missing days.
pub fn fill_daily<T: Clone>(source_name: &str, dated: &[(NaiveDate, T)]) -> Result<(NaiveDate, Vec<T>)> {
    let first = dated.first().ok_or_else(|| Error::format(source_name, "no rows"))?;
    let mut out = vec![first.1.clone()];
    let mut prev = first.0;
    for (date, value) in &dated[1..] {
        let gap = (*date - prev).num_days();
        if gap <= 0 {
            return Err(Error::Ordering {
                source_name: source_name.to_string(),
                date: date.to_string(),
            });
        }
        if gap - 1 > MAX_FILL_GAP {
            return Err(Error::format(
                source_name,
                format!(
                    "{} missing days before {date} exceeds the fill limit of {MAX_FILL_GAP}",
                    gap - 1
                ),
            ));
        }
        for _ in 1..gap {
            let last = out.last().cloned().expect("nonempty");
            out.push(last);
        }
        out.push(value.clone());
        prev = *date;
    }
    Ok((first.0, out))
}
