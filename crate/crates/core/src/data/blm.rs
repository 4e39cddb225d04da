use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::series::smooth_trailing7;
use super::{ProtestRecord, StateEpiRecord};
use crate::error::{Error, Result};

/// Daily protest-intensity index over a date range.
#[derive(Debug, Clone, PartialEq)]
pub struct BlmIndex {
    pub start: NaiveDate,
    /// Active-case-weighted attendance before normalization.
    pub raw: Vec<f64>,
    /// Min-max normalized and then smoothed with the trailing 7-day mean.
    pub index: Vec<f64>,
}

/// Each state's share of national active cases (cumulative confirmed minus
/// recovered minus dead, clipped at zero) for every day in `start..=end`.
/// Days with no active cases anywhere fall back to equal weights.
pub fn state_active_weights(
    state_epi: &[StateEpiRecord],
    start: NaiveDate,
    end: NaiveDate,
) -> Vec<BTreeMap<String, f64>> {
    let mut records: Vec<&StateEpiRecord> = state_epi.iter().collect();
    records.sort_by(|a, b| a.date.cmp(&b.date));
    let mut running: BTreeMap<String, f64> = BTreeMap::new();
    for r in &records {
        running.entry(r.state.clone()).or_insert(0.0);
    }
    let mut next = 0;
    let mut out = Vec::new();
    let mut day = start;
    while day <= end {
        while next < records.len() && records[next].date <= day {
            let r = records[next];
            *running.get_mut(&r.state).expect("state registered") += r.new_confirmed - r.new_recovered - r.new_dead;
            next += 1;
        }
        let total: f64 = running.values().map(|v| v.max(0.0)).sum();
        let n = running.len() as f64;
        let weights = running
            .iter()
            .map(|(s, v)| {
                let w = if total > 0.0 { v.max(0.0) / total } else { 1.0 / n };
                (s.clone(), w)
            })
            .collect();
        out.push(weights);
        day = day.succ_opt().expect("date in range");
    }
    out
}

/// Scales to [0, 1]. A constant series maps to all zeros when it is zero and
/// all ones otherwise.
pub fn normalize_min_max(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        values.iter().map(|v| (v - min) / (max - min)).collect()
    } else {
        let fill = if max > 0.0 { 1.0 } else { 0.0 };
        vec![fill; values.len()]
    }
}

/// Protest intensity index for `start..=end`.
///
/// Attendance reports for the same protest (date, city, state) are averaged,
/// cities are summed per state, and states are combined with their active-case
/// weights. The result is min-max normalized and smoothed.
pub fn compute_blm_index(
    protests: &[ProtestRecord],
    state_epi: &[StateEpiRecord],
    start: NaiveDate,
    end: NaiveDate,
) -> Result<BlmIndex> {
    if end < start {
        return Err(Error::Range(format!("{start}..={end}")));
    }
    let in_range: Vec<&ProtestRecord> = protests.iter().filter(|p| p.date >= start && p.date <= end).collect();
    if !in_range.is_empty() {
        let first = state_epi.iter().map(|r| r.date).min();
        let last = state_epi.iter().map(|r| r.date).max();
        for p in &in_range {
            let covered = matches!((first, last), (Some(a), Some(b)) if a <= p.date && p.date <= b);
            if !covered {
                return Err(Error::Range(format!(
                    "protest on {} in {} is outside the state case data",
                    p.date, p.state
                )));
            }
        }
    }

    let mut per_protest: BTreeMap<(NaiveDate, &str, &str), (f64, usize)> = BTreeMap::new();
    for p in &in_range {
        let e = per_protest
            .entry((p.date, p.state.as_str(), p.city.as_str()))
            .or_insert((0.0, 0));
        e.0 += p.attendance;
        e.1 += 1;
    }
    let mut per_state: BTreeMap<(NaiveDate, &str), f64> = BTreeMap::new();
    for ((date, state, _), (sum, n)) in per_protest {
        *per_state.entry((date, state)).or_insert(0.0) += sum / n as f64;
    }

    let weights = state_active_weights(state_epi, start, end);
    let mut raw = Vec::with_capacity(weights.len());
    let mut day = start;
    for w in &weights {
        let b: f64 = per_state
            .range((day, "")..)
            .take_while(|((d, _), _)| *d == day)
            .map(|((_, s), att)| w.get(*s).copied().unwrap_or(0.0) * att)
            .sum();
        raw.push(b);
        day = day.succ_opt().expect("date in range");
    }
    let index = smooth_trailing7(&normalize_min_max(&raw))?;
    Ok(BlmIndex { start, raw, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 6, day).unwrap()
    }

    fn epi(day: u32, state: &str, confirmed: f64) -> StateEpiRecord {
        StateEpiRecord {
            date: d(day),
            state: state.into(),
            new_confirmed: confirmed,
            new_recovered: 0.0,
            new_dead: 0.0,
        }
    }

    fn protest(day: u32, city: &str, state: &str, attendance: f64) -> ProtestRecord {
        ProtestRecord {
            date: d(day),
            city: city.into(),
            state: state.into(),
            attendance,
        }
    }

    #[test]
    fn no_protests_gives_zero_index() {
        let b = compute_blm_index(&[], &[epi(1, "NY", 10.0)], d(1), d(10)).unwrap();
        assert!(b.index.iter().all(|&v| v == 0.0));
        assert_eq!(b.index.len(), 10);
    }

    #[test]
    fn single_state_gets_full_weight() {
        let states = [epi(1, "NY", 100.0), epi(3, "NY", 0.0)];
        let p = [protest(2, "NYC", "NY", 300.0), protest(2, "Albany", "NY", 50.0)];
        let b = compute_blm_index(&p, &states, d(1), d(3)).unwrap();
        assert_eq!(b.raw, vec![0.0, 350.0, 0.0]);
    }

    #[test]
    fn two_state_weighted_example() {
        let states = [epi(1, "CA", 300.0), epi(1, "TX", 100.0)];
        let p = [protest(1, "LA", "CA", 10.0), protest(1, "Austin", "TX", 30.0)];
        let b = compute_blm_index(&p, &states, d(1), d(2)).unwrap();
        assert_eq!(b.raw[0], 15.0);
    }

    #[test]
    fn repeated_reports_are_averaged() {
        let states = [epi(1, "MN", 5.0)];
        let p = [
            protest(1, "Minneapolis", "MN", 100.0),
            protest(1, "Minneapolis", "MN", 300.0),
        ];
        let b = compute_blm_index(&p, &states, d(1), d(1)).unwrap();
        assert_eq!(b.raw[0], 200.0);
    }

    #[test]
    fn zero_active_cases_use_uniform_weights() {
        let states = [epi(1, "CA", 0.0), epi(1, "TX", 0.0)];
        let p = [protest(1, "LA", "CA", 10.0)];
        let b = compute_blm_index(&p, &states, d(1), d(1)).unwrap();
        assert_eq!(b.raw[0], 5.0);
    }

    #[test]
    fn uncovered_protest_is_a_range_error() {
        let p = [protest(5, "LA", "CA", 10.0)];
        let e = compute_blm_index(&p, &[epi(1, "CA", 1.0), epi(3, "CA", 1.0)], d(1), d(9)).unwrap_err();
        assert!(matches!(e, Error::Range(_)));
    }

    #[test]
    fn normalization_hits_both_ends() {
        let n = normalize_min_max(&[3.0, 7.0, 5.0]);
        assert_eq!(n, vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize_min_max(&[0.0; 3]), vec![0.0; 3]);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(cases in prop::collection::vec((0usize..4, 0.0f64..1e4, 0.0f64..1e3), 1..60)) {
            let states = ["CA", "NY", "TX", "WA"];
            let recs: Vec<StateEpiRecord> = cases
                .iter()
                .enumerate()
                .map(|(k, &(s, c, r))| StateEpiRecord {
                    date: d(1 + (k % 20) as u32),
                    state: states[s].into(),
                    new_confirmed: c,
                    new_recovered: r,
                    new_dead: 0.0,
                })
                .collect();
            for w in state_active_weights(&recs, d(1), d(25)) {
                let total: f64 = w.values().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn normalized_index_spans_unit_interval(raw in prop::collection::vec(0.0f64..1e5, 2..50)) {
            prop_assume!(raw.iter().any(|&v| v != raw[0]));
            let n = normalize_min_max(&raw);
            prop_assert_eq!(n.iter().cloned().fold(f64::MIN, f64::max), 1.0);
            prop_assert_eq!(n.iter().cloned().fold(f64::MAX, f64::min), 0.0);
        }
    }
}
