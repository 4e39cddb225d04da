use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{OpenMask, ScenarioOutcome, LEVER_NAMES};
use crate::data::N_CONTAINMENT;
use crate::error::{Error, Result};

/// Average effect of additionally opening one policy, over every pair of
/// masks that differ only in that policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalPolicyStat {
    /// Zero-based lever index; `C{lever+1}`.
    pub lever: usize,
    pub name: String,
    pub pairs: usize,
    pub d_employment: f64,
    pub d_cases: f64,
    /// Employment gained per additional case; `None` when the case effect is 0.
    pub ratio: Option<f64>,
}

impl MarginalPolicyStat {
    pub fn new(lever: usize, pairs: usize, d_employment: f64, d_cases: f64) -> Self {
        MarginalPolicyStat {
            lever,
            name: LEVER_NAMES[lever].to_string(),
            pairs,
            d_employment,
            d_cases,
            ratio: (d_cases != 0.0).then(|| d_employment / d_cases),
        }
    }
}

fn lookup(outcomes: &[(OpenMask, ScenarioOutcome)]) -> BTreeMap<OpenMask, ScenarioOutcome> {
    let mut map: BTreeMap<OpenMask, ScenarioOutcome> = outcomes.iter().copied().collect();
    map.insert(OpenMask::NONE, ScenarioOutcome::ZERO);
    map
}

fn stats_from_pairs(lever: usize, diffs: &[ScenarioOutcome]) -> MarginalPolicyStat {
    let n = diffs.len() as f64;
    let (d_employment, d_cases) = if diffs.is_empty() {
        (0.0, 0.0)
    } else {
        (
            diffs.iter().map(|d| d.d_employment).sum::<f64>() / n,
            diffs.iter().map(|d| d.d_cases).sum::<f64>() / n,
        )
    };
    MarginalPolicyStat::new(lever, diffs.len(), d_employment, d_cases)
}

fn pair_diffs(map: &BTreeMap<OpenMask, ScenarioOutcome>, lever: usize) -> Vec<ScenarioOutcome> {
    (0..=u8::MAX)
        .map(OpenMask)
        .filter(|m| !m.is_open(lever))
        .filter_map(|without| {
            let a = map.get(&without)?;
            let b = map.get(&without.with(lever))?;
            Some(ScenarioOutcome {
                d_employment: b.d_employment - a.d_employment,
                d_cases: b.d_cases - a.d_cases,
            })
        })
        .collect()
}

/// Marginal statistics from a complete sweep of all 255 nonempty masks; the
/// empty mask counts as the zero outcome, giving 128 pairs per policy.
pub fn marginal_policy_stats(outcomes: &[(OpenMask, ScenarioOutcome)]) -> Result<Vec<MarginalPolicyStat>> {
    let map = lookup(outcomes);
    if map.len() != 1 << N_CONTAINMENT {
        return Err(Error::Domain(format!(
            "marginal statistics need all 255 nonempty masks, got {}",
            map.len() - 1
        )));
    }
    Ok((0..N_CONTAINMENT)
        .map(|lever| stats_from_pairs(lever, &pair_diffs(&map, lever)))
        .collect())
}

/// Marginal statistics over whichever pairs are present in a partial set of
/// masks. Policies without any complete pair report zero pairs.
pub fn marginal_policy_stats_partial(outcomes: &[(OpenMask, ScenarioOutcome)]) -> Vec<MarginalPolicyStat> {
    let map = lookup(outcomes);
    (0..N_CONTAINMENT)
        .map(|lever| stats_from_pairs(lever, &pair_diffs(&map, lever)))
        .collect()
}

/// Policies ordered by employment gained per case, best first; policies
/// without a ratio come last.
pub fn rank_by_ratio(stats: &[MarginalPolicyStat]) -> Vec<&MarginalPolicyStat> {
    let mut ranked: Vec<&MarginalPolicyStat> = stats.iter().collect();
    ranked.sort_by(|a, b| match (a.ratio, b.ratio) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.lever.cmp(&b.lever),
    });
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn additive(emp: [f64; 8], cases: [f64; 8]) -> Vec<(OpenMask, ScenarioOutcome)> {
        super::super::enumerate_scenarios()
            .into_iter()
            .map(|m| {
                let open = (0..8).filter(|&j| m.is_open(j));
                let o = ScenarioOutcome {
                    d_employment: open.clone().map(|j| emp[j]).sum(),
                    d_cases: open.map(|j| cases[j]).sum(),
                };
                (m, o)
            })
            .collect()
    }

    #[test]
    fn additive_effects_are_recovered_exactly() {
        let emp = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let cases = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 0.0, 80.0];
        let stats = marginal_policy_stats(&additive(emp, cases)).unwrap();
        for s in &stats {
            assert_eq!(s.pairs, 128);
            assert!((s.d_employment - emp[s.lever]).abs() < 1e-12);
            assert!((s.d_cases - cases[s.lever]).abs() < 1e-9);
        }
        assert_eq!(stats[6].ratio, None);
        assert_eq!(rank_by_ratio(&stats).last().unwrap().lever, 6);
    }

    #[test]
    fn incomplete_sweeps_are_rejected() {
        let mut rows = additive([1.0; 8], [1.0; 8]);
        rows.pop();
        assert!(matches!(marginal_policy_stats(&rows), Err(Error::Domain(_))));
    }

    #[test]
    fn partial_sets_use_only_complete_pairs() {
        let rows = vec![
            (
                OpenMask(0b01),
                ScenarioOutcome {
                    d_employment: 1.0,
                    d_cases: 10.0,
                },
            ),
            (
                OpenMask(0b11),
                ScenarioOutcome {
                    d_employment: 3.0,
                    d_cases: 40.0,
                },
            ),
        ];
        let stats = marginal_policy_stats_partial(&rows);
        assert_eq!(stats[0].pairs, 1);
        assert_eq!(stats[0].d_employment, 1.0);
        assert_eq!(stats[1].pairs, 1);
        assert_eq!(stats[1].d_cases, 30.0);
        assert_eq!(stats[2].pairs, 0);
        assert_eq!(stats[2].ratio, None);
    }
}
