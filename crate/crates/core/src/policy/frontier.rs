use super::ScenarioOutcome;

/// Whether `a` dominates `b`: no more cases and at least as much employment,
/// with one of the two strict.
pub fn dominates(a: &ScenarioOutcome, b: &ScenarioOutcome) -> bool {
    a.d_cases <= b.d_cases
        && a.d_employment >= b.d_employment
        && (a.d_cases < b.d_cases || a.d_employment > b.d_employment)
}

fn finite(o: &ScenarioOutcome) -> bool {
    o.d_cases.is_finite() && o.d_employment.is_finite()
}

/// Indices of the non-dominated outcomes, sorted by cases ascending.
/// Employment strictly increases along the result. Of several identical
/// points only the first is kept; non-finite points are skipped.
pub fn efficient_frontier(outcomes: &[ScenarioOutcome]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..outcomes.len()).filter(|&i| finite(&outcomes[i])).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&outcomes[a], &outcomes[b]);
        x.d_cases
            .total_cmp(&y.d_cases)
            .then(y.d_employment.total_cmp(&x.d_employment))
            .then(a.cmp(&b))
    });
    let mut best = f64::NEG_INFINITY;
    let mut frontier = Vec::new();
    for i in order {
        if outcomes[i].d_employment > best {
            best = outcomes[i].d_employment;
            frontier.push(i);
        }
    }
    frontier
}

/// Quadratic reference for [`efficient_frontier`]: compares every pair.
pub fn dominance_filter(outcomes: &[ScenarioOutcome]) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..outcomes.len())
        .filter(|&i| finite(&outcomes[i]))
        .filter(|&i| {
            !(0..outcomes.len()).any(|j| {
                j != i
                    && finite(&outcomes[j])
                    && (dominates(&outcomes[j], &outcomes[i]) || (j < i && outcomes[j] == outcomes[i]))
            })
        })
        .collect();
    keep.sort_by(|&a, &b| outcomes[a].d_cases.total_cmp(&outcomes[b].d_cases));
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(cases: f64, employment: f64) -> ScenarioOutcome {
        ScenarioOutcome {
            d_employment: employment,
            d_cases: cases,
        }
    }

    #[test]
    fn single_point_is_its_own_frontier() {
        assert_eq!(efficient_frontier(&[pt(3.0, 1.0)]), vec![0]);
    }

    #[test]
    fn dominated_middle_point_is_dropped() {
        let pts = [pt(1.0, 1.0), pt(2.0, 0.5), pt(3.0, 2.0)];
        assert_eq!(efficient_frontier(&pts), vec![0, 2]);
        assert_eq!(dominance_filter(&pts), vec![0, 2]);
    }

    #[test]
    fn duplicates_keep_the_first() {
        let pts = [pt(1.0, 1.0), pt(1.0, 1.0), pt(1.0, 0.5)];
        assert_eq!(efficient_frontier(&pts), vec![0]);
        assert_eq!(dominance_filter(&pts), vec![0]);
    }

    proptest! {
        #[test]
        fn matches_quadratic_filter(raw in prop::collection::vec((0u8..20, 0u8..20), 1..200)) {
            let pts: Vec<ScenarioOutcome> = raw.iter().map(|&(c, e)| pt(c as f64, e as f64 / 4.0)).collect();
            let fast = efficient_frontier(&pts);
            prop_assert_eq!(&fast, &dominance_filter(&pts));
            for w in fast.windows(2) {
                prop_assert!(pts[w[0]].d_cases < pts[w[1]].d_cases);
                prop_assert!(pts[w[0]].d_employment < pts[w[1]].d_employment);
            }
        }

        #[test]
        fn matches_quadratic_filter_on_large_continuous_sets(
            raw in prop::collection::vec((-1e3f64..1e4, -1.0f64..3.0), 1..=1000)
        ) {
            let pts: Vec<ScenarioOutcome> = raw.iter().map(|&(c, e)| pt(c, e)).collect();
            prop_assert_eq!(efficient_frontier(&pts), dominance_filter(&pts));
        }
    }
}
