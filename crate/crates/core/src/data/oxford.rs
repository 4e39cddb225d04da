use serde::Serialize;

use super::N_POLICY;

/// One bounded ordinal indicator of the government-response tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PolicyIndicator {
    pub code: &'static str,
    pub name: &'static str,
    pub max_level: u8,
    /// Whether the indicator carries a targeted/general flag column.
    pub has_flag: bool,
}

const fn ind(code: &'static str, name: &'static str, max_level: u8, has_flag: bool) -> PolicyIndicator {
    PolicyIndicator {
        code,
        name,
        max_level,
        has_flag,
    }
}

/// The 14 bounded indicators in panel order; the first eight are the
/// containment and closure policies.
pub const POLICY_INDICATORS: [PolicyIndicator; N_POLICY] = [
    ind("C1", "School closing", 3, true),
    ind("C2", "Workplace closing", 3, true),
    ind("C3", "Cancel public events", 2, true),
    ind("C4", "Restrictions on gatherings", 4, true),
    ind("C5", "Close public transport", 2, true),
    ind("C6", "Stay at home requirements", 3, true),
    ind("C7", "Restrictions on internal movement", 2, true),
    ind("C8", "International travel controls", 4, false),
    ind("E1", "Income support", 2, true),
    ind("E2", "Debt/contract relief", 2, false),
    ind("H1", "Public information campaigns", 2, true),
    ind("H2", "Testing policy", 3, false),
    ind("H3", "Contact tracing", 2, false),
    ind("H6", "Face coverings", 4, true),
];

/// Tracker sub-index score scaled to [0, 1]:
/// `(v - 0.5 * (F - f)) / max`, where `F` is 1 for flagged indicators and `f`
/// is the recorded flag (1 = general scope; a missing flag counts as general).
/// A level of 0 always scores 0.
pub fn normalize_indicator(indicator: &PolicyIndicator, level: f64, flag: Option<f64>) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    let (big_f, f) = if indicator.has_flag {
        (1.0, flag.unwrap_or(1.0))
    } else {
        (0.0, 0.0)
    };
    ((level - 0.5 * (big_f - f)) / indicator.max_level as f64).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximal_general_school_closing_is_one() {
        assert_eq!(normalize_indicator(&POLICY_INDICATORS[0], 3.0, Some(1.0)), 1.0);
    }

    #[test]
    fn targeted_flag_discounts_half_a_level() {
        let c1 = &POLICY_INDICATORS[0];
        assert_eq!(normalize_indicator(c1, 2.0, Some(0.0)), 0.5);
        assert_eq!(normalize_indicator(c1, 2.0, None), 2.0 / 3.0);
        assert_eq!(normalize_indicator(c1, 0.0, Some(0.0)), 0.0);
    }

    #[test]
    fn unflagged_indicator_ignores_flag() {
        let c8 = &POLICY_INDICATORS[7];
        assert_eq!(normalize_indicator(c8, 2.0, Some(0.0)), 0.5);
    }
}
