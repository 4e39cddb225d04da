//! Source parsing, index construction and the aligned daily panel.

mod blm;
mod oxford;
mod panel;
mod series;
mod sources;

pub use blm::{compute_blm_index, normalize_min_max, state_active_weights, BlmIndex};
pub use oxford::{normalize_indicator, PolicyIndicator, POLICY_INDICATORS};
pub use panel::{build_panel, DailyRecord, Panel};
pub use series::{
    fill_daily, interpolate_weekly_to_daily, smooth_columns, smooth_trailing7, MAX_FILL_GAP, SMOOTHING_WINDOW,
};
pub use sources::{
    ingest_sources, load_demographics, read_claims, read_epi, read_mobility, read_oxford, read_protests,
    read_state_epi, ParseReport, RawSources, SourcePaths,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const N_MOBILITY: usize = 6;
pub const N_POLICY: usize = 14;
/// The first eight policy components are the containment and closure levers.
pub const N_CONTAINMENT: usize = 8;
pub const N_DEMOGRAPHICS: usize = 5;
/// Index of the residential mobility category.
pub const RESIDENTIAL: usize = 5;

/// Google mobility categories in column order.
pub const MOBILITY_CATEGORIES: [&str; N_MOBILITY] = [
    "retail_and_recreation",
    "grocery_and_pharmacy",
    "parks",
    "transit_stations",
    "workplaces",
    "residential",
];

/// National demographic controls. A single-region panel sees one constant
/// vector, so demographic network heads reduce to learned constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    /// People per square kilometre.
    pub pop_density: f64,
    pub population: f64,
    pub gini: f64,
    pub share_65_plus: f64,
    /// USD.
    pub gdp_per_capita: f64,
}

impl Demographics {
    pub fn validate(&self) -> Result<()> {
        let v = self.as_array();
        if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::Domain(format!(
                "demographics must be finite and positive: {self:?}"
            )));
        }
        if self.gini > 1.0 || self.share_65_plus > 1.0 {
            return Err(Error::Domain("gini and share_65_plus must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; N_DEMOGRAPHICS] {
        [
            self.pop_density,
            self.population,
            self.gini,
            self.share_65_plus,
            self.gdp_per_capita,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtestRecord {
    pub date: NaiveDate,
    pub city: String,
    pub state: String,
    /// Attendance; when several reports describe one protest, their average.
    pub attendance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEpiRecord {
    pub date: NaiveDate,
    pub state: String,
    pub new_confirmed: f64,
    pub new_recovered: f64,
    pub new_dead: f64,
}

const STATE_CODES: [&str; 56] = [
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "DC", "FL", "GA", "HI", "ID", "IL", "IN", "IA", "KS", "KY", "LA",
    "ME", "MD", "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ", "NM", "NY", "NC", "ND", "OH", "OK", "OR",
    "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI", "WY", "PR", "GU", "VI", "AS", "MP",
];

pub fn is_state_code(code: &str) -> bool {
    STATE_CODES.contains(&code)
}

/// SHA-256 over git's blob framing (`"blob <len>\0"` + content), hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}
