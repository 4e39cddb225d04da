use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Population fractions in each compartment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compartments {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
}

impl Compartments {
    pub fn new(s: f64, e: f64, i: f64, r: f64) -> Self {
        Compartments { s, e, i, r }
    }

    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    /// Cumulative confirmed fraction, I + R.
    pub fn confirmed(&self) -> f64 {
        self.i + self.r
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("S", self.s), ("E", self.e), ("I", self.i), ("R", self.r)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Stability {
                    compartment: name,
                    value: v,
                });
            }
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "compartments sum to {} instead of 1",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Transmission, incubation-exit and removal rates per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirParams {
    pub beta: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl SeirParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > 0.0
            && self.beta.is_finite()
            && self.alpha > 0.0
            && self.alpha <= 1.0
            && self.gamma > 0.0
            && self.gamma <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid SEIR parameters {self:?}")))
        }
    }
}

/// One explicit day of SEIR dynamics with transmission scaled by `r_t`.
pub fn seir_step(state: &Compartments, params: &SeirParams, r_t: f64) -> Result<Compartments> {
    if !r_t.is_finite() {
        return Err(Error::Numeric {
            layer: "seir infection rate".into(),
        });
    }
    let exposures = r_t * params.beta * state.s * state.i;
    let onset = params.alpha * state.e;
    let removal = params.gamma * state.i;
    let next = Compartments {
        s: state.s - exposures,
        e: state.e + exposures - onset,
        i: state.i + onset - removal,
        r: state.r + removal,
    };
    for (name, v) in [("S", next.s), ("E", next.e), ("I", next.i), ("R", next.r)] {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::Stability {
                compartment: name,
                value: v,
            });
        }
    }
    Ok(next)
}
