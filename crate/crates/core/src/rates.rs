//! The optimal rate region and the comparison of measured rates against it.
//!
//! With `K = U0*V0 - T > 0`:
//!
//! * `R_X^(1) >= 1`, `R_Y^(1) >= 1`;
//! * `R_X^(2) >= 1/K` (converse); the closed-form statement of the region prints `V0/K` for
//!   this corner, which is kept as [`RateRegion::rx2_stated`];
//! * `1/(U0 - floor(T/V0)) <= R_Y^(2)` is necessary and
//!   `R_Y^(2) = 1/(U0 - T/V0) = V0/K` is achievable.
//!
//! The region is empty when `K <= 0`.

use std::fmt;

use num_rational::Ratio;

use crate::params::Topology;

pub type Rate = Ratio<u64>;

/// Symbols sent per input symbol on each hop of each round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateTuple {
    pub rx1: Rate,
    pub ry1: Rate,
    pub rx2: Rate,
    pub ry2: Rate,
}

impl RateTuple {
    pub fn new(rx1: Rate, ry1: Rate, rx2: Rate, ry2: Rate) -> Self {
        Self { rx1, ry1, rx2, ry2 }
    }

    /// Message lengths divided by the input length `l`.
    pub fn from_counts(x1: usize, y1: usize, x2: usize, y2: usize, l: usize) -> Self {
        let r = |n: usize| Ratio::new(n as u64, l as u64);
        Self::new(r(x1), r(y1), r(x2), r(y2))
    }
}

impl fmt::Display for RateTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.rx1, self.ry1, self.rx2, self.ry2)
    }
}

/// Corner points of the region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateBounds {
    pub rx1_min: Rate,
    pub ry1_min: Rate,
    /// `1/(U0*V0 - T)`.
    pub rx2_min: Rate,
    /// `V0/(U0*V0 - T)`, as printed in the closed-form statement.
    pub rx2_stated: Rate,
    /// `1/(U0 - floor(T/V0))`.
    pub ry2_lower: Rate,
    /// `1/(U0 - T/V0)`.
    pub ry2_upper: Rate,
}

impl RateBounds {
    pub fn is_tight(&self) -> bool {
        self.ry2_lower == self.ry2_upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateRegion {
    pub feasible: bool,
    /// `None` exactly when infeasible.
    pub bounds: Option<RateBounds>,
}

impl fmt::Display for RateRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.bounds {
            None => write!(f, "feasible=false"),
            Some(b) => write!(
                f,
                "feasible=true rx1_min={} ry1_min={} rx2_min={} rx2_stated={} ry2_lower={} ry2_upper={} tight={}",
                b.rx1_min,
                b.ry1_min,
                b.rx2_min,
                b.rx2_stated,
                b.ry2_lower,
                b.ry2_upper,
                b.is_tight()
            ),
        }
    }
}

/// Region for raw thresholds; accepts infeasible combinations.
pub fn rate_region_raw(relay_floor: usize, user_floor: usize, collusion: usize) -> RateRegion {
    let survivors = (relay_floor * user_floor) as u64;
    let t = collusion as u64;
    if user_floor == 0 || survivors <= t {
        return RateRegion { feasible: false, bounds: None };
    }
    let k = survivors - t;
    let v0 = user_floor as u64;
    let u0 = relay_floor as u64;
    let one = Ratio::from_integer(1);
    RateRegion {
        feasible: true,
        bounds: Some(RateBounds {
            rx1_min: one,
            ry1_min: one,
            rx2_min: Ratio::new(1, k),
            rx2_stated: Ratio::new(v0, k),
            ry2_lower: Ratio::new(1, u0 - t / v0),
            // 1/(U0 - T/V0) = V0/(U0*V0 - T)
            ry2_upper: Ratio::new(v0, k),
        }),
    }
}

pub fn rate_region(topo: &Topology) -> RateRegion {
    rate_region_raw(topo.relay_floor, topo.user_floor, topo.collusion)
}

/// Outcome of checking measured rates against the scheme and the region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateComparison {
    pub measured: RateTuple,
    pub expected: Option<RateTuple>,
    /// Measured rates equal the scheme's rates.
    pub matches_scheme: bool,
    /// Some measured rate lies below its converse bound, which a correct
    /// engine cannot produce.
    pub internal_error: bool,
    pub notes: Vec<String>,
}

impl RateComparison {
    pub fn pass(&self) -> bool {
        self.matches_scheme && !self.internal_error
    }
}

impl fmt::Display for RateComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "measured={}", self.measured)?;
        if let Some(e) = &self.expected {
            write!(f, " expected={e}")?;
        }
        write!(f, " match={} internal_error={}", self.matches_scheme, self.internal_error)?;
        for n in &self.notes {
            write!(f, "\nnote: {n}")?;
        }
        Ok(())
    }
}

pub fn compare(measured: RateTuple, region: &RateRegion) -> RateComparison {
    let Some(b) = region.bounds else {
        return RateComparison {
            measured,
            expected: None,
            matches_scheme: false,
            internal_error: true,
            notes: vec!["rates measured for an infeasible parameter set".into()],
        };
    };
    let expected = RateTuple::new(b.rx1_min, b.ry1_min, b.rx2_min, b.ry2_upper);
    let internal_error = measured.rx1 < b.rx1_min
        || measured.ry1 < b.ry1_min
        || measured.rx2 < b.rx2_min
        || measured.ry2 < b.ry2_lower;
    let mut notes = Vec::new();
    if b.rx2_stated != b.rx2_min {
        notes.push(format!(
            "closed-form statement prints R_X^(2) >= {} while the converse and the scheme give {}",
            b.rx2_stated, b.rx2_min
        ));
    }
    if !b.is_tight() {
        notes.push(format!(
            "R_Y^(2) gap: achievable {} vs converse {}",
            b.ry2_upper, b.ry2_lower
        ));
    }
    RateComparison { measured, expected: Some(expected), matches_scheme: measured == expected, internal_error, notes }
}
