//! System parameters `(U, V, U0, V0, T, q)` and user addressing.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::PrimeField;

/// Users are addressed by bitmasks in several places, so the whole
/// population must fit in a `u64`.
pub const MAX_USERS: usize = 64;

/// Network shape and thresholds, independent of the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Topology {
    /// `U`, number of relays.
    pub relays: usize,
    /// `V`, users per relay.
    pub users_per_relay: usize,
    /// `U0`, guaranteed surviving relays.
    pub relay_floor: usize,
    /// `V0`, guaranteed surviving users per relay.
    pub user_floor: usize,
    /// `T`, collusion threshold.
    pub collusion: usize,
}

impl Topology {
    /// Validates ranges and rejects the infeasible regime `U0 * V0 <= T`.
    pub fn new(
        relays: usize,
        users_per_relay: usize,
        relay_floor: usize,
        user_floor: usize,
        collusion: usize,
    ) -> Result<Self> {
        let t = Self { relays, users_per_relay, relay_floor, user_floor, collusion };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if self.relays < 2 {
            return Err(Error::InvalidParams(format!("U = {} must be at least 2", self.relays)));
        }
        if self.users_per_relay < 2 {
            return Err(Error::InvalidParams(format!(
                "V = {} must be at least 2",
                self.users_per_relay
            )));
        }
        if self.relay_floor < 1 || self.relay_floor > self.relays {
            return Err(Error::InvalidParams(format!(
                "U0 = {} must lie in [1, U] = [1, {}]",
                self.relay_floor, self.relays
            )));
        }
        if self.user_floor < 1 || self.user_floor > self.users_per_relay {
            return Err(Error::InvalidParams(format!(
                "V0 = {} must lie in [1, V] = [1, {}]",
                self.user_floor, self.users_per_relay
            )));
        }
        if self.num_users() > MAX_USERS {
            return Err(Error::InvalidParams(format!(
                "U*V = {} users exceeds the supported maximum of {MAX_USERS}",
                self.num_users()
            )));
        }
        if !self.is_feasible() {
            return Err(Error::Infeasible {
                survivors: self.min_survivors(),
                collusion: self.collusion,
            });
        }
        Ok(())
    }

    /// The feasibility predicate `U0 * V0 > T`.
    pub fn is_feasible(&self) -> bool {
        self.min_survivors() > self.collusion
    }

    /// `U0 * V0`: rows of the coding matrix, and the number of coded
    /// symbols the server always receives.
    pub fn min_survivors(&self) -> usize {
        self.relay_floor * self.user_floor
    }

    pub fn num_users(&self) -> usize {
        self.relays * self.users_per_relay
    }

    /// `L = U0 * V0 - T`, the scheme's input length in symbols.
    pub fn input_len(&self) -> usize {
        self.min_survivors() - self.collusion
    }

    /// Users in canonical order: relay-major, then slot.
    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.relays)
            .flat_map(move |r| (0..self.users_per_relay).map(move |s| UserId::new(r, s)))
    }

    pub fn cluster(&self, relay: usize) -> impl Iterator<Item = UserId> {
        (0..self.users_per_relay).map(move |s| UserId::new(relay, s))
    }

    /// Column of the coding matrix belonging to `user`: `V(u-1) + v` in
    /// one-based terms.
    pub fn index(&self, user: UserId) -> usize {
        user.relay * self.users_per_relay + user.slot
    }

    pub fn user_at(&self, index: usize) -> UserId {
        UserId::new(index / self.users_per_relay, index % self.users_per_relay)
    }

    pub fn header(&self) -> String {
        format!(
            "U={} V={} U0={} V0={} T={}",
            self.relays, self.users_per_relay, self.relay_floor, self.user_floor, self.collusion
        )
    }
}

/// A topology bound to a prime field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SystemParams {
    pub topology: Topology,
    pub field: PrimeField,
}

impl SystemParams {
    pub fn new(topology: Topology, q: u64) -> Result<Self> {
        let field = PrimeField::new(q)?;
        if (q as usize) <= topology.num_users() {
            return Err(Error::InsufficientField { q, need: topology.num_users() });
        }
        Ok(Self { topology, field })
    }

    pub fn q(&self) -> u64 {
        self.field.modulus()
    }

    pub fn input_len(&self) -> usize {
        self.topology.input_len()
    }

    pub fn header(&self) -> String {
        format!("{} q={}", self.topology.header(), self.q())
    }
}

/// User `(u, v)`, stored zero-based and displayed one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId {
    pub relay: usize,
    pub slot: usize,
}

impl UserId {
    pub const fn new(relay: usize, slot: usize) -> Self {
        Self { relay, slot }
    }

    /// From the one-based `(u, v)` notation.
    pub fn one_based(u: usize, v: usize) -> Self {
        assert!(u >= 1 && v >= 1, "one-based indices start at 1");
        Self::new(u - 1, v - 1)
    }

    /// Parses `(u,v)` in one-based notation.
    pub fn parse(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("expected (u,v), got `{s}`")))?;
        let (u, v) = inner
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected (u,v), got `{s}`")))?;
        let u: usize = u.trim().parse().map_err(|_| Error::Parse(format!("bad relay in `{s}`")))?;
        let v: usize = v.trim().parse().map_err(|_| Error::Parse(format!("bad user in `{s}`")))?;
        if u == 0 || v == 0 {
            return Err(Error::Parse(format!("indices are one-based in `{s}`")));
        }
        Ok(Self::one_based(u, v))
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.relay + 1, self.slot + 1)
    }
}

/// The two worked parameter sets used throughout tests and docs.
pub mod presets {
    use super::Topology;

    /// `U=2, V=2, U0=2, V0=1, T=0`.
    pub fn small() -> Topology {
        Topology::new(2, 2, 2, 1, 0).expect("valid preset")
    }

    /// `U=3, V=3, U0=2, V0=2, T=2`.
    pub fn colluding() -> Topology {
        Topology::new(3, 3, 2, 2, 2).expect("valid preset")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn block_length() {
        assert_eq!(presets::small().input_len(), 2);
        assert_eq!(presets::colluding().input_len(), 2);
    }

    #[test]
    fn infeasible_rejected() {
        let err = Topology::new(3, 3, 1, 2, 2).unwrap_err();
        assert_eq!(err, Error::Infeasible { survivors: 2, collusion: 2 });
        assert!(err.to_string().contains("U0*V0 <= T"));
    }

    #[test]
    fn range_checks() {
        assert!(Topology::new(1, 3, 1, 1, 0).is_err());
        assert!(Topology::new(3, 3, 4, 1, 0).is_err());
        assert!(Topology::new(3, 3, 1, 4, 0).is_err());
        assert!(Topology::new(3, 3, 3, 3, 0).is_ok());
        assert!(Topology::new(3, 3, 0, 1, 0).is_err());
        assert!(Topology::new(9, 9, 1, 1, 0).is_err());
    }

    #[test]
    fn field_must_exceed_user_count() {
        let t = presets::small();
        assert!(matches!(SystemParams::new(t, 3), Err(Error::InsufficientField { .. })));
        assert!(SystemParams::new(t, 5).is_ok());
        assert!(SystemParams::new(t, 6).is_err());
    }

    #[test]
    fn user_indexing() {
        let t = presets::colluding();
        assert_eq!(t.index(UserId::one_based(1, 3)), 2);
        assert_eq!(t.index(UserId::one_based(2, 1)), 3);
        for (i, u) in t.users().enumerate() {
            assert_eq!(t.index(u), i);
            assert_eq!(t.user_at(i), u);
        }
        assert_eq!(UserId::parse("(2,3)").unwrap(), UserId::new(1, 2));
        assert_eq!(UserId::new(1, 2).to_string(), "(2,3)");
        assert!(UserId::parse("(0,1)").is_err());
    }

    proptest! {
        #[test]
        fn feasibility_gate_matches_predicate(
            u in 2usize..6, v in 2usize..6, u0 in 1usize..5, v0 in 1usize..5, t in 0usize..20
        ) {
            prop_assume!(u0 <= u && v0 <= v);
            let res = Topology::new(u, v, u0, v0, t);
            if u0 * v0 > t {
                prop_assert!(res.is_ok());
            } else {
                let is_infeasible = matches!(res, Err(Error::Infeasible { .. }));
                prop_assert!(is_infeasible);
            }
        }
    }
}
