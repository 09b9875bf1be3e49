//! Admissible dropout patterns `(V1_u, U1, V2_u, U2)`.
//!
//! Sets are bitmasks: relay sets use bit `u-1`, per-relay user sets use bit
//! `v-1`. Admissibility:
//!
//! * `V2_u ⊆ V1_u` for every relay and `U2 ⊆ U1`;
//! * `|V1_u| >= V0` for every relay, `|V2_u| >= V0` for relays in `U2`;
//! * `|U1| >= U0` and `|U2| >= U0`.
//!
//! Relays outside `U2` may carry any nested `V2_u`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::keys::stream_rng;
use crate::mds::binomial;
use crate::params::{Topology, UserId};

/// Default ceiling for [`enumerate`].
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

const PATTERN_STREAM: u64 = 3;

fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn is_subset(a: u64, b: u64) -> bool {
    a & !b == 0
}

fn popcount(m: u64) -> usize {
    m.count_ones() as usize
}

/// One session's realised survival sets.
///
/// Ordered as the tuple `(U1, U2, V1_1, V2_1, V1_2, V2_2, ...)`, which is
/// the enumeration order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DropoutPattern {
    pub u1: u64,
    pub u2: u64,
    pub v1: Vec<u64>,
    pub v2: Vec<u64>,
}

impl Ord for DropoutPattern {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |p: &Self| {
            let per_relay: Vec<(u64, u64)> = p.v1.iter().copied().zip(p.v2.iter().copied()).collect();
            (p.u1, p.u2, per_relay)
        };
        key(self).cmp(&key(other))
    }
}

impl PartialOrd for DropoutPattern {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl DropoutPattern {
    /// Nobody drops out.
    pub fn full(topo: &Topology) -> Self {
        let users = full_mask(topo.users_per_relay);
        let relays = full_mask(topo.relays);
        Self {
            u1: relays,
            u2: relays,
            v1: vec![users; topo.relays],
            v2: vec![users; topo.relays],
        }
    }

    /// Builds a pattern from one-based relay lists and user lists.
    pub fn from_sets(
        topo: &Topology,
        u1: &[usize],
        u2: &[usize],
        v1: &[UserId],
        v2: &[UserId],
    ) -> Self {
        let relay_mask = |s: &[usize]| s.iter().fold(0u64, |m, &u| m | 1 << (u - 1));
        let mut p = Self {
            u1: relay_mask(u1),
            u2: relay_mask(u2),
            v1: vec![0; topo.relays],
            v2: vec![0; topo.relays],
        };
        for u in v1 {
            p.v1[u.relay] |= 1 << u.slot;
        }
        for u in v2 {
            p.v2[u.relay] |= 1 << u.slot;
        }
        p
    }

    pub fn relay_in_u1(&self, relay: usize) -> bool {
        self.u1 >> relay & 1 == 1
    }

    pub fn relay_in_u2(&self, relay: usize) -> bool {
        self.u2 >> relay & 1 == 1
    }

    pub fn u1_relays(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.v1.len()).filter(|&u| self.relay_in_u1(u))
    }

    pub fn u2_relays(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.v1.len()).filter(|&u| self.relay_in_u2(u))
    }

    pub fn v1_users(&self, relay: usize) -> impl Iterator<Item = UserId> + '_ {
        mask_users(relay, self.v1[relay])
    }

    pub fn v2_users(&self, relay: usize) -> impl Iterator<Item = UserId> + '_ {
        mask_users(relay, self.v2[relay])
    }

    /// `S1 = ⋃_{u ∈ U1} V1_u` in canonical order.
    pub fn s1(&self) -> Vec<UserId> {
        self.u1_relays().flat_map(|u| self.v1_users(u)).collect()
    }

    pub fn in_s1(&self, user: UserId) -> bool {
        self.relay_in_u1(user.relay) && self.v1[user.relay] >> user.slot & 1 == 1
    }

    pub fn to_line(&self) -> String {
        let join = |v: &[u64]| v.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",");
        format!("U1={} U2={} V1={} V2={}", self.u1, self.u2, join(&self.v1), join(&self.v2))
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let kv = crate::text::parse_kv(line)?;
        let mask = |k: &str| -> Result<u64> {
            kv.get(k)
                .ok_or_else(|| Error::Parse(format!("pattern line lacks `{k}`")))?
                .parse()
                .map_err(|_| Error::Parse(format!("bad bitmask for `{k}`")))
        };
        let list = |k: &str| -> Result<Vec<u64>> {
            kv.get(k)
                .ok_or_else(|| Error::Parse(format!("pattern line lacks `{k}`")))?
                .split(',')
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad bitmask `{t}` in `{k}`"))))
                .collect()
        };
        let p = Self { u1: mask("U1")?, u2: mask("U2")?, v1: list("V1")?, v2: list("V2")? };
        if p.v1.len() != p.v2.len() {
            return Err(Error::Parse("V1 and V2 list different relay counts".into()));
        }
        Ok(p)
    }
}

impl fmt::Display for DropoutPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

fn mask_users(relay: usize, mask: u64) -> impl Iterator<Item = UserId> {
    (0..64usize).filter(move |s| mask >> s & 1 == 1).map(move |s| UserId::new(relay, s))
}

/// A violated admissibility condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Shape { relays: usize, expected: usize },
    UserOutOfRange { relay: usize },
    RelayOutOfRange,
    /// `V2_u ⊄ V1_u` ("round-2 set not nested").
    Round2NotNested { relay: usize },
    RelaysNotNested,
    Round1TooFewUsers { relay: usize, have: usize },
    Round2TooFewUsers { relay: usize, have: usize },
    TooFewRelaysRound1 { have: usize },
    TooFewRelaysRound2 { have: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { relays, expected } => {
                write!(f, "pattern lists {relays} relays, expected {expected}")
            }
            Violation::UserOutOfRange { relay } => {
                write!(f, "relay {}: user bit beyond V", relay + 1)
            }
            Violation::RelayOutOfRange => write!(f, "relay bit beyond U"),
            Violation::Round2NotNested { relay } => {
                write!(f, "relay {}: round-2 set not nested", relay + 1)
            }
            Violation::RelaysNotNested => write!(f, "U2 not nested in U1"),
            Violation::Round1TooFewUsers { relay, have } => {
                write!(f, "relay {}: |V1| = {have} below V0", relay + 1)
            }
            Violation::Round2TooFewUsers { relay, have } => {
                write!(f, "relay {}: |V2| = {have} below V0", relay + 1)
            }
            Violation::TooFewRelaysRound1 { have } => write!(f, "|U1| = {have} below U0"),
            Violation::TooFewRelaysRound2 { have } => write!(f, "|U2| = {have} below U0"),
        }
    }
}

/// Every violated condition; empty means admissible.
pub fn validate(topo: &Topology, p: &DropoutPattern) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.v1.len() != topo.relays || p.v2.len() != topo.relays {
        out.push(Violation::Shape { relays: p.v1.len().max(p.v2.len()), expected: topo.relays });
        return out;
    }
    let users = full_mask(topo.users_per_relay);
    let relays = full_mask(topo.relays);
    if !is_subset(p.u1, relays) || !is_subset(p.u2, relays) {
        out.push(Violation::RelayOutOfRange);
    }
    if !is_subset(p.u2, p.u1) {
        out.push(Violation::RelaysNotNested);
    }
    if popcount(p.u1) < topo.relay_floor {
        out.push(Violation::TooFewRelaysRound1 { have: popcount(p.u1) });
    }
    if popcount(p.u2) < topo.relay_floor {
        out.push(Violation::TooFewRelaysRound2 { have: popcount(p.u2) });
    }
    for relay in 0..topo.relays {
        let (a, b) = (p.v1[relay], p.v2[relay]);
        if !is_subset(a, users) || !is_subset(b, users) {
            out.push(Violation::UserOutOfRange { relay });
        }
        if !is_subset(b, a) {
            out.push(Violation::Round2NotNested { relay });
        }
        if popcount(a) < topo.user_floor {
            out.push(Violation::Round1TooFewUsers { relay, have: popcount(a) });
        }
        if p.relay_in_u2(relay) && popcount(b) < topo.user_floor {
            out.push(Violation::Round2TooFewUsers { relay, have: popcount(b) });
        }
    }
    out
}

pub fn check(topo: &Topology, p: &DropoutPattern) -> Result<()> {
    let v = validate(topo, p);
    if v.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        Err(Error::InvalidPattern(msgs.join("; ")))
    }
}

/// Number of admissible patterns, by closed-form counting.
pub fn count(topo: &Topology) -> u128 {
    let v = topo.users_per_relay;
    let v0 = topo.user_floor;
    // per relay in U2: nested pairs with both sides >= V0
    let in_u2: u128 = (v0..=v)
        .map(|a| binomial(v, a) * (v0..=a).map(|b| binomial(a, b)).sum::<u128>())
        .sum();
    // per relay outside U2: V2 is any subset of V1
    let out_u2: u128 = (v0..=v).map(|a| binomial(v, a) << a).sum();
    let u = topo.relays;
    (topo.relay_floor..=u)
        .map(|k| {
            binomial(u, k)
                * (1u128 << (u - k))
                * in_u2.pow(k as u32)
                * out_u2.pow((u - k) as u32)
        })
        .sum()
}

fn masks_with_min(bits: usize, min: usize) -> Vec<u64> {
    (0..=full_mask(bits)).filter(|m| popcount(*m) >= min).collect()
}

fn submasks(of: u64, min: usize) -> Vec<u64> {
    (0..=of).filter(|m| is_subset(*m, of) && popcount(*m) >= min).collect()
}

/// Streams every admissible pattern once, in ascending lexicographic order
/// of `(U1, U2, V1_1, V2_1, V1_2, V2_2, ...)` read as integers.
pub struct PatternIter {
    topo: Topology,
    relay_pairs: Vec<(u64, u64)>,
    pair_idx: usize,
    options: Vec<Vec<(u64, u64)>>,
    digits: Vec<usize>,
    done: bool,
}

impl PatternIter {
    fn new(topo: Topology) -> Self {
        let mut relay_pairs = Vec::new();
        for u1 in masks_with_min(topo.relays, topo.relay_floor) {
            for u2 in submasks(u1, topo.relay_floor) {
                relay_pairs.push((u1, u2));
            }
        }
        let mut it = Self {
            topo,
            relay_pairs,
            pair_idx: 0,
            options: Vec::new(),
            digits: vec![0; topo.relays],
            done: false,
        };
        it.load_pair();
        it
    }

    fn load_pair(&mut self) {
        let Some(&(_, u2)) = self.relay_pairs.get(self.pair_idx) else {
            self.done = true;
            return;
        };
        let v0 = self.topo.user_floor;
        self.options = (0..self.topo.relays)
            .map(|relay| {
                let need = if u2 >> relay & 1 == 1 { v0 } else { 0 };
                masks_with_min(self.topo.users_per_relay, v0)
                    .into_iter()
                    .flat_map(|a| submasks(a, need).into_iter().map(move |b| (a, b)))
                    .collect()
            })
            .collect();
        self.digits.iter_mut().for_each(|d| *d = 0);
    }
}

impl Iterator for PatternIter {
    type Item = DropoutPattern;

    fn next(&mut self) -> Option<DropoutPattern> {
        if self.done {
            return None;
        }
        let (u1, u2) = self.relay_pairs[self.pair_idx];
        let (v1, v2) = self.digits.iter().zip(&self.options).map(|(&d, o)| o[d]).unzip();
        let out = DropoutPattern { u1, u2, v1, v2 };

        // mixed-radix increment, last relay fastest
        let mut i = self.topo.relays;
        loop {
            if i == 0 {
                self.pair_idx += 1;
                self.load_pair();
                break;
            }
            i -= 1;
            self.digits[i] += 1;
            if self.digits[i] < self.options[i].len() {
                break;
            }
            self.digits[i] = 0;
        }
        Some(out)
    }
}

/// All admissible patterns, refusing when there are more than `cap`.
pub fn enumerate(topo: &Topology, cap: u128) -> Result<PatternIter> {
    let n = count(topo);
    if n > cap {
        return Err(Error::EnumerationTooLarge { count: n, cap });
    }
    Ok(PatternIter::new(*topo))
}

/// Draws an admissible pattern: `U1`, then `U2 ⊆ U1`, then nested user sets,
/// rejecting draws that miss a floor. Not uniform over patterns.
pub fn sample(topo: &Topology, seed: u64) -> DropoutPattern {
    let mut rng = stream_rng(seed, PATTERN_STREAM);
    let relays = full_mask(topo.relays);
    let users = full_mask(topo.users_per_relay);
    let u1 = draw(&mut rng, relays, topo.relay_floor);
    let u2 = draw(&mut rng, u1, topo.relay_floor);
    let mut v1 = Vec::with_capacity(topo.relays);
    let mut v2 = Vec::with_capacity(topo.relays);
    for relay in 0..topo.relays {
        let a = draw(&mut rng, users, topo.user_floor);
        let need = if u2 >> relay & 1 == 1 { topo.user_floor } else { 0 };
        v1.push(a);
        v2.push(draw(&mut rng, a, need));
    }
    DropoutPattern { u1, u2, v1, v2 }
}

fn draw(rng: &mut impl Rng, within: u64, min: usize) -> u64 {
    loop {
        let m = rng.gen::<u64>() & within;
        if popcount(m) >= min {
            return m;
        }
    }
}
