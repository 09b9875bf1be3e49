//! One session of the two-round, two-hop protocol.
//!
//! Round 1: user `(u,v)` sends `X1 = W + N` to relay `u`, which forwards the
//! sum over `V1_u`. The server announces `S1`. Round 2: each user in `S1`
//! sends the single symbol `X2 = sum_{(i,j) in S1} [Q_{i,j}]_{u,v}`; relay `u`
//! forwards `V0` of them. Any `U0*V0` such symbols determine
//! `(sum N || sum S)` over `S1`, and the server subtracts `sum N`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::seq::index::sample;

use crate::dropout::{check, DropoutPattern};
use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};
use crate::keys::{stream_rng, uniform_vec, KeyMaterial, UserKey, INPUT_STREAM};
use crate::matrix::{mat_solve, Matrix};
use crate::mds::MdsMatrix;
use crate::params::{SystemParams, Topology, UserId};
use crate::rates::RateTuple;
use crate::text;

const SELECTION_STREAM: u64 = 4;

/// How a relay picks `V0` of its round-2 survivors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SelectionPolicy {
    #[default]
    LowestIndex,
    SeededRandom(u64),
}

impl SelectionPolicy {
    /// `k` of `candidates` (canonically ordered), returned in canonical order.
    pub fn select(&self, relay: usize, candidates: &[UserId], k: usize) -> Vec<UserId> {
        let k = k.min(candidates.len());
        match *self {
            SelectionPolicy::LowestIndex => candidates[..k].to_vec(),
            SelectionPolicy::SeededRandom(seed) => {
                let mut rng = stream_rng(seed ^ (relay as u64).rotate_left(32), SELECTION_STREAM);
                let mut idx = sample(&mut rng, candidates.len(), k).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| candidates[i]).collect()
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "lowest" {
            return Ok(SelectionPolicy::LowestIndex);
        }
        s.strip_prefix("random:")
            .and_then(|v| v.parse().ok())
            .map(SelectionPolicy::SeededRandom)
            .ok_or_else(|| Error::Parse(format!("unknown selection policy `{s}`")))
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionPolicy::LowestIndex => f.write_str("lowest"),
            SelectionPolicy::SeededRandom(s) => write!(f, "random:{s}"),
        }
    }
}

/// `Q_u` for every relay in `U1`: `V0` users of `V2_u` for relays in `U2`,
/// and as many as are available (at most `V0`) for relays that drop out
/// before forwarding.
pub fn selections(
    topo: &Topology,
    pattern: &DropoutPattern,
    policy: SelectionPolicy,
) -> Vec<(usize, Vec<UserId>)> {
    pattern
        .u1_relays()
        .map(|u| {
            let v2: Vec<UserId> = pattern.v2_users(u).collect();
            (u, policy.select(u, &v2, topo.user_floor))
        })
        .collect()
}

/// Independent uniform inputs `W_{u,v}` of length `L`, canonical order.
pub fn sample_inputs(params: &SystemParams, seed: u64) -> Vec<Vec<Fe>> {
    let mut rng = stream_rng(seed, INPUT_STREAM);
    params
        .topology
        .users()
        .map(|_| uniform_vec(&mut rng, &params.field, params.input_len()))
        .collect()
}

/// Plaintext `sum_{users} W`, the reference for correctness.
pub fn plaintext_sum(params: &SystemParams, inputs: &[Vec<Fe>], users: &[UserId]) -> Vec<Fe> {
    let f = params.field;
    users.iter().fold(vec![Fe::ZERO; params.input_len()], |acc, &u| {
        f.add_vec(&acc, &inputs[params.topology.index(u)])
    })
}

pub fn user_round1(field: &PrimeField, w: &[Fe], key: &UserKey) -> Result<Vec<Fe>> {
    if w.len() != key.mask.len() {
        return Err(Error::LengthMismatch { expected: key.mask.len(), got: w.len() });
    }
    Ok(field.add_vec(w, &key.mask))
}

/// Sums the round-1 messages of `v1`; anything else in `messages` is ignored.
pub fn relay_round1(
    field: &PrimeField,
    len: usize,
    messages: &BTreeMap<UserId, Vec<Fe>>,
    v1: &[UserId],
) -> Result<Vec<Fe>> {
    let mut acc = vec![Fe::ZERO; len];
    for u in v1 {
        let m = messages.get(u).ok_or_else(|| Error::MissingMessage(format!("X1 of {u}")))?;
        if m.len() != len {
            return Err(Error::LengthMismatch { expected: len, got: m.len() });
        }
        acc = field.add_vec(&acc, m);
    }
    Ok(acc)
}

/// `S1`: union of the survivor reports of relays in `U1`, canonical order.
pub fn server_signaling<'a>(reports: impl IntoIterator<Item = &'a [UserId]>) -> Vec<UserId> {
    let mut s1: Vec<UserId> = reports.into_iter().flatten().copied().collect();
    s1.sort_unstable();
    s1.dedup();
    s1
}

pub fn user_round2(
    field: &PrimeField,
    topo: &Topology,
    holder: UserId,
    key: &UserKey,
    s1: &[UserId],
) -> Result<Fe> {
    if !s1.contains(&holder) {
        return Err(Error::NotSurviving(holder.to_string()));
    }
    Ok(field.sum(s1.iter().map(|&src| key.projections[topo.index(src)])))
}

/// `(Q_u, Y2_u)`: the selected users and their symbols.
pub fn relay_round2(
    relay: usize,
    x2: &BTreeMap<UserId, Fe>,
    v2: &[UserId],
    need: usize,
    policy: SelectionPolicy,
) -> Result<Vec<(UserId, Fe)>> {
    if v2.len() < need {
        return Err(Error::TooFewSurvivors { relay: relay + 1, have: v2.len(), need });
    }
    policy
        .select(relay, v2, need)
        .into_iter()
        .map(|u| {
            x2.get(&u)
                .map(|&s| (u, s))
                .ok_or_else(|| Error::MissingMessage(format!("X2 of {u}")))
        })
        .collect()
}

/// Recovers `sum_{S1} W` from the round-1 sums of `U1` and the coded
/// symbols forwarded by `U2`, in relay-then-user order.
///
/// The first `U0*V0` symbols are solved for `(sum N || sum S)`; any further
/// symbols must agree with that solution.
pub fn server_decode(mds: &MdsMatrix, y1: &[Vec<Fe>], coded: &[(UserId, Fe)]) -> Result<Vec<Fe>> {
    let f = mds.field();
    let l = mds.params().input_len();
    let k = mds.topology().min_survivors();
    if coded.len() < k {
        return Err(Error::InsufficientSymbols { have: coded.len(), need: k });
    }
    let (head, tail) = coded.split_at(k);
    // column i of A^T is alpha_{holder_i}, so A x = y with A's rows the columns
    let a = Matrix::from_rows(k, head.iter().map(|(u, _)| mds.column(*u)).collect())?;
    let b = Matrix::from_rows(1, head.iter().map(|&(_, s)| vec![s]).collect())?;
    let x = match mat_solve(f, &a, &b) {
        Ok(x) => x.column(0),
        Err(Error::SingularMatrix) => return Err(Error::SingularDecode),
        Err(e) => return Err(e),
    };
    for (u, s) in tail {
        if f.dot(&mds.column(*u), &x) != *s {
            return Err(Error::InconsistentSymbols);
        }
    }
    let total = y1.iter().fold(vec![Fe::ZERO; l], |acc, y| f.add_vec(&acc, y));
    Ok(f.sub_vec(&total, &x[..l]))
}

/// Everything sent in one session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub params: SystemParams,
    pub key_seed: Option<u64>,
    pub input_seed: Option<u64>,
    pub policy: SelectionPolicy,
    pub pattern: DropoutPattern,
    /// `X1` of every user; those outside `V1_u` are sent but not aggregated.
    pub x1: Vec<Vec<Fe>>,
    /// `Y1` of every relay; the server uses those of `U1`.
    pub y1: Vec<Vec<Fe>>,
    pub s1: Vec<UserId>,
    /// `X2` of each user in `S1`.
    pub x2: Vec<(UserId, Fe)>,
    /// `(u, Y2_u)` for each relay in `U1`, with the selected users attached.
    pub y2: Vec<(usize, Vec<(UserId, Fe)>)>,
    pub decoded: Option<Vec<Fe>>,
}

/// Longest message of each family, in symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymbolCounts {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

impl Transcript {
    /// Signaling is not counted; `Y2` only for relays in `U2`.
    pub fn symbol_counts(&self) -> SymbolCounts {
        let p = &self.pattern;
        SymbolCounts {
            x1: self.x1.iter().map(Vec::len).max().unwrap_or(0),
            y1: p.u1_relays().map(|u| self.y1[u].len()).max().unwrap_or(0),
            x2: if self.x2.is_empty() { 0 } else { 1 },
            y2: self
                .y2
                .iter()
                .filter(|(u, _)| p.relay_in_u2(*u))
                .map(|(_, y)| y.len())
                .max()
                .unwrap_or(0),
        }
    }

    pub fn rates(&self) -> RateTuple {
        let c = self.symbol_counts();
        RateTuple::from_counts(c.x1, c.y1, c.x2, c.y2, self.params.input_len())
    }

    pub fn y2_of(&self, relay: usize) -> Option<&[(UserId, Fe)]> {
        self.y2.iter().find(|(u, _)| *u == relay).map(|(_, y)| y.as_slice())
    }

    pub fn to_text(&self) -> String {
        let topo = self.params.topology;
        let opt = |s: Option<u64>| s.map_or("-".to_string(), |v| v.to_string());
        let mut out = String::from("# hsa transcript\n");
        let _ = writeln!(out, "{}", self.params.header());
        let _ = writeln!(
            out,
            "keys={} inputs={} policy={}",
            opt(self.key_seed),
            opt(self.input_seed),
            self.policy
        );
        let _ = writeln!(out, "pattern {}", self.pattern.to_line());
        for (u, x) in topo.users().zip(&self.x1) {
            let _ = writeln!(out, "X1 {u}: {}", text::format_symbols(x));
        }
        for (u, y) in self.y1.iter().enumerate() {
            let _ = writeln!(out, "Y1 {}: {}", u + 1, text::format_symbols(y));
        }
        let _ = writeln!(out, "S1: {}", join_users(&self.s1));
        for (u, x) in &self.x2 {
            let _ = writeln!(out, "X2 {u}: {x}");
        }
        for (u, y) in &self.y2 {
            let body: Vec<String> = y.iter().map(|(v, s)| format!("{v}={s}")).collect();
            let _ = writeln!(out, "Y2 {}: {}", u + 1, body.join(" "));
        }
        match &self.decoded {
            Some(d) => {
                let _ = writeln!(out, "decoded: {}", text::format_symbols(d));
            }
            None => out.push_str("decoded: -\n"),
        }
        out
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut lines = text::content_lines(s).peekable();
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse(format!("transcript ends before {what}")))
        };
        let params = text::parse_params(next("header")?)?;
        let f = params.field;
        let topo = params.topology;
        let meta = text::parse_kv(next("seed line")?)?;
        let seed = |k: &str| -> Result<Option<u64>> {
            match meta.get(k).map(String::as_str) {
                None => Err(Error::Parse(format!("missing `{k}`"))),
                Some("-") => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|_| Error::Parse(format!("bad `{k}`"))),
            }
        };
        let key_seed = seed("keys")?;
        let input_seed = seed("inputs")?;
        let policy = SelectionPolicy::parse(
            meta.get("policy").ok_or_else(|| Error::Parse("missing `policy`".into()))?,
        )?;
        let pattern_line = next("pattern")?;
        let pattern = DropoutPattern::parse_line(
            pattern_line
                .strip_prefix("pattern ")
                .ok_or_else(|| Error::Parse("expected `pattern` line".into()))?,
        )?;
        check(&topo, &pattern)?;

        let mut x1 = Vec::new();
        for u in topo.users() {
            x1.push(text::parse_symbols(&f, tagged(next("X1")?, &format!("X1 {u}:"))?)?);
        }
        let mut y1 = Vec::new();
        for u in 0..topo.relays {
            y1.push(text::parse_symbols(&f, tagged(next("Y1")?, &format!("Y1 {}:", u + 1))?)?);
        }
        let s1 = parse_users(tagged(next("S1")?, "S1:")?)?;
        let mut x2 = Vec::new();
        for &u in &s1 {
            let v = text::parse_symbols(&f, tagged(next("X2")?, &format!("X2 {u}:"))?)?;
            if v.len() != 1 {
                return Err(Error::Parse(format!("X2 of {u} must be one symbol")));
            }
            x2.push((u, v[0]));
        }
        let mut y2 = Vec::new();
        for u in pattern.u1_relays() {
            let body = tagged(next("Y2")?, &format!("Y2 {}:", u + 1))?;
            let mut entries = Vec::new();
            for tok in body.split_whitespace() {
                let (who, sym) = tok
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("bad Y2 entry `{tok}`")))?;
                let sym: u64 = sym.parse().map_err(|_| Error::Parse(format!("bad symbol `{sym}`")))?;
                entries.push((UserId::parse(who)?, f.checked(sym)?));
            }
            y2.push((u, entries));
        }
        let decoded = match tagged(next("decoded")?, "decoded:")? {
            "-" => None,
            d => Some(text::parse_symbols(&f, d)?),
        };
        Ok(Self { params, key_seed, input_seed, policy, pattern, x1, y1, s1, x2, y2, decoded })
    }
}

fn tagged<'a>(line: &'a str, tag: &str) -> Result<&'a str> {
    line.strip_prefix(tag)
        .map(str::trim)
        .ok_or_else(|| Error::Parse(format!("expected `{tag}`, got `{line}`")))
}

fn join_users(users: &[UserId]) -> String {
    users.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_users(s: &str) -> Result<Vec<UserId>> {
    s.split_whitespace().map(UserId::parse).collect()
}

/// Runs every encoder and decoder in protocol order.
pub fn run_session(
    keys: &KeyMaterial,
    inputs: &[Vec<Fe>],
    pattern: &DropoutPattern,
    policy: SelectionPolicy,
) -> Result<Transcript> {
    let params = *keys.params();
    let topo = params.topology;
    let f = params.field;
    check(&topo, pattern)?;
    if inputs.len() != topo.num_users() {
        return Err(Error::LengthMismatch { expected: topo.num_users(), got: inputs.len() });
    }

    // round 1, hop 1: every user transmits
    let mut x1_map = BTreeMap::new();
    let mut x1 = Vec::with_capacity(topo.num_users());
    for u in topo.users() {
        let m = user_round1(&f, &inputs[topo.index(u)], keys.key(u))?;
        x1_map.insert(u, m.clone());
        x1.push(m);
    }
    // round 1, hop 2
    let v1: Vec<Vec<UserId>> = (0..topo.relays).map(|u| pattern.v1_users(u).collect()).collect();
    let y1 = (0..topo.relays)
        .map(|u| relay_round1(&f, params.input_len(), &x1_map, &v1[u]))
        .collect::<Result<Vec<_>>>()?;

    let s1 = server_signaling(pattern.u1_relays().map(|u| v1[u].as_slice()));

    // round 2
    let mut x2_map = BTreeMap::new();
    let mut x2 = Vec::with_capacity(s1.len());
    for &u in &s1 {
        let s = user_round2(&f, &topo, u, keys.key(u), &s1)?;
        x2_map.insert(u, s);
        x2.push((u, s));
    }
    let mut y2 = Vec::new();
    for u in pattern.u1_relays() {
        let v2: Vec<UserId> = pattern.v2_users(u).collect();
        let need = if pattern.relay_in_u2(u) { topo.user_floor } else { topo.user_floor.min(v2.len()) };
        y2.push((u, relay_round2(u, &x2_map, &v2, need, policy)?));
    }

    let y1_used: Vec<Vec<Fe>> = pattern.u1_relays().map(|u| y1[u].clone()).collect();
    let coded: Vec<(UserId, Fe)> = y2
        .iter()
        .filter(|(u, _)| pattern.relay_in_u2(*u))
        .flat_map(|(_, y)| y.iter().copied())
        .collect();
    let decoded = server_decode(keys.mds(), &y1_used, &coded)?;

    Ok(Transcript {
        params,
        key_seed: keys.seed(),
        input_seed: None,
        policy,
        pattern: pattern.clone(),
        x1,
        y1,
        s1,
        x2,
        y2,
        decoded: Some(decoded),
    })
}

/// [`run_session`] with inputs drawn from `input_seed`.
pub fn run_seeded_session(
    keys: &KeyMaterial,
    input_seed: u64,
    pattern: &DropoutPattern,
    policy: SelectionPolicy,
) -> Result<(Vec<Vec<Fe>>, Transcript)> {
    let inputs = sample_inputs(keys.params(), input_seed);
    let mut t = run_session(keys, &inputs, pattern, policy)?;
    t.input_seed = Some(input_seed);
    Ok((inputs, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dropout::{enumerate, DEFAULT_ENUMERATION_CAP};
    use crate::keys::{deal, derive_keys, BaseRandomness};
    use crate::mds::{find_t_private_mds, SearchConfig};
    use crate::params::presets;
    use num_rational::Ratio;

    fn u(a: usize, b: usize) -> UserId {
        UserId::one_based(a, b)
    }

    fn small_keys(seed: u64) -> KeyMaterial {
        let mds = find_t_private_mds(&presets::small(), &SearchConfig::default()).unwrap().mds;
        deal(&mds, seed)
    }

    fn colluding_keys(seed: u64) -> KeyMaterial {
        let mds = find_t_private_mds(&presets::colluding(), &SearchConfig::default()).unwrap().mds;
        deal(&mds, seed)
    }

    #[test]
    fn round1_adds_mask() {
        let km = small_keys(1);
        let f = km.params().field;
        let key = km.key(u(1, 1));
        assert_eq!(user_round1(&f, &[Fe::ZERO, Fe::ZERO], key).unwrap(), key.mask);
        let w = [f.elem(3), f.elem(4)];
        let x = user_round1(&f, &w, key).unwrap();
        assert_eq!(f.sub_vec(&x, &key.mask), w.to_vec());
        assert!(matches!(user_round1(&f, &[Fe::ZERO], key), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn relay_round1_sums_only_survivors() {
        let f = PrimeField::new(23).unwrap();
        let mut msgs = BTreeMap::new();
        msgs.insert(u(2, 1), vec![f.elem(1), f.elem(2)]);
        msgs.insert(u(2, 2), vec![f.elem(10), f.elem(20)]);
        msgs.insert(u(2, 3), vec![f.elem(5), f.elem(5)]);
        assert_eq!(relay_round1(&f, 2, &msgs, &[u(2, 1)]).unwrap(), msgs[&u(2, 1)]);
        let y = relay_round1(&f, 2, &msgs, &[u(2, 1), u(2, 3)]).unwrap();
        assert_eq!(y, vec![f.elem(6), f.elem(7)]);
        assert!(matches!(
            relay_round1(&f, 2, &msgs, &[u(1, 1)]),
            Err(Error::MissingMessage(_))
        ));
    }

    #[test]
    fn signaling_union() {
        let a = [u(1, 1)];
        let b = [u(2, 2), u(2, 1)];
        assert_eq!(server_signaling([&a[..]]), vec![u(1, 1)]);
        assert_eq!(server_signaling([&a[..], &b[..]]), vec![u(1, 1), u(2, 1), u(2, 2)]);
    }

    #[test]
    fn round2_singleton_and_not_surviving() {
        let km = colluding_keys(2);
        let params = *km.params();
        let me = u(2, 3);
        let x = user_round2(&params.field, &params.topology, me, km.key(me), &[me]).unwrap();
        assert_eq!(x, km.projection(me, me));
        assert!(matches!(
            user_round2(&params.field, &params.topology, me, km.key(me), &[u(1, 1)]),
            Err(Error::NotSurviving(_))
        ));
    }

    #[test]
    fn round2_is_projection_of_aggregate() {
        let km = colluding_keys(3);
        let f = km.params().field;
        let topo = km.params().topology;
        let s1 = vec![u(1, 1), u(1, 2), u(2, 1), u(3, 3)];
        let agg = s1.iter().fold(vec![Fe::ZERO; 4], |acc, &s| f.add_vec(&acc, &km.base().stacked(s)));
        for holder in &s1 {
            let x = user_round2(&f, &topo, *holder, km.key(*holder), &s1).unwrap();
            assert_eq!(x, f.dot(&agg, &km.mds().column(*holder)));
        }
    }

    #[test]
    fn relay_round2_selection() {
        let f = PrimeField::new(23).unwrap();
        let mut x2 = BTreeMap::new();
        for (i, who) in [u(2, 1), u(2, 2), u(2, 3)].into_iter().enumerate() {
            x2.insert(who, f.elem(i as u64 + 7));
        }
        let v2 = [u(2, 1), u(2, 2), u(2, 3)];
        let y = relay_round2(1, &x2, &v2, 2, SelectionPolicy::LowestIndex).unwrap();
        assert_eq!(y, vec![(u(2, 1), f.elem(7)), (u(2, 2), f.elem(8))]);
        let forced = relay_round2(1, &x2, &v2[1..], 2, SelectionPolicy::LowestIndex).unwrap();
        assert_eq!(forced.iter().map(|p| p.0).collect::<Vec<_>>(), v2[1..].to_vec());
        assert!(matches!(
            relay_round2(1, &x2, &v2[..1], 2, SelectionPolicy::LowestIndex),
            Err(Error::TooFewSurvivors { relay: 2, have: 1, need: 2 })
        ));
    }

    #[test]
    fn seeded_policy_selects_subsets() {
        let v2 = [u(1, 1), u(1, 2), u(1, 3), u(1, 4)];
        for seed in 0..1000 {
            let p = SelectionPolicy::SeededRandom(seed);
            let q = p.select(0, &v2, 2);
            assert_eq!(q.len(), 2);
            assert!(q.iter().all(|x| v2.contains(x)));
            assert!(q[0] < q[1]);
            assert_eq!(q, p.select(0, &v2, 2));
        }
        assert_eq!(SelectionPolicy::parse("random:9").unwrap(), SelectionPolicy::SeededRandom(9));
        assert_eq!(SelectionPolicy::SeededRandom(9).to_string(), "random:9");
    }

    #[test]
    fn zero_inputs_decode_to_zero() {
        let km = small_keys(4);
        let t = presets::small();
        let zeros = vec![vec![Fe::ZERO; 2]; 4];
        let tr = run_session(&km, &zeros, &DropoutPattern::full(&t), SelectionPolicy::LowestIndex)
            .unwrap();
        assert_eq!(tr.decoded, Some(vec![Fe::ZERO; 2]));
    }

    /// The first worked example with its matrix `alpha = [[1,1,1,1],[1,2,3,4]]`
    /// over F_5 and hand-computed masks.
    #[test]
    fn worked_example_small() {
        let t = presets::small();
        let params = SystemParams::new(t, 5).unwrap();
        let f = params.field;
        let alpha = Matrix::from_u64_rows(&f, &[&[1, 1, 1, 1], &[1, 2, 3, 4]]);
        let mds = MdsMatrix::certify(params, alpha, 1000).unwrap();
        let mut base = BaseRandomness::zeros(params);
        let n = [[1u64, 2], [3, 4], [0, 1], [2, 2]];
        for (i, v) in n.iter().enumerate() {
            base.n[i] = v.iter().map(|&x| f.elem(x)).collect();
        }
        let km = derive_keys(base, &mds).unwrap();
        // X2_{1,1} with S1 = {(1,1),(2,2)} is N11(1)+N11(2)+N22(1)+N22(2)
        let s1 = [u(1, 1), u(2, 2)];
        let x = user_round2(&f, &t, u(1, 1), km.key(u(1, 1)), &s1).unwrap();
        assert_eq!(x, f.elem(1 + 2 + 2 + 2));

        let w: Vec<Vec<Fe>> = [[4u64, 0], [1, 1], [2, 3], [0, 4]]
            .iter()
            .map(|r| r.iter().map(|&x| f.elem(x)).collect())
            .collect();
        let tr = run_session(&km, &w, &DropoutPattern::full(&t), SelectionPolicy::LowestIndex)
            .unwrap();
        // Y1_1 = W11 + W12 + N11 + N12
        assert_eq!(tr.y1[0], vec![f.elem(4 + 1 + 1 + 3), f.elem(0 + 1 + 2 + 4)]);
        // relay 1 forwards X2_{1,1}, relay 2 forwards X2_{2,1}
        let y2: Vec<UserId> = tr.y2.iter().flat_map(|(_, y)| y.iter().map(|p| p.0)).collect();
        assert_eq!(y2, vec![u(1, 1), u(2, 1)]);
        let all: Vec<UserId> = t.users().collect();
        assert_eq!(tr.decoded, Some(plaintext_sum(&params, &w, &all)));

        // S1 = {(1,1),(2,1)}: the server recovers N11 + N21 and then W11 + W21
        let p = DropoutPattern::from_sets(&t, &[1, 2], &[1, 2], &[u(1, 1), u(2, 1)], &[u(1, 1), u(2, 1)]);
        let tr = run_session(&km, &w, &p, SelectionPolicy::LowestIndex).unwrap();
        assert_eq!(tr.s1, vec![u(1, 1), u(2, 1)]);
        assert_eq!(tr.decoded, Some(f.add_vec(&w[0], &w[2])));
    }

    #[test]
    fn worked_example_colluding() {
        let km = colluding_keys(11);
        let params = *km.params();
        let f = params.field;
        let t = params.topology;
        let w = sample_inputs(&params, 5);
        let p = DropoutPattern::from_sets(
            &t,
            &[1, 2, 3],
            &[1, 2],
            &[u(1, 1), u(1, 2), u(2, 1), u(2, 2), u(2, 3), u(3, 1), u(3, 3)],
            &[u(1, 1), u(1, 2), u(2, 1), u(2, 2), u(2, 3), u(3, 1)],
        );
        let tr = run_session(&km, &w, &p, SelectionPolicy::LowestIndex).unwrap();
        // Y1_2 = W21 + W22 + W23 + N21 + N22 + N23
        let want = (3..6).fold(vec![Fe::ZERO; 2], |acc, i| {
            f.add_vec(&f.add_vec(&acc, &w[i]), &km.base().n[i])
        });
        assert_eq!(tr.y1[1], want);
        // Q_2 = {(2,1),(2,2)}
        let q2: Vec<UserId> = tr.y2_of(1).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(q2, vec![u(2, 1), u(2, 2)]);
        assert_eq!(tr.decoded, Some(plaintext_sum(&params, &w, &tr.s1)));
        assert_eq!(tr.rates(), RateTuple::new(Ratio::new(1, 1), Ratio::new(1, 1), Ratio::new(1, 2), Ratio::new(1, 1)));
    }

    #[test]
    fn exhaustive_correctness_small() {
        let km = small_keys(6);
        let params = *km.params();
        for (i, p) in enumerate(&params.topology, DEFAULT_ENUMERATION_CAP).unwrap().enumerate() {
            for k in 0..20u64 {
                let (w, tr) = run_seeded_session(&km, i as u64 * 1000 + k, &p, SelectionPolicy::LowestIndex).unwrap();
                assert_eq!(tr.decoded, Some(plaintext_sum(&params, &w, &p.s1())), "{p}");
            }
        }
    }

    #[test]
    fn linearity_and_input_independence() {
        let km = colluding_keys(8);
        let params = *km.params();
        let f = params.field;
        let p = crate::dropout::sample(&params.topology, 3);
        let a = sample_inputs(&params, 1);
        let b = sample_inputs(&params, 2);
        let ab: Vec<Vec<Fe>> = a.iter().zip(&b).map(|(x, y)| f.add_vec(x, y)).collect();
        let pol = SelectionPolicy::LowestIndex;
        let ta = run_session(&km, &a, &p, pol).unwrap();
        let tb = run_session(&km, &b, &p, pol).unwrap();
        let tab = run_session(&km, &ab, &p, pol).unwrap();
        let zero = vec![vec![Fe::ZERO; 2]; 9];
        let t0 = run_session(&km, &zero, &p, pol).unwrap();
        // X1(a) + X1(b) = X1(a+b) + X1(0): the mask appears once on each side
        for i in 0..9 {
            assert_eq!(
                f.add_vec(&ta.x1[i], &tb.x1[i]),
                f.add_vec(&tab.x1[i], &t0.x1[i])
            );
        }
        for r in 0..3 {
            assert_eq!(f.add_vec(&ta.y1[r], &tb.y1[r]), f.add_vec(&tab.y1[r], &t0.y1[r]));
        }
        assert_eq!(ta.x2, tb.x2);
        assert_eq!(ta.y2, tb.y2);
    }

    #[test]
    fn deterministic_and_round_trips() {
        let km = colluding_keys(9);
        let p = crate::dropout::sample(&km.params().topology, 12);
        let pol = SelectionPolicy::SeededRandom(4);
        let (_, a) = run_seeded_session(&km, 77, &p, pol).unwrap();
        let (_, b) = run_seeded_session(&km, 77, &p, pol).unwrap();
        assert_eq!(a, b);
        let text = a.to_text();
        assert_eq!(Transcript::from_text(&text).unwrap(), a);
        assert!(Transcript::from_text(&text.replace("S1:", "S2:")).is_err());
    }

    #[test]
    fn decoder_errors() {
        let km = colluding_keys(10);
        let mds = km.mds();
        let f = *mds.field();
        let y1 = vec![vec![Fe::ZERO; 2]];
        let coded = vec![(u(1, 1), Fe::ZERO); 3];
        assert!(matches!(
            server_decode(mds, &y1, &coded),
            Err(Error::InsufficientSymbols { have: 3, need: 4 })
        ));
        let dup = vec![(u(1, 1), Fe::ZERO); 4];
        assert_eq!(server_decode(mds, &y1, &dup), Err(Error::SingularDecode));
        let five: Vec<(UserId, Fe)> =
            [u(1, 1), u(1, 2), u(2, 1), u(2, 2), u(3, 1)].iter().map(|&x| (x, Fe::ZERO)).collect();
        assert!(server_decode(mds, &y1, &five).is_ok());
        let mut bad = five.clone();
        bad[4].1 = f.elem(1);
        assert_eq!(server_decode(mds, &y1, &bad), Err(Error::InconsistentSymbols));
    }
}
