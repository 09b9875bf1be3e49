//! Exact information-theoretic checks by rank arithmetic.
//!
//! Every protocol symbol is a linear functional of the stacked secret
//! `(W ‖ N ‖ S)`, which is uniform, so the entropy of a set of symbols in
//! q-ary units is the rank of their coefficient rows and
//! `I(A; B | C) = rk[A;C] + rk[B;C] - rk[A;B;C] - rk[C]`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};

use itertools::Itertools;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::dropout::DropoutPattern;
use crate::field::{Fe, PrimeField};
use crate::keys::{stream_rng, AuditReport, BaseRandomness};
use crate::matrix::{Matrix, RowBasis};
use crate::mds::{binomial, MdsMatrix};
use crate::params::{Topology, UserId};
use crate::protocol::{selections, SelectionPolicy, Transcript};

/// Default ceiling on the number of colluding sets checked exhaustively.
pub const DEFAULT_COLLUDER_CAP: u128 = 100_000;

const COLLUDER_STREAM: u64 = 5;

/// Column layout of the stacked secret: the `W` block, then (when masks are
/// present) the `N` block and the `S` block, each user-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SecretLayout {
    topo: Topology,
    l: usize,
    t: usize,
    masks: bool,
}

impl SecretLayout {
    /// `UV*L + UV*L + UV*T` columns.
    pub fn scheme(topo: &Topology) -> Self {
        Self { topo: *topo, l: topo.input_len(), t: topo.collusion, masks: true }
    }

    /// Inputs of length `l` only, no key material.
    pub fn inputs_only(topo: &Topology, l: usize) -> Self {
        Self { topo: *topo, l, t: 0, masks: false }
    }

    pub fn width(&self) -> usize {
        let n = self.topo.num_users();
        if self.masks {
            n * (2 * self.l + self.t)
        } else {
            n * self.l
        }
    }

    pub fn input_len(&self) -> usize {
        self.l
    }

    pub fn w_col(&self, user: UserId, k: usize) -> usize {
        self.topo.index(user) * self.l + k
    }

    pub fn n_col(&self, user: UserId, k: usize) -> usize {
        assert!(self.masks, "layout has no mask block");
        self.topo.num_users() * self.l + self.topo.index(user) * self.l + k
    }

    pub fn s_col(&self, user: UserId, k: usize) -> usize {
        assert!(self.masks, "layout has no mask block");
        2 * self.topo.num_users() * self.l + self.topo.index(user) * self.t + k
    }

    fn unit(&self, col: usize) -> Vec<Fe> {
        let mut r = vec![Fe::ZERO; self.width()];
        r[col] = Fe::ONE;
        r
    }

    /// Rows selecting every symbol of `W` for `users`.
    pub fn input_view(&self, users: impl IntoIterator<Item = UserId>) -> LinearView {
        let mut v = LinearView::empty(self.width());
        for u in users {
            for k in 0..self.l {
                v.push(self.unit(self.w_col(u, k)), format!("W{u}[{}]", k + 1));
            }
        }
        v
    }

    /// Rows selecting `N` for `users`.
    pub fn mask_view(&self, users: impl IntoIterator<Item = UserId>) -> LinearView {
        let mut v = LinearView::empty(self.width());
        for u in users {
            for k in 0..self.l {
                v.push(self.unit(self.n_col(u, k)), format!("N{u}[{}]", k + 1));
            }
        }
        v
    }

    /// `[Q_{source}]_{holder} = (N_source ‖ S_source) . alpha_holder`.
    pub fn projection_row(&self, mds: &MdsMatrix, source: UserId, holder: UserId) -> Vec<Fe> {
        let mut r = vec![Fe::ZERO; self.width()];
        self.add_projection(&mut r, mds, source, holder);
        r
    }

    fn add_projection(&self, row: &mut [Fe], mds: &MdsMatrix, source: UserId, holder: UserId) {
        let col = mds.column(holder);
        for k in 0..self.l {
            row[self.n_col(source, k)] = col[k];
        }
        for k in 0..self.t {
            row[self.s_col(source, k)] = col[self.l + k];
        }
    }

    /// `Z_{u,v}`: its mask and one projection per source.
    pub fn key_view(&self, mds: &MdsMatrix, user: UserId) -> LinearView {
        let mut v = self.mask_view([user]);
        for src in self.topo.users() {
            v.push(self.projection_row(mds, src, user), format!("Q{src}@{user}"));
        }
        v
    }

    /// `X1_{u,v}`, or `W_{u,v}` alone when `masked` is false.
    pub fn x1_view(&self, user: UserId, masked: bool) -> LinearView {
        let mut v = LinearView::empty(self.width());
        for k in 0..self.l {
            let mut r = self.unit(self.w_col(user, k));
            if masked {
                r[self.n_col(user, k)] = Fe::ONE;
            }
            v.push(r, format!("X1{user}[{}]", k + 1));
        }
        v
    }

    /// `Y1_u` over `members`.
    pub fn y1_view(&self, relay: usize, members: &[UserId], masked: bool) -> LinearView {
        let mut v = LinearView::empty(self.width());
        for k in 0..self.l {
            let mut r = vec![Fe::ZERO; self.width()];
            for &m in members {
                r[self.w_col(m, k)] = Fe::ONE;
                if masked {
                    r[self.n_col(m, k)] = Fe::ONE;
                }
            }
            v.push(r, format!("Y1({})[{}]", relay + 1, k + 1));
        }
        v
    }

    /// `X2_{holder} = sum_{(i,j) in S1} [Q_{i,j}]_{holder}`.
    pub fn x2_row(&self, mds: &MdsMatrix, holder: UserId, s1: &[UserId]) -> Vec<Fe> {
        let mut r = vec![Fe::ZERO; self.width()];
        for &src in s1 {
            self.add_projection(&mut r, mds, src, holder);
        }
        r
    }

    /// `sum_{users} W`, `L` rows.
    pub fn sum_view(&self, users: &[UserId]) -> LinearView {
        let mut v = LinearView::empty(self.width());
        for k in 0..self.l {
            let mut r = vec![Fe::ZERO; self.width()];
            for &u in users {
                r[self.w_col(u, k)] = Fe::ONE;
            }
            v.push(r, format!("sumW[{}]", k + 1));
        }
        v
    }

    /// `W` and `Z` of each colluder.
    pub fn colluder_view(&self, mds: Option<&MdsMatrix>, colluders: &[UserId]) -> LinearView {
        let mut v = self.input_view(colluders.iter().copied());
        if let Some(mds) = mds {
            for &c in colluders {
                v.extend(&self.key_view(mds, c));
            }
        }
        v
    }

    /// Concrete stacked secret from inputs and base randomness.
    pub fn secret_vector(&self, inputs: &[Vec<Fe>], base: &BaseRandomness) -> Vec<Fe> {
        let mut x = vec![Fe::ZERO; self.width()];
        for u in self.topo.users() {
            let i = self.topo.index(u);
            for k in 0..self.l {
                x[self.w_col(u, k)] = inputs[i][k];
            }
            if self.masks {
                for k in 0..self.l {
                    x[self.n_col(u, k)] = base.n[i][k];
                }
                for k in 0..self.t {
                    x[self.s_col(u, k)] = base.s[i][k];
                }
            }
        }
        x
    }
}

/// Rows of linear functionals of the stacked secret, with provenance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearView {
    pub matrix: Matrix,
    pub labels: Vec<String>,
}

impl LinearView {
    pub fn empty(cols: usize) -> Self {
        Self { matrix: Matrix::zeros(0, cols), labels: Vec::new() }
    }

    pub fn from_matrix(matrix: Matrix) -> Self {
        let labels = (0..matrix.rows()).map(|i| format!("r{i}")).collect();
        Self { matrix, labels }
    }

    pub fn push(&mut self, row: Vec<Fe>, label: impl Into<String>) {
        self.matrix.push_row(&row);
        self.labels.push(label.into());
    }

    pub fn extend(&mut self, other: &LinearView) {
        for (r, l) in other.matrix.row_iter().zip(&other.labels) {
            self.matrix.push_row(r);
            self.labels.push(l.clone());
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rank(&self, field: &PrimeField) -> usize {
        self.matrix.rank(field)
    }

    /// Evaluates every row on a concrete secret.
    pub fn evaluate(&self, field: &PrimeField, secret: &[Fe]) -> Vec<Fe> {
        self.matrix.row_iter().map(|r| field.dot(r, secret)).collect()
    }
}

/// `I(A; B | C)` in q-ary units.
pub fn cond_mi(field: &PrimeField, a: &LinearView, b: &LinearView, c: &LinearView) -> usize {
    assert!(
        a.cols() == c.cols() && b.cols() == c.cols(),
        "views over different secret layouts"
    );
    let mut basis_c = RowBasis::new(c.cols());
    basis_c.extend(field, c.matrix.row_iter());
    let rc = basis_c.rank();
    let mut basis_ac = basis_c.clone();
    basis_ac.extend(field, a.matrix.row_iter());
    let mut basis_bc = basis_c;
    basis_bc.extend(field, b.matrix.row_iter());
    let rbc = basis_bc.rank();
    let rac = basis_ac.rank();
    basis_ac.extend(field, b.matrix.row_iter());
    rac + rbc - basis_ac.rank() - rc
}

/// Colluding sets of sizes `min..=max`: all of them when there are at most
/// `cap`, otherwise `cap` seeded draws (deduplicated).
#[derive(Clone, Debug)]
pub struct ColluderSets {
    pub sets: Vec<Vec<UserId>>,
    pub exhaustive: bool,
    /// Number of sets in the full family.
    pub population: u128,
}

impl ColluderSets {
    pub fn new(topo: &Topology, min: usize, max: usize, cap: u128, seed: u64) -> Self {
        let n = topo.num_users();
        let max = max.min(n);
        let population: u128 = (min..=max).map(|k| binomial(n, k)).sum();
        let users: Vec<UserId> = topo.users().collect();
        if population <= cap {
            let sets = (min..=max)
                .flat_map(|k| users.iter().copied().combinations(k))
                .collect();
            return Self { sets, exhaustive: true, population };
        }
        let mut rng = stream_rng(seed, COLLUDER_STREAM);
        let mut seen = BTreeSet::new();
        let mut sets = Vec::new();
        for _ in 0..cap {
            // size weighted by family size, then a uniform set of that size
            let mut r = rng.gen_range(0..population);
            let mut k = min;
            while r >= binomial(n, k) {
                r -= binomial(n, k);
                k += 1;
            }
            let mut idx = sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            let set: Vec<UserId> = idx.into_iter().map(|i| users[i]).collect();
            if seen.insert(set.clone()) {
                sets.push(set);
            }
        }
        Self { sets, exhaustive: false, population }
    }
}

/// Knobs for view construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewOptions {
    /// Users add `N` in round 1; turning this off is a negative control.
    pub masked: bool,
    /// Also give the relay the round-2 messages its colluders sent. They are
    /// functions of `Z` and `S1`, so this cannot change the result; it
    /// exists to demonstrate that.
    pub colluder_round2: bool,
}

impl Default for ViewOptions {
    fn default() -> Self {
        Self { masked: true, colluder_round2: false }
    }
}

/// An adversary's observations, what it conditions on, and the secrets.
#[derive(Clone, Debug)]
pub struct Views {
    pub observed: LinearView,
    pub conditioning: LinearView,
    pub secrets: LinearView,
}

impl Views {
    pub fn leakage(&self, field: &PrimeField) -> usize {
        cond_mi(field, &self.observed, &self.secrets, &self.conditioning)
    }
}

/// Relay `relay`'s view: `X1` of its whole cluster (delayed availability)
/// and `X2` of `V1_u ∩ S1`.
pub fn view_relay(
    mds: &MdsMatrix,
    pattern: &DropoutPattern,
    relay: usize,
    colluders: &[UserId],
    opts: ViewOptions,
) -> Views {
    let topo = mds.topology();
    let layout = SecretLayout::scheme(topo);
    let s1 = pattern.s1();
    let mut observed = LinearView::empty(layout.width());
    for m in topo.cluster(relay) {
        observed.extend(&layout.x1_view(m, opts.masked));
    }
    for m in pattern.v1_users(relay).filter(|m| pattern.in_s1(*m)) {
        observed.push(layout.x2_row(mds, m, &s1), format!("X2{m}"));
    }
    if opts.colluder_round2 {
        for &c in colluders.iter().filter(|c| pattern.in_s1(**c)) {
            observed.push(layout.x2_row(mds, c, &s1), format!("X2{c}"));
        }
    }
    Views {
        observed,
        conditioning: layout.colluder_view(Some(mds), colluders),
        secrets: layout.input_view(topo.users()),
    }
}

/// The server's view: `Y1` of every relay and `Y2` of every relay in `U1`.
/// It may learn `sum_{S1} W`, so that sum joins the conditioning.
pub fn view_server(
    mds: &MdsMatrix,
    pattern: &DropoutPattern,
    colluders: &[UserId],
    policy: SelectionPolicy,
    opts: ViewOptions,
) -> Views {
    let topo = mds.topology();
    let layout = SecretLayout::scheme(topo);
    let s1 = pattern.s1();
    let mut observed = LinearView::empty(layout.width());
    for u in 0..topo.relays {
        let members: Vec<UserId> = pattern.v1_users(u).collect();
        observed.extend(&layout.y1_view(u, &members, opts.masked));
    }
    for (u, q) in selections(topo, pattern, policy) {
        for m in q {
            observed.push(layout.x2_row(mds, m, &s1), format!("Y2({})<-{m}", u + 1));
        }
    }
    let mut conditioning = layout.sum_view(&s1);
    conditioning.extend(&layout.colluder_view(Some(mds), colluders));
    Views { observed, conditioning, secrets: layout.input_view(topo.users()) }
}

pub fn check_relay_security(
    mds: &MdsMatrix,
    pattern: &DropoutPattern,
    relay: usize,
    colluders: &[UserId],
    opts: ViewOptions,
) -> usize {
    view_relay(mds, pattern, relay, colluders, opts).leakage(mds.field())
}

pub fn check_server_security(
    mds: &MdsMatrix,
    pattern: &DropoutPattern,
    colluders: &[UserId],
    policy: SelectionPolicy,
    opts: ViewOptions,
) -> usize {
    view_server(mds, pattern, colluders, policy, opts).leakage(mds.field())
}

/// Checks the server's view rows against a transcript produced from the
/// same keys and `inputs`.
pub fn replay_server(
    mds: &MdsMatrix,
    transcript: &Transcript,
    inputs: &[Vec<Fe>],
    base: &BaseRandomness,
) -> bool {
    let layout = SecretLayout::scheme(mds.topology());
    let secret = layout.secret_vector(inputs, base);
    let views = view_server(mds, &transcript.pattern, &[], transcript.policy, ViewOptions::default());
    let got = views.observed.evaluate(mds.field(), &secret);
    let mut want: Vec<Fe> = transcript.y1.iter().flatten().copied().collect();
    for (_, y) in &transcript.y2 {
        want.extend(y.iter().map(|p| p.1));
    }
    got == want
}

/// Checks relay `relay`'s view rows against a transcript.
pub fn replay_relay(
    mds: &MdsMatrix,
    transcript: &Transcript,
    relay: usize,
    inputs: &[Vec<Fe>],
    base: &BaseRandomness,
) -> bool {
    let topo = mds.topology();
    let layout = SecretLayout::scheme(topo);
    let secret = layout.secret_vector(inputs, base);
    let p = &transcript.pattern;
    let views = view_relay(mds, p, relay, &[], ViewOptions::default());
    let got = views.observed.evaluate(mds.field(), &secret);
    let mut want: Vec<Fe> = topo
        .cluster(relay)
        .flat_map(|m| transcript.x1[topo.index(m)].iter().copied())
        .collect();
    for (m, x) in &transcript.x2 {
        if m.relay == relay && p.in_s1(*m) && p.v1[relay] >> m.slot & 1 == 1 {
            want.push(*x);
        }
    }
    got == want
}

/// One index choice `U1 < U2 < U3 <= U`, `V1 <= V2 <= V3 <= V`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lemma2Case {
    pub u: [usize; 3],
    pub v: [usize; 3],
}

impl fmt::Display for Lemma2Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "U{}-{}-{}/V{}-{}-{}",
            self.u[0], self.u[1], self.u[2], self.v[0], self.v[1], self.v[2]
        )
    }
}

pub fn lemma2_cases(topo: &Topology) -> Vec<Lemma2Case> {
    let mut out = Vec::new();
    for u in (0..=topo.relays).combinations(3) {
        for v in (0..=topo.users_per_relay).combinations_with_replacement(3) {
            out.push(Lemma2Case { u: [u[0], u[1], u[2]], v: [v[0], v[1], v[2]] });
        }
    }
    out
}

fn block(topo: &Topology, relays: usize, slots: usize) -> Vec<UserId> {
    topo.users().filter(|u| u.relay < relays && u.slot < slots).collect()
}

/// `(A, B)` with `A = sum over [U2]x[V2]` and
/// `B = (sum over [U3]x[V3], {W, Z} over [U1]x[V1])`. Key rows are included
/// only when `mds` is given.
pub fn lemma2_views(
    layout: &SecretLayout,
    topo: &Topology,
    mds: Option<&MdsMatrix>,
    case: Lemma2Case,
) -> (LinearView, LinearView) {
    let a = layout.sum_view(&block(topo, case.u[1], case.v[1]));
    let mut b = layout.sum_view(&block(topo, case.u[2], case.v[2]));
    b.extend(&layout.colluder_view(mds, &block(topo, case.u[0], case.v[0])));
    (a, b)
}

#[derive(Clone, Debug)]
pub struct Lemma2Report {
    pub entries: Vec<(Lemma2Case, usize)>,
}

impl Lemma2Report {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.1 == 0)
    }
}

/// The independence identity for every index choice, with key material.
pub fn check_lemma2(mds: &MdsMatrix) -> Lemma2Report {
    let topo = mds.topology();
    let layout = SecretLayout::scheme(topo);
    run_lemma2(&layout, topo, Some(mds), mds.field())
}

/// The same identity over inputs alone, with inputs of length `l`.
pub fn check_lemma2_inputs(topo: &Topology, field: &PrimeField, l: usize) -> Lemma2Report {
    run_lemma2(&SecretLayout::inputs_only(topo, l), topo, None, field)
}

fn run_lemma2(
    layout: &SecretLayout,
    topo: &Topology,
    mds: Option<&MdsMatrix>,
    field: &PrimeField,
) -> Lemma2Report {
    let empty = LinearView::empty(layout.width());
    let entries = lemma2_cases(topo)
        .into_iter()
        .map(|c| {
            let (a, b) = lemma2_views(layout, topo, mds, c);
            (c, cond_mi(field, &a, &b, &empty))
        })
        .collect();
    Lemma2Report { entries }
}

/// Check family in a security report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Relay,
    Server,
    TPrivacy,
    Lemma2,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckKind::Relay => "relay",
            CheckKind::Server => "server",
            CheckKind::TPrivacy => "tprivacy",
            CheckKind::Lemma2 => "lemma2",
        })
    }
}

/// One line of a security report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecurityRecord {
    pub kind: CheckKind,
    pub pattern: String,
    pub relay: Option<usize>,
    pub colluders: Vec<UserId>,
    pub mi: usize,
}

impl SecurityRecord {
    pub fn pass(&self) -> bool {
        self.mi == 0
    }
}

pub fn format_colluders(c: &[UserId]) -> String {
    if c.is_empty() {
        "-".into()
    } else {
        c.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl fmt::Display for SecurityRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kind={} pattern={} relay={} colluders={} mi={} pass={}",
            self.kind,
            self.pattern,
            self.relay.map_or("-".to_string(), |u| (u + 1).to_string()),
            format_colluders(&self.colluders),
            self.mi,
            self.pass()
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SweepConfig {
    pub colluder_cap: u128,
    pub seed: u64,
    pub policy: SelectionPolicy,
    pub opts: ViewOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            colluder_cap: DEFAULT_COLLUDER_CAP,
            seed: 0,
            policy: SelectionPolicy::LowestIndex,
            opts: ViewOptions::default(),
        }
    }
}

/// Relay and server checks over a list of patterns and every colluding set
/// of size `0..=T`.
///
/// Leakage depends on the pattern only through the adversary's view, so
/// each distinct view is evaluated once per colluding set.
#[derive(Clone, Debug)]
pub struct SecuritySweep {
    pub colluders: ColluderSets,
    pub pattern_ids: Vec<u64>,
    pub patterns: Vec<DropoutPattern>,
    relays: usize,
    relay_keys: Vec<Vec<usize>>,
    server_keys: Vec<usize>,
    relay_table: Vec<Vec<u32>>,
    server_table: Vec<Vec<u32>>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct RelayKey {
    relay: usize,
    v1: u64,
    s1: Vec<UserId>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct ServerKey {
    v1: Vec<u64>,
    s1: Vec<UserId>,
    q: Vec<Vec<UserId>>,
}

fn intern<K: Clone + Eq + std::hash::Hash>(
    map: &mut HashMap<K, usize>,
    list: &mut Vec<K>,
    k: K,
) -> usize {
    *map.entry(k.clone()).or_insert_with(|| {
        list.push(k);
        list.len() - 1
    })
}

pub fn sweep(mds: &MdsMatrix, patterns: Vec<(u64, DropoutPattern)>, cfg: &SweepConfig) -> SecuritySweep {
    let topo = *mds.topology();
    let field = *mds.field();
    let colluders = ColluderSets::new(&topo, 0, topo.collusion, cfg.colluder_cap, cfg.seed);

    let mut relay_map = HashMap::new();
    let mut relay_list: Vec<RelayKey> = Vec::new();
    let mut server_map = HashMap::new();
    let mut server_list: Vec<ServerKey> = Vec::new();
    let mut relay_keys = Vec::with_capacity(patterns.len());
    let mut server_keys = Vec::with_capacity(patterns.len());
    let mut representatives_r = Vec::new();
    let mut representatives_s = Vec::new();
    for (_, p) in &patterns {
        let s1 = p.s1();
        let ks = (0..topo.relays)
            .map(|u| {
                let k = RelayKey { relay: u, v1: p.v1[u], s1: s1.clone() };
                let before = relay_list.len();
                let i = intern(&mut relay_map, &mut relay_list, k);
                if relay_list.len() > before {
                    representatives_r.push((p.clone(), u));
                }
                i
            })
            .collect();
        relay_keys.push(ks);
        let q = selections(&topo, p, cfg.policy).into_iter().map(|(_, q)| q).collect();
        let before = server_list.len();
        let sk = intern(&mut server_map, &mut server_list, ServerKey { v1: p.v1.clone(), s1, q });
        if server_list.len() > before {
            representatives_s.push(p.clone());
        }
        server_keys.push(sk);
    }

    let sets = &colluders.sets;
    let relay_table: Vec<Vec<u32>> = representatives_r
        .par_iter()
        .map(|(p, u)| {
            sets.iter()
                .map(|c| view_relay(mds, p, *u, c, cfg.opts).leakage(&field) as u32)
                .collect()
        })
        .collect();
    let server_table: Vec<Vec<u32>> = representatives_s
        .par_iter()
        .map(|p| {
            sets.iter()
                .map(|c| view_server(mds, p, c, cfg.policy, cfg.opts).leakage(&field) as u32)
                .collect()
        })
        .collect();

    let (pattern_ids, patterns) = patterns.into_iter().unzip();
    SecuritySweep {
        colluders,
        pattern_ids,
        patterns,
        relays: topo.relays,
        relay_keys,
        server_keys,
        relay_table,
        server_table,
    }
}

impl SecuritySweep {
    pub fn relay_mi(&self, pattern: usize, relay: usize, set: usize) -> usize {
        self.relay_table[self.relay_keys[pattern][relay]][set] as usize
    }

    pub fn server_mi(&self, pattern: usize, set: usize) -> usize {
        self.server_table[self.server_keys[pattern]][set] as usize
    }

    pub fn relay_checks(&self) -> usize {
        self.patterns.len() * self.relays * self.colluders.sets.len()
    }

    pub fn server_checks(&self) -> usize {
        self.patterns.len() * self.colluders.sets.len()
    }

    /// Distinct relay and server views evaluated.
    pub fn distinct_views(&self) -> (usize, usize) {
        (self.relay_table.len(), self.server_table.len())
    }

    pub fn relay_failures(&self) -> usize {
        let per_key: Vec<usize> =
            self.relay_table.iter().map(|r| r.iter().filter(|&&m| m > 0).count()).collect();
        self.relay_keys.iter().flatten().map(|&k| per_key[k]).sum()
    }

    pub fn server_failures(&self) -> usize {
        let per_key: Vec<usize> =
            self.server_table.iter().map(|r| r.iter().filter(|&&m| m > 0).count()).collect();
        self.server_keys.iter().map(|&k| per_key[k]).sum()
    }

    pub fn pass(&self) -> bool {
        self.relay_failures() == 0 && self.server_failures() == 0
    }

    /// All records in pattern order: each relay's checks, then the server's.
    pub fn records(&self) -> impl Iterator<Item = SecurityRecord> + '_ {
        let sets = &self.colluders.sets;
        (0..self.patterns.len()).flat_map(move |p| {
            let id = self.pattern_ids[p].to_string();
            let relay = (0..self.relays).flat_map({
                let id = id.clone();
                move |u| {
                    let id = id.clone();
                    sets.iter().enumerate().map(move |(s, c)| SecurityRecord {
                        kind: CheckKind::Relay,
                        pattern: id.clone(),
                        relay: Some(u),
                        colluders: c.clone(),
                        mi: self.relay_mi(p, u, s),
                    })
                }
            });
            let server = sets.iter().enumerate().map(move |(s, c)| SecurityRecord {
                kind: CheckKind::Server,
                pattern: id.clone(),
                relay: None,
                colluders: c.clone(),
                mi: self.server_mi(p, s),
            });
            relay.chain(server)
        })
    }

    pub fn first_failure(&self) -> Option<(usize, SecurityRecord)> {
        self.records().find(|r| !r.pass()).map(|r| {
            let idx = self.pattern_ids.iter().position(|i| i.to_string() == r.pattern).unwrap_or(0);
            (idx, r)
        })
    }
}

/// Writes key-audit records, lemma records, then every relay and server
/// record of `sweep`, one per line.
pub fn write_report(
    out: &mut impl Write,
    audit: Option<&AuditReport>,
    lemma2: Option<&Lemma2Report>,
    sweep: &SecuritySweep,
) -> io::Result<()> {
    for e in audit.map_or(&[][..], |a| &a.entries[..]) {
        let r = SecurityRecord {
            kind: CheckKind::TPrivacy,
            pattern: "-".into(),
            relay: None,
            colluders: e.colluders.clone(),
            mi: e.projection_leak + e.mask_leak,
        };
        writeln!(out, "{r}")?;
    }
    for (case, mi) in lemma2.map_or(&[][..], |l| &l.entries[..]) {
        let r = SecurityRecord {
            kind: CheckKind::Lemma2,
            pattern: case.to_string(),
            relay: None,
            colluders: Vec::new(),
            mi: *mi,
        };
        writeln!(out, "{r}")?;
    }
    for r in sweep.records() {
        writeln!(out, "{r}")?;
    }
    Ok(())
}
