//! Trusted key dealer: samples the base randomness `(N, S)` and derives every
//! user's key `Z_{u,v} = (N_{u,v}, {[Q_{i,j}]_{u,v}}_{(i,j)})`, where
//! `[Q_{i,j}]_{u,v} = (N_{i,j} || S_{i,j}) . alpha_{u,v}`.
//!
//! The dealer never sees inputs; nothing in this module takes one.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};
use crate::mds::MdsMatrix;
use crate::params::{SystemParams, UserId};
use crate::security::{cond_mi, ColluderSets, LinearView, SecretLayout};
use crate::text;

/// Seeded generator for one logical stream. Keys and inputs draw from
/// different streams of the same seed so they are independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const KEY_STREAM: u64 = 1;
pub const INPUT_STREAM: u64 = 2;

pub fn uniform_vec(rng: &mut impl Rng, field: &PrimeField, len: usize) -> Vec<Fe> {
    (0..len).map(|_| Fe(rng.gen_range(0..field.modulus()))).collect()
}

/// Per-user masks `N_{u,v}` (length `L`) and `S_{u,v}` (length `T`), indexed
/// by canonical user order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseRandomness {
    pub params: SystemParams,
    pub n: Vec<Vec<Fe>>,
    pub s: Vec<Vec<Fe>>,
}

impl BaseRandomness {
    pub fn zeros(params: SystemParams) -> Self {
        let users = params.topology.num_users();
        Self {
            params,
            n: vec![vec![Fe::ZERO; params.input_len()]; users],
            s: vec![vec![Fe::ZERO; params.topology.collusion]; users],
        }
    }

    /// `(N_{i,j} || S_{i,j})`, the vector each `alpha` column is applied to.
    pub fn stacked(&self, user: UserId) -> Vec<Fe> {
        let i = self.params.topology.index(user);
        let mut v = self.n[i].clone();
        v.extend_from_slice(&self.s[i]);
        v
    }
}

/// Samples `2UV` independent uniform vectors from the key stream of `seed`.
pub fn sample_base(params: &SystemParams, seed: u64) -> BaseRandomness {
    let mut rng = stream_rng(seed, KEY_STREAM);
    let l = params.input_len();
    let t = params.topology.collusion;
    let mut n = Vec::new();
    let mut s = Vec::new();
    for _ in params.topology.users() {
        n.push(uniform_vec(&mut rng, &params.field, l));
        s.push(uniform_vec(&mut rng, &params.field, t));
    }
    BaseRandomness { params: *params, n, s }
}

/// Key held by one user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserKey {
    /// `N_{u,v}`.
    pub mask: Vec<Fe>,
    /// `[Q_{i,j}]_{u,v}` for every `(i, j)` in canonical order.
    pub projections: Vec<Fe>,
}

/// Everything the dealer hands out, plus the base randomness it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMaterial {
    mds: MdsMatrix,
    seed: Option<u64>,
    base: BaseRandomness,
    keys: Vec<UserKey>,
}

/// Derives all user keys from `base` and the coding matrix.
pub fn derive_keys(base: BaseRandomness, mds: &MdsMatrix) -> Result<KeyMaterial> {
    if base.params != *mds.params() {
        return Err(Error::DimensionMismatch(format!(
            "base randomness for `{}` but coding matrix for `{}`",
            base.params.header(),
            mds.params().header()
        )));
    }
    let topo = mds.topology();
    let field = mds.field();
    let stacked: Vec<Vec<Fe>> = topo.users().map(|u| base.stacked(u)).collect();
    if stacked.iter().any(|v| v.len() != topo.min_survivors()) {
        return Err(Error::DimensionMismatch("base vectors do not match U0*V0".into()));
    }
    let keys = topo
        .users()
        .map(|holder| {
            let col = mds.column(holder);
            UserKey {
                mask: base.n[topo.index(holder)].clone(),
                projections: stacked.iter().map(|v| field.dot(v, &col)).collect(),
            }
        })
        .collect();
    Ok(KeyMaterial { mds: mds.clone(), seed: None, base, keys })
}

/// Samples and derives in one step, recording the seed.
pub fn deal(mds: &MdsMatrix, seed: u64) -> KeyMaterial {
    let base = sample_base(mds.params(), seed);
    let mut km = derive_keys(base, mds).expect("sampled base matches its own parameters");
    km.seed = Some(seed);
    km
}

impl KeyMaterial {
    pub fn mds(&self) -> &MdsMatrix {
        &self.mds
    }

    pub fn params(&self) -> &SystemParams {
        self.mds.params()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn base(&self) -> &BaseRandomness {
        &self.base
    }

    pub fn key(&self, user: UserId) -> &UserKey {
        &self.keys[self.params().topology.index(user)]
    }

    /// `[Q_{source}]_{holder}`.
    pub fn projection(&self, source: UserId, holder: UserId) -> Fe {
        self.key(holder).projections[self.params().topology.index(source)]
    }

    pub fn to_text(&self) -> String {
        let topo = self.params().topology;
        let mut out = String::from("# hsa keys\n");
        let _ = writeln!(out, "{}", self.params().header());
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "seed={s}");
            }
            None => out.push_str("seed=-\n"),
        }
        for user in topo.users() {
            let i = topo.index(user);
            let k = &self.keys[i];
            let _ = writeln!(out, "user {user}");
            let _ = writeln!(out, "N: {}", text::format_symbols(&self.base.n[i]));
            let _ = writeln!(out, "S: {}", text::format_symbols(&self.base.s[i]));
            let _ = writeln!(
                out,
                "Z: {} | {}",
                text::format_symbols(&k.mask),
                text::format_symbols(&k.projections)
            );
        }
        out
    }

    /// Parses a key export against `mds`, re-deriving every key from the
    /// stored `N`/`S` sections and rejecting files whose `Z` lines disagree.
    pub fn from_text(s: &str, mds: &MdsMatrix) -> Result<Self> {
        let mut lines = text::content_lines(s);
        let header = lines.next().ok_or_else(|| Error::Parse("empty key file".into()))?;
        let params = text::parse_params(header)?;
        if params != *mds.params() {
            return Err(Error::DimensionMismatch("key file parameters differ from matrix".into()));
        }
        let seed_line = lines.next().ok_or_else(|| Error::Parse("missing seed line".into()))?;
        let seed = match seed_line.strip_prefix("seed=") {
            Some("-") => None,
            Some(v) => Some(v.parse().map_err(|_| Error::Parse(format!("bad seed `{v}`")))?),
            None => return Err(Error::Parse(format!("expected seed=, got `{seed_line}`"))),
        };
        let topo = params.topology;
        let field = params.field;
        let mut base = BaseRandomness::zeros(params);
        let mut z_lines = Vec::new();
        for user in topo.users() {
            let head = lines.next().ok_or_else(|| Error::Parse(format!("missing user {user}")))?;
            if head != format!("user {user}") {
                return Err(Error::Parse(format!("expected `user {user}`, got `{head}`")));
            }
            let i = topo.index(user);
            base.n[i] = section(&field, lines.next(), "N:", params.input_len())?;
            base.s[i] = section(&field, lines.next(), "S:", topo.collusion)?;
            z_lines.push(lines.next().ok_or_else(|| Error::Parse("missing Z line".into()))?);
        }
        let mut km = derive_keys(base, mds)?;
        km.seed = seed;
        for (user, line) in topo.users().zip(z_lines) {
            let body = line
                .strip_prefix("Z:")
                .ok_or_else(|| Error::Parse(format!("expected Z:, got `{line}`")))?;
            let (mask, proj) = body
                .split_once('|')
                .ok_or_else(|| Error::Parse("Z line lacks `|`".into()))?;
            let key = km.key(user);
            if text::parse_symbols(&field, mask)? != key.mask
                || text::parse_symbols(&field, proj)? != key.projections
            {
                return Err(Error::Parse(format!("Z section of user {user} is inconsistent")));
            }
        }
        Ok(km)
    }
}

fn section(field: &PrimeField, line: Option<&str>, tag: &str, len: usize) -> Result<Vec<Fe>> {
    let line = line.ok_or_else(|| Error::Parse(format!("missing {tag} line")))?;
    let body = line
        .strip_prefix(tag)
        .ok_or_else(|| Error::Parse(format!("expected {tag}, got `{line}`")))?;
    let v = text::parse_symbols(field, body)?;
    if v.len() != len {
        return Err(Error::LengthMismatch { expected: len, got: v.len() });
    }
    Ok(v)
}

/// Rank of the linear map `(N, S) -> Z_{u,v}`, i.e. `H(Z_{u,v})` in q-ary
/// units.
pub fn key_rank(mds: &MdsMatrix, user: UserId) -> usize {
    let layout = SecretLayout::scheme(mds.topology());
    layout.key_view(mds, user).rank(mds.field())
}

/// One colluding set's audit outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditEntry {
    pub colluders: Vec<UserId>,
    /// `I({[Q_{i,j}]_t}_{(i,j), t in T} ; {N_{i,j}})`.
    pub projection_leak: usize,
    /// `I({N_{i,j}}_{not T} ; {N_t}_{t in T}, {[Q_{i,j}]_t})`.
    pub mask_leak: usize,
}

impl AuditEntry {
    pub fn pass(&self) -> bool {
        self.projection_leak == 0 && self.mask_leak == 0
    }
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub exhaustive: bool,
    pub population: u128,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(AuditEntry::pass)
    }
}

/// Checks the T-privacy consequences of the coding matrix for every
/// colluding set of size `1..=T` (or a seeded sample above `cap`).
pub fn key_entropy_audit(material: &KeyMaterial, cap: u128, seed: u64) -> AuditReport {
    audit_matrix(material.mds(), cap, seed)
}

/// [`key_entropy_audit`] for a bare coding matrix; the audit depends on
/// nothing else.
pub fn audit_matrix(mds: &MdsMatrix, cap: u128, seed: u64) -> AuditReport {
    let topo = mds.topology();
    let field = mds.field();
    let layout = SecretLayout::scheme(topo);
    let sets = ColluderSets::new(topo, 1, topo.collusion, cap, seed);
    let all_masks = layout.mask_view(topo.users());

    let entries = sets
        .sets
        .iter()
        .map(|set| {
            let mut projections = LinearView::empty(layout.width());
            for &holder in set {
                for source in topo.users() {
                    projections.push(layout.projection_row(mds, source, holder), "Q");
                }
            }
            let empty = LinearView::empty(layout.width());
            let projection_leak = cond_mi(field, &projections, &all_masks, &empty);

            let outside = layout.mask_view(topo.users().filter(|u| !set.contains(u)));
            let mut inside = layout.mask_view(set.iter().copied());
            inside.extend(&projections);
            let mask_leak = cond_mi(field, &outside, &inside, &empty);
            AuditEntry { colluders: set.clone(), projection_leak, mask_leak }
        })
        .collect();
    AuditReport { entries, exhaustive: sets.exhaustive, population: sets.population }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::mds::{find_t_private_mds, SearchConfig, DEFAULT_SUBSET_CAP};
    use crate::params::presets;

    fn small() -> MdsMatrix {
        find_t_private_mds(&presets::small(), &SearchConfig::default()).unwrap().mds
    }

    fn colluding() -> MdsMatrix {
        find_t_private_mds(&presets::colluding(), &SearchConfig::default()).unwrap().mds
    }

    #[test]
    fn no_collusion_means_empty_s() {
        let base = sample_base(small().params(), 3);
        assert!(base.s.iter().all(|s| s.is_empty()));
        assert!(base.n.iter().all(|n| n.len() == 2));
    }

    #[test]
    fn sampling_is_deterministic() {
        let mds = small();
        assert_eq!(deal(&mds, 42).to_text(), deal(&mds, 42).to_text());
        assert_ne!(sample_base(mds.params(), 42), sample_base(mds.params(), 43));
    }

    #[test]
    fn marginals_are_uniform() {
        // one fixed coordinate over 10^4 seeds; every residue within 5 sigma
        let mds = small();
        let q = mds.params().q() as usize;
        let trials = 10_000usize;
        let mut counts = vec![0usize; q];
        for seed in 0..trials as u64 {
            counts[sample_base(mds.params(), seed).n[3][1].value() as usize] += 1;
        }
        let p = 1.0 / q as f64;
        let mean = trials as f64 * p;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for (v, c) in counts.iter().enumerate() {
            assert!((*c as f64 - mean).abs() < 5.0 * sigma, "residue {v}: {c}");
        }
    }

    #[test]
    fn zero_base_gives_zero_projections() {
        let mds = colluding();
        let km = derive_keys(BaseRandomness::zeros(*mds.params()), &mds).unwrap();
        for u in mds.topology().users() {
            assert!(km.key(u).projections.iter().all(|x| x.is_zero()));
        }
    }

    #[test]
    fn projections_match_matrix_product() {
        let mds = colluding();
        let field = *mds.field();
        let km = deal(&mds, 9);
        let alpha_t = mds.matrix().transpose();
        for source in mds.topology().users() {
            let stacked = km.base().stacked(source);
            let expected = alpha_t.mul_vec(&field, &stacked).unwrap();
            let got: Vec<Fe> =
                mds.topology().users().map(|holder| km.projection(source, holder)).collect();
            assert_eq!(got, expected, "source {source}");
        }
    }

    #[test]
    fn user_13_key_shape() {
        // with the canonical generators (q = 23), the projection of N_{1,1}||S_{1,1}
        // held by (1,3) is N(1) + 2^3 N(2) + 3^3 S(1) + 4^3 S(2)
        let cfg = SearchConfig { random_budget: 0, ..SearchConfig::default() };
        let mds = find_t_private_mds(&presets::colluding(), &cfg).unwrap().mds;
        let f = *mds.field();
        let km = deal(&mds, 1);
        let holder = UserId::one_based(1, 3);
        let src = UserId::one_based(1, 1);
        let b = km.base();
        let n = &b.n[0];
        let s = &b.s[0];
        let want = f.sum([
            n[0],
            f.mul(f.elem(8), n[1]),
            f.mul(f.elem(27), s[0]),
            f.mul(f.elem(64), s[1]),
        ]);
        assert_eq!(km.projection(src, holder), want);
        assert_eq!(km.key(holder).mask, b.n[2]);
    }

    #[test]
    fn dimension_mismatch() {
        let base = sample_base(small().params(), 0);
        assert!(matches!(derive_keys(base, &colluding()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn key_ranks() {
        // T = 0: (u,v)'s own projection is a function of N_{u,v}, so L + UV - 1
        let s = small();
        for u in s.topology().users() {
            assert_eq!(key_rank(&s, u), 2 + 4 - 1);
        }
        let c = colluding();
        for u in c.topology().users() {
            assert_eq!(key_rank(&c, u), 2 + 9);
        }
    }

    #[test]
    fn text_round_trip() {
        let mds = colluding();
        let km = deal(&mds, 5);
        let back = KeyMaterial::from_text(&km.to_text(), &mds).unwrap();
        assert_eq!(back, km);
        let tampered = km.to_text().replacen("Z: ", "Z: 1 ", 1);
        assert!(KeyMaterial::from_text(&tampered, &mds).is_err());
    }

    #[test]
    fn audit_vacuous_without_collusion() {
        let r = audit_matrix(&small(), 100_000, 0);
        assert!(r.entries.is_empty());
        assert!(r.pass());
    }

    #[test]
    fn audit_passes_for_certified_matrix() {
        let r = audit_matrix(&colluding(), 100_000, 0);
        assert!(r.exhaustive);
        assert_eq!(r.entries.len(), 9 + 36);
        assert!(r.pass());
        let pair = [UserId::one_based(1, 1), UserId::one_based(2, 1)];
        let e = r.entries.iter().find(|e| e.colluders == pair).unwrap();
        assert_eq!((e.projection_leak, e.mask_leak), (0, 0));
    }

    #[test]
    fn audit_flags_broken_matrix() {
        let good = colluding();
        let mut alpha: Matrix = good.matrix().clone();
        // wipe the S-part of one column: that user's projections expose N
        alpha.set(2, 4, Fe::ZERO);
        alpha.set(3, 4, Fe::ZERO);
        let f = good.field();
        assert!(!crate::mds::certify_t_private(f, &alpha, 2, DEFAULT_SUBSET_CAP).unwrap());
        let broken = MdsMatrix::unchecked(*good.params(), alpha).unwrap();
        let r = audit_matrix(&broken, 100_000, 0);
        assert!(!r.pass());
        assert!(r.entries.iter().any(|e| e.projection_leak > 0));
    }
}
