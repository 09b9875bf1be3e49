//! Construction and certification of the `U0V0 x UV` coding matrix.
//!
//! A matrix is MDS when every maximal square column-submatrix is
//! nonsingular, and T-private when the submatrix of its last `T` rows is MDS
//! as well. Candidates are never trusted: [`MdsMatrix::certify`] checks every
//! column subset exhaustively.

use itertools::Itertools;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{next_prime, Fe, PrimeField};
use crate::matrix::Matrix;
use crate::params::{SystemParams, Topology, UserId};
use crate::text;

/// Default ceiling on the number of column subsets a certification may visit.
pub const DEFAULT_SUBSET_CAP: u128 = 1_000_000;

/// Binomial coefficient, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Power-basis candidate: row `r` is `(g_r^1, g_r^2, ..., g_r^{UV})`, so the
/// column for user `(u, v)` is `(g_1^k, ..., g_m^k)` with `k = V(u-1) + v`.
/// With generators `1..=U0V0` this is the canonical instantiation.
pub fn build_candidate(params: &SystemParams, generators: &[Fe]) -> Result<Matrix> {
    let topo = &params.topology;
    let field = &params.field;
    let m = topo.min_survivors();
    let n = topo.num_users();
    if params.q() as usize <= n {
        return Err(Error::InsufficientField { q: params.q(), need: n });
    }
    check_points(field, generators, m, "generator")?;
    let mut alpha = Matrix::zeros(m, n);
    for (r, &g) in generators.iter().enumerate() {
        for c in 0..n {
            alpha.set(r, c, field.pow(g, c as u64 + 1));
        }
    }
    Ok(alpha)
}

/// Classical Vandermonde candidate on per-user evaluation points: column `c`
/// is `(1, x_c, x_c^2, ..., x_c^{m-1})`.
pub fn vandermonde(field: &PrimeField, rows: usize, points: &[Fe]) -> Result<Matrix> {
    check_points(field, points, points.len(), "point")?;
    let mut alpha = Matrix::zeros(rows, points.len());
    for (c, &x) in points.iter().enumerate() {
        for r in 0..rows {
            alpha.set(r, c, field.pow(x, r as u64));
        }
    }
    Ok(alpha)
}

fn check_points(field: &PrimeField, pts: &[Fe], expected: usize, what: &str) -> Result<()> {
    if pts.len() != expected {
        return Err(Error::LengthMismatch { expected, got: pts.len() });
    }
    if pts.iter().any(|p| p.is_zero() || p.value() >= field.modulus()) {
        return Err(Error::InvalidParams(format!("every {what} must be a nonzero residue")));
    }
    if !pts.iter().all_unique() {
        return Err(Error::InvalidParams(format!("{what}s must be pairwise distinct")));
    }
    Ok(())
}

/// True iff every `rows x rows` column-submatrix has full rank.
pub fn certify_mds(field: &PrimeField, m: &Matrix, cap: u128) -> Result<bool> {
    let k = m.rows();
    let n = m.cols();
    if k == 0 {
        return Ok(true);
    }
    if k > n {
        return Ok(false);
    }
    let subsets = binomial(n, k);
    if subsets > cap {
        return Err(Error::CertificationTooLarge { subsets, cap });
    }
    Ok((0..n)
        .combinations(k)
        .all(|cols| m.select_columns(&cols).rank(field) == k))
}

/// True iff `t == 0` or the last `t` rows form an MDS matrix.
pub fn certify_t_private(field: &PrimeField, m: &Matrix, t: usize, cap: u128) -> Result<bool> {
    if t == 0 {
        return Ok(true);
    }
    if t > m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "T = {t} exceeds the {} rows of the candidate",
            m.rows()
        )));
    }
    let last: Vec<usize> = (m.rows() - t..m.rows()).collect();
    certify_mds(field, &m.select_rows(&last), cap)
}

/// A coding matrix bound to its parameters, certified unless built through
/// [`MdsMatrix::unchecked`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MdsMatrix {
    params: SystemParams,
    alpha: Matrix,
    certified: bool,
}

impl MdsMatrix {
    pub fn certify(params: SystemParams, alpha: Matrix, cap: u128) -> Result<Self> {
        check_shape(&params, &alpha)?;
        if !certify_mds(&params.field, &alpha, cap)? {
            return Err(Error::CertificationFailed("matrix is not MDS".into()));
        }
        if !certify_t_private(&params.field, &alpha, params.topology.collusion, cap)? {
            return Err(Error::CertificationFailed(format!(
                "last {} rows are not MDS",
                params.topology.collusion
            )));
        }
        Ok(Self { params, alpha, certified: true })
    }

    /// Skips certification. Used for `--trust` imports and for deliberately
    /// broken negative-control fixtures.
    pub fn unchecked(params: SystemParams, alpha: Matrix) -> Result<Self> {
        check_shape(&params, &alpha)?;
        Ok(Self { params, alpha, certified: false })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn field(&self) -> &PrimeField {
        &self.params.field
    }

    pub fn topology(&self) -> &Topology {
        &self.params.topology
    }

    pub fn matrix(&self) -> &Matrix {
        &self.alpha
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// `alpha_{u,v}`.
    pub fn column(&self, user: UserId) -> Vec<Fe> {
        self.alpha.column(self.params.topology.index(user))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# hsa mds\n");
        out.push_str(&self.params.header());
        out.push('\n');
        out.push_str(&self.alpha.to_string());
        out
    }

    /// Parses the text export; certifies unless `trust` is set.
    pub fn from_text(s: &str, trust: bool) -> Result<Self> {
        let mut lines = text::content_lines(s);
        let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
        let params = text::parse_params(header)?;
        let m = params.topology.min_survivors();
        let n = params.topology.num_users();
        let mut rows = Vec::with_capacity(m);
        for line in lines {
            rows.push(text::parse_symbols(&params.field, line)?);
        }
        if rows.len() != m {
            return Err(Error::Parse(format!("expected {m} matrix rows, found {}", rows.len())));
        }
        let alpha = Matrix::from_rows(n, rows)?;
        if trust {
            Self::unchecked(params, alpha)
        } else {
            Self::certify(params, alpha, DEFAULT_SUBSET_CAP)
        }
    }
}

fn check_shape(params: &SystemParams, alpha: &Matrix) -> Result<()> {
    let m = params.topology.min_survivors();
    let n = params.topology.num_users();
    if alpha.rows() != m || alpha.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "coding matrix is {}x{}, expected {m}x{n}",
            alpha.rows(),
            alpha.cols()
        )));
    }
    Ok(())
}

/// Knobs for [`find_t_private_mds`].
#[derive(Clone, Debug)]
pub struct SearchConfig {
    /// Search starts at the first prime at or above this (and above `UV`).
    pub first_prime: u64,
    /// Largest prime tried before giving up.
    pub prime_ceiling: u64,
    /// Random generator sets tried per prime after the canonical one fails.
    pub random_budget: usize,
    pub seed: u64,
    pub subset_cap: u128,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            first_prime: 0,
            prime_ceiling: 10_007,
            random_budget: 32,
            seed: 0,
            subset_cap: DEFAULT_SUBSET_CAP,
        }
    }
}

/// Result of a successful search.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub mds: MdsMatrix,
    pub generators: Vec<Fe>,
    /// 0 for the canonical generators, otherwise the 1-based random attempt.
    pub attempt: usize,
}

/// Walks primes upward from `UV + 1` (or `first_prime`, if larger). At each prime it tries the canonical
/// generators `1..=U0V0`, then `random_budget` seeded random generator sets,
/// and returns the first candidate passing both certificates.
pub fn find_t_private_mds(topology: &Topology, cfg: &SearchConfig) -> Result<SearchOutcome> {
    if !topology.is_feasible() {
        return Err(Error::Infeasible {
            survivors: topology.min_survivors(),
            collusion: topology.collusion,
        });
    }
    let m = topology.min_survivors();
    let mut q = next_prime((topology.num_users() as u64 + 1).max(cfg.first_prime));
    while q <= cfg.prime_ceiling {
        let params = SystemParams::new(*topology, q)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ q);
        for attempt in 0..=cfg.random_budget {
            let generators: Vec<Fe> = if attempt == 0 {
                (1..=m as u64).map(Fe).collect()
            } else {
                sample(&mut rng, (q - 1) as usize, m)
                    .into_iter()
                    .map(|i| Fe(i as u64 + 1))
                    .collect()
            };
            // canonical generators need q > U0V0 to stay distinct; q > UV covers it
            let alpha = build_candidate(&params, &generators)?;
            match MdsMatrix::certify(params, alpha, cfg.subset_cap) {
                Ok(mds) => return Ok(SearchOutcome { mds, generators, attempt }),
                Err(Error::CertificationFailed(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        q = next_prime(q + 1);
    }
    Err(Error::SearchExhausted { ceiling: cfg.prime_ceiling })
}
