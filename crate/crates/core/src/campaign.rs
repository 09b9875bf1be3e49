//! End-to-end campaigns: find a coding matrix, deal keys, run sessions over
//! many dropout patterns, check every decode, sweep the security checks and
//! compare rates.
//!
//! Configuration is flat `key = value` text:
//!
//! ```text
//! U = 3
//! V = 3
//! U0 = 2
//! V0 = 2
//! T = 2
//! q = auto          # or a prime
//! seed = 7
//! mode = sample     # or exhaustive
//! samples = 500
//! colluder_cap = 100000
//! policy = lowest   # or random
//! inputs = 1        # random input draws per pattern
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::dropout::{self, DropoutPattern, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::field::is_prime;
use crate::keys::{audit_matrix, deal, AuditReport, KeyMaterial};
use crate::mds::{find_t_private_mds, SearchConfig, SearchOutcome};
use crate::params::Topology;
use crate::protocol::{plaintext_sum, run_seeded_session, SelectionPolicy};
use crate::rates::{compare, rate_region, RateComparison, RateRegion, RateTuple};
use crate::security::{
    check_lemma2, sweep, write_report, Lemma2Report, SecuritySweep, SweepConfig, ViewOptions,
    DEFAULT_COLLUDER_CAP,
};
use crate::text;

pub const KEYS: [&str; 12] =
    ["U", "V", "U0", "V0", "T", "q", "seed", "mode", "samples", "colluder_cap", "policy", "inputs"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldChoice {
    Auto,
    Prime(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exhaustive,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyChoice {
    Lowest,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CampaignConfig {
    pub relays: usize,
    pub users_per_relay: usize,
    pub relay_floor: usize,
    pub user_floor: usize,
    pub collusion: usize,
    pub q: FieldChoice,
    pub seed: u64,
    pub mode: Mode,
    pub samples: usize,
    pub colluder_cap: u128,
    pub policy: PolicyChoice,
    pub inputs: usize,
}

fn cfg_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), msg: msg.into() }
}

/// Reads `key = value` lines. Later duplicates are rejected.
pub fn parse_config_map(s: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text::content_lines(s) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected `key = value`, got `{line}`")))?;
        let k = k.trim();
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(cfg_err(k, "given twice"));
        }
    }
    Ok(out)
}

impl CampaignConfig {
    /// Validates keys and values. Feasibility is checked by [`Self::topology`].
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(cfg_err(k, format!("unknown key (known: {})", KEYS.join(", "))));
        }
        fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, k: &str) -> Result<Option<T>> {
            map.get(k)
                .map(|v| v.parse().map_err(|_| cfg_err(k, format!("`{v}` is not a non-negative integer"))))
                .transpose()
        }
        let req = |k: &str| -> Result<usize> { num(map, k)?.ok_or_else(|| cfg_err(k, "required")) };
        let q = match map.get("q").map(String::as_str) {
            None | Some("auto") => FieldChoice::Auto,
            Some(v) => {
                let p: u64 = v.parse().map_err(|_| cfg_err("q", "expected `auto` or a prime"))?;
                if !is_prime(p) {
                    return Err(cfg_err("q", format!("{p} is not prime")));
                }
                FieldChoice::Prime(p)
            }
        };
        let mode = match map.get("mode").map(String::as_str) {
            None | Some("exhaustive") => Mode::Exhaustive,
            Some("sample") => Mode::Sample,
            Some(v) => return Err(cfg_err("mode", format!("`{v}` is not exhaustive|sample"))),
        };
        let policy = match map.get("policy").map(String::as_str) {
            None | Some("lowest") => PolicyChoice::Lowest,
            Some("random") => PolicyChoice::Random,
            Some(v) => return Err(cfg_err("policy", format!("`{v}` is not lowest|random"))),
        };
        let cfg = Self {
            relays: req("U")?,
            users_per_relay: req("V")?,
            relay_floor: req("U0")?,
            user_floor: req("V0")?,
            collusion: req("T")?,
            q,
            seed: num(map, "seed")?.unwrap_or(0),
            mode,
            samples: num(map, "samples")?.unwrap_or(1000),
            colluder_cap: num(map, "colluder_cap")?.unwrap_or(DEFAULT_COLLUDER_CAP),
            policy,
            inputs: num(map, "inputs")?.unwrap_or(1),
        };
        if cfg.samples == 0 {
            return Err(cfg_err("samples", "must be positive"));
        }
        if cfg.inputs == 0 {
            return Err(cfg_err("inputs", "must be positive"));
        }
        Ok(cfg)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::from_map(&parse_config_map(s)?)
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(
            self.relays,
            self.users_per_relay,
            self.relay_floor,
            self.user_floor,
            self.collusion,
        )
    }

    pub fn selection_policy(&self) -> SelectionPolicy {
        match self.policy {
            PolicyChoice::Lowest => SelectionPolicy::LowestIndex,
            PolicyChoice::Random => SelectionPolicy::SeededRandom(self.seed),
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let mut s = SearchConfig { seed: self.seed, ..SearchConfig::default() };
        if let FieldChoice::Prime(p) = self.q {
            s.first_prime = p;
            s.prime_ceiling = p;
        }
        s
    }

    pub fn to_text(&self) -> String {
        let q = match self.q {
            FieldChoice::Auto => "auto".to_string(),
            FieldChoice::Prime(p) => p.to_string(),
        };
        let mode = match self.mode {
            Mode::Exhaustive => "exhaustive",
            Mode::Sample => "sample",
        };
        let policy = match self.policy {
            PolicyChoice::Lowest => "lowest",
            PolicyChoice::Random => "random",
        };
        format!(
            "U = {}\nV = {}\nU0 = {}\nV0 = {}\nT = {}\nq = {q}\nseed = {}\nmode = {mode}\n\
             samples = {}\ncolluder_cap = {}\npolicy = {policy}\ninputs = {}\n",
            self.relays,
            self.users_per_relay,
            self.relay_floor,
            self.user_floor,
            self.collusion,
            self.seed,
            self.samples,
            self.colluder_cap,
            self.inputs
        )
    }
}

/// SplitMix64 finaliser over a few words; spreads derived seeds.
pub fn derive_seed(words: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        let mut z = h ^ w.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Patterns to run, with their ids. Exhaustive mode falls back to sampling
/// when enumeration is over the cap.
pub fn campaign_patterns(
    topo: &Topology,
    cfg: &CampaignConfig,
) -> (Vec<(u64, DropoutPattern)>, bool) {
    if cfg.mode == Mode::Exhaustive {
        if let Ok(it) = dropout::enumerate(topo, DEFAULT_ENUMERATION_CAP) {
            return (it.enumerate().map(|(i, p)| (i as u64, p)).collect(), false);
        }
    }
    let pats = (0..cfg.samples as u64)
        .map(|i| (i, dropout::sample(topo, derive_seed(&[cfg.seed, 1, i]))))
        .collect();
    (pats, cfg.mode == Mode::Exhaustive)
}

#[derive(Clone, Debug)]
pub struct SessionResult {
    pub pattern_id: u64,
    pub draw: usize,
    pub pattern: DropoutPattern,
    pub input_seed: u64,
    pub rates: Option<RateTuple>,
    pub decoded: Option<Vec<crate::field::Fe>>,
    pub expected: Vec<crate::field::Fe>,
    pub error: Option<String>,
}

impl SessionResult {
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.decoded.as_ref() == Some(&self.expected)
    }

    pub fn line(&self) -> String {
        let decoded = match (&self.decoded, &self.error) {
            (_, Some(e)) => format!("error=\"{e}\""),
            (Some(d), None) => format!("decoded={}", text::format_symbols(d).replace(' ', ",")),
            (None, None) => "decoded=-".into(),
        };
        format!(
            "pattern={} draw={} {} input_seed={} {} expected={} pass={}",
            self.pattern_id,
            self.draw,
            self.pattern.to_line(),
            self.input_seed,
            decoded,
            text::format_symbols(&self.expected).replace(' ', ","),
            self.pass()
        )
    }
}

pub struct CampaignOutcome {
    pub config: CampaignConfig,
    pub topology: Topology,
    pub search: SearchOutcome,
    pub keys: KeyMaterial,
    pub fell_back_to_sampling: bool,
    pub pattern_population: u128,
    pub distinct_patterns: usize,
    pub sessions: Vec<SessionResult>,
    pub region: RateRegion,
    pub rates: Option<RateComparison>,
    /// Sessions whose measured rates differ from the first session's.
    pub rate_outliers: usize,
    pub audit: AuditReport,
    pub lemma2: Lemma2Report,
    pub security: SecuritySweep,
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutcome> {
    let topo = cfg.topology()?;
    let search = find_t_private_mds(&topo, &cfg.search_config())?;
    run_campaign_with(cfg, search)
}

/// [`run_campaign`] with a coding matrix found or loaded elsewhere.
pub fn run_campaign_with(cfg: &CampaignConfig, search: SearchOutcome) -> Result<CampaignOutcome> {
    let topo = cfg.topology()?;
    if *search.mds.topology() != topo {
        return Err(cfg_err("U", "coding matrix was built for different parameters"));
    }
    let mds = &search.mds;
    let keys = deal(mds, cfg.seed);
    let policy = cfg.selection_policy();
    let (patterns, fell_back) = campaign_patterns(&topo, cfg);
    let distinct_patterns = patterns.iter().map(|p| &p.1).collect::<BTreeSet<_>>().len();

    let jobs: Vec<(u64, usize, &DropoutPattern)> = patterns
        .iter()
        .flat_map(|(id, p)| (0..cfg.inputs).map(move |k| (*id, k, p)))
        .collect();
    let sessions: Vec<SessionResult> = jobs
        .par_iter()
        .map(|&(id, k, p)| {
            let input_seed = derive_seed(&[cfg.seed, 2, id, k as u64]);
            let s1 = p.s1();
            match run_seeded_session(&keys, input_seed, p, policy) {
                Ok((w, tr)) => SessionResult {
                    pattern_id: id,
                    draw: k,
                    pattern: p.clone(),
                    input_seed,
                    rates: Some(tr.rates()),
                    expected: plaintext_sum(mds.params(), &w, &s1),
                    decoded: tr.decoded,
                    error: None,
                },
                Err(e) => {
                    let w = crate::protocol::sample_inputs(mds.params(), input_seed);
                    SessionResult {
                        pattern_id: id,
                        draw: k,
                        pattern: p.clone(),
                        input_seed,
                        rates: None,
                        expected: plaintext_sum(mds.params(), &w, &s1),
                        decoded: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    let region = rate_region(&topo);
    let first_rates = sessions.iter().find_map(|s| s.rates);
    let rate_outliers =
        sessions.iter().filter(|s| s.rates.is_some() && s.rates != first_rates).count();
    let rates = first_rates.map(|r| compare(r, &region));

    let audit = audit_matrix(mds, cfg.colluder_cap, cfg.seed);
    let lemma2 = check_lemma2(mds);
    let sweep_cfg = SweepConfig {
        colluder_cap: cfg.colluder_cap,
        seed: cfg.seed,
        policy,
        opts: ViewOptions::default(),
    };
    let security = sweep(mds, patterns, &sweep_cfg);

    Ok(CampaignOutcome {
        config: cfg.clone(),
        topology: topo,
        keys,
        fell_back_to_sampling: fell_back,
        pattern_population: dropout::count(&topo),
        distinct_patterns,
        sessions,
        region,
        rates,
        rate_outliers,
        audit,
        lemma2,
        security,
        search,
    })
}

impl CampaignOutcome {
    pub fn sessions_pass(&self) -> bool {
        self.sessions.iter().all(SessionResult::pass)
    }

    pub fn rates_pass(&self) -> bool {
        self.rate_outliers == 0 && self.rates.as_ref().is_some_and(RateComparison::pass)
    }

    pub fn pass(&self) -> bool {
        self.sessions_pass()
            && self.rates_pass()
            && self.audit.pass()
            && self.lemma2.pass()
            && self.security.pass()
    }

    pub fn summary(&self) -> String {
        let mds = &self.search.mds;
        let mut s = String::from("# hsa campaign\n");
        let _ = writeln!(s, "{}", mds.params().header());
        let mode = match (self.config.mode, self.fell_back_to_sampling) {
            (Mode::Exhaustive, false) => "exhaustive",
            (Mode::Exhaustive, true) => "sample(fallback)",
            (Mode::Sample, _) => "sample",
        };
        let _ = writeln!(
            s,
            "seed={} mode={mode} policy={} inputs={}",
            self.config.seed,
            self.config.policy_name(),
            self.config.inputs
        );
        let gens: Vec<String> = self.search.generators.iter().map(|g| g.to_string()).collect();
        let _ = writeln!(s, "mds generators={} attempt={}", gens.join(","), self.search.attempt);
        let _ = writeln!(
            s,
            "patterns run={} distinct={} admissible={}",
            self.security.patterns.len(),
            self.distinct_patterns,
            self.pattern_population
        );
        let correct = self.sessions.iter().filter(|x| x.pass()).count();
        let _ = writeln!(s, "sessions total={} correct={}", self.sessions.len(), correct);
        let _ = writeln!(s, "region {}", self.region);
        match &self.rates {
            Some(c) => {
                let _ = writeln!(s, "rates {c}");
            }
            None => s.push_str("rates measured=-\n"),
        }
        let _ = writeln!(s, "rates outliers={}", self.rate_outliers);
        let (rv, sv) = self.security.distinct_views();
        let _ = writeln!(
            s,
            "colluder_sets checked={} of={} exhaustive={}",
            self.security.colluders.sets.len(),
            self.security.colluders.population,
            self.security.colluders.exhaustive
        );
        let _ = writeln!(
            s,
            "security relay_checks={} relay_failures={} server_checks={} server_failures={} distinct_views={}+{}",
            self.security.relay_checks(),
            self.security.relay_failures(),
            self.security.server_checks(),
            self.security.server_failures(),
            rv,
            sv
        );
        let _ = writeln!(
            s,
            "tprivacy sets={} failures={}",
            self.audit.entries.len(),
            self.audit.entries.iter().filter(|e| !e.pass()).count()
        );
        let _ = writeln!(
            s,
            "lemma2 cases={} failures={}",
            self.lemma2.entries.len(),
            self.lemma2.entries.iter().filter(|e| e.1 > 0).count()
        );
        if let Some((_, r)) = self.security.first_failure() {
            let _ = writeln!(s, "first_failure {r}");
        }
        let _ = writeln!(s, "result={}", if self.pass() { "PASS" } else { "FAIL" });
        s
    }

    pub fn write_security(&self, out: &mut impl Write) -> io::Result<()> {
        write_report(out, Some(&self.audit), Some(&self.lemma2), &self.security)
    }

    pub fn write_sessions(&self, out: &mut impl Write) -> io::Result<()> {
        for s in &self.sessions {
            writeln!(out, "{}", s.line())?;
        }
        Ok(())
    }

    /// `summary.txt`, `sessions.txt`, `security.txt`, `mds.txt`, `keys.txt`.
    pub fn write_reports(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        fs::write(dir.join("mds.txt"), self.search.mds.to_text())?;
        fs::write(dir.join("keys.txt"), self.keys.to_text())?;
        let mut w = BufWriter::new(fs::File::create(dir.join("sessions.txt"))?);
        self.write_sessions(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(dir.join("security.txt"))?);
        self.write_security(&mut w)?;
        w.flush()
    }
}

impl CampaignConfig {
    fn policy_name(&self) -> &'static str {
        match self.policy {
            PolicyChoice::Lowest => "lowest",
            PolicyChoice::Random => "random",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "U = 2\nV = 2\nU0 = 2\nV0 = 1\nT = 0\nmode = exhaustive\n";

    #[test]
    fn parse_defaults_and_round_trip() {
        let c = CampaignConfig::parse(SMALL).unwrap();
        assert_eq!(c.q, FieldChoice::Auto);
        assert_eq!((c.seed, c.samples, c.inputs), (0, 1000, 1));
        assert_eq!(c.colluder_cap, DEFAULT_COLLUDER_CAP);
        assert_eq!(CampaignConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = CampaignConfig::parse(&format!("{SMALL}bogus = 1\n")).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "bogus"));
        let err = CampaignConfig::parse("U = 2\nV = 2\nU0 = 2\nV0 = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "T"));
        let err = CampaignConfig::parse(&format!("{SMALL}q = 9\n")).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "q"));
        let err = CampaignConfig::parse(&format!("{SMALL}mode = all\n")).unwrap_err();
        assert!(err.to_string().contains("mode"));
        assert!(CampaignConfig::parse(&format!("{SMALL}U = 3\n")).is_err());
    }

    #[test]
    fn infeasible_is_refused() {
        let c = CampaignConfig::parse("U=3\nV=3\nU0=1\nV0=2\nT=2\n").unwrap();
        let err = run_campaign(&c).err().unwrap();
        assert!(matches!(err, Error::Infeasible { .. }));
        assert!(err.to_string().contains("region is empty"));
    }

    #[test]
    fn small_campaign_passes() {
        let c = CampaignConfig::parse(SMALL).unwrap();
        let out = run_campaign(&c).unwrap();
        assert_eq!(out.sessions.len(), 25);
        assert!(out.pass(), "{}", out.summary());
        assert!(out.summary().contains("result=PASS"));
        assert!(out.summary().contains("measured=(1,1,1/2,1/2)"));
    }

    #[test]
    fn derive_seed_spreads() {
        let a = derive_seed(&[7, 2, 0, 0]);
        assert_ne!(a, derive_seed(&[7, 2, 0, 1]));
        assert_ne!(a, derive_seed(&[7, 2, 1, 0]));
        assert_eq!(a, derive_seed(&[7, 2, 0, 0]));
    }
}
