//! `hsa`: command-line driver for the hierarchical secure aggregation
//! simulator and verifier.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hsa_core::campaign::{
    campaign_patterns, parse_config_map, run_campaign_with, CampaignConfig, KEYS,
};
use hsa_core::dropout::{self, DropoutPattern};
use hsa_core::keys::{audit_matrix, deal, KeyMaterial};
use hsa_core::mds::{find_t_private_mds, MdsMatrix, SearchOutcome};
use hsa_core::protocol::{plaintext_sum, run_seeded_session};
use hsa_core::rates::{compare, rate_region, rate_region_raw};
use hsa_core::security::{check_lemma2, sweep, write_report, SweepConfig, ViewOptions};
use hsa_core::Error;

#[derive(Parser)]
#[command(name = "hsa", version, about = "Hierarchical secure aggregation simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the optimal rate region, and the rates one session achieves.
    Rates(RatesArgs),
    /// Search for a T-private MDS coding matrix and write it out.
    FindMds(FindMdsArgs),
    /// Deal keys from a coding matrix.
    Deal(DealArgs),
    /// Run one session under one dropout pattern and write its transcript.
    Simulate(SimulateArgs),
    /// Check relay and server security over many dropout patterns.
    VerifySecurity(VerifyArgs),
    /// Run everything and write a report directory.
    Campaign(CampaignArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set T=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn map(&self) -> Result<BTreeMap<String, String>> {
        let mut map = match &self.config {
            Some(p) => parse_config_map(&read(p)?)?,
            None => BTreeMap::new(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                bail!("unknown key `{k}` (known: {})", KEYS.join(", "));
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        if let Some(s) = self.seed {
            map.insert("seed".into(), s.to_string());
        }
        Ok(map)
    }

    fn load(&self) -> Result<CampaignConfig> {
        Ok(CampaignConfig::from_map(&self.map()?)?)
    }
}

#[derive(Args)]
struct MdsSource {
    /// Coding matrix file; searched for when absent.
    #[arg(long)]
    mds: Option<PathBuf>,
    /// Skip certification of an imported matrix.
    #[arg(long, requires = "mds")]
    trust: bool,
}

#[derive(Args)]
struct RatesArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct FindMdsArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DealArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    mds: MdsSource,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    mds: MdsSource,
    /// Keys file; dealt from the seed when absent.
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Pattern line, e.g. `U1=3 U2=3 V1=3,3 V2=3,3`; no dropout when absent.
    #[arg(long, conflicts_with = "pattern_id")]
    pattern: Option<String>,
    /// Index of the pattern in canonical enumeration order.
    #[arg(long)]
    pattern_id: Option<u64>,
    #[arg(long, default_value_t = 0)]
    input_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    mds: MdsSource,
    /// File of pattern lines to check instead of the configured mode.
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Drop the round-1 masks (negative control; expected to fail).
    #[arg(long)]
    unmasked: bool,
    /// Record file; stdout when absent. The summary goes to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CampaignArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    mds: MdsSource,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn obtain_mds(cfg: &CampaignConfig, src: &MdsSource) -> Result<SearchOutcome> {
    let topo = cfg.topology()?;
    match &src.mds {
        Some(p) => {
            let mds = MdsMatrix::from_text(&read(p)?, src.trust)
                .with_context(|| format!("loading {}", p.display()))?;
            if *mds.topology() != topo {
                bail!(
                    "{} was built for {}, configuration asks for {}",
                    p.display(),
                    mds.topology().header(),
                    topo.header()
                );
            }
            Ok(SearchOutcome { mds, generators: Vec::new(), attempt: 0 })
        }
        None => Ok(find_t_private_mds(&topo, &cfg.search_config())?),
    }
}

fn rates(a: &RatesArgs) -> Result<bool> {
    let cfg = a.cfg.load()?;
    let region = rate_region_raw(cfg.relay_floor, cfg.user_floor, cfg.collusion);
    println!("{region}");
    let topo = match cfg.topology() {
        Ok(t) => t,
        Err(e @ Error::Infeasible { .. }) => {
            println!("reason: {e}");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    let search = find_t_private_mds(&topo, &cfg.search_config())?;
    let keys = deal(&search.mds, cfg.seed);
    let (_, tr) = run_seeded_session(
        &keys,
        cfg.seed,
        &DropoutPattern::full(&topo),
        cfg.selection_policy(),
    )?;
    let c = compare(tr.rates(), &rate_region(&topo));
    println!("{c}");
    Ok(c.pass())
}

fn find_mds(a: &FindMdsArgs) -> Result<bool> {
    let cfg = a.cfg.load()?;
    let s = find_t_private_mds(&cfg.topology()?, &cfg.search_config())?;
    let gens: Vec<String> = s.generators.iter().map(|g| g.to_string()).collect();
    eprintln!("q={} generators={} attempt={}", s.mds.params().q(), gens.join(","), s.attempt);
    emit(a.out.as_deref(), &s.mds.to_text())?;
    Ok(true)
}

fn deal_cmd(a: &DealArgs) -> Result<bool> {
    let cfg = a.cfg.load()?;
    let s = obtain_mds(&cfg, &a.mds)?;
    emit(a.out.as_deref(), &deal(&s.mds, cfg.seed).to_text())?;
    Ok(true)
}

fn simulate(a: &SimulateArgs) -> Result<bool> {
    let cfg = a.cfg.load()?;
    let topo = cfg.topology()?;
    let s = obtain_mds(&cfg, &a.mds)?;
    let keys = match &a.keys {
        Some(p) => KeyMaterial::from_text(&read(p)?, &s.mds)
            .with_context(|| format!("loading {}", p.display()))?,
        None => deal(&s.mds, cfg.seed),
    };
    let pattern = match (&a.pattern, a.pattern_id) {
        (Some(line), _) => DropoutPattern::parse_line(line)?,
        (None, Some(id)) => dropout::enumerate(&topo, dropout::DEFAULT_ENUMERATION_CAP)?
            .nth(id as usize)
            .with_context(|| format!("pattern id {id} is past the {} admissible patterns", dropout::count(&topo)))?,
        (None, None) => DropoutPattern::full(&topo),
    };
    dropout::check(&topo, &pattern)?;
    let (w, tr) = run_seeded_session(&keys, a.input_seed, &pattern, cfg.selection_policy())?;
    emit(a.out.as_deref(), &tr.to_text())?;
    let ok = tr.decoded.as_deref() == Some(&plaintext_sum(s.mds.params(), &w, &pattern.s1())[..]);
    eprintln!("decode {}", if ok { "correct" } else { "WRONG" });
    Ok(ok)
}

fn verify(a: &VerifyArgs) -> Result<bool> {
    let cfg = a.cfg.load()?;
    let topo = cfg.topology()?;
    let s = obtain_mds(&cfg, &a.mds)?;
    let patterns: Vec<(u64, DropoutPattern)> = match &a.patterns {
        Some(p) => {
            let text = read(p)?;
            let mut v = Vec::new();
            for (i, line) in hsa_core::text::content_lines(&text).enumerate() {
                let pat = DropoutPattern::parse_line(line)?;
                dropout::check(&topo, &pat).with_context(|| format!("pattern line {}", i + 1))?;
                v.push((i as u64, pat));
            }
            v
        }
        None => campaign_patterns(&topo, &cfg).0,
    };
    let sweep_cfg = SweepConfig {
        colluder_cap: cfg.colluder_cap,
        seed: cfg.seed,
        policy: cfg.selection_policy(),
        opts: ViewOptions { masked: !a.unmasked, ..ViewOptions::default() },
    };
    let audit = audit_matrix(&s.mds, cfg.colluder_cap, cfg.seed);
    let lemma2 = check_lemma2(&s.mds);
    let result = sweep(&s.mds, patterns, &sweep_cfg);
    let mut buf = Vec::new();
    write_report(&mut buf, Some(&audit), Some(&lemma2), &result)?;
    match &a.out {
        Some(p) => fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(&buf)?,
    }
    let ok = audit.pass() && lemma2.pass() && result.pass();
    eprintln!(
        "patterns={} relay_checks={} relay_failures={} server_checks={} server_failures={}",
        result.patterns.len(),
        result.relay_checks(),
        result.relay_failures(),
        result.server_checks(),
        result.server_failures()
    );
    if let Some((_, r)) = result.first_failure() {
        eprintln!("first_failure {r}");
    }
    eprintln!("result={}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn campaign(a: &CampaignArgs) -> Result<bool> {
    let cfg = a.cfg.load()?;
    let s = obtain_mds(&cfg, &a.mds)?;
    let outcome = run_campaign_with(&cfg, s)?;
    outcome
        .write_reports(&a.out)
        .with_context(|| format!("writing reports to {}", a.out.display()))?;
    print!("{}", outcome.summary());
    Ok(outcome.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Rates(a) => rates(a),
        Command::FindMds(a) => find_mds(a),
        Command::Deal(a) => deal_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::VerifySecurity(a) => verify(a),
        Command::Campaign(a) => campaign(a),
    };
    match r {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
