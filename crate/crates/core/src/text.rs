//! Helpers shared by the line-oriented text formats.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};
use crate::params::{SystemParams, Topology};

/// Non-blank lines with `#` comments removed.
pub fn content_lines(s: &str) -> impl Iterator<Item = &str> {
    s.lines()
        .map(|l| l.split_once('#').map_or(l, |(a, _)| a).trim())
        .filter(|l| !l.is_empty())
}

/// Splits `k1=v1 k2=v2 ...` into a map.
pub fn parse_kv(line: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for tok in line.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value, got `{tok}`")))?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Parse(format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}

pub fn get_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    map.get(key)
        .ok_or_else(|| Error::Parse(format!("missing `{key}`")))?
        .parse()
        .map_err(|_| Error::Parse(format!("`{key}` is not a non-negative integer")))
}

pub fn get_u64(map: &BTreeMap<String, String>, key: &str) -> Result<u64> {
    map.get(key)
        .ok_or_else(|| Error::Parse(format!("missing `{key}`")))?
        .parse()
        .map_err(|_| Error::Parse(format!("`{key}` is not a non-negative integer")))
}

/// Parses the common `U=.. V=.. U0=.. V0=.. T=.. q=..` header line.
pub fn parse_params(line: &str) -> Result<SystemParams> {
    let kv = parse_kv(line)?;
    let topo = Topology::new(
        get_usize(&kv, "U")?,
        get_usize(&kv, "V")?,
        get_usize(&kv, "U0")?,
        get_usize(&kv, "V0")?,
        get_usize(&kv, "T")?,
    )?;
    SystemParams::new(topo, get_u64(&kv, "q")?)
}

pub fn parse_symbols(field: &PrimeField, line: &str) -> Result<Vec<Fe>> {
    line.split_whitespace()
        .map(|t| {
            let v: u64 = t.parse().map_err(|_| Error::Parse(format!("bad symbol `{t}`")))?;
            field.checked(v)
        })
        .collect()
}

pub fn format_symbols(v: &[Fe]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let p = parse_params("U=3 V=3 U0=2 V0=2 T=2 q=23").unwrap();
        assert_eq!(p.header(), "U=3 V=3 U0=2 V0=2 T=2 q=23");
        assert!(parse_params("U=3 V=3 U0=2 V0=2 q=23").is_err());
        assert!(parse_params("U=3 V=3 U0=1 V0=2 T=2 q=23").is_err());
    }

    #[test]
    fn comments_and_symbols() {
        let lines: Vec<&str> = content_lines("# hi\n\n1 2 # tail\n 3\n").collect();
        assert_eq!(lines, vec!["1 2", "3"]);
        let f = PrimeField::new(5).unwrap();
        assert_eq!(parse_symbols(&f, "0 4").unwrap(), vec![Fe(0), Fe(4)]);
        assert!(parse_symbols(&f, "5").is_err());
    }
}
