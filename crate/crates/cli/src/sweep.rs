//! Parsers for comma-separated sweep lists.

use std::fmt;

/// How the decays of one sweep point are chosen.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum ASpec {
    Constant(f64),
    /// Seeded uniform draws from `(lo, hi]`.
    Range(f64, f64),
}

impl ASpec {
    pub fn max(self) -> f64 {
        match self {
            ASpec::Constant(a) => a,
            ASpec::Range(_, hi) => hi,
        }
    }
}

impl fmt::Display for ASpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ASpec::Constant(a) => write!(f, "{a}"),
            ASpec::Range(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

fn parse_finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn split(s: &str) -> Result<Vec<&str>, String> {
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    if items.iter().any(|i| i.is_empty()) {
        return Err(format!("`{s}` has an empty list entry"));
    }
    Ok(items)
}

/// A list of positive integers, e.g. `64,256,1024`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dims(pub Vec<usize>);

/// A list of decay specs, e.g. `0.9,0.5..0.99`.
#[derive(Clone, Debug, PartialEq)]
pub struct ASpecs(pub Vec<ASpec>);

pub fn parse_dims(s: &str) -> Result<Dims, String> {
    split(s)?
        .into_iter()
        .map(|item| match item.parse::<usize>() {
            Ok(0) => Err("dimensions must be at least 1".to_string()),
            Ok(v) => Ok(v),
            Err(_) => Err(format!("`{item}` is not a positive integer")),
        })
        .collect::<Result<_, _>>()
        .map(Dims)
}

/// `lo..hi` with `0 ≤ lo < hi`.
pub fn parse_a_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("`{s}` is not a range `lo..hi`"))?;
    let (lo, hi) = (parse_finite(lo)?, parse_finite(hi)?);
    if !(0.0 <= lo && lo < hi) {
        return Err(format!("range `{s}` needs 0 <= lo < hi"));
    }
    Ok((lo, hi))
}

pub fn parse_a_specs(s: &str) -> Result<ASpecs, String> {
    split(s)?
        .into_iter()
        .map(|item| {
            if item.contains("..") {
                let (lo, hi) = parse_a_range(item)?;
                Ok(ASpec::Range(lo, hi))
            } else {
                let a = parse_finite(item)?;
                if a < 0.0 {
                    return Err(format!("decay `{item}` is negative"));
                }
                Ok(ASpec::Constant(a))
            }
        })
        .collect::<Result<_, _>>()
        .map(ASpecs)
}
