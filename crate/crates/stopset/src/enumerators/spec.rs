use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rma,
    Hcc,
}

/// Reduced fraction in (0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Frac {
    pub num: u64,
    pub den: u64,
}

impl Frac {
    pub const ONE: Frac = Frac { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Frac> {
        if den == 0 || num == 0 || num > den {
            return Err(Error::InvalidSpec(format!("fraction {num}/{den} not in (0,1]")));
        }
        let g = num_integer::gcd(num, den);
        Ok(Frac { num: num / g, den: den / g })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }

    /// `self * n` when integral.
    pub fn times(&self, n: usize) -> Option<usize> {
        let p = self.num as u128 * n as u128;
        if p % self.den as u128 == 0 {
            Some((p / self.den as u128) as usize)
        } else {
            None
        }
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Frac {
    type Err = Error;
    fn from_str(s: &str) -> Result<Frac> {
        let s = s.trim();
        let bad = || Error::InvalidSpec(format!("bad fraction '{s}'"));
        match s.split_once('/') {
            Some((a, b)) => Frac::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                let n: u64 = s.parse().map_err(|_| bad())?;
                Frac::new(n, 1)
            }
        }
    }
}

impl Serialize for Frac {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Frac {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Frac, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            N(u64),
        }
        match Raw::deserialize(d)? {
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::N(n) => Frac::new(n, 1).map_err(serde::de::Error::custom),
        }
    }
}

/// Kind of a constituent encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constituent {
    /// 1/(1+D)
    Accumulator,
    /// 1+D
    Feedforward,
    Identity,
}

/// Declarative description of an RMA or HCC ensemble.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub family: Family,
    pub q: usize,
    /// number of accumulators (RMA only)
    #[serde(rename = "L", default)]
    pub l: usize,
    #[serde(rename = "type", default)]
    pub hcc_type: u8,
    #[serde(default)]
    pub q1: usize,
    #[serde(default = "one")]
    pub lambda: Frac,
    /// branch indices (0-based) sent straight to the channel
    #[serde(default)]
    pub channel_set: Vec<usize>,
}

fn one() -> Frac {
    Frac::ONE
}

impl EnsembleSpec {
    pub fn rma(q: usize, l: usize) -> EnsembleSpec {
        EnsembleSpec { family: Family::Rma, q, l, hcc_type: 0, q1: 0, lambda: Frac::ONE, channel_set: vec![] }
    }

    pub fn rma_punctured(q: usize, l: usize, lambda: Frac) -> EnsembleSpec {
        EnsembleSpec { lambda, ..EnsembleSpec::rma(q, l) }
    }

    pub fn hcc(hcc_type: u8, q: usize) -> EnsembleSpec {
        let q1 = if hcc_type == 2 { 1 } else { 0 };
        let channel_set = if hcc_type >= 3 { vec![0] } else { vec![] };
        EnsembleSpec { family: Family::Hcc, q, l: 0, hcc_type, q1, lambda: Frac::ONE, channel_set }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.q < 2 {
            return bad(format!("q = {} < 2", self.q));
        }
        match self.family {
            Family::Rma => {
                if self.l < 1 {
                    return bad("RMA needs L >= 1".into());
                }
            }
            Family::Hcc => {
                if !(1..=4).contains(&self.hcc_type) {
                    return bad(format!("HCC type {} not in 1..4", self.hcc_type));
                }
                if !self.lambda.is_one() {
                    return bad("puncturing is only defined for RMA".into());
                }
                let want: &[usize] = if self.hcc_type >= 3 { &[0] } else { &[] };
                if self.channel_set != want {
                    return bad(format!("type-{} needs channel set {:?}", self.hcc_type, want));
                }
                if self.hcc_type == 2 && !(1..self.q).contains(&self.q1) {
                    return bad(format!("type-2 needs 1 <= q1 < q, got q1 = {}", self.q1));
                }
            }
        }
        Ok(())
    }

    /// Outer branch constituents of an HCC, in branch order.
    pub fn hcc_branches(&self) -> Vec<Constituent> {
        (0..self.q)
            .map(|i| match self.hcc_type {
                2 if i < self.q1 => Constituent::Feedforward,
                3 if i == 0 => Constituent::Feedforward,
                4 if i == 0 => Constituent::Identity,
                _ => Constituent::Accumulator,
            })
            .collect()
    }

    pub fn to_channel(&self, branch: usize) -> bool {
        self.channel_set.contains(&branch)
    }

    /// Transmitted block length for information length `k`.
    pub fn transmitted_len(&self, k: usize) -> Option<usize> {
        self.lambda.times(self.q * k)
    }

    /// Nominal rate after puncturing.
    pub fn rate(&self) -> f64 {
        1.0 / (self.q as f64 * self.lambda.value())
    }

    /// Short human-readable label, e.g. `RAA q=3` or `HCC type-4 q=4`.
    pub fn label(&self) -> String {
        match self.family {
            Family::Rma => {
                let mut s = format!("R{}", "A".repeat(self.l));
                if self.l > 4 {
                    s = format!("RMA(L={})", self.l);
                }
                let mut s = format!("{s} q={}", self.q);
                if !self.lambda.is_one() {
                    s.push_str(&format!(" lambda={}", self.lambda));
                }
                s
            }
            Family::Hcc => format!("HCC type-{} q={}", self.hcc_type, self.q),
        }
    }

    /// Parses a compact spec string or, failing that, a JSON/TOML file path.
    pub fn load(arg: &str) -> Result<EnsembleSpec> {
        if arg.starts_with("rma:") || arg.starts_with("hcc:") {
            return arg.parse();
        }
        let text = std::fs::read_to_string(arg)
            .map_err(|e| Error::InvalidSpec(format!("cannot read spec file '{arg}': {e}")))?;
        let spec: EnsembleSpec = if arg.ends_with(".toml") {
            toml::from_str(&text).map_err(|e| Error::InvalidSpec(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(e.to_string()))?
        };
        let spec = spec.with_defaults();
        spec.validate()?;
        Ok(spec)
    }

    fn with_defaults(mut self) -> EnsembleSpec {
        if self.family == Family::Hcc {
            if self.hcc_type >= 3 && self.channel_set.is_empty() {
                self.channel_set = vec![0];
            }
            if self.hcc_type == 2 && self.q1 == 0 {
                self.q1 = 1;
            }
        }
        self
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Rma => {
                write!(f, "rma:q={},L={}", self.q, self.l)?;
                if !self.lambda.is_one() {
                    write!(f, ",lambda={}", self.lambda)?;
                }
                Ok(())
            }
            Family::Hcc => {
                write!(f, "hcc:type={},q={}", self.hcc_type, self.q)?;
                if self.hcc_type == 2 {
                    write!(f, ",q1={}", self.q1)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for EnsembleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<EnsembleSpec> {
        let (fam, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidSpec(format!("expected 'rma:' or 'hcc:' prefix in '{s}'")))?;
        let mut spec = match fam.trim() {
            "rma" => EnsembleSpec::rma(0, 0),
            "hcc" => EnsembleSpec::hcc(0, 0),
            other => return Err(Error::InvalidSpec(format!("unknown family '{other}'"))),
        };
        let mut q1 = None;
        for kv in rest.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got '{kv}'")))?;
            let int = |v: &str| -> Result<usize> {
                v.trim().parse().map_err(|_| Error::InvalidSpec(format!("bad integer '{v}' for {k}")))
            };
            match (spec.family, k.trim()) {
                (_, "q") => spec.q = int(v)?,
                (Family::Rma, "L") => spec.l = int(v)?,
                (Family::Rma, "lambda") => spec.lambda = v.parse()?,
                (Family::Hcc, "type") => spec.hcc_type = int(v)? as u8,
                (Family::Hcc, "q1") => q1 = Some(int(v)?),
                (_, key) => return Err(Error::InvalidSpec(format!("unknown key '{key}'"))),
            }
        }
        if spec.family == Family::Hcc {
            let t = spec.hcc_type;
            spec = EnsembleSpec::hcc(t, spec.q);
            if let Some(q1) = q1 {
                if t != 2 {
                    return Err(Error::InvalidSpec("q1 only applies to type-2".into()));
                }
                spec.q1 = q1;
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in ["rma:q=3,L=2", "rma:q=4,L=3,lambda=3/4", "hcc:type=2,q=4,q1=1", "hcc:type=4,q=3"] {
            let spec: EnsembleSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
    }

    #[test]
    fn parse_rejects() {
        for s in ["rma:q=1,L=2", "rma:q=3", "hcc:type=5,q=4", "hcc:type=2,q=2,q1=2", "foo:q=3", "rma:q=3,L=2,x=1"] {
            assert!(s.parse::<EnsembleSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn branch_mix() {
        use Constituent::*;
        assert_eq!(EnsembleSpec::hcc(3, 3).hcc_branches(), vec![Feedforward, Accumulator, Accumulator]);
        assert_eq!(EnsembleSpec::hcc(4, 3).hcc_branches(), vec![Identity, Accumulator, Accumulator]);
        assert!(EnsembleSpec::hcc(4, 3).to_channel(0));
        assert!(!EnsembleSpec::hcc(2, 3).to_channel(0));
    }

    #[test]
    fn json_config() {
        let spec: EnsembleSpec = serde_json::from_str(r#"{"family":"rma","q":4,"L":3,"lambda":"3/4"}"#).unwrap();
        assert_eq!(spec, EnsembleSpec::rma_punctured(4, 3, Frac::new(3, 4).unwrap()));
    }
}
