//! Algorithm selectors as written in configs and on the command line.

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Error, Result};
use dcbrec_core::BiExponential;

/// One entry of `run.algorithms`. A missing parameter means "tune it": HHP
/// and OHHP take the grid value with the lowest ranking score, DCB takes the
/// calibrated curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgoRequest {
    Pbs,
    Hts,
    Hhp(Option<f64>),
    Ohhp(Option<f64>),
    Dcb(Option<BiExponential>),
}

impl AlgoRequest {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Pbs => "PBS",
            Self::Hts => "HTS",
            Self::Hhp(_) => "HHP",
            Self::Ohhp(_) => "OHHP",
            Self::Dcb(_) => "DCB",
        }
    }
}

fn number(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| anyhow!("{what} {s:?} is not a number"))?;
    if !v.is_finite() {
        bail!("{what} must be finite");
    }
    Ok(v)
}

impl FromStr for AlgoRequest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once('=') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s, None),
        };
        let req = match (head.to_ascii_lowercase().as_str(), arg) {
            ("pbs", None) => Self::Pbs,
            ("hts", None) => Self::Hts,
            ("hhp", None) => Self::Hhp(None),
            ("hhp", Some(a)) => {
                let l = number(a, "HHP lambda")?;
                if !(0.0..=1.0).contains(&l) {
                    bail!("HHP lambda {l} outside [0, 1]");
                }
                Self::Hhp(Some(l))
            }
            ("ohhp", None) => Self::Ohhp(None),
            ("ohhp", Some(a)) => {
                let g = number(a, "OHHP gamma")?;
                if g < 0.0 {
                    bail!("OHHP gamma {g} must be >= 0");
                }
                Self::Ohhp(Some(g))
            }
            ("dcb", None) => Self::Dcb(None),
            ("dcb", Some(a)) => Self::Dcb(Some(match a.to_ascii_lowercase().as_str() {
                "movielens" => BiExponential::MOVIELENS,
                "netflix" => BiExponential::NETFLIX,
                "rym" => BiExponential::RYM,
                _ => {
                    let parts: Vec<&str> = a.split(',').collect();
                    if parts.len() != 4 {
                        bail!("DCB needs four coefficients a,b,c,d, got {a:?}");
                    }
                    let mut p = [0.0; 4];
                    for (slot, part) in p.iter_mut().zip(parts) {
                        *slot = number(part, "DCB coefficient")?;
                    }
                    BiExponential::from_array(p)
                }
            })),
            _ => bail!(
                "unknown algorithm {s:?} (expected pbs, hts, hhp[=l], ohhp[=g], dcb[=a,b,c,d])"
            ),
        };
        Ok(req)
    }
}

impl fmt::Display for AlgoRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pbs => write!(f, "pbs"),
            Self::Hts => write!(f, "hts"),
            Self::Hhp(None) => write!(f, "hhp"),
            Self::Hhp(Some(l)) => write!(f, "hhp={l}"),
            Self::Ohhp(None) => write!(f, "ohhp"),
            Self::Ohhp(Some(g)) => write!(f, "ohhp={g}"),
            Self::Dcb(None) => write!(f, "dcb"),
            Self::Dcb(Some(c)) => write!(f, "dcb={},{},{},{}", c.a, c.b, c.c, c.d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        assert_eq!("PBS".parse::<AlgoRequest>().unwrap(), AlgoRequest::Pbs);
        assert_eq!(
            "hhp=0.2".parse::<AlgoRequest>().unwrap(),
            AlgoRequest::Hhp(Some(0.2))
        );
        assert_eq!(
            "ohhp".parse::<AlgoRequest>().unwrap(),
            AlgoRequest::Ohhp(None)
        );
        assert_eq!(
            "dcb=movielens".parse::<AlgoRequest>().unwrap(),
            AlgoRequest::Dcb(Some(BiExponential::MOVIELENS))
        );
        assert_eq!(
            "dcb=1, 2, 3, 4".parse::<AlgoRequest>().unwrap(),
            AlgoRequest::Dcb(Some(BiExponential::new(1.0, 2.0, 3.0, 4.0)))
        );
    }

    #[test]
    fn rejects_bad_forms() {
        for bad in [
            "",
            "pbs=1",
            "hhp=1.5",
            "ohhp=-1",
            "dcb=1,2,3",
            "hhp=x",
            "knn",
        ] {
            assert!(bad.parse::<AlgoRequest>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "pbs",
            "hts",
            "hhp",
            "hhp=0.35",
            "ohhp=1.5",
            "dcb",
            "dcb=0.03,2.48,4.95e-7,14.05",
        ] {
            let r: AlgoRequest = s.parse().unwrap();
            assert_eq!(r.to_string().parse::<AlgoRequest>().unwrap(), r);
        }
    }
}
