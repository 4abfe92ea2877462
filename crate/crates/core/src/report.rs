//! Shared serialization helpers for emitted reports.

use std::io::Write;

use crate::error::Result;

/// Tool name and version embedded in every emitted file.
pub const TOOL: &str = concat!("regnn ", env!("CARGO_PKG_VERSION"));

/// Provenance line for CSV headers: `regnn 0.1.0 seed=1 ...`.
pub fn provenance(seed: u64, extra: &[(&str, String)]) -> String {
    let mut s = format!("{TOOL} seed={seed}");
    for (k, v) in extra {
        s.push_str(&format!(" {k}={v}"));
    }
    s
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(mut out: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// JSON has no infinity; encode non-finite reals as strings.
pub mod serde_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?).map_err(serde::de::Error::custom)
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn from_repr(r: Repr) -> Result<f64, String> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(format!("invalid real `{other}`")),
            },
        }
    }

    pub(crate) fn vec_to(v: &[f64]) -> Vec<impl Serialize> {
        v.iter().map(|&x| to_repr(x)).collect()
    }

    pub(crate) fn vec_from<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| from_repr(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod serde_inf_vec {
    use serde::{Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        super::serde_inf::vec_to(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        super::serde_inf::vec_from(d)
    }
}

/// Significance stars: `***` p<0.001, `**` p<0.01, `*` p<0.05.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.04), "*");
        assert_eq!(stars(0.009), "**");
        assert_eq!(stars(0.0009), "***");
        assert_eq!(stars(0.2), "");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn infinite_vif_round_trips() {
        let r = crate::linear::VifReport {
            names: vec!["a".into(), "b".into()],
            vif: vec![f64::INFINITY, 1.5],
            max_vif: f64::INFINITY,
            centered: true,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\""), "{s}");
        let back: crate::linear::VifReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
