//! Serde adapters writing reals as shortest round-trip decimal strings.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn text(x: f64) -> String {
    format!("{x:?}")
}

fn parse<E: serde::de::Error>(s: &str) -> Result<f64, E> {
    let v: f64 = s.parse().map_err(|_| E::custom(format!("invalid real {s:?}")))?;
    if !v.is_finite() {
        return Err(E::custom(format!("non-finite real {s:?}")));
    }
    Ok(v)
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| text(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<String>::deserialize(d)?.iter().map(|s| parse(s)).collect()
    }
}

pub mod opt_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.iter().map(|x| text(*x)).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        Option::<Vec<String>>::deserialize(d)?
            .map(|v| v.iter().map(|s| parse(s)).collect())
            .transpose()
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|row| row.iter().map(|x| text(*x)).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<String>>::deserialize(d)?
            .iter()
            .map(|row| row.iter().map(|s| parse(s)).collect())
            .collect()
    }
}

pub mod map {
    use super::*;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|(k, row)| (k, row.iter().map(|x| text(*x)).collect::<Vec<_>>()))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, Vec<f64>>, D::Error> {
        BTreeMap::<String, Vec<String>>::deserialize(d)?
            .into_iter()
            .map(|(k, row)| Ok((k, row.iter().map(|s| parse(s)).collect::<Result<_, _>>()?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact() {
        for x in [0.1, -0.0, 1e-300, f64::MIN_POSITIVE / 4.0, 1.0 / 3.0, 12345.678e200] {
            let back: f64 = parse::<serde_json::Error>(&text(x)).unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
        assert!(parse::<serde_json::Error>("NaN").is_err());
    }
}
