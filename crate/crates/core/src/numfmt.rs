//! JSON adapters for SNR fields that may be infinite.
//!
//! `+inf` dB is the noiseless sentinel (zero noise variance). JSON has no
//! infinity literal, so these adapters write finite values as numbers and
//! infinities as the strings `"inf"` / `"-inf"`.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

fn encode(v: f64) -> NumOrStr {
    if v == f64::INFINITY {
        NumOrStr::Str("inf".to_string())
    } else if v == f64::NEG_INFINITY {
        NumOrStr::Str("-inf".to_string())
    } else {
        NumOrStr::Num(v)
    }
}

fn decode<E: DeError>(v: NumOrStr) -> Result<f64, E> {
    match v {
        NumOrStr::Num(x) => Ok(x),
        NumOrStr::Str(s) => match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(E::custom(format!("expected a number, \"inf\" or \"-inf\", got {other:?}"))),
        },
    }
}

pub mod single {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(NumOrStr::deserialize(d)?)
    }
}

pub mod pair {
    use super::*;

    pub fn serialize<S: Serializer>(v: &(f64, f64), s: S) -> Result<S::Ok, S::Error> {
        (encode(v.0), encode(v.1)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(f64, f64), D::Error> {
        let (a, b) = <(NumOrStr, NumOrStr)>::deserialize(d)?;
        Ok((decode(a)?, decode(b)?))
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| encode(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<NumOrStr>::deserialize(d)?.into_iter().map(decode).collect()
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Probe {
        #[serde(with = "super::single")]
        snr: f64,
        #[serde(with = "super::pair")]
        range: (f64, f64),
        #[serde(with = "super::vec")]
        points: Vec<f64>,
    }

    #[test]
    fn infinities_survive_json() {
        let p = Probe {
            snr: f64::INFINITY,
            range: (f64::NEG_INFINITY, 10.5),
            points: vec![0.0, f64::INFINITY, 20.0],
        };
        let json = serde_json::to_string(&p).unwrap();
        let back: Probe = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
        assert!(json.contains("\"inf\""));
        assert!(serde_json::from_str::<Probe>(r#"{"snr":"huge","range":[0,1],"points":[]}"#).is_err());
    }
}
