//! JSON encoding of complex numbers as `[re, im]` pairs.
//!
//! Output is always a two-element array, even for real values. Input also
//! accepts a bare number as a real value.

use num_complex::Complex64;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

#[derive(Deserialize)]
#[serde(untagged)]
enum Repr {
    Real(f64),
    Pair([f64; 2]),
}

impl From<Repr> for Complex64 {
    fn from(r: Repr) -> Self {
        match r {
            Repr::Real(x) => Complex64::new(x, 0.0),
            Repr::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
    Repr::deserialize(d).map(Complex64::from)
}

/// Wrapper usable as a sequence element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Json(pub Complex64);

impl serde::Serialize for Json {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize(&self.0, s)
    }
}

impl<'de> serde::Deserialize<'de> for Json {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        deserialize(d).map(Json)
    }
}

/// `Vec<Complex64>` and fixed-size arrays.
pub mod seq {
    use super::*;

    pub fn serialize<S: Serializer, T: AsRef<[Complex64]>>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        let v = v.as_ref();
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for z in v {
            seq.serialize_element(&Json(*z))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<T, D::Error>
    where
        D: Deserializer<'de>,
        T: TryFrom<Vec<Complex64>>,
    {
        let v: Vec<Json> = Vec::deserialize(d)?;
        let n = v.len();
        T::try_from(v.into_iter().map(|j| j.0).collect())
            .map_err(|_| de::Error::invalid_length(n, &"a complex sequence of the expected length"))
    }
}
