//! Complex numbers on disk are `[re, im]` pairs.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn to_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn from_pair(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &[Vec<C64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = m
            .iter()
            .map(|row| row.iter().copied().map(to_pair).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<C64>>, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|row| row.into_iter().map(from_pair).collect())
            .collect())
    }
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        to_pair(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        Ok(from_pair(<[f64; 2]>::deserialize(d)?))
    }
}
