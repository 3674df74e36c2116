//! Unsupervised static embeddings trained from scratch with explicit
//! gradients: biased-random-walk skip-gram and complex-rotation KG embedding.

pub mod rotate;
pub mod skipgram;
pub mod walk;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense vectors keyed by node key. Complex vectors are stored as
/// interleaved (re, im) pairs, so `width() == 2 * dim` for them.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub model: String,
    pub dim: usize,
    pub complex: bool,
    pub seed: u64,
    pub view_fingerprint: String,
    pub vectors: BTreeMap<String, Vec<f64>>,
    /// Unit-modulus relation rotations (rotation model only), interleaved.
    pub relation_phases: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: String,
    dim: usize,
    complex: bool,
    seed: u64,
    view_fingerprint: String,
    keys: Vec<String>,
    relations: Vec<String>,
}

const MAGIC: &[u8; 8] = b"RCEMB01\n";

impl EmbeddingTable {
    pub fn new(model: impl Into<String>, dim: usize, complex: bool, seed: u64, view_fingerprint: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            dim,
            complex,
            seed,
            view_fingerprint: view_fingerprint.into(),
            vectors: BTreeMap::new(),
            relation_phases: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        if self.complex {
            2 * self.dim
        } else {
            self.dim
        }
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.vectors
            .values()
            .chain(self.relation_phases.values())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Magic, `u64` header length, JSON header, then little-endian `f64`
    /// vectors in key order followed by relation phases in name order.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            model: self.model.clone(),
            dim: self.dim,
            complex: self.complex,
            seed: self.seed,
            view_fingerprint: self.view_fingerprint.clone(),
            keys: self.vectors.keys().cloned().collect(),
            relations: self.relation_phases.keys().cloned().collect(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for v in self.vectors.values().chain(self.relation_phases.values()) {
            for x in v {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidInput("not an embedding table file".into()));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut table = EmbeddingTable::new(header.model, header.dim, header.complex, header.seed, header.view_fingerprint);
        let width = table.width();
        let read_vec = |input: &mut R| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(width);
            let mut b = [0u8; 8];
            for _ in 0..width {
                input.read_exact(&mut b)?;
                v.push(f64::from_le_bytes(b));
            }
            Ok(v)
        };
        for k in header.keys {
            let v = read_vec(&mut input)?;
            table.vectors.insert(k, v);
        }
        for r in header.relations {
            let v = read_vec(&mut input)?;
            table.relation_phases.insert(r, v);
        }
        Ok(table)
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let mut t = EmbeddingTable::new("rotate", 2, true, 9, "abc");
        t.vectors.insert("b".into(), vec![1.0, -2.0, 0.5, 3.25]);
        t.vectors.insert("a".into(), vec![0.0, 1e-300, f64::MAX, -0.0]);
        t.relation_phases.insert("R".into(), vec![1.0, 0.0, 0.0, 1.0]);
        let bytes = t.to_bytes();
        let back = EmbeddingTable::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_foreign_bytes() {
        assert!(EmbeddingTable::read_from(&b"garbage-bytes-here"[..]).is_err());
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(&[1, 2, 3]), mix_seed(&[1, 2, 4]));
        assert_eq!(mix_seed(&[5, 6]), mix_seed(&[5, 6]));
    }
}
