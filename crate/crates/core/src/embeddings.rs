//! Word-embedding table loaded from a word-per-line text file, with a fixed
//! out-of-vocabulary vector.

use std::collections::HashMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

const OOV_SEED: u64 = 0x5eed_00f;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    oov_vector: Vec<f64>,
    /// When set, unseen words get a per-word vector derived from this seed
    /// instead of the shared OOV vector. Used for corpora without a shipped
    /// embedding file.
    hashed_seed: Option<u64>,
}

fn seeded_uniform(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen_range(-0.05..0.05)).collect()
}

impl EmbeddingTable {
    /// Loads `token v1 v2 ... vD` lines. The first line fixes the dimension;
    /// duplicate tokens keep their first occurrence.
    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut dimension = 0usize;
        let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
        for (idx, line) in content.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| Error::parse(path, line_no, "empty line"))?;
            let values: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| {
                        Error::parse(path, line_no, format!("bad component {p:?}"))
                    })
                })
                .collect::<Result<_>>()?;
            if values.is_empty() {
                return Err(Error::parse(path, line_no, "no vector components"));
            }
            if dimension == 0 {
                dimension = values.len();
            } else if values.len() != dimension {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {} components, found {}", dimension, values.len()),
                ));
            }
            vectors.entry(token.to_string()).or_insert(values);
        }
        if dimension == 0 {
            return Err(Error::parse(path, 0, "no embeddings in file"));
        }
        Ok(EmbeddingTable {
            dimension,
            vectors,
            oov_vector: seeded_uniform(OOV_SEED, dimension),
            hashed_seed: None,
        })
    }

    /// A table with no stored vocabulary: every word maps to a deterministic
    /// vector derived from the word and `seed`.
    pub fn hashed(dimension: usize, seed: u64) -> Self {
        EmbeddingTable {
            dimension,
            vectors: HashMap::new(),
            oov_vector: seeded_uniform(OOV_SEED, dimension),
            hashed_seed: Some(seed),
        }
    }

    pub fn from_vectors(dimension: usize, vectors: HashMap<String, Vec<f64>>) -> Self {
        EmbeddingTable {
            dimension,
            vectors,
            oov_vector: seeded_uniform(OOV_SEED, dimension),
            hashed_seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn lookup(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.vectors.get(word) {
            return v.clone();
        }
        if let Some(seed) = self.hashed_seed {
            let mut hasher = std::collections::hash_map::DefaultHasher::new();
            word.hash(&mut hasher);
            // scale up so token identity carries more signal than the OOV range
            return seeded_uniform(seed ^ hasher.finish(), self.dimension)
                .into_iter()
                .map(|v| v * 10.0)
                .collect();
        }
        self.oov_vector.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn loads_fixture_and_handles_oov() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "hello 0.1 0.2 0.3 0.4").unwrap();
        writeln!(f, "world 1 2 3 4").unwrap();
        writeln!(f, "again -1 -2 -3 -4").unwrap();
        let table = EmbeddingTable::load(f.path()).unwrap();
        assert_eq!(table.dimension, 4);
        assert_eq!(table.len(), 3);
        assert_eq!(table.lookup("world"), vec![1.0, 2.0, 3.0, 4.0]);
        let oov1 = table.lookup("zzz");
        let oov2 = table.lookup("zzz");
        assert_eq!(oov1, oov2);
        assert!(oov1.iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn duplicate_token_first_wins() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "w 1 1").unwrap();
        writeln!(f, "w 2 2").unwrap();
        let table = EmbeddingTable::load(f.path()).unwrap();
        assert_eq!(table.lookup("w"), vec![1.0, 1.0]);
    }

    #[test]
    fn wrong_arity_errors_at_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a 1 2 3").unwrap();
        writeln!(f, "b 1 2").unwrap();
        let err = EmbeddingTable::load(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn hashed_table_is_deterministic_per_word() {
        let table = EmbeddingTable::hashed(8, 7);
        assert_eq!(table.lookup("sad"), table.lookup("sad"));
        assert_ne!(table.lookup("sad"), table.lookup("glad"));
        assert_eq!(table.lookup("sad").len(), 8);
    }
}
