//! Frozen word vectors for the vocabulary, including the UNK row and an all-zero pad row.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{TokenId, Vocabulary, UNK_LABEL};
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 100;
const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: usize,
    data: Vec<f64>,
}

/// Vector for a word absent from the embedding file. Seeded by `(seed, word)` so a word gets the
/// same vector regardless of which vocabulary it appears in.
fn fallback_vector(word: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(word.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..dim).map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE)).collect()
}

impl EmbeddingTable {
    /// Every word drawn from the seeded uniform initializer; used when no vector file is given.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        Self::assemble(vocab, dim, seed, &HashMap::new())
    }

    fn assemble(vocab: &Vocabulary, dim: usize, seed: u64, found: &HashMap<String, Vec<f64>>) -> Self {
        let rows = vocab.table_rows();
        let mut data = Vec::with_capacity(rows * dim);
        for w in vocab.words() {
            match found.get(w) {
                Some(v) => data.extend_from_slice(v),
                None => data.extend(fallback_vector(w, dim, seed)),
            }
        }
        // the reserved label cannot collide with a vocabulary word's vector since words are lowercase
        data.extend(fallback_vector(UNK_LABEL, dim, seed));
        data.extend(std::iter::repeat_n(0.0, dim));
        EmbeddingTable { dim, rows, data }
    }

    /// Reads a whitespace-separated text file of `word v1 .. v_dim` lines (GloVe layout).
    pub fn load(path: &Path, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut found = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            let parse_err = |message: String| Error::Parse {
                path: path.into(),
                line: n + 1,
                message,
            };
            if values.len() != dim {
                return Err(parse_err(format!(
                    "expected {dim} values for {word:?}, found {}",
                    values.len()
                )));
            }
            if !vocab.contains(word) {
                continue;
            }
            let vector = values
                .iter()
                .map(|v| match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(parse_err(format!("bad value {v:?}"))),
                })
                .collect::<Result<Vec<f64>>>()?;
            found.entry(word.to_string()).or_insert(vector);
        }
        Ok(Self::assemble(vocab, dim, seed, &found))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn lookup(&self, id: TokenId) -> Result<&[f64]> {
        let i = id as usize;
        if i >= self.rows {
            return Err(Error::TokenOutOfRange { id: i, rows: self.rows });
        }
        Ok(self.row(i))
    }

    /// Unchecked row access for the model's inner loops.
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// SHA-256 over the dimension and every entry's bit pattern.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"embed-v1\n");
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.rows as u64).to_le_bytes());
        for x in &self.data {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_words(words.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn write_file(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn reads_rows_from_file() {
        let vals: Vec<f64> = (0..100).map(|i| i as f64 / 1000.0 - 0.03).collect();
        let line = format!("a {}", vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
        let f = write_file(&[line.clone()]);
        let v = vocab(&["a", "b"]);
        let t = EmbeddingTable::load(f.path(), &v, 100, 7).unwrap();
        // independent parse of the same line
        let reference: Vec<f64> = line.split(' ').skip(1).map(|s| s.parse().unwrap()).collect();
        assert_eq!(t.lookup(v.id("a")).unwrap(), &reference[..]);
        assert_eq!(t.rows(), v.len() + 2);
    }

    #[test]
    fn missing_words_are_seeded() {
        let v = vocab(&["a", "b"]);
        let t1 = EmbeddingTable::random(&v, 10, 3);
        let t2 = EmbeddingTable::random(&v, 10, 3);
        let t3 = EmbeddingTable::random(&v, 10, 4);
        assert_eq!(t1, t2);
        assert_ne!(t1, t3);
        assert!(t1.lookup(v.id("b")).unwrap().iter().all(|x| x.abs() <= 0.05));
        assert_eq!(t1.lookup(v.unk_id()).unwrap(), t1.lookup(v.unk_id()).unwrap());
        // independent of vocabulary layout
        let other = vocab(&["zz", "b"]);
        let t4 = EmbeddingTable::random(&other, 10, 3);
        assert_eq!(t1.lookup(v.id("b")).unwrap(), t4.lookup(other.id("b")).unwrap());
    }

    #[test]
    fn pad_row_is_zero() {
        let v = vocab(&["a"]);
        let t = EmbeddingTable::random(&v, 100, 1);
        assert!(t.lookup(v.pad_id()).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn errors() {
        let v = vocab(&["a"]);
        let f = write_file(&["a 0.1 0.2".into(), "b 0.1".into()]);
        let err = EmbeddingTable::load(f.path(), &v, 2, 0).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(EmbeddingTable::load(Path::new("/nonexistent/glove.txt"), &v, 2, 0).is_err());
        let t = EmbeddingTable::random(&v, 2, 0);
        assert!(t.lookup(3).is_err());
    }
}
