use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{preprocess, Vocabulary};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::month::Month;

use super::forward::Projected;
use super::params::{Dims, LstmParams};

pub const SNAPSHOT_VERSION: &str = "1";

/// Where a snapshot's embedding table came from, so it can be rebuilt for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub dim: usize,
    pub seed: u64,
    /// Vector file, if any; `None` means every row came from the seeded initializer.
    pub file: Option<PathBuf>,
}

impl EmbeddingSource {
    pub fn build(&self, vocab: &Vocabulary) -> Result<EmbeddingTable> {
        match &self.file {
            Some(path) => EmbeddingTable::load(path, vocab, self.dim, self.seed),
            None => Ok(EmbeddingTable::random(vocab, self.dim, self.seed)),
        }
    }
}

/// Parameters trained on the articles of `window` (first and last month, inclusive), bound to
/// the vocabulary and embedding table they were trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    pub params: LstmParams,
    pub window: (Month, Month),
    pub vocab: Vocabulary,
    pub vocab_hash: String,
    pub embed_hash: String,
    pub embedding: EmbeddingSource,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    version: String,
    dims: Dims,
    window_label: [Month; 2],
    vocab_hash: String,
    embed_hash: String,
    embedding: EmbeddingSource,
    vocabulary: Vec<String>,
    params: IndexMap<String, Vec<f64>>,
}

impl ModelSnapshot {
    pub fn new(
        params: LstmParams,
        window: (Month, Month),
        vocab: &Vocabulary,
        embeddings: &EmbeddingTable,
        embedding: EmbeddingSource,
    ) -> Self {
        ModelSnapshot {
            params,
            window,
            vocab_hash: vocab.digest(),
            embed_hash: embeddings.digest(),
            vocab: vocab.clone(),
            embedding,
        }
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.window.0, self.window.1)
    }

    /// Confirms the snapshot was trained against exactly this vocabulary and table.
    pub fn verify(&self, vocab: &Vocabulary, embeddings: &EmbeddingTable) -> Result<()> {
        if vocab.digest() != self.vocab_hash {
            return Err(Error::SnapshotMismatch(format!("vocabulary digest differs for {}", self.label())));
        }
        if embeddings.digest() != self.embed_hash {
            return Err(Error::SnapshotMismatch(format!("embedding digest differs for {}", self.label())));
        }
        Ok(())
    }

    /// Rebuilds the embedding table from the recorded source and checks both digests.
    pub fn embeddings(&self) -> Result<EmbeddingTable> {
        let table = self.embedding.build(&self.vocab)?;
        self.verify(&self.vocab, &table)?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = SnapshotFile {
            version: SNAPSHOT_VERSION.to_string(),
            dims: self.params.dims(),
            window_label: [self.window.0, self.window.1],
            vocab_hash: self.vocab_hash.clone(),
            embed_hash: self.embed_hash.clone(),
            embedding: self.embedding.clone(),
            vocabulary: self.vocab.words().to_vec(),
            params: self
                .params
                .named_blocks()
                .into_iter()
                .map(|(k, v)| (k, v.to_vec()))
                .collect(),
        };
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer(&mut w, &file).map_err(|e| Error::io(path, e.into()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let file: SnapshotFile = serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let bad = |message: String| Error::Parse {
            path: path.into(),
            line: 0,
            message,
        };
        if file.version != SNAPSHOT_VERSION {
            return Err(bad(format!("unsupported snapshot version {:?}", file.version)));
        }
        let vocab = Vocabulary::from_words(file.vocabulary)?;
        if vocab.digest() != file.vocab_hash {
            return Err(bad("vocabulary does not match vocab_hash".into()));
        }
        if vocab.output_size() != file.dims.d_out {
            return Err(bad("vocabulary size does not match output dimension".into()));
        }
        let mut data = Vec::with_capacity(file.dims.param_count());
        let template = LstmParams::zeros(file.dims);
        for (name, block) in template.named_blocks() {
            let values = file
                .params
                .get(&name)
                .ok_or_else(|| bad(format!("missing parameter block {name}")))?;
            if values.len() != block.len() {
                return Err(bad(format!("block {name} has {} values, expected {}", values.len(), block.len())));
            }
            data.extend_from_slice(values);
        }
        let params = LstmParams::from_vec(file.dims, data).expect("length checked per block");
        if !params.is_finite() {
            return Err(Error::NonFinite("snapshot parameters"));
        }
        Ok(ModelSnapshot {
            params,
            window: (file.window_label[0], file.window_label[1]),
            vocab,
            vocab_hash: file.vocab_hash,
            embed_hash: file.embed_hash,
            embedding: file.embedding,
        })
    }
}

/// The `k` most probable next words after `prefix` (raw text, preprocessed like articles),
/// in descending probability with ties broken by vocabulary order. UNK is reported as `"UNK"`.
pub fn next_word_distribution(
    snapshot: &ModelSnapshot,
    embeddings: &EmbeddingTable,
    prefix: &str,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    snapshot.verify(&snapshot.vocab, embeddings)?;
    let ids: Vec<_> = preprocess(prefix).iter().map(|t| snapshot.vocab.id(t)).collect();
    if ids.is_empty() {
        return Err(Error::Empty("prefix has no tokens"));
    }
    let model = Projected::new(&snapshot.params, embeddings)?;
    let p = model.next_distribution(&ids)?;
    let mut ranked: Vec<usize> = (0..p.len()).collect();
    ranked.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|i| {
            let word = snapshot.vocab.word(i as u32).expect("output index within vocabulary");
            (word.to_string(), p[i])
        })
        .collect())
}
