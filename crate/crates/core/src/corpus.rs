//! Article ingestion: filtering, tokenization, vocabulary, id encoding and segmentation.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::month::Month;

pub type TokenId = u32;

/// One record of the raw news feed, as read from JSON Lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArticle {
    pub id: String,
    /// Duplicate-chain key; rewrites of one story share it.
    pub chain_id: String,
    /// `YYYY-MM`; validated by [`filter_articles`].
    pub month: String,
    pub headline: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub exclude_keywords: Vec<String>,
    pub min_words: usize,
    pub v_max: usize,
    pub segment_len: usize,
    /// Score headline tokens ahead of the body. Off by default.
    pub include_headline: bool,
    /// Accepted for configuration compatibility; language detection is not performed.
    pub english_only: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            exclude_keywords: [
                "shh margin trading",
                "nyse",
                "imbalance",
                "machine generated",
                "research alert",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            min_words: 30,
            v_max: 10_000,
            segment_len: 100,
            include_headline: false,
            english_only: true,
        }
    }
}

impl FilterConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_len < 2 {
            return Err(Error::Config("segment_len must be at least 2".into()));
        }
        if self.v_max == 0 {
            return Err(Error::Config("v_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<RawArticle>,
    /// Records that could not be processed (malformed month).
    pub rejected: Vec<Rejection>,
}

/// Applies the ingestion rules: first article per duplicate chain, headline keyword exclusion,
/// and the minimum body length. Input order is preserved.
pub fn filter_articles(raw: &[RawArticle], rules: &FilterConfig) -> FilterOutcome {
    let mut rejected = Vec::new();
    let mut months = Vec::with_capacity(raw.len());
    for r in raw {
        match r.month.parse::<Month>() {
            Ok(m) => months.push(Some(m)),
            Err(e) => {
                rejected.push(Rejection {
                    id: r.id.clone(),
                    reason: e.to_string(),
                });
                months.push(None);
            }
        }
    }

    // earliest (month, id) per chain
    let mut first_in_chain: HashMap<&str, (Month, &str)> = HashMap::new();
    for (r, m) in raw.iter().zip(&months) {
        let Some(m) = *m else { continue };
        first_in_chain
            .entry(r.chain_id.as_str())
            .and_modify(|best| {
                if (m, r.id.as_str()) < *best {
                    *best = (m, r.id.as_str());
                }
            })
            .or_insert((m, r.id.as_str()));
    }

    let keywords: Vec<String> = rules.exclude_keywords.iter().map(|k| k.to_lowercase()).collect();
    let kept = raw
        .iter()
        .zip(&months)
        .filter(|(r, m)| {
            let Some(m) = **m else { return false };
            if first_in_chain[r.chain_id.as_str()] != (m, r.id.as_str()) {
                return false;
            }
            let headline = r.headline.to_lowercase();
            if keywords.iter().any(|k| headline.contains(k.as_str())) {
                return false;
            }
            preprocess(&r.body).len() >= rules.min_words
        })
        .map(|(r, _)| r.clone())
        .collect();

    FilterOutcome { kept, rejected }
}

fn unicode_punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{P}").expect("valid regex"))
}

fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    let mut buf = [0u8; 4];
    unicode_punctuation().is_match(c.encode_utf8(&mut buf))
}

/// Whitespace tokenization with punctuation characters stripped from each token and the
/// result lowercased. Tokens that become empty are dropped, so `"u.s."` yields `"us"`.
pub fn preprocess(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|tok| {
            let stripped: String = tok.chars().filter(|&c| !is_punctuation(c)).collect();
            (!stripped.is_empty()).then(|| stripped.to_lowercase())
        })
        .collect()
}

/// A filtered, tokenized article.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub id: Arc<str>,
    pub month: Month,
    pub tokens: Vec<String>,
}

impl Article {
    pub fn from_raw(raw: &RawArticle, include_headline: bool) -> Result<Self> {
        let month = raw.month.parse()?;
        let mut tokens = if include_headline {
            preprocess(&raw.headline)
        } else {
            Vec::new()
        };
        tokens.extend(preprocess(&raw.body));
        Ok(Article {
            id: raw.id.as_str().into(),
            month,
            tokens,
        })
    }
}

/// Filters raw records and tokenizes the survivors.
pub fn ingest(raw: &[RawArticle], rules: &FilterConfig) -> (Vec<Article>, Vec<Rejection>) {
    let outcome = filter_articles(raw, rules);
    let articles = outcome
        .kept
        .iter()
        .map(|r| Article::from_raw(r, rules.include_headline).expect("month validated by filter"))
        .collect();
    (articles, outcome.rejected)
}

/// The retained words. Ids `0..len()` are words in descending frequency order; `unk_id()` and
/// `pad_id()` follow them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

pub const UNK_LABEL: &str = "UNK";

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as TokenId).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    /// Number of real words (excludes UNK and pad).
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk_id(&self) -> TokenId {
        self.words.len() as TokenId
    }

    pub fn pad_id(&self) -> TokenId {
        self.words.len() as TokenId + 1
    }

    /// Size of the model's output layer: every word plus UNK.
    pub fn output_size(&self) -> usize {
        self.words.len() + 1
    }

    /// Rows in the embedding table: words, UNK, pad.
    pub fn table_rows(&self) -> usize {
        self.words.len() + 2
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> TokenId {
        self.index.get(word).copied().unwrap_or(self.unk_id())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        match id as usize {
            i if i < self.words.len() => Some(&self.words[i]),
            i if i == self.words.len() => Some(UNK_LABEL),
            _ => None,
        }
    }

    /// SHA-256 over the ordered word list; binds snapshots to the vocabulary they were trained on.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"vocab-v1\n");
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for w in &self.words {
            writeln!(out, "{w}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_words(text.lines().filter(|l| !l.is_empty()).map(String::from).collect())
    }
}

/// Keeps the `v_max` most frequent words, breaking frequency ties lexicographically.
pub fn build_vocabulary<'a, I>(articles: I, v_max: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a Article>,
{
    let articles: Vec<&Article> = articles.into_iter().collect();
    let shards: Vec<HashMap<&str, u64>> = articles
        .par_chunks(256)
        .map(|chunk| {
            let mut counts = HashMap::new();
            for a in chunk {
                for t in &a.tokens {
                    *counts.entry(t.as_str()).or_insert(0u64) += 1;
                }
            }
            counts
        })
        .collect();
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for shard in shards {
        for (w, c) in shard {
            *counts.entry(w).or_insert(0) += c;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(v_max);
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w.to_string()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedArticle {
    pub id: Arc<str>,
    pub month: Month,
    pub ids: Vec<TokenId>,
}

/// Maps tokens to ids; out-of-vocabulary words become `unk_id`.
pub fn encode(article: &Article, vocab: &Vocabulary) -> EncodedArticle {
    EncodedArticle {
        id: article.id.clone(),
        month: article.month,
        ids: article.tokens.iter().map(|t| vocab.id(t)).collect(),
    }
}

/// A fixed-length training unit. Positions `valid_len..` hold the pad id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub token_ids: Vec<TokenId>,
    pub valid_len: usize,
    pub article_id: Arc<str>,
    pub position: usize,
}

impl Segment {
    pub fn valid(&self) -> &[TokenId] {
        &self.token_ids[..self.valid_len]
    }
}

/// Chunks an article into `ceil(n / len)` segments, padding the last one.
pub fn segment(article: &EncodedArticle, len: usize, pad_id: TokenId) -> Vec<Segment> {
    assert!(len >= 2, "segment length must be at least 2");
    article
        .ids
        .chunks(len)
        .enumerate()
        .map(|(position, chunk)| {
            let mut token_ids = chunk.to_vec();
            token_ids.resize(len, pad_id);
            Segment {
                token_ids,
                valid_len: chunk.len(),
                article_id: article.id.clone(),
                position,
            }
        })
        .collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RawArticle>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawArticle = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::Parse {
                path: path.into(),
                line: n + 1,
                message: format!("duplicate article id {:?}", rec.id),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, articles: &[RawArticle]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for a in articles {
        serde_json::to_writer(&mut out, a).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
