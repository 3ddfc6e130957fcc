//! Article and monthly entropy scores, the rolling retraining schedule, and the ENT series with its
//! news/model decomposition.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, encode, segment, Article, Segment, Vocabulary};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::lstm::{
    train, Block, Dims, EmbeddingSource, Gate, LstmParams, ModelSnapshot, Projected, TrainConfig, TrainOutcome,
};
use crate::month::Month;

#[derive(Debug, Clone, PartialEq)]
pub struct ArticleEntropy {
    pub article_id: Arc<str>,
    pub month: Month,
    /// Nats per token.
    pub value: f64,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyEntropy {
    pub month: Month,
    pub model_window: (Month, Month),
    pub mean_entropy: f64,
    pub article_count: usize,
}

/// Scores articles against one snapshot. Built once per snapshot so the input projections are
/// shared by every article.
pub struct Scorer<'a> {
    snapshot: &'a ModelSnapshot,
    model: Projected<'a>,
    segment_len: usize,
}

impl<'a> Scorer<'a> {
    pub fn new(snapshot: &'a ModelSnapshot, embeddings: &EmbeddingTable, segment_len: usize) -> Result<Self> {
        if segment_len < 2 {
            return Err(Error::Config("segment_len must be at least 2".into()));
        }
        snapshot.verify(&snapshot.vocab, embeddings)?;
        Ok(Scorer {
            snapshot,
            model: Projected::new(&snapshot.params, embeddings)?,
            segment_len,
        })
    }

    /// Mean per-token NLL of the article. The recurrent state carries across the article's
    /// consecutive segments and starts from zero for every article.
    pub fn article(&self, article: &Article) -> Result<ArticleEntropy> {
        let encoded = encode(article, &self.snapshot.vocab);
        if encoded.ids.is_empty() {
            return Err(Error::Empty("article has no tokens"));
        }
        let mut carry = self.model.start();
        let mut total = 0.0;
        for seg in segment(&encoded, self.segment_len, self.snapshot.vocab.pad_id()) {
            let (nll, next) = self.model.nll(seg.valid(), carry)?;
            total += nll.iter().sum::<f64>();
            carry = next;
        }
        let n = encoded.ids.len();
        Ok(ArticleEntropy {
            article_id: article.id.clone(),
            month: article.month,
            value: total / n as f64,
            token_count: n,
        })
    }

    pub fn articles(&self, articles: &[&Article]) -> Result<Vec<ArticleEntropy>> {
        articles.par_iter().map(|a| self.article(a)).collect()
    }

    /// Equal-weighted mean over the month's articles; `None` when the month has none.
    pub fn month(&self, month: Month, articles: &[&Article]) -> Result<Option<MonthlyEntropy>> {
        if articles.is_empty() {
            return Ok(None);
        }
        let scores = self.articles(articles)?;
        Ok(Some(mean_of(month, self.snapshot.window, &scores)))
    }
}

fn mean_of(month: Month, window: (Month, Month), scores: &[ArticleEntropy]) -> MonthlyEntropy {
    let sum: f64 = scores.iter().map(|s| s.value).sum();
    MonthlyEntropy {
        month,
        model_window: window,
        mean_entropy: sum / scores.len() as f64,
        article_count: scores.len(),
    }
}

pub fn article_entropy(
    snapshot: &ModelSnapshot,
    embeddings: &EmbeddingTable,
    article: &Article,
    segment_len: usize,
) -> Result<ArticleEntropy> {
    Scorer::new(snapshot, embeddings, segment_len)?.article(article)
}

pub fn monthly_entropy(
    snapshot: &ModelSnapshot,
    embeddings: &EmbeddingTable,
    month: Month,
    articles: &[&Article],
    segment_len: usize,
) -> Result<Option<MonthlyEntropy>> {
    Scorer::new(snapshot, embeddings, segment_len)?.month(month, articles)
}

/// Articles grouped by month. Every month between the first and last is present, possibly empty.
#[derive(Debug, Clone)]
pub struct MonthlyCorpus {
    months: BTreeMap<Month, Vec<Article>>,
}

impl MonthlyCorpus {
    pub fn new(articles: Vec<Article>) -> Result<Self> {
        let mut months: BTreeMap<Month, Vec<Article>> = BTreeMap::new();
        for a in articles {
            months.entry(a.month).or_default().push(a);
        }
        let (Some(&first), Some(&last)) = (months.keys().next(), months.keys().next_back()) else {
            return Err(Error::Empty("corpus has no articles"));
        };
        for m in Month::range(first, last) {
            months.entry(m).or_default();
        }
        Ok(MonthlyCorpus { months })
    }

    pub fn first(&self) -> Month {
        *self.months.keys().next().expect("nonempty")
    }

    pub fn last(&self) -> Month {
        *self.months.keys().next_back().expect("nonempty")
    }

    pub fn span(&self) -> usize {
        self.months.len()
    }

    pub fn month(&self, m: Month) -> Result<&[Article]> {
        self.months.get(&m).map(Vec::as_slice).ok_or(Error::MissingMonth(m))
    }

    pub fn all(&self) -> impl Iterator<Item = &Article> {
        self.months.values().flatten()
    }

    pub fn window(&self, first: Month, last: Month) -> Result<Vec<&Article>> {
        let mut out = Vec::new();
        for m in Month::range(first, last) {
            out.extend(self.month(m)?);
        }
        Ok(out)
    }
}

/// Geometric retraining sample for the model used in month `t`: all articles of `t-1`, and a
/// seeded sample without replacement of `floor(count / 2^j)` articles from `t-1-j`, `j = 1..5`.
/// Within each month, sampled articles keep their corpus order.
pub fn retraining_sample(corpus: &MonthlyCorpus, t: Month, seed: u64) -> Result<Vec<&Article>> {
    let mut out: Vec<&Article> = corpus.month(t.offset(-1))?.iter().collect();
    for j in 1..=5u32 {
        let m = t.offset(-1 - j as i64);
        let pool = corpus.month(m)?;
        let k = pool.len() >> j;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((m.ordinal() as u64) << 3) | j as u64);
        let mut idx = sample_indices(&mut rng, pool.len(), k).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| &pool[i]));
    }
    Ok(out)
}

/// `(ENT, ENT_NEWS, ENT_MODEL)` from the current model's score of `t`, the year-old model's score
/// of `t`, and the year-old model's score of `t-12`.
pub fn decompose(current: f64, lagged: f64, year_ago: f64) -> (f64, f64, f64) {
    (current - year_ago, lagged - year_ago, current - lagged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabMode {
    /// One vocabulary from the whole corpus.
    Global,
    /// Each snapshot's vocabulary comes from its own training window.
    Rolling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    /// Months in each training window.
    pub window: usize,
    /// Months between the scores compared by ENT.
    pub lag: usize,
    pub segment_len: usize,
    pub v_max: usize,
    pub vocab: VocabMode,
    pub d_h: usize,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    pub embeddings: Option<PathBuf>,
    pub init_seed: u64,
    pub sample_seed: u64,
    pub initial: TrainConfig,
    pub retrain: TrainConfig,
    /// Persist snapshots here as JSON.
    pub snapshot_dir: Option<PathBuf>,
    /// Keep only the trailing `lag + window + 1` snapshots on disk.
    pub prune: bool,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            window: 6,
            lag: 12,
            segment_len: 100,
            v_max: 10_000,
            vocab: VocabMode::Global,
            d_h: 16,
            embedding_dim: crate::embeddings::DEFAULT_DIM,
            embedding_seed: 0,
            embeddings: None,
            init_seed: 0,
            sample_seed: 0,
            initial: TrainConfig::default(),
            retrain: TrainConfig::default(),
            snapshot_dir: None,
            prune: false,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.window == 0 || self.lag == 0 {
            return bad("window and lag must be positive");
        }
        if self.segment_len < 2 {
            return bad("segment_len must be at least 2");
        }
        if self.v_max == 0 || self.d_h == 0 || self.embedding_dim == 0 {
            return bad("v_max, d_h and embedding_dim must be positive");
        }
        if self.initial.batch_size == 0 || self.retrain.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }

    /// Months of history needed before the first ENT observation, inclusive of that month.
    pub fn min_span(&self) -> usize {
        self.window + self.lag + 1
    }

    fn embedding_source(&self) -> EmbeddingSource {
        EmbeddingSource {
            dim: self.embedding_dim,
            seed: self.embedding_seed,
            file: self.embeddings.clone(),
        }
    }
}

/// One row of the entropy output; ENT fields are `None` where the year-ago scores do not exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub month: Month,
    pub ent: Option<f64>,
    pub ent_news: Option<f64>,
    pub ent_model: Option<f64>,
    pub mean_entropy_current_model: Option<f64>,
    pub mean_entropy_lagged_model: Option<f64>,
    pub n_articles: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntropySeries {
    pub rows: Vec<EntropyRow>,
}

impl EntropySeries {
    /// Months where all three components are defined.
    pub fn defined(&self) -> impl Iterator<Item = (Month, f64, f64, f64)> + '_ {
        self.rows.iter().filter_map(|r| match (r.ent, r.ent_news, r.ent_model) {
            (Some(a), Some(b), Some(c)) => Some((r.month, a, b, c)),
            _ => None,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record([
            "month",
            "ent",
            "ent_news",
            "ent_model",
            "mean_entropy_current_model",
            "mean_entropy_lagged_model",
            "n_articles",
        ])
        .map_err(io)?;
        let f = |x: Option<f64>| x.map(|v| format!("{v:.17e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.month.to_string(),
                f(r.ent),
                f(r.ent_news),
                f(r.ent_model),
                f(r.mean_entropy_current_model),
                f(r.mean_entropy_lagged_model),
                r.n_articles.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let parse_err = |message: String| Error::Parse {
                path: path.into(),
                line: i + 2,
                message,
            };
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let opt = |k: usize| -> Result<Option<f64>> {
                match rec.get(k).unwrap_or("") {
                    "" => Ok(None),
                    s => s.parse().map(Some).map_err(|_| parse_err(format!("bad number {s:?}"))),
                }
            };
            rows.push(EntropyRow {
                month: rec.get(0).unwrap_or("").parse().map_err(|e: Error| parse_err(e.to_string()))?,
                ent: opt(1)?,
                ent_news: opt(2)?,
                ent_model: opt(3)?,
                mean_entropy_current_model: opt(4)?,
                mean_entropy_lagged_model: opt(5)?,
                n_articles: rec
                    .get(6)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| parse_err("bad n_articles".into()))?,
            });
        }
        Ok(EntropySeries { rows })
    }
}

#[derive(Debug, Clone)]
pub struct RollingOutput {
    /// Month `t` scored by the model trained on `[t-window, t-1]`.
    pub current: Vec<MonthlyEntropy>,
    /// Month `t` scored by the model used `lag` months earlier.
    pub lagged: Vec<MonthlyEntropy>,
    pub series: EntropySeries,
    /// Window labels of every snapshot trained, in order.
    pub snapshots: Vec<(Month, Month)>,
    /// Final-epoch training loss of each snapshot.
    pub final_losses: Vec<f64>,
    /// Snapshots still held in memory at the end, keyed by the month they score.
    pub retained: BTreeMap<Month, Arc<StoredSnapshot>>,
}

#[derive(Debug)]
pub struct StoredSnapshot {
    pub snapshot: ModelSnapshot,
    pub embeddings: EmbeddingTable,
}

pub fn snapshot_file_name(window: (Month, Month)) -> String {
    format!("snapshot_{}_{}.json", window.0, window.1)
}

fn mix_seed(seed: u64, month: Month) -> u64 {
    seed ^ (month.ordinal() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Carries output rows of a warm start across a vocabulary change. Words present in both
/// vocabularies (and UNK) keep their `U_s` row and `b_s` entry; new words start from a seeded
/// uniform row and zero bias.
pub fn remap_output(params: &LstmParams, old: &Vocabulary, new: &Vocabulary, seed: u64) -> LstmParams {
    let d = params.dims();
    let fresh = LstmParams::init(Dims::new(d.d_in, d.d_h, new.output_size()), seed);
    let mut out = LstmParams::zeros(Dims::new(d.d_in, d.d_h, new.output_size()));
    for g in Gate::ALL {
        out.block_mut(Block::W(g)).copy_from_slice(params.w(g));
        out.block_mut(Block::U(g)).copy_from_slice(params.u(g));
        out.block_mut(Block::B(g)).copy_from_slice(params.b(g));
    }
    let dh = d.d_h;
    let (old_us, old_bs) = (params.us(), params.bs());
    let fresh_us = fresh.us().to_vec();
    let mut us = vec![0.0; new.output_size() * dh];
    let mut bs = vec![0.0; new.output_size()];
    for id in 0..new.output_size() {
        let src = if id == new.unk_id() as usize {
            Some(old.unk_id() as usize)
        } else {
            let w = &new.words()[id];
            old.contains(w).then(|| old.id(w) as usize)
        };
        match src {
            Some(s) => {
                us[id * dh..(id + 1) * dh].copy_from_slice(&old_us[s * dh..(s + 1) * dh]);
                bs[id] = old_bs[s];
            }
            None => us[id * dh..(id + 1) * dh].copy_from_slice(&fresh_us[id * dh..(id + 1) * dh]),
        }
    }
    out.block_mut(Block::Us).copy_from_slice(&us);
    out.block_mut(Block::Bs).copy_from_slice(&bs);
    out
}

/// Runs the rolling schedule: an initial model on the first `window` months, then one warm-started
/// retrain per month on the geometric retraining sample. Every month from `first + window` on is
/// scored by its current model and, once available, by the model of `lag` months earlier.
pub fn rolling_pipeline(corpus: &MonthlyCorpus, config: &EntropyConfig) -> Result<RollingOutput> {
    config.validate()?;
    let span = corpus.span();
    if span < config.min_span() {
        return Err(Error::InsufficientHistory(format!(
            "corpus spans {span} months ({} to {}); the first ENT observation would be {}, which needs {} months",
            corpus.first(),
            corpus.last(),
            corpus.first().offset(config.min_span() as i64 - 1),
            config.min_span()
        )));
    }
    if let Some(dir) = &config.snapshot_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let window = config.window as i64;
    let lag = config.lag as i64;
    let source = config.embedding_source();

    let global = match config.vocab {
        VocabMode::Global => {
            let vocab = build_vocabulary(corpus.all(), config.v_max)?;
            let table = source.build(&vocab)?;
            Some((vocab, table))
        }
        VocabMode::Rolling => None,
    };

    let first_scored = corpus.first().offset(window);
    let mut store: BTreeMap<Month, Arc<StoredSnapshot>> = BTreeMap::new();
    let mut out = RollingOutput {
        current: Vec::new(),
        lagged: Vec::new(),
        series: EntropySeries::default(),
        snapshots: Vec::new(),
        final_losses: Vec::new(),
        retained: BTreeMap::new(),
    };
    let mut current_by_month: HashMap<Month, f64> = HashMap::new();

    for t in Month::range(first_scored, corpus.last()) {
        let win = (t.offset(-window), t.offset(-1));
        let training: Vec<&Article> = if t == first_scored {
            corpus.window(win.0, win.1)?
        } else {
            retraining_sample(corpus, t, config.sample_seed)?
        };
        let (vocab, table) = match &global {
            Some((v, e)) => (v.clone(), e.clone()),
            None => {
                let v = build_vocabulary(corpus.window(win.0, win.1)?, config.v_max)?;
                let e = source.build(&v)?;
                (v, e)
            }
        };
        let dims = Dims::new(config.embedding_dim, config.d_h, vocab.output_size());
        let (init, train_config) = match store.get(&t.offset(-1)) {
            None => (LstmParams::init(dims, config.init_seed), &config.initial),
            Some(prev) if prev.snapshot.vocab_hash == vocab.digest() => (prev.snapshot.params.clone(), &config.retrain),
            Some(prev) => (
                remap_output(&prev.snapshot.params, &prev.snapshot.vocab, &vocab, mix_seed(config.init_seed, t)),
                &config.retrain,
            ),
        };
        let segments: Vec<Segment> = training
            .iter()
            .flat_map(|a| segment(&encode(a, &vocab), config.segment_len, vocab.pad_id()))
            .collect();
        let tc = TrainConfig {
            seed: mix_seed(train_config.seed, t),
            ..train_config.clone()
        };
        let trained = if segments.is_empty() {
            log::warn!("no training text for window {}..{}; carrying parameters forward", win.0, win.1);
            TrainOutcome {
                params: init,
                loss_trace: Vec::new(),
                steps: 0,
            }
        } else {
            train(init, &segments, &table, &tc)?
        };
        log::info!(
            "trained {}..{} on {} articles, final loss {:?}",
            win.0,
            win.1,
            training.len(),
            trained.loss_trace.last()
        );
        out.final_losses.push(trained.loss_trace.last().copied().unwrap_or(f64::NAN));
        out.snapshots.push(win);
        let snapshot = ModelSnapshot::new(trained.params, win, &vocab, &table, source.clone());
        if let Some(dir) = &config.snapshot_dir {
            snapshot.save(&dir.join(snapshot_file_name(win)))?;
            if config.prune {
                let old = t.offset(-(lag + window + 1));
                let stale = dir.join(snapshot_file_name((old.offset(-window), old.offset(-1))));
                if stale.exists() {
                    fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
                }
            }
        }
        store.insert(
            t,
            Arc::new(StoredSnapshot {
                snapshot,
                embeddings: table,
            }),
        );

        let articles: Vec<&Article> = corpus.month(t)?.iter().collect();
        let score = |s: &StoredSnapshot| -> Result<Option<MonthlyEntropy>> {
            Scorer::new(&s.snapshot, &s.embeddings, config.segment_len)?.month(t, &articles)
        };
        let cur = score(&store[&t])?;
        let old = match store.get(&t.offset(-lag)) {
            Some(s) => score(s)?,
            None => None,
        };
        let year_ago = current_by_month.get(&t.offset(-lag)).copied();
        if let Some(c) = &cur {
            current_by_month.insert(t, c.mean_entropy);
        }
        let (ent, ent_news, ent_model) = match (&cur, &old, year_ago) {
            (Some(c), Some(o), Some(y)) => {
                let (a, b, c) = decompose(c.mean_entropy, o.mean_entropy, y);
                (Some(a), Some(b), Some(c))
            }
            _ => (None, None, None),
        };
        out.series.rows.push(EntropyRow {
            month: t,
            ent,
            ent_news,
            ent_model,
            mean_entropy_current_model: cur.as_ref().map(|c| c.mean_entropy),
            mean_entropy_lagged_model: old.as_ref().map(|o| o.mean_entropy),
            n_articles: articles.len(),
        });
        out.current.extend(cur);
        out.lagged.extend(old);

        // the oldest snapshot still needed scores month t + 1 - lag
        let keep_from = t.offset(1 - lag);
        store.retain(|m, _| *m >= keep_from);
    }
    out.retained = store;
    Ok(out)
}

/// Per-article scores as CSV.
pub fn write_article_scores(path: &Path, scores: &[ArticleEntropy]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "article_id,month,entropy,token_count").map_err(io)?;
    for s in scores {
        let mut rec = csv::Writer::from_writer(Vec::new());
        rec.write_record([
            s.article_id.as_ref(),
            &s.month.to_string(),
            &format!("{:.17e}", s.value),
            &s.token_count.to_string(),
        ])
        .map_err(|e| Error::io(path, e.into()))?;
        w.write_all(&rec.into_inner().expect("in-memory writer")).map_err(io)?;
    }
    w.flush().map_err(io)
}
