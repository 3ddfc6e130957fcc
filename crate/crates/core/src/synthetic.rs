//! Synthetic corpora drawn from known bigram chains, with closed-form entropies, plus a simulated
//! market whose returns respond to the chain's true novelty.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::RawArticle;
use crate::error::{Error, Result};
use crate::month::Month;

/// A first-order Markov chain over words. Row `w` of `trans` is `P(. | w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramChain {
    pub words: Vec<String>,
    pub trans: Vec<Vec<f64>>,
}

pub fn word_label(i: usize) -> String {
    format!("w{i:03}")
}

impl BigramChain {
    pub fn new(words: Vec<String>, trans: Vec<Vec<f64>>) -> Result<Self> {
        let chain = BigramChain { words, trans };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.words.len();
        if v == 0 || self.trans.len() != v {
            return Err(Error::Invalid(format!("transition matrix must be {v}x{v}")));
        }
        for (w, row) in self.trans.iter().enumerate() {
            if row.len() != v {
                return Err(Error::Invalid(format!("row {w} has {} entries, expected {v}", row.len())));
            }
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::Invalid(format!("row {w} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid(format!("row {w} sums to {sum}, not 1")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn uniform(v: usize) -> Self {
        BigramChain {
            words: (0..v).map(word_label).collect(),
            trans: vec![vec![1.0 / v as f64; v]; v],
        }
    }

    /// Strictly positive chain with block structure:
    /// `P(v | w) ∝ A[c(w), c(v)] · B[v]` for a random word-to-cluster map `c`, log-normal cluster
    /// affinities `A` (log-scale `sharpness`) and log-normal word weights `B`.
    pub fn clustered(v: usize, clusters: usize, sharpness: f64, seed: u64) -> Result<Self> {
        if v == 0 || clusters == 0 || clusters > v {
            return Err(Error::Invalid(format!("need 1 <= clusters ({clusters}) <= vocabulary ({v})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let affinity: Vec<f64> = (0..clusters * clusters).map(|_| (sharpness * normal()).exp()).collect();
        let weight: Vec<f64> = (0..v).map(|_| (0.5 * normal()).exp()).collect();
        let mut cluster: Vec<usize> = (0..v).map(|w| w % clusters).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for i in (1..v).rev() {
            cluster.swap(i, rng.random_range(0..=i));
        }
        let trans = (0..v)
            .map(|w| {
                let raw: Vec<f64> = (0..v)
                    .map(|u| affinity[cluster[w] * clusters + cluster[u]] * weight[u])
                    .collect();
                normalize(raw)
            })
            .collect();
        BigramChain::new((0..v).map(word_label).collect(), trans)
    }

    /// Stationary distribution, solved exactly from `π P = π`, `Σ π = 1`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let v = self.len();
        let mut a = DMatrix::<f64>::zeros(v, v);
        for w in 0..v {
            for u in 0..v {
                a[(u, w)] = self.trans[w][u] - if u == w { 1.0 } else { 0.0 };
            }
        }
        for w in 0..v {
            a[(v - 1, w)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(v);
        b[v - 1] = 1.0;
        let pi = a.lu().solve(&b).ok_or(Error::Singular("stationary distribution"))?;
        // clean rounding noise so the result is a distribution
        let pi: Vec<f64> = pi.iter().map(|&x| x.max(0.0)).collect();
        Ok(normalize(pi))
    }

    /// Entropy rate `-Σ π(w) P(v|w) ln P(v|w)` in nats per token.
    pub fn entropy_rate(&self) -> Result<f64> {
        self.cross_entropy_rate(self)
    }

    /// Per-token cross-entropy of this chain's text scored by `model`:
    /// `-Σ π(w) P(v|w) ln Q(v|w)`. Infinite if `model` assigns zero probability to a possible bigram.
    pub fn cross_entropy_rate(&self, model: &BigramChain) -> Result<f64> {
        if model.len() != self.len() {
            return Err(Error::Dimension("chains over different vocabularies".into()));
        }
        let pi = self.stationary()?;
        let mut h = 0.0;
        for (w, row) in self.trans.iter().enumerate() {
            for (u, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    h -= pi[w] * p * model.trans[w][u].ln();
                }
            }
        }
        Ok(h)
    }

    /// Entropy of the stationary distribution, the expected surprise of a text's first word.
    pub fn stationary_entropy(&self) -> Result<f64> {
        Ok(self
            .stationary()?
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum())
    }

    pub fn sampler(&self) -> Result<ChainSampler> {
        let start = WeightedIndex::new(self.stationary()?).map_err(|e| Error::Invalid(e.to_string()))?;
        let rows = self
            .trans
            .iter()
            .map(|r| WeightedIndex::new(r).map_err(|e| Error::Invalid(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(ChainSampler { start, rows })
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Draws word-index sequences from a chain started in its stationary distribution.
pub struct ChainSampler {
    start: WeightedIndex<f64>,
    rows: Vec<WeightedIndex<f64>>,
}

impl ChainSampler {
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut w = self.start.sample(rng);
        out.push(w);
        for _ in 1..len {
            w = self.rows[w].sample(rng);
            out.push(w);
        }
        out
    }
}

/// Parameters of the simulated market attached to a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSpec {
    /// Months simulated after the last text month, so forward returns exist for every scored month.
    pub extra_months: usize,
    pub days_per_month: usize,
    /// Monthly market excess return mean and volatility, percent.
    pub mean_return: f64,
    pub return_sigma: f64,
    /// Response of next month's expected market return to the true entropy gap, percent per nat.
    pub return_slope: f64,
    /// Volatility of the state shock priced in the cross-section, percent per month.
    pub state_sigma: f64,
    /// Monthly premium of the state shock, percent.
    pub state_premium: f64,
    pub base_assets: usize,
    pub test_assets: usize,
    /// Idiosyncratic volatility of each asset, percent per month.
    pub idio_sigma: f64,
    /// Macro series simulated as AR(1) with a planted loading on the true gap.
    pub macro_series: Vec<String>,
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec {
            extra_months: 12,
            days_per_month: 21,
            mean_return: 0.6,
            return_sigma: 4.0,
            return_slope: -10.0,
            state_sigma: 2.0,
            state_premium: -0.3,
            base_assets: 5,
            test_assets: 10,
            idio_sigma: 2.0,
            macro_series: vec!["UNRATE".into(), "CPI_YOY".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    pub clusters: usize,
    /// Log-scale spread of cluster affinities; larger means lower entropy.
    pub sharpness: f64,
    pub start: Month,
    pub months: usize,
    pub articles_per_month: usize,
    /// Article lengths are uniform on `[min_tokens, max_tokens]`.
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// One-based month number from which articles follow the post-shift chain. Written as 0
    /// when there is no shift.
    #[serde(with = "zero_is_none")]
    pub shift_month: Option<usize>,
    pub seed: u64,
    pub market: MarketSpec,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            vocab_size: 200,
            clusters: 8,
            sharpness: 1.5,
            start: Month::new(2000, 1).expect("valid month"),
            months: 30,
            articles_per_month: 200,
            min_tokens: 100,
            max_tokens: 140,
            shift_month: Some(24),
            seed: 7,
            market: MarketSpec::default(),
        }
    }
}

mod zero_is_none {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(v.unwrap_or(0) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        let v = usize::deserialize(d)?;
        Ok((v != 0).then_some(v))
    }
}

impl SyntheticSpec {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SyntheticSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2");
        }
        if self.clusters == 0 || self.clusters > self.vocab_size {
            return bad("clusters must be in 1..=vocab_size");
        }
        if self.months == 0 || self.articles_per_month == 0 {
            return bad("months and articles_per_month must be positive");
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return bad("need 0 < min_tokens <= max_tokens");
        }
        if let Some(m) = self.shift_month {
            if m < 2 || m > self.months {
                return bad("shift_month must lie inside the month range (2..=months)");
            }
        }
        if self.market.days_per_month == 0 {
            return bad("days_per_month must be positive");
        }
        Ok(())
    }

    pub fn month(&self, index: usize) -> Month {
        self.start.offset(index as i64)
    }

    pub fn last_month(&self) -> Month {
        self.month(self.months - 1)
    }

    fn shifted(&self, index: usize) -> bool {
        self.shift_month.is_some_and(|m| index + 1 >= m)
    }

    pub fn chains(&self) -> Result<(BigramChain, BigramChain)> {
        let pre = BigramChain::clustered(self.vocab_size, self.clusters, self.sharpness, self.seed)?;
        let post = match self.shift_month {
            Some(_) => BigramChain::clustered(
                self.vocab_size,
                self.clusters,
                self.sharpness,
                self.seed.wrapping_add(0x9e37_79b9),
            )?,
            None => pre.clone(),
        };
        Ok((pre, post))
    }
}

/// Closed-form properties of the generating process, written next to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMetadata {
    pub spec: SyntheticSpec,
    pub pre: BigramChain,
    pub post: BigramChain,
    pub stationary_pre: Vec<f64>,
    pub stationary_post: Vec<f64>,
    pub entropy_rate_pre: f64,
    pub entropy_rate_post: f64,
    /// Post-shift text scored by the pre-shift chain.
    pub cross_entropy_post_under_pre: f64,
    pub cross_entropy_pre_under_post: f64,
    /// Per month: entropy rate of that month's text under the chain of twelve months earlier,
    /// minus that earlier chain's own entropy rate. `None` for the first twelve months.
    pub true_gap: Vec<Option<f64>>,
}

pub struct SyntheticCorpus {
    pub articles: Vec<RawArticle>,
    pub metadata: SyntheticMetadata,
}

pub fn generate_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let (pre, post) = spec.chains()?;
    let samplers = (pre.sampler()?, post.sampler()?);
    let mut articles = Vec::with_capacity(spec.months * spec.articles_per_month);
    for m in 0..spec.months {
        let month = spec.month(m);
        let (chain, sampler) = if spec.shifted(m) {
            (&post, &samplers.1)
        } else {
            (&pre, &samplers.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(m as u64 + 1);
        for k in 0..spec.articles_per_month {
            let len = rng.random_range(spec.min_tokens..=spec.max_tokens);
            let body = sampler
                .sample(len, &mut rng)
                .into_iter()
                .map(|w| chain.words[w].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let id = format!("{month}-{k:04}");
            articles.push(RawArticle {
                chain_id: id.clone(),
                id,
                month: month.to_string(),
                headline: format!("synthetic report {k}"),
                body,
            });
        }
    }

    let h_pre = pre.entropy_rate()?;
    let h_post = post.entropy_rate()?;
    let x_post_pre = post.cross_entropy_rate(&pre)?;
    let x_pre_post = pre.cross_entropy_rate(&post)?;
    let rate = |text_shifted: bool, model_shifted: bool| match (text_shifted, model_shifted) {
        (false, false) => h_pre,
        (true, true) => h_post,
        (true, false) => x_post_pre,
        (false, true) => x_pre_post,
    };
    let total = spec.months + spec.market.extra_months;
    let true_gap = (0..total)
        .map(|m| {
            (m >= 12).then(|| {
                let (now, then) = (spec.shifted(m), spec.shifted(m - 12));
                rate(now, then) - rate(then, then)
            })
        })
        .collect();
    let metadata = SyntheticMetadata {
        spec: spec.clone(),
        stationary_pre: pre.stationary()?,
        stationary_post: post.stationary()?,
        entropy_rate_pre: h_pre,
        entropy_rate_post: h_post,
        cross_entropy_post_under_pre: x_post_pre,
        cross_entropy_pre_under_post: x_pre_post,
        true_gap,
        pre,
        post,
    };
    Ok(SyntheticCorpus { articles, metadata })
}

/// Simulated returns and state variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub months: Vec<Month>,
    /// Monthly market excess return, percent.
    pub mkt: Vec<f64>,
    /// Monthly macro series, by name.
    pub macro_series: Vec<(String, Vec<f64>)>,
    /// `(month, day within month)` for each trading day.
    pub days: Vec<(Month, usize)>,
    pub daily_mkt: Vec<f64>,
    /// Daily and monthly base-asset excess returns, one vector per asset.
    pub base_daily: Vec<Vec<f64>>,
    pub base_monthly: Vec<Vec<f64>>,
    pub test_daily: Vec<Vec<f64>>,
}

/// Daily market and asset returns. Expected market return in month `t` moves with the true gap of
/// month `t-1`; base and test assets load on the market and on a priced state shock.
pub fn generate_market(spec: &SyntheticSpec, true_gap: &[Option<f64>]) -> Result<SyntheticMarket> {
    let ms = &spec.market;
    let total = spec.months + ms.extra_months;
    if true_gap.len() < total {
        return Err(Error::Dimension("true gap series shorter than simulated span".into()));
    }
    let d = ms.days_per_month;
    let sd = |monthly: f64| monthly / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0xfeed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };

    let base_load: Vec<(f64, f64)> = (0..ms.base_assets)
        .map(|j| (0.6 + 0.8 * (j as f64 + 0.5) / ms.base_assets.max(1) as f64, normal()))
        .collect();
    let test_load: Vec<(f64, f64)> = (0..ms.test_assets).map(|_| (0.5 + normal().abs(), normal())).collect();

    let months: Vec<Month> = (0..total).map(|m| spec.month(m)).collect();
    let mut out = SyntheticMarket {
        months: months.clone(),
        mkt: Vec::with_capacity(total),
        macro_series: Vec::new(),
        days: Vec::with_capacity(total * d),
        daily_mkt: Vec::with_capacity(total * d),
        base_daily: vec![Vec::with_capacity(total * d); ms.base_assets],
        base_monthly: vec![Vec::with_capacity(total); ms.base_assets],
        test_daily: vec![Vec::with_capacity(total * d); ms.test_assets],
    };
    for (t, &month) in months.iter().enumerate() {
        let gap_prev = if t == 0 { 0.0 } else { true_gap[t - 1].unwrap_or(0.0) };
        let mu = ms.mean_return + ms.return_slope * gap_prev;
        let mut gross_mkt = 1.0;
        let mut gross_base = vec![1.0; ms.base_assets];
        for day in 0..d {
            let m = mu / d as f64 + sd(ms.return_sigma) * normal();
            let s = ms.state_premium / d as f64 + sd(ms.state_sigma) * normal();
            out.days.push((month, day + 1));
            out.daily_mkt.push(m);
            gross_mkt *= 1.0 + m / 100.0;
            for (j, &(a, b)) in base_load.iter().enumerate() {
                let x = a * m + b * s + sd(ms.idio_sigma) * normal();
                out.base_daily[j].push(x);
                gross_base[j] *= 1.0 + x / 100.0;
            }
            for (i, &(a, b)) in test_load.iter().enumerate() {
                out.test_daily[i].push(a * m + b * s + sd(ms.idio_sigma) * normal());
            }
        }
        out.mkt.push((gross_mkt - 1.0) * 100.0);
        for (j, g) in gross_base.iter().enumerate() {
            out.base_monthly[j].push((g - 1.0) * 100.0);
        }
    }
    for (k, name) in ms.macro_series.iter().enumerate() {
        let loading = if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut x = 0.0;
        let series = (0..total)
            .map(|t| {
                x = 0.8 * x + loading * true_gap[t].unwrap_or(0.0) + 0.2 * normal();
                x
            })
            .collect();
        out.macro_series.push((name.clone(), series));
    }
    Ok(out)
}
