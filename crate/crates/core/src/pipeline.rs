//! Run configuration and the end-to-end orchestrator.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ingest, read_jsonl, write_jsonl, FilterConfig, RawArticle};
use crate::econ::{
    add_return_columns, fama_macbeth_gmm, icapm_sign_check, is_forecast, longest_run, macro_forecast,
    mimicking_portfolio, oos_forecast, panel_innovations, spanning_r2, MimicFrequency, PanelDate, SampleEnd,
    TimeSeriesPanel, Unit, MACRO_TARGETS, TARGET,
};
use crate::entropy::{rolling_pipeline, EntropyConfig, EntropySeries, MonthlyCorpus};
use crate::error::{Error, Result};
use crate::month::Month;
use crate::report::{emit_tables_and_plots, write_json, Artifacts, NamedFactor, OosRow, Results};
use crate::synthetic::{generate_corpus, generate_market, SyntheticMarket, SyntheticSpec};

pub const DIGEST_ALGORITHM: &str = "sha256";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Articles as JSON Lines. Required unless a `[synthetic]` section is given.
    pub articles: Option<PathBuf>,
    /// Word-vector file; rows missing from it use seeded random vectors.
    pub embeddings: Option<PathBuf>,
    /// Snapshot directory; defaults to `<out>/snapshots`.
    pub snapshots: Option<PathBuf>,
    /// Monthly panel CSV.
    pub panel: Option<PathBuf>,
    /// Daily panel CSV with market, base-asset and test-asset returns.
    pub daily_panel: Option<PathBuf>,
    /// Unit sidecar covering both panels.
    pub units: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            articles: None,
            embeddings: None,
            snapshots: None,
            panel: None,
            daily_panel: None,
            units: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconConfig {
    pub hac_lags: usize,
    pub oos_h: Vec<usize>,
    pub significance: f64,
    pub max_p: usize,
    pub gmm_lags: usize,
    pub mimic_freq: MimicFrequency,
    /// Market excess-return column, present in both panels.
    pub market: String,
    /// Extra in-sample regressors added alongside the entropy variant.
    pub controls: Vec<String>,
    /// Entropy columns used as forecasters and state variables.
    pub variants: Vec<String>,
    pub base_assets: Vec<String>,
    pub test_assets: Vec<String>,
    /// Targets of the macro regressions; defaults to the standard list restricted to the panel.
    pub macro_targets: Vec<String>,
    /// Series for the spanning regressions; defaults to the market and the mimicking factors.
    pub spanning: Vec<String>,
    /// Factor → forecasting variable pairs for the sign check.
    pub sign_map: IndexMap<String, String>,
    /// Last month forecast targets may reach.
    pub returns_end: Option<Month>,
}

impl Default for EconConfig {
    fn default() -> Self {
        EconConfig {
            hac_lags: 4,
            oos_h: vec![12, 15, 18, 21, 24],
            significance: 0.05,
            max_p: 12,
            gmm_lags: 0,
            mimic_freq: MimicFrequency::Daily,
            market: "MKT".into(),
            controls: Vec::new(),
            variants: vec!["ENT".into()],
            base_assets: Vec::new(),
            test_assets: Vec::new(),
            macro_targets: Vec::new(),
            spanning: Vec::new(),
            sign_map: [("F_ENT".to_string(), "ENT".to_string())].into_iter().collect(),
            returns_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; when set it determines every component seed.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub corpus: FilterConfig,
    pub entropy: EntropyConfig,
    pub econ: EconConfig,
    pub synthetic: Option<SyntheticSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            paths: Paths::default(),
            corpus: FilterConfig::default(),
            entropy: EntropyConfig::default(),
            econ: EconConfig::default(),
            synthetic: None,
        }
    }
}

fn split_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl PipelineConfig {
    /// The synthetic end-to-end configuration sized to finish in minutes.
    pub fn desk_scale() -> Self {
        let mut c = PipelineConfig {
            synthetic: Some(SyntheticSpec::default()),
            ..Default::default()
        };
        c.entropy.d_h = 8;
        c
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Overwrites every component seed with one derived from `seed`.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.entropy.embedding_seed = split_seed(seed, 1);
        self.entropy.init_seed = split_seed(seed, 2);
        self.entropy.sample_seed = split_seed(seed, 3);
        self.entropy.initial.seed = split_seed(seed, 4);
        self.entropy.retrain.seed = split_seed(seed, 5);
        if let Some(s) = &mut self.synthetic {
            s.seed = split_seed(seed, 6);
        }
    }

    pub fn snapshot_dir(&self) -> PathBuf {
        self.paths.snapshots.clone().unwrap_or_else(|| self.paths.out.join("snapshots"))
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.entropy.validate()?;
        if self.corpus.v_max != self.entropy.v_max || self.corpus.segment_len != self.entropy.segment_len {
            return Err(Error::Config(
                "corpus and entropy sections disagree on v_max or segment_len".into(),
            ));
        }
        if self.entropy.embeddings.is_some() || self.entropy.snapshot_dir.is_some() {
            return Err(Error::Config("set embeddings and snapshot paths under [paths]".into()));
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        } else if self.paths.articles.is_none() {
            return Err(Error::Config("either paths.articles or a [synthetic] section is required".into()));
        }
        let need = |p: &Option<PathBuf>, what: &str| -> Result<()> {
            match p {
                Some(p) if !p.exists() => Err(Error::Config(format!("{what} path {} does not exist", p.display()))),
                _ => Ok(()),
            }
        };
        need(&self.paths.articles, "articles")?;
        need(&self.paths.embeddings, "embeddings")?;
        need(&self.paths.panel, "panel")?;
        need(&self.paths.daily_panel, "daily panel")?;
        need(&self.paths.units, "units")?;
        let e = &self.econ;
        if let Some(h) = e.oos_h.iter().find(|&&h| h < 12) {
            return Err(Error::Config(format!("out-of-sample window {h} is shorter than 12 months")));
        }
        if !(e.significance > 0.0 && e.significance < 1.0) {
            return Err(Error::Config("significance must lie in (0, 1)".into()));
        }
        if e.max_p == 0 {
            return Err(Error::Config("max_p must be positive".into()));
        }
        if e.variants.is_empty() {
            return Err(Error::Config("at least one entropy variant is required".into()));
        }
        if let Some(v) = e.variants.iter().find(|v| !["ENT", "ENT_NEWS", "ENT_MODEL"].contains(&v.as_str())) {
            return Err(Error::Config(format!("unknown entropy variant {v}")));
        }
        Ok(())
    }
}

/// A failure in a named stage of the run.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

impl StageError {
    /// 2 for configuration and file errors, 1 for computation errors.
    pub fn exit_code(&self) -> i32 {
        if self.error.is_config_or_io() {
            2
        } else {
            1
        }
    }
}

trait Stage<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage: name, error })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub digest_algorithm: String,
    pub seed: Option<u64>,
    pub config_digest: String,
    pub config: PipelineConfig,
    /// Input file name → digest.
    pub inputs: IndexMap<String, String>,
    pub stages: Vec<String>,
    /// Output artifact name → digest.
    pub outputs: IndexMap<String, String>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub outputs: Vec<(String, PathBuf)>,
    pub results: Results,
}

/// Monthly and daily panels built from a synthetic market.
pub fn synthetic_panels(market: &SyntheticMarket) -> Result<(TimeSeriesPanel, TimeSeriesPanel)> {
    let first = *market.months.first().ok_or(Error::Empty("synthetic market"))?;
    let last = *market.months.last().expect("nonempty");
    let mut monthly = TimeSeriesPanel::monthly(first, last);
    monthly.insert_full("MKT", &market.mkt, Unit::Percent)?;
    for (name, s) in &market.macro_series {
        monthly.insert_full(name, s, Unit::Level)?;
    }
    for (j, b) in market.base_monthly.iter().enumerate() {
        monthly.insert_full(&base_name(j), b, Unit::Percent)?;
    }
    let d = market.days.len() / market.months.len();
    for (i, t) in market.test_daily.iter().enumerate() {
        let compounded: Vec<f64> = t
            .chunks(d)
            .map(|c| (c.iter().fold(1.0, |g, r| g * (1.0 + r / 100.0)) - 1.0) * 100.0)
            .collect();
        monthly.insert_full(&test_name(i), &compounded, Unit::Percent)?;
    }

    let dates = market
        .days
        .iter()
        .map(|(m, day)| {
            NaiveDate::from_ymd_opt(m.year(), m.month() as u32, *day as u32)
                .map(PanelDate::Day)
                .ok_or_else(|| Error::Config(format!("day {day} does not exist in {m}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut daily = TimeSeriesPanel::new(dates)?;
    daily.insert_full("MKT", &market.daily_mkt, Unit::Percent)?;
    for (j, b) in market.base_daily.iter().enumerate() {
        daily.insert_full(&base_name(j), b, Unit::Percent)?;
    }
    for (i, t) in market.test_daily.iter().enumerate() {
        daily.insert_full(&test_name(i), t, Unit::Percent)?;
    }
    Ok((monthly, daily))
}

fn base_name(j: usize) -> String {
    format!("B{:02}", j + 1)
}

fn test_name(i: usize) -> String {
    format!("T{:02}", i + 1)
}

/// Adds the entropy columns to a monthly panel; months outside the panel are ignored.
pub fn merge_entropy(panel: &mut TimeSeriesPanel, series: &EntropySeries) -> Result<()> {
    let mut cols = [vec![None; panel.len()], vec![None; panel.len()], vec![None; panel.len()]];
    for r in &series.rows {
        if let Some(i) = panel.row_of(r.month) {
            cols[0][i] = r.ent;
            cols[1][i] = r.ent_news;
            cols[2][i] = r.ent_model;
        }
    }
    let [a, b, c] = cols;
    panel.insert("ENT", a, Unit::Level)?;
    panel.insert("ENT_NEWS", b, Unit::Level)?;
    panel.insert("ENT_MODEL", c, Unit::Level)
}

const FACTOR_COLUMNS: [&str; 5] = ["SMB", "HML", "RMW", "CMA", "UMD"];

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// The econometric analyses, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EconStage {
    RegressIs,
    RegressOos,
    Innovations,
    Mimic,
    Fmgmm,
    Macro,
    Spanning,
    SignCheck,
}

impl EconStage {
    pub const ALL: [EconStage; 8] = [
        EconStage::RegressIs,
        EconStage::RegressOos,
        EconStage::Innovations,
        EconStage::Mimic,
        EconStage::Fmgmm,
        EconStage::Macro,
        EconStage::Spanning,
        EconStage::SignCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EconStage::RegressIs => "regress-is",
            EconStage::RegressOos => "regress-oos",
            EconStage::Innovations => "innovations",
            EconStage::Mimic => "mimic",
            EconStage::Fmgmm => "fmgmm",
            EconStage::Macro => "macro",
            EconStage::Spanning => "spanning",
            EconStage::SignCheck => "sign-check",
        }
    }

    fn prerequisites(self) -> &'static [EconStage] {
        match self {
            EconStage::Mimic => &[EconStage::Innovations],
            EconStage::Fmgmm | EconStage::Spanning => &[EconStage::Mimic],
            EconStage::SignCheck => &[EconStage::Fmgmm],
            _ => &[],
        }
    }

    /// The requested stages plus everything they depend on.
    pub fn closure(requested: &[EconStage]) -> Vec<EconStage> {
        let mut out: Vec<EconStage> = Vec::new();
        let mut todo = requested.to_vec();
        while let Some(s) = todo.pop() {
            if !out.contains(&s) {
                out.push(s);
                todo.extend(s.prerequisites());
            }
        }
        out.sort();
        out
    }
}

/// Runs the requested econometric analyses, and whatever they depend on, on assembled panels.
pub fn run_econ(
    config: &EconConfig,
    monthly: &TimeSeriesPanel,
    daily: &TimeSeriesPanel,
    requested: &[EconStage],
    results: &mut Results,
    stages: &mut Vec<String>,
) -> std::result::Result<(), StageError> {
    let want = EconStage::closure(requested);
    let on = |s: EconStage| want.contains(&s);
    let lags = config.hac_lags;
    let end = SampleEnd {
        returns_end: config.returns_end,
    };
    let variants = strs(&config.variants);

    if on(EconStage::RegressIs) {
        stages.push("regress-is".into());
        for v in &variants {
            let fit = is_forecast(monthly, TARGET, &[v], lags, end).stage("regress-is")?;
            results.is_fits.push((v.to_string(), fit));
            if !config.controls.is_empty() {
                let mut regs = vec![*v];
                regs.extend(strs(&config.controls));
                let fit = is_forecast(monthly, TARGET, &regs, lags, end).stage("regress-is")?;
                results.is_fits.push((format!("{v}+controls"), fit));
            }
        }
    }

    if on(EconStage::RegressOos) {
        stages.push("regress-oos".into());
        for v in &variants {
            for &h in &config.oos_h {
                let result = match oos_forecast(monthly, TARGET, v, h, lags) {
                    Ok(r) => Ok(r),
                    Err(e @ Error::InsufficientHistory(_)) => {
                        log::warn!("out-of-sample {v} h={h}: {e}");
                        Err(e.to_string())
                    }
                    Err(e) => return Err(StageError { stage: "regress-oos", error: e }),
                };
                results.oos.push(OosRow {
                    predictor: v.to_string(),
                    h,
                    result,
                });
            }
        }
    }

    let market = config.market.as_str();
    let base = strs(&config.base_assets);
    let test = strs(&config.test_assets);
    let pricing = match config.mimic_freq {
        MimicFrequency::Daily => daily,
        MimicFrequency::Monthly => monthly,
    };
    // pricing-frequency returns of market, base and test assets on their common dates
    let mut priced = None;
    let mut factor_names = vec![config.market.clone()];
    let mut factor_series = Vec::new();

    if on(EconStage::Innovations) {
        stages.push("innovations".into());
        for v in &variants {
            let a = monthly.aligned(&[v, market]).stage("innovations")?;
            let (lo, hi) = longest_run(&a.rows);
            let n = hi - lo;
            let supported = n.saturating_sub(3) / 2;
            if supported == 0 {
                return Err(StageError {
                    stage: "innovations",
                    error: Error::InsufficientHistory(format!("{n} consecutive observations of {v}")),
                });
            }
            let max_p = config.max_p.min(supported);
            if max_p < config.max_p {
                log::warn!("{v}: {n} observations support AR orders up to {max_p}, not {}", config.max_p);
            }
            let inn = panel_innovations(monthly, v, Some(market), max_p).stage("innovations")?;
            results.innovations.push((v.to_string(), inn));
        }
    }

    if on(EconStage::Mimic) {
        stages.push("mimic".into());
        if base.is_empty() || test.is_empty() {
            return Err(StageError {
                stage: "mimic",
                error: Error::Config("econ.base_assets and econ.test_assets must name panel columns".into()),
            });
        }
        let mut cols = vec![market];
        cols.extend(&base);
        cols.extend(&test);
        let priced = &*priced.insert(pricing.aligned(&cols).stage("mimic")?);
        if priced.dropped > 0 {
            log::warn!("{} pricing rows dropped for missing returns", priced.dropped);
        }
        let pricing_dates: Vec<PanelDate> = priced.rows.iter().map(|&r| pricing.dates()[r]).collect();
        let apply_to: Vec<Vec<f64>> = priced.columns[1..=base.len()].to_vec();
        for (v, inn) in &results.innovations {
            let base_cols = base
                .iter()
                .map(|b| monthly.column(b))
                .collect::<Result<Vec<_>>>()
                .stage("mimic")?;
            let mut innov = Vec::new();
            let mut est = vec![Vec::new(); base.len()];
            for (d, e) in inn.dates.iter().zip(&inn.residuals) {
                let r = monthly.row_of(d.month()).expect("innovation dates come from the panel");
                if base_cols.iter().all(|c| c[r].is_some()) {
                    innov.push(*e);
                    for (dst, c) in est.iter_mut().zip(&base_cols) {
                        dst.push(c[r].expect("checked"));
                    }
                }
            }
            let portfolio = mimicking_portfolio(
                &innov,
                &config.base_assets,
                &est,
                &apply_to,
                config.mimic_freq,
                lags,
            )
            .stage("mimic")?;
            results.factors.push(NamedFactor {
                name: format!("F_{v}"),
                portfolio,
                dates: pricing_dates.clone(),
            });
        }
        factor_series.push(priced.columns[0].clone());
        for f in &results.factors {
            factor_names.push(f.name.clone());
            factor_series.push(f.portfolio.factor.clone());
        }
    }

    if on(EconStage::Fmgmm) {
        stages.push("fmgmm".into());
        let priced = priced.as_ref().expect("mimic runs first");
        let test_returns: Vec<Vec<f64>> = priced.columns[1 + base.len()..].to_vec();
        let gmm = fama_macbeth_gmm(&config.test_assets, &test_returns, &factor_names, &factor_series, config.gmm_lags)
            .stage("fmgmm")?;
        results.gmm.push(("test".to_string(), gmm));
    }

    if on(EconStage::Macro) {
        stages.push("macro".into());
        let targets: Vec<&str> = if config.macro_targets.is_empty() {
            MACRO_TARGETS.iter().copied().filter(|t| monthly.has(t)).collect()
        } else {
            strs(&config.macro_targets)
        };
        if !targets.is_empty() {
            for v in &variants {
                let fits = macro_forecast(monthly, &targets, v, 12, lags).stage("macro")?;
                for (t, f) in targets.iter().zip(fits) {
                    results.macro_fits.push((format!("{t}~{v}"), f));
                }
            }
        }
    }

    if on(EconStage::Spanning) {
        stages.push("spanning".into());
        let (names, series): (Vec<String>, Vec<Vec<f64>>) = if config.spanning.is_empty() {
            (factor_names.clone(), factor_series.clone())
        } else {
            let mut names = Vec::new();
            let mut series = Vec::new();
            for s in &config.spanning {
                if let Some(i) = factor_names.iter().position(|f| f == s) {
                    series.push(factor_series[i].clone());
                } else {
                    let c = pricing.column(s).stage("spanning")?;
                    series.push(
                        priced
                            .as_ref()
                            .expect("mimic runs first")
                            .rows
                            .iter()
                            .map(|&r| c[r].ok_or_else(|| Error::Invalid(format!("{s} is missing on a pricing date"))))
                            .collect::<Result<Vec<f64>>>()
                            .stage("spanning")?,
                    );
                }
                names.push(s.clone());
            }
            (names, series)
        };
        results.spanning = spanning_r2(&names, &series).stage("spanning")?;
    }

    if on(EconStage::SignCheck) {
        stages.push("sign-check".into());
        let mut forecasters: Vec<&str> = Vec::new();
        for v in config.sign_map.values() {
            if !forecasters.contains(&v.as_str()) {
                forecasters.push(v);
            }
        }
        let forecast = is_forecast(monthly, TARGET, &forecasters, lags, end).stage("sign-check")?;
        let mapping: Vec<(String, String)> = config.sign_map.iter().map(|(a, b)| (a.clone(), b.clone())).collect();
        results.sign = Some(icapm_sign_check(&forecast, &results.gmm, &mapping, config.significance).stage("sign-check")?);
    }
    Ok(())
}

fn load_panels(config: &PipelineConfig) -> Result<(TimeSeriesPanel, TimeSeriesPanel)> {
    let units = match &config.paths.units {
        Some(p) => TimeSeriesPanel::read_units(p)?,
        None => IndexMap::new(),
    };
    let (Some(mp), Some(dp)) = (&config.paths.panel, &config.paths.daily_panel) else {
        return Err(Error::Config("paths.panel and paths.daily_panel are required without [synthetic]".into()));
    };
    // each file only carries some of the tagged columns
    let read = |path: &Path| -> Result<TimeSeriesPanel> {
        let header = csv::Reader::from_path(path)
            .map_err(|e| Error::io(path, e.into()))?
            .headers()
            .map_err(|e| Error::io(path, e.into()))?
            .clone();
        let own: IndexMap<String, Unit> = units
            .iter()
            .filter(|(k, _)| header.iter().any(|h| h.trim() == k.as_str()))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        TimeSeriesPanel::read_csv(path, &own)
    };
    Ok((read(mp)?, read(dp)?))
}

/// Monthly and daily panels for a standalone econometric run. Panels come from `[paths]`, or from
/// the synthetic market when no panel path is set. Entropy columns are taken from `entropy`
/// when given, otherwise they must already be in the monthly panel.
pub fn econ_inputs(
    config: &PipelineConfig,
    entropy: Option<&Path>,
) -> Result<(EconConfig, TimeSeriesPanel, TimeSeriesPanel)> {
    let mut econ = config.econ.clone();
    let (mut monthly, daily) = match (&config.paths.panel, &config.synthetic) {
        (None, Some(spec)) => {
            let corpus = generate_corpus(spec)?;
            let market = generate_market(spec, &corpus.metadata.true_gap)?;
            fill_synthetic_assets(&mut econ, &market);
            synthetic_panels(&market)?
        }
        _ => load_panels(config)?,
    };
    if let Some(path) = entropy {
        merge_entropy(&mut monthly, &EntropySeries::read_csv(path)?)?;
    } else if !monthly.has("ENT") {
        return Err(Error::Config("the monthly panel has no ENT column; pass an entropy CSV".into()));
    }
    let factors: Vec<&str> = FACTOR_COLUMNS.iter().copied().filter(|f| monthly.has(f)).collect();
    add_return_columns(&mut monthly, &econ.market, &factors)?;
    Ok((econ, monthly, daily))
}

fn fill_synthetic_assets(econ: &mut EconConfig, market: &SyntheticMarket) {
    if econ.base_assets.is_empty() {
        econ.base_assets = (0..market.base_daily.len()).map(base_name).collect();
    }
    if econ.test_assets.is_empty() {
        econ.test_assets = (0..market.test_daily.len()).map(test_name).collect();
    }
}

/// Executes corpus → rolling entropy → panel assembly → econometrics → tables and plots, and
/// writes a manifest. Artifacts carry a `.partial` suffix until the whole run succeeds.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<RunSummary, StageError> {
    config.validate().stage("config")?;
    let mut out = Artifacts::new(&config.paths.out).stage("config")?;
    let mut stages = Vec::new();
    let mut inputs = IndexMap::new();
    let mut results = Results::default();

    let mut econ = config.econ.clone();
    let (raw, panels): (Vec<RawArticle>, Option<(TimeSeriesPanel, TimeSeriesPanel)>) = match &config.synthetic {
        Some(spec) => {
            stages.push("generate".to_string());
            let corpus = generate_corpus(spec).stage("generate")?;
            let market = generate_market(spec, &corpus.metadata.true_gap).stage("generate")?;
            let panels = synthetic_panels(&market).stage("generate")?;
            write_jsonl(&out.path("articles.jsonl"), &corpus.articles).stage("generate")?;
            write_json(&out.path("synthetic_metadata.json"), &corpus.metadata).stage("generate")?;
            panels.0.write_csv(&out.path("panel_monthly.csv")).stage("generate")?;
            panels.1.write_csv(&out.path("panel_daily.csv")).stage("generate")?;
            panels.0.write_units(&out.path("units.toml")).stage("generate")?;
            fill_synthetic_assets(&mut econ, &market);
            (corpus.articles, Some(panels))
        }
        None => {
            let path = config.paths.articles.as_ref().expect("validated");
            inputs.insert("articles".to_string(), file_digest(path).stage("corpus")?);
            (read_jsonl(path).stage("corpus")?, None)
        }
    };
    if let Some(p) = &config.paths.embeddings {
        inputs.insert("embeddings".to_string(), file_digest(p).stage("embeddings")?);
    }

    stages.push("corpus".into());
    let (articles, rejected) = ingest(&raw, &config.corpus);
    if !rejected.is_empty() {
        log::warn!("{} articles rejected at ingestion", rejected.len());
    }
    let corpus = MonthlyCorpus::new(articles).stage("corpus")?;

    stages.push("entropy".into());
    let entropy_config = EntropyConfig {
        embeddings: config.paths.embeddings.clone(),
        snapshot_dir: Some(config.snapshot_dir()),
        ..config.entropy.clone()
    };
    let rolled = rolling_pipeline(&corpus, &entropy_config).stage("entropy")?;

    stages.push("panel".into());
    let (mut monthly, daily) = match panels {
        Some(p) => p,
        None => {
            for (k, p) in [("panel", &config.paths.panel), ("daily_panel", &config.paths.daily_panel), ("units", &config.paths.units)] {
                if let Some(p) = p {
                    inputs.insert(k.to_string(), file_digest(p).stage("panel")?);
                }
            }
            load_panels(config).stage("panel")?
        }
    };
    merge_entropy(&mut monthly, &rolled.series).stage("panel")?;
    let factors: Vec<&str> = FACTOR_COLUMNS.iter().copied().filter(|f| monthly.has(f)).collect();
    add_return_columns(&mut monthly, &econ.market, &factors).stage("panel")?;
    results.entropy = Some(rolled.series);

    run_econ(&econ, &monthly, &daily, &EconStage::ALL, &mut results, &mut stages)?;

    stages.push("report".into());
    emit_tables_and_plots(&results, &mut out).stage("report")?;
    let mut outputs = IndexMap::new();
    for name in out.names().to_vec() {
        let p = out.path(&name);
        outputs.insert(name, file_digest(&p).stage("report")?);
    }
    let config_text = config.to_toml().stage("report")?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        digest_algorithm: DIGEST_ALGORITHM.to_string(),
        seed: config.seed,
        config_digest: sha256_hex(config_text.as_bytes()),
        config: config.clone(),
        inputs,
        stages,
        outputs,
    };
    write_json(&out.path("manifest.json"), &manifest).stage("report")?;
    let outputs = out.finish().stage("report")?;
    Ok(RunSummary {
        manifest,
        outputs,
        results,
    })
}
