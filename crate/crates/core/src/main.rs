use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use news_entropy::corpus::{build_vocabulary, encode, ingest, read_jsonl, segment, write_jsonl, Article, Vocabulary};
use news_entropy::econ::MimicFrequency;
use news_entropy::embeddings::EmbeddingTable;
use news_entropy::entropy::{rolling_pipeline, write_article_scores, EntropyConfig, MonthlyCorpus, Scorer};
use news_entropy::lstm::{next_word_distribution, train, Dims, EmbeddingSource, LstmParams, ModelSnapshot};
use news_entropy::pipeline::{econ_inputs, run_econ, run_pipeline, synthetic_panels, EconStage, PipelineConfig, StageError};
use news_entropy::report::{emit_tables_and_plots, word_cloud_svg, write_json, Artifacts, Results};
use news_entropy::synthetic::{generate_corpus, generate_market};
use news_entropy::{Error, Month, Result};

#[derive(Parser)]
#[command(name = "news-entropy", version, about = "Rolling LSTM news entropy and asset-pricing tests")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Word-vector file; words missing from it get seeded random vectors.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Seed for the random vectors of words without a pretrained vector.
    #[arg(long, global = true)]
    embedding_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ArticlesArg {
    /// Articles as JSON Lines.
    #[arg(long)]
    articles: PathBuf,
}

#[derive(Args, Clone)]
struct PanelArgs {
    /// Monthly panel CSV.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Daily panel CSV.
    #[arg(long)]
    daily_panel: Option<PathBuf>,
    /// Unit sidecar (TOML map of column to percent, decimal or level).
    #[arg(long)]
    units: Option<PathBuf>,
    /// Entropy series CSV merged into the monthly panel.
    #[arg(long)]
    ent: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus, its generating process and a simulated market.
    Generate,
    /// Build the vocabulary of a corpus.
    BuildVocab(ArticlesArg),
    /// Train one model snapshot on the articles of a month range.
    Train {
        #[command(flatten)]
        articles: ArticlesArg,
        #[arg(long, value_parser = parse_month)]
        from: Month,
        #[arg(long, value_parser = parse_month)]
        to: Month,
        /// Warm start from this snapshot, keeping its vocabulary and embeddings.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Per-article entropy under one snapshot.
    Score {
        #[arg(long)]
        snapshot: PathBuf,
        #[command(flatten)]
        articles: ArticlesArg,
    },
    /// Rolling retraining and the monthly entropy series.
    EntSeries {
        #[command(flatten)]
        articles: ArticlesArg,
        /// Directory for the monthly snapshots.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// In-sample predictive regressions of market returns on entropy.
    RegressIs(PanelArgs),
    /// Rolling out-of-sample R^2 against the historical mean.
    RegressOos {
        #[command(flatten)]
        panel: PanelArgs,
        /// Rolling estimation windows in months.
        #[arg(long, value_delimiter = ',')]
        h: Option<Vec<usize>>,
    },
    /// AR innovations of the state variables, order picked by BIC.
    Innovations {
        #[command(flatten)]
        panel: PanelArgs,
        /// Largest AR order considered.
        #[arg(long)]
        max_p: Option<usize>,
    },
    /// Factor-mimicking portfolios for the innovations.
    Mimic {
        #[command(flatten)]
        panel: PanelArgs,
        /// Frequency of the returns the weights are applied to.
        #[arg(long, value_enum)]
        mimic_freq: Option<MimicFrequency>,
    },
    /// Fama-MacBeth risk premia with GMM standard errors.
    Fmgmm(PanelArgs),
    /// Twelve-month-ahead macro forecasting regressions.
    Macro(PanelArgs),
    /// Entropy regressed on known factors, sorted by R^2.
    Spanning(PanelArgs),
    /// Compare forecast and premium signs per factor.
    SignCheck(PanelArgs),
    /// The whole pipeline from corpus to tables, plots and manifest.
    RunAll,
    /// Most probable next words after a prefix, as CSV and SVG.
    Wordcloud {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        prefix: String,
        #[arg(long, default_value_t = 100)]
        top: usize,
    },
}

fn parse_month(s: &str) -> std::result::Result<Month, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::from_toml_file(p)?,
        None => PipelineConfig::desk_scale(),
    };
    if let Some(seed) = cli.seed.or(config.seed) {
        config.apply_seed(seed);
    }
    if let Some(p) = &cli.embeddings {
        config.paths.embeddings = Some(p.clone());
    }
    if let Some(s) = cli.embedding_seed {
        config.entropy.embedding_seed = s;
    }
    if let Some(o) = &cli.out {
        config.paths.out = o.clone();
    }
    Ok(config)
}

fn out_file(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn load_articles(path: &Path, config: &PipelineConfig) -> Result<Vec<Article>> {
    if !path.exists() {
        return Err(Error::Config(format!("articles path {} does not exist", path.display())));
    }
    let (articles, rejected) = ingest(&read_jsonl(path)?, &config.corpus);
    if !rejected.is_empty() {
        log::warn!("{} articles rejected at ingestion", rejected.len());
    }
    Ok(articles)
}

fn entropy_config(config: &PipelineConfig) -> EntropyConfig {
    EntropyConfig {
        embeddings: config.paths.embeddings.clone(),
        ..config.entropy.clone()
    }
}

fn generate(cli: &Cli, config: &PipelineConfig) -> Result<()> {
    let spec = config.synthetic.clone().unwrap_or_default();
    spec.validate()?;
    let corpus = generate_corpus(&spec)?;
    let market = generate_market(&spec, &corpus.metadata.true_gap)?;
    let (monthly, daily) = synthetic_panels(&market)?;
    let mut out = Artifacts::new(&out_file(cli, "synthetic"))?;
    write_jsonl(&out.path("articles.jsonl"), &corpus.articles)?;
    write_json(&out.path("synthetic_metadata.json"), &corpus.metadata)?;
    monthly.write_csv(&out.path("panel_monthly.csv"))?;
    daily.write_csv(&out.path("panel_daily.csv"))?;
    monthly.write_units(&out.path("units.toml"))?;
    for (name, path) in out.finish()? {
        log::info!("wrote {name} to {}", path.display());
    }
    Ok(())
}

fn train_one(cli: &Cli, config: &PipelineConfig, articles: &Path, from: Month, to: Month, init: Option<&Path>) -> Result<()> {
    let articles = load_articles(articles, config)?;
    let window: Vec<&Article> = articles.iter().filter(|a| a.month >= from && a.month <= to).collect();
    if window.is_empty() {
        return Err(Error::Empty("no articles in the training window"));
    }
    let ec = entropy_config(config);
    let (params, vocab, source, train_config) = match init {
        Some(p) => {
            let prior = ModelSnapshot::load(p)?;
            (prior.params, prior.vocab, prior.embedding, ec.retrain.clone())
        }
        None => {
            let vocab = build_vocabulary(window.iter().copied(), ec.v_max)?;
            let source = EmbeddingSource {
                dim: ec.embedding_dim,
                seed: ec.embedding_seed,
                file: ec.embeddings.clone(),
            };
            let params = LstmParams::init(Dims::new(ec.embedding_dim, ec.d_h, vocab.output_size()), ec.init_seed);
            (params, vocab, source, ec.initial.clone())
        }
    };
    let table = source.build(&vocab)?;
    let segments: Vec<_> = window
        .iter()
        .flat_map(|a| segment(&encode(a, &vocab), ec.segment_len, vocab.pad_id()))
        .collect();
    let outcome = train(params, &segments, &table, &train_config)?;
    if let Some(l) = outcome.loss_trace.last() {
        log::info!("final training loss {l:.6}");
    }
    let snap = ModelSnapshot::new(outcome.params, (from, to), &vocab, &table, source);
    snap.save(&out_file(cli, "snapshot.json"))
}

fn score(cli: &Cli, config: &PipelineConfig, snapshot: &Path, articles: &Path) -> Result<()> {
    let snap = ModelSnapshot::load(snapshot)?;
    let table = snap.embeddings()?;
    let articles = load_articles(articles, config)?;
    let refs: Vec<&Article> = articles.iter().collect();
    let scores = Scorer::new(&snap, &table, config.entropy.segment_len)?.articles(&refs)?;
    write_article_scores(&out_file(cli, "per_article.csv"), &scores)
}

fn ent_series(cli: &Cli, config: &PipelineConfig, articles: &Path, snapshots: Option<&Path>) -> Result<()> {
    let corpus = MonthlyCorpus::new(load_articles(articles, config)?)?;
    let ec = EntropyConfig {
        snapshot_dir: snapshots.map(Path::to_path_buf),
        ..entropy_config(config)
    };
    let rolled = rolling_pipeline(&corpus, &ec)?;
    rolled.series.write_csv(&out_file(cli, "ent.csv"))
}

fn econ(cli: &Cli, mut config: PipelineConfig, args: &PanelArgs, stage: EconStage) -> std::result::Result<(), StageError> {
    let to_stage = |error| StageError { stage: "config", error };
    for (dst, src) in [
        (&mut config.paths.panel, &args.panel),
        (&mut config.paths.daily_panel, &args.daily_panel),
        (&mut config.paths.units, &args.units),
    ] {
        if src.is_some() {
            *dst = src.clone();
        }
    }
    if let Some(p) = args.ent.as_ref().filter(|p| !p.exists()) {
        return Err(to_stage(Error::Config(format!("entropy path {} does not exist", p.display()))));
    }
    for p in [&config.paths.panel, &config.paths.daily_panel, &config.paths.units].into_iter().flatten() {
        if !p.exists() {
            return Err(to_stage(Error::Config(format!("panel path {} does not exist", p.display()))));
        }
    }
    let (econ, monthly, daily) = econ_inputs(&config, args.ent.as_deref()).map_err(|error| StageError { stage: "panel", error })?;
    let mut results = Results::default();
    let mut stages = Vec::new();
    run_econ(&econ, &monthly, &daily, &[stage], &mut results, &mut stages)?;
    let report = |error| StageError { stage: "report", error };
    let mut out = Artifacts::new(&out_file(cli, "out")).map_err(report)?;
    emit_tables_and_plots(&results, &mut out).map_err(report)?;
    for (name, path) in out.finish().map_err(report)? {
        log::info!("wrote {name} to {}", path.display());
    }
    Ok(())
}

fn wordcloud(cli: &Cli, snapshot: &Path, prefix: &str, top: usize) -> Result<()> {
    let snap = ModelSnapshot::load(snapshot)?;
    let table: EmbeddingTable = snap.embeddings()?;
    let words = next_word_distribution(&snap, &table, prefix, top)?;
    let mut out = Artifacts::new(&out_file(cli, "wordcloud"))?;
    let csv_path = out.path("wordcloud.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::io(&csv_path, e.into()))?;
    let io = |e: csv::Error| Error::io(&csv_path, e.into());
    w.write_record(["rank", "word", "probability"]).map_err(io)?;
    for (i, (word, p)) in words.iter().enumerate() {
        w.write_record([(i + 1).to_string(), word.clone(), format!("{p:.17e}")]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    drop(w);
    word_cloud_svg(&out.path("wordcloud.svg"), &format!("Next word after \"{prefix}\""), &words)?;
    out.finish()?;
    Ok(())
}

fn vocab_only(cli: &Cli, config: &PipelineConfig, articles: &Path) -> Result<()> {
    let articles = load_articles(articles, config)?;
    let vocab: Vocabulary = build_vocabulary(&articles, config.corpus.v_max)?;
    log::info!("{} words", vocab.len());
    vocab.write(&out_file(cli, "vocab.txt"))
}

fn dispatch(cli: &Cli) -> std::result::Result<(), StageError> {
    let at = |stage: &'static str| move |error| StageError { stage, error };
    let mut config = load_config(cli).map_err(at("config"))?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| at("config")(Error::Config(e.to_string())))?;
    }
    match &cli.command {
        Command::Generate => generate(cli, &config).map_err(at("generate")),
        Command::BuildVocab(a) => vocab_only(cli, &config, &a.articles).map_err(at("build-vocab")),
        Command::Train { articles, from, to, init } => {
            train_one(cli, &config, &articles.articles, *from, *to, init.as_deref()).map_err(at("train"))
        }
        Command::Score { snapshot, articles } => score(cli, &config, snapshot, &articles.articles).map_err(at("score")),
        Command::EntSeries { articles, snapshots } => {
            ent_series(cli, &config, &articles.articles, snapshots.as_deref()).map_err(at("ent-series"))
        }
        Command::RegressIs(p) => econ(cli, config, p, EconStage::RegressIs),
        Command::RegressOos { panel, h } => {
            if let Some(h) = h {
                config.econ.oos_h = h.clone();
            }
            config.validate().map_err(at("config"))?;
            econ(cli, config, panel, EconStage::RegressOos)
        }
        Command::Innovations { panel, max_p } => {
            if let Some(p) = max_p {
                config.econ.max_p = *p;
            }
            econ(cli, config, panel, EconStage::Innovations)
        }
        Command::Mimic { panel, mimic_freq } => {
            if let Some(f) = mimic_freq {
                config.econ.mimic_freq = *f;
            }
            econ(cli, config, panel, EconStage::Mimic)
        }
        Command::Fmgmm(p) => econ(cli, config, p, EconStage::Fmgmm),
        Command::Macro(p) => econ(cli, config, p, EconStage::Macro),
        Command::Spanning(p) => econ(cli, config, p, EconStage::Spanning),
        Command::SignCheck(p) => econ(cli, config, p, EconStage::SignCheck),
        Command::RunAll => {
            let summary = run_pipeline(&config)?;
            for (name, path) in &summary.outputs {
                log::info!("wrote {name} to {}", path.display());
            }
            Ok(())
        }
        Command::Wordcloud { snapshot, prefix, top } => wordcloud(cli, snapshot, prefix, *top).map_err(at("wordcloud")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
