//! Command-line pipeline: validate, label, split, train, eval, predict,
//! backtest, report and synth.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use srlp::backtest::{self, EquityCurve, SeriesMetrics, StrategyConfig};
use srlp::event_data::{
    self, compute_returns, derive_labels, load_price_dir, parse_events, read_daily_bars, split_dataset, write_daily_bars,
    write_embeddings, write_events, write_minute_bars, Corpus, DailyBar, FactorScaler, NewsEvent, ReturnHorizon,
};
use srlp::features::MaskPreset;
use srlp::model::Checkpoint;
use srlp::synthetic::{market_fixture, separable_corpus, MarketConfig, SeparableConfig};
use srlp::train::{self, Partitions, TrainConfig};

pub use config::RunConfig;
use manifest::ManifestBuilder;

#[derive(Debug, Parser)]
#[command(name = "srlp", version, about = "SRL-pooled news classification and event-driven backtesting")]
pub struct Cli {
    /// Flat TOML file with TrainConfig, StrategyConfig and label threshold keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed and the in-distribution split seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check an events file, its embeddings and price files.
    Validate(ValidateArgs),
    /// Compute return rates and assign quantile labels.
    Label(LabelArgs),
    /// Write the configured partitions of a labeled corpus.
    Split(CorpusArgs),
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Classification metrics of a checkpoint on a labeled corpus.
    Eval(ModelArgs),
    /// Class probabilities for every event.
    Predict(ModelArgs),
    /// Simulate the trading strategy on a predictions file.
    Backtest(BacktestArgs),
    /// Metric table and charts from backtest artifacts.
    Report(ReportArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Price directory with minute/ and daily/ CSV files.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// Write the feature matrix of this event as CSV.
    #[arg(long, value_name = "EVENT_ID")]
    pub dump_matrix: Option<String>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    /// next-close, close:K or minutes:M.
    #[arg(long)]
    pub horizon: Option<ReturnHorizon>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    V,
    A0a1,
    Uniform,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub mask_preset: Option<PresetArg>,
    /// Train before this date and test from it on.
    #[arg(long)]
    pub ood_cutoff: Option<chrono::NaiveDate>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub prices: PathBuf,
    /// Benchmark index as NAME=PATH to a daily CSV; repeatable.
    #[arg(long = "index", value_parser = parse_index)]
    pub indices: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub allow_short: bool,
    #[arg(long)]
    pub horizon: Option<ReturnHorizon>,
    #[arg(long)]
    pub position_fraction: Option<f64>,
    #[arg(long)]
    pub max_positions: Option<usize>,
    #[arg(long)]
    pub cost_bps: Option<f64>,
    #[arg(long)]
    pub confidence_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding a backtest's equity.csv.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long = "index", value_parser = parse_index)]
    pub indices: Vec<(String, PathBuf)>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    /// Balanced classes keyed to the predicate embedding.
    Separable,
    /// Unlabeled events with minute prices and a declining index.
    Market,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub n_events: Option<usize>,
}

fn parse_index(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got `{s}`"))?;
    if name.is_empty() {
        return Err("index name is empty".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

struct Ctx {
    out: PathBuf,
    config: RunConfig,
    manifest: ManifestBuilder,
}

impl Ctx {
    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.output(p.clone());
        p
    }

    fn input(&mut self, p: &Path) -> Result<()> {
        if !p.exists() {
            bail!("missing input {}", p.display());
        }
        self.manifest.input(p)
    }

    fn load_corpus(&mut self, args: &CorpusArgs) -> Result<Corpus> {
        self.input(&args.events)?;
        if let Some(e) = &args.embeddings {
            self.input(e)?;
        }
        let corpus = parse_events(&args.events, args.embeddings.as_deref())?;
        corpus.validate()?;
        Ok(corpus)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate(_) => "validate",
        Command::Label(_) => "label",
        Command::Split(_) => "split",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Predict(_) => "predict",
        Command::Backtest(_) => "backtest",
        Command::Report(_) => "report",
        Command::Synth(_) => "synth",
    }
}

/// Flags win over the config file, which wins over defaults.
fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        if let event_data::SplitScheme::InDistribution { seed: s } = &mut cfg.train.split {
            *s = seed;
        }
    }
    match &cli.command {
        Command::Label(a) => {
            let l = &mut cfg.labels;
            for (slot, v) in [(&mut l.a, a.a), (&mut l.b, a.b), (&mut l.c, a.c), (&mut l.d, a.d)] {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            if let Some(h) = a.horizon {
                cfg.strategy.horizon = h;
            }
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            t.epochs = a.epochs.unwrap_or(t.epochs);
            t.batch_size = a.batch_size.unwrap_or(t.batch_size);
            t.lr = a.lr.unwrap_or(t.lr);
            t.alpha = a.alpha.unwrap_or(t.alpha);
            if let Some(p) = a.mask_preset {
                t.mask_preset = match p {
                    PresetArg::V => MaskPreset::V,
                    PresetArg::A0a1 => MaskPreset::A0A1,
                    PresetArg::Uniform => MaskPreset::Uniform,
                };
            }
            if let Some(cutoff) = a.ood_cutoff {
                t.split = event_data::SplitScheme::OutOfDistribution { cutoff };
            }
        }
        Command::Backtest(a) => {
            let s = &mut cfg.strategy;
            s.allow_short |= a.allow_short;
            s.horizon = a.horizon.unwrap_or(s.horizon);
            s.position_fraction = a.position_fraction.unwrap_or(s.position_fraction);
            s.max_positions = a.max_positions.unwrap_or(s.max_positions);
            s.cost_bps = a.cost_bps.unwrap_or(s.cost_bps);
            s.confidence_threshold = a.confidence_threshold.unwrap_or(s.confidence_threshold);
        }
        _ => {}
    }
    Ok(cfg)
}

/// Runs one parsed command and writes its manifest.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let config = effective_config(&cli)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let name = command_name(&cli.command);
    let manifest = ManifestBuilder::new(name, argv, config.train.seed, serde_json::to_value(&config)?);
    let mut ctx = Ctx { out: cli.out.clone(), config, manifest };
    match &cli.command {
        Command::Validate(a) => validate(&mut ctx, a)?,
        Command::Label(a) => label(&mut ctx, a)?,
        Command::Split(a) => split(&mut ctx, a)?,
        Command::Train(a) => train_cmd(&mut ctx, a)?,
        Command::Eval(a) => eval(&mut ctx, a)?,
        Command::Predict(a) => predict(&mut ctx, a)?,
        Command::Backtest(a) => backtest_cmd(&mut ctx, a)?,
        Command::Report(a) => report(&mut ctx, a)?,
        Command::Synth(a) => synth(&mut ctx, a)?,
    }
    let path = ctx.manifest.finish(&ctx.out)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes events and, when they carry embeddings, the matching embeddings file.
fn write_corpus(ctx: &mut Ctx, stem: &str, d_tok: Option<usize>, events: &[NewsEvent]) -> Result<()> {
    write_events(&ctx.output(&format!("{stem}.jsonl")), events)?;
    if let Some(d) = d_tok {
        write_embeddings(&ctx.output(&format!("{stem}.emb")), d, events)?;
    }
    Ok(())
}

fn validate(ctx: &mut Ctx, a: &ValidateArgs) -> Result<()> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let mut summary = serde_json::json!({
        "events": corpus.len(),
        "d_tok": corpus.d_tok,
        "with_embeddings": corpus.events.iter().filter(|e| e.has_embeddings()).count(),
        "without_complete_frames": corpus.events.iter().filter(|e| e.complete_frame_count() == 0).count(),
        "labeled": corpus.events.iter().filter(|e| e.label.is_some()).count(),
    });
    if let Some(dir) = &a.prices {
        ctx.input(dir)?;
        let prices = load_price_dir(dir)?;
        summary["price_series"] = prices.len().into();
        summary["events_without_prices"] =
            corpus.events.iter().filter(|e| !prices.contains_key(&e.stock_id)).count().into();
    }
    if let Some(id) = &a.dump_matrix {
        let event = corpus.events.iter().find(|e| &e.event_id == id).ok_or_else(|| anyhow!("no event {id}"))?;
        let scaler = FactorScaler::fit(&corpus.events)?;
        let m = train::event_matrix(event, &scaler, ctx.config.train.n_max)?
            .ok_or_else(|| anyhow!("event {id} has no complete SRL frame"))?;
        let path = ctx.output(&format!("matrix_{id}.csv"));
        m.write_csv(BufWriter::new(File::create(&path)?))?;
    }
    write_json(&ctx.output("validation.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn label(ctx: &mut Ctx, a: &LabelArgs) -> Result<()> {
    ctx.config.labels.validate()?;
    let corpus = ctx.load_corpus(&a.corpus)?;
    ctx.input(&a.prices)?;
    let prices = load_price_dir(&a.prices)?;
    let mut events = corpus.events;
    compute_returns(&mut events, &prices, ctx.config.strategy.horizon)?;
    let labeled = derive_labels(events, &ctx.config.labels)?;
    write_corpus(ctx, "labeled", corpus.d_tok, &labeled.events)?;
    write_json(&ctx.output("label_report.json"), &labeled.report)?;
    let r = &labeled.report;
    println!(
        "labeled {} of {}: {} outperforming, {} neutral, {} underperforming",
        labeled.events.len(),
        r.total,
        r.outperforming,
        r.neutral,
        r.underperforming
    );
    Ok(())
}

fn split(ctx: &mut Ctx, a: &CorpusArgs) -> Result<()> {
    let corpus = ctx.load_corpus(a)?;
    let split = split_dataset(corpus.events, &ctx.config.train.split)?;
    for (name, events) in split.partitions() {
        write_corpus(ctx, name, corpus.d_tok, events)?;
        println!("{name}: {}", events.len());
    }
    Ok(())
}

fn train_cmd(ctx: &mut Ctx, a: &TrainArgs) -> Result<()> {
    let cfg: TrainConfig = ctx.config.train.clone();
    cfg.validate()?;
    let corpus = ctx.load_corpus(&a.corpus)?;
    let split = split_dataset(corpus.events, &cfg.split)?;
    let parts = Partitions::from_split(split, cfg.validation_fraction, cfg.seed)?;
    info!("train {} validation {} test {}", parts.train.len(), parts.validation.len(), parts.test.len());
    let outcome = train::train_with(&parts.train, &parts.validation, &cfg, |r| {
        info!("epoch {} loss {:.6} validation accuracy {:.4}", r.epoch, r.train_loss, r.validation_accuracy);
    })?;
    outcome.checkpoint.save(&ctx.output("model.ckpt"))?;
    write_jsonl(&ctx.output("train_log.jsonl"), &outcome.epochs)?;
    write_jsonl(&ctx.output("steps.jsonl"), &outcome.steps)?;
    let test = train::evaluate(&outcome.checkpoint, &parts.test)?;
    write_json(&ctx.output("test_report.json"), &test)?;
    println!(
        "best epoch {} validation accuracy {:.4} test accuracy {:.4}",
        outcome.best_epoch, outcome.best_validation_accuracy, test.accuracy
    );
    Ok(())
}

fn load_checkpoint(ctx: &mut Ctx, path: &Path) -> Result<Checkpoint> {
    ctx.input(path)?;
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn eval(ctx: &mut Ctx, a: &ModelArgs) -> Result<()> {
    let checkpoint = load_checkpoint(ctx, &a.checkpoint)?;
    let corpus = ctx.load_corpus(&a.corpus)?;
    let report = train::evaluate(&checkpoint, &corpus.events)?;
    write_json(&ctx.output("eval.json"), &report)?;
    println!(
        "accuracy {:.4} macro-F1 {:.4} micro-F1 {:.4} ({} skipped)",
        report.accuracy, report.macro_f1, report.micro_f1, report.skipped
    );
    Ok(())
}

fn predict(ctx: &mut Ctx, a: &ModelArgs) -> Result<()> {
    let checkpoint = load_checkpoint(ctx, &a.checkpoint)?;
    let corpus = ctx.load_corpus(&a.corpus)?;
    let out = train::predict(&checkpoint, &corpus.events)?;
    train::write_predictions(&ctx.output("predictions.csv"), &out.predictions)?;
    train::write_skipped(&ctx.output("skipped.csv"), &out.skipped)?;
    println!("{} predictions, {} skipped", out.predictions.len(), out.skipped.len());
    Ok(())
}

fn load_indices(ctx: &mut Ctx, specs: &[(String, PathBuf)]) -> Result<Vec<(String, Vec<DailyBar>)>> {
    specs
        .iter()
        .map(|(name, path)| {
            ctx.input(path)?;
            Ok((name.clone(), read_daily_bars(path)?))
        })
        .collect()
}

fn print_table(rows: &[SeriesMetrics]) {
    println!("{:<12} {:>18} {:>13} {:>8}", "series", "annualized_return", "max_drawdown", "sharpe");
    for r in rows {
        let sharpe = r.sharpe.map(|s| format!("{s:.4}")).unwrap_or_else(|| "n/a".into());
        println!("{:<12} {:>18.4} {:>13.4} {:>8}", r.series, r.annualized_return, r.max_drawdown, sharpe);
    }
}

fn write_report(ctx: &mut Ctx, curve: &EquityCurve, indices: &[(String, Vec<DailyBar>)]) -> Result<()> {
    let rows = backtest::benchmark_report(curve, indices)?;
    backtest::write_report_csv(&ctx.output("report.csv"), &rows)?;
    backtest::write_report_jsonl(&ctx.output("report.jsonl"), &rows)?;
    let dates = curve.dates();
    let mut curves = vec![("strategy".to_string(), curve.clone())];
    for (name, bars) in indices {
        curves.push((name.clone(), backtest::index_curve(name, bars, &dates)?));
    }
    let svg = ctx.output("chart.svg");
    std::fs::write(&svg, backtest::render_svg(&curves)).with_context(|| format!("writing {}", svg.display()))?;
    print_table(&rows);
    Ok(())
}

fn backtest_cmd(ctx: &mut Ctx, a: &BacktestArgs) -> Result<()> {
    let cfg: StrategyConfig = ctx.config.strategy.clone();
    cfg.validate()?;
    ctx.input(&a.predictions)?;
    let predictions = train::read_predictions(&a.predictions)?;
    ctx.input(&a.prices)?;
    let prices = load_price_dir(&a.prices)?;
    let indices = load_indices(ctx, &a.indices)?;
    let calendar = backtest::calendar_from_prices(&prices);
    let result = backtest::simulate(&predictions, &prices, &cfg, &calendar)?;
    backtest::write_trades_csv(&ctx.output("trades.csv"), &result.trades)?;
    backtest::write_curve_csv(&ctx.output("equity.csv"), &result.curve)?;
    let skipped = ctx.output("skipped_signals.csv");
    let mut w = csv::Writer::from_path(&skipped)?;
    w.write_record(["event_id", "reason"])?;
    for s in &result.skipped {
        w.write_record([&s.event_id, &s.reason])?;
    }
    w.flush()?;
    println!("{} trades, {} signals skipped", result.trades.len(), result.skipped.len());
    write_report(ctx, &result.curve, &indices)
}

fn report(ctx: &mut Ctx, a: &ReportArgs) -> Result<()> {
    let equity = a.run.join("equity.csv");
    if !equity.exists() {
        bail!("missing artifact {}", equity.display());
    }
    ctx.input(&equity)?;
    let curve = backtest::read_curve_csv(&equity)?;
    let indices = load_indices(ctx, &a.indices)?;
    write_report(ctx, &curve, &indices)
}

fn synth(ctx: &mut Ctx, a: &SynthArgs) -> Result<()> {
    let seed = ctx.config.train.seed;
    match a.kind {
        SynthKind::Separable => {
            let defaults = SeparableConfig::default();
            let cfg = SeparableConfig { seed, n_events: a.n_events.unwrap_or(defaults.n_events), ..defaults };
            let events = separable_corpus(&cfg);
            write_corpus(ctx, "events", Some(cfg.d_tok), &events)?;
            println!("{} events", events.len());
        }
        SynthKind::Market => {
            let cfg = MarketConfig { seed, ..MarketConfig::default() };
            let fixture = market_fixture(&cfg);
            write_corpus(ctx, "events", Some(cfg.d_tok), &fixture.events)?;
            write_prices(ctx, &fixture.prices)?;
            write_daily_bars(&ctx.output("index.csv"), &fixture.index)?;
            println!("{} events, {} stocks", fixture.events.len(), fixture.prices.len());
        }
    }
    Ok(())
}

fn write_prices(ctx: &mut Ctx, prices: &BTreeMap<String, event_data::PriceSeries>) -> Result<()> {
    for sub in ["minute", "daily"] {
        std::fs::create_dir_all(ctx.out.join("prices").join(sub))?;
    }
    for (stock, series) in prices {
        if !series.minute_bars.is_empty() {
            write_minute_bars(&ctx.output(&format!("prices/minute/{stock}.csv")), &series.minute_bars)?;
        }
        if !series.daily_bars.is_empty() {
            write_daily_bars(&ctx.output(&format!("prices/daily/{stock}.csv")), &series.daily_bars)?;
        }
    }
    Ok(())
}
