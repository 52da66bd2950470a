//! `washtrade` command-line front end.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use washtrade::battery::{run_pair, BatteryConfig, TestOutcome};
use washtrade::benford::{chi_squared_benford, counterfactual_wash_benford};
use washtrade::ingest::{read_trades_file, Format, ParseOptions, ParseReport, TradeDataset};
use washtrade::report::{build_report, regulated_roundness, ReportOptions, WashMode};
use washtrade::summary::{summarize, GroupSummary};
use washtrade::synth::{gen_exchange, GeneratorConfig, TradeCount, WashSizeLaw};
use washtrade::tail::{fit_tail_sample, pareto_levy_verdict};
use washtrade::trade::{read_exchange_meta, ExchangeMeta, RegulatoryClass};
use washtrade::verdict::{counterfactual_rank, fisher_combine, LogBase, RankModel};
use washtrade::wash::{
    bootstrap_wash_sd, estimate_exchange, fit_benchmarks, roundness_chi_squared, write_report_csv,
    BenchmarkSet, BootstrapConfig, Scope,
};
use washtrade::{Error, PairRegistry};

/// Exit status for a run that completed but flagged groups with insufficient data.
const EXIT_FLAGGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "washtrade",
    version,
    about = "Statistical forensics for wash trading in trade tapes"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Significance level of every test.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    /// Sample size χ² statistics are scaled to, or `raw` for the trade count.
    #[arg(long, global = true, default_value = "10000")]
    effective_n: String,
    /// Bootstrap replicates for wash-estimate standard deviations (0 disables).
    #[arg(long, global = true, default_value_t = 1000)]
    bootstrap: usize,
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tape format; inferred from the file extension when omitted.
    #[arg(long, global = true)]
    format: Option<TapeFormat>,
    /// Output file, or directory for `report` and `plot-data`; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TapeFormat {
    Csv,
    Jsonl,
}

impl From<TapeFormat> for Format {
    fn from(f: TapeFormat) -> Format {
        match f {
            TapeFormat::Csv => Format::Csv,
            TapeFormat::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Args, Clone)]
struct Input {
    /// Trade tapes (CSV or JSONL).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Base-unit overrides, one `PAIR = exponent` per line.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Exchange metadata CSV: exchange,name,class,age,rank,traffic_pct,unique_visitors.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Abort on the first malformed row.
    #[arg(long)]
    strict: bool,
    /// Drop exact duplicate rows.
    #[arg(long)]
    dedupe: bool,
    /// Start of the sample window, ms since the epoch (inclusive).
    #[arg(long, requires = "end_ms")]
    start_ms: Option<i64>,
    /// End of the sample window, ms since the epoch (inclusive).
    #[arg(long, requires = "start_ms")]
    end_ms: Option<i64>,
}

#[derive(Args, Clone)]
struct BenchmarkArgs {
    /// Fit one benchmark per pair or one pooled over pairs.
    #[arg(long, value_enum, default_value_t = ScopeArg::PerPair)]
    scope: ScopeArg,
    /// Add exchange covariates from the metadata file as controls.
    #[arg(long)]
    controls: bool,
    /// Previously fitted benchmark (from `fit-benchmark`) instead of fitting.
    #[arg(long)]
    benchmark: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    PerPair,
    Pooled,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Scope {
        match s {
            ScopeArg::PerPair => Scope::PerPair,
            ScopeArg::Pooled => Scope::Pooled,
        }
    }
}

#[derive(Args, Clone)]
struct RankArgs {
    /// Intercept of the volume-rank model.
    #[arg(long, default_value_t = 416.269, allow_negative_numbers = true)]
    rank_a: f64,
    /// Slope of the volume-rank model.
    #[arg(long, default_value_t = -19.202, allow_negative_numbers = true)]
    rank_b: f64,
    /// Logarithm in the rank model.
    #[arg(long, value_enum, default_value_t = BaseArg::E)]
    log_base: BaseArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    E,
    #[value(name = "10")]
    Ten,
}

impl RankArgs {
    fn model(&self) -> RankModel {
        RankModel {
            a: self.rank_a,
            b: self.rank_b,
            base: match self.log_base {
                BaseArg::E => LogBase::Natural,
                BaseArg::Ten => LogBase::Ten,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Plot {
    Benford,
    Sizes,
    Tail,
}

#[derive(Subcommand)]
enum Command {
    /// Parse tapes and report accepted and rejected rows.
    IngestCheck(Input),
    /// First-digit χ² test per group.
    Benford(Input),
    /// Round-size clustering t-tests (100 and 500 base units) per group.
    Cluster(Input),
    /// Power-law tail fits per group.
    Tail(Input),
    /// Roundness distribution against the pooled regulated benchmark.
    Roundness(Input),
    /// Fit the round/unrounded volume benchmark on regulated exchanges.
    FitBenchmark {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        bench: BenchmarkArgs,
    },
    /// Wash volume per exchange and pair.
    EstimateWash {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        bench: BenchmarkArgs,
    },
    /// Combine p-values with Fisher's method.
    Fisher {
        #[arg(required = true)]
        p_values: Vec<f64>,
    },
    /// Full battery, wash estimates and rank counterfactuals.
    Report {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        bench: BenchmarkArgs,
        #[command(flatten)]
        rank: RankArgs,
        /// Run the detectors only.
        #[arg(long)]
        no_wash: bool,
    },
    /// Generate a labelled synthetic tape.
    Synth {
        /// Trades in the tape, authentic and wash together; approximate because wash
        /// volume is matched to the realised authentic volume.
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// Wash share of traded volume.
        #[arg(long, default_value_t = 0.0)]
        wash: f64,
        #[arg(long, default_value = "SYN")]
        exchange: String,
        #[arg(long, default_value = "BTC/USD")]
        pair: String,
        /// Base-unit overrides, one `PAIR = exponent` per line.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Count `n` as authentic trades only; wash trades are added on top.
        #[arg(long)]
        authentic_count: bool,
        #[arg(long, default_value_t = 13)]
        weeks: u32,
        /// Wash sizes uniform over `[low, high]` base units.
        #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
        wash_range: Option<Vec<f64>>,
        /// Append the ground-truth `label` column.
        #[arg(long)]
        labels: bool,
    },
    /// Plot-ready CSVs: digit histograms, size histograms or tail points.
    PlotData {
        #[arg(value_enum)]
        which: Plot,
        #[command(flatten)]
        input: Input,
        /// Size histogram range in base units.
        #[arg(long, default_value_t = 0)]
        size_lo: u64,
        #[arg(long, default_value_t = 1000)]
        size_hi: u64,
    },
    /// Rank shift implied by removing wash volume.
    Rank {
        #[arg(long)]
        reported_rank: i64,
        #[arg(long)]
        volume: f64,
        /// Wash share of reported volume, percent.
        #[arg(long)]
        wash_percent: f64,
        #[command(flatten)]
        rank: RankArgs,
    },
}

#[derive(Debug)]
enum Failure {
    Fatal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Fatal(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Fatal(e.to_string())
    }
}

type CmdResult = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_FLAGGED),
        Err(Failure::Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

impl Global {
    fn battery(&self) -> Result<BatteryConfig, Failure> {
        let effective_n = match self.effective_n.as_str() {
            "raw" => None,
            v => Some(v.parse::<f64>().map_err(|_| {
                Failure::Fatal(format!(
                    "--effective-n: expected a number or `raw`, got `{v}`"
                ))
            })?),
        };
        let cfg = BatteryConfig {
            alpha: self.alpha,
            effective_n,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn writer(&self) -> Result<Box<dyn Write>, Failure> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).map_err(|e| Failure::Fatal(format!("{}: {e}", p.display())))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| Failure::Fatal(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn emit<T: Serialize>(&self, value: &T) -> Result<(), Failure> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Fatal(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

struct Loaded {
    dataset: TradeDataset,
    reports: Vec<(PathBuf, ParseReport)>,
    registry: PairRegistry,
    meta: BTreeMap<String, ExchangeMeta>,
}

impl Loaded {
    fn summaries(&self) -> Result<Vec<GroupSummary>, Failure> {
        Ok(summarize(&self.dataset, &self.registry)?)
    }
}

fn registry_from(pairs: Option<&Path>) -> Result<PairRegistry, Failure> {
    let mut registry = PairRegistry::default();
    if let Some(p) = pairs {
        registry.load_overrides(
            &fs::read_to_string(p).map_err(|e| Failure::Fatal(format!("{}: {e}", p.display())))?,
        )?;
    }
    Ok(registry)
}

fn load(global: &Global, input: &Input) -> Result<Loaded, Failure> {
    let opts = ParseOptions {
        strict: input.strict,
        dedupe: input.dedupe,
        window: input.start_ms.zip(input.end_ms),
    };
    let mut trades = Vec::new();
    let mut reports = Vec::new();
    for path in &input.inputs {
        let (ds, report) = read_trades_file(path, global.format.map(Format::from), &opts)?;
        trades.extend(ds.trades().cloned());
        reports.push((path.clone(), report));
    }
    if trades.is_empty() {
        return Err(Failure::Fatal("no trades ingested".into()));
    }
    let meta = match &input.meta {
        Some(p) => read_exchange_meta(
            File::open(p).map_err(|e| Failure::Fatal(format!("{}: {e}", p.display())))?,
        )?,
        None => BTreeMap::new(),
    };
    Ok(Loaded {
        dataset: TradeDataset::from_trades(trades),
        reports,
        registry: registry_from(input.pairs.as_deref())?,
        meta,
    })
}

fn outcome_json(t: &TestOutcome) -> serde_json::Value {
    json!({ "statistic": t.statistic, "p": t.p, "pass": t.pass, "skipped": t.skipped })
}

fn run(cli: &Cli) -> CmdResult {
    let g = &cli.global;
    match &cli.command {
        Command::IngestCheck(input) => ingest_check(g, input),
        Command::Benford(input) => benford(g, input),
        Command::Cluster(input) => cluster(g, input),
        Command::Tail(input) => tail(g, input),
        Command::Roundness(input) => roundness(g, input),
        Command::FitBenchmark { input, bench } => fit_benchmark(g, input, bench),
        Command::EstimateWash { input, bench } => estimate(g, input, bench),
        Command::Fisher { p_values } => {
            let r = fisher_combine(p_values, g.alpha)?;
            g.emit(&r)?;
            Ok(false)
        }
        Command::Report {
            input,
            bench,
            rank,
            no_wash,
        } => report(g, input, bench, rank, *no_wash),
        Command::Synth {
            n,
            wash,
            exchange,
            pair,
            pairs,
            authentic_count,
            weeks,
            wash_range,
            labels,
        } => {
            let registry = registry_from(pairs.as_deref())?;
            let mut cfg =
                GeneratorConfig::new(g.seed, exchange, registry.get(pair)?.clone(), *n, *wash);
            cfg.weeks = *weeks;
            if *authentic_count {
                cfg.count = TradeCount::Authentic(*n);
            }
            if let Some(r) = wash_range {
                cfg.wash.law = WashSizeLaw::Uniform {
                    low: r[0],
                    high: r[1],
                };
            }
            let tape = gen_exchange(&cfg)?;
            for f in &tape.flags {
                eprintln!("warning: {f}");
            }
            let format = g
                .format
                .map(Format::from)
                .or_else(|| g.out.as_deref().map(Format::from_path))
                .unwrap_or(Format::Csv);
            let w = g.writer()?;
            match format {
                Format::Csv => tape.write_csv(w, *labels)?,
                Format::Jsonl => tape.write_jsonl(w, *labels)?,
            }
            Ok(false)
        }
        Command::PlotData {
            which,
            input,
            size_lo,
            size_hi,
        } => plot_data(g, *which, input, *size_lo, *size_hi),
        Command::Rank {
            reported_rank,
            volume,
            wash_percent,
            rank,
        } => {
            let shift = counterfactual_rank(*reported_rank, *volume, *wash_percent, &rank.model())?;
            g.emit(&shift)?;
            Ok(false)
        }
    }
}

fn ingest_check(g: &Global, input: &Input) -> CmdResult {
    let loaded = load(g, input)?;
    let groups: Vec<_> = loaded
        .dataset
        .groups()
        .map(|((ex, pair), t)| json!({ "exchange": ex, "pair": pair, "trades": t.len() }))
        .collect();
    let files: Vec<_> = loaded
        .reports
        .iter()
        .map(|(p, r)| {
            json!({
                "path": p.display().to_string(),
                "accepted": r.accepted,
                "rejected": r.rejected.len(),
                "duplicates_removed": r.duplicates_removed,
                "rejections": r.rejected,
            })
        })
        .collect();
    let unknown: Vec<&str> = groups
        .iter()
        .filter_map(|v| v["pair"].as_str())
        .filter(|p| loaded.registry.get(p).is_err())
        .collect();
    g.emit(&json!({ "files": files, "groups": groups, "unknown_pairs": unknown, "window": loaded.dataset.window() }))?;
    Ok(!unknown.is_empty())
}

fn benford(g: &Global, input: &Input) -> CmdResult {
    let cfg = g.battery()?;
    let loaded = load(g, input)?;
    let mut flagged = false;
    let mut rows = Vec::new();
    for s in loaded.summaries()? {
        let result = chi_squared_benford(&s.digits, cfg.effective_n, cfg.alpha);
        flagged |= result.is_err();
        rows.push(json!({
            "exchange": s.exchange,
            "pair": s.pair,
            "trades": s.count,
            "frequencies": s.digits.frequencies(),
            "test": result.as_ref().ok(),
            "error": result.as_ref().err().map(|e| e.to_string()),
            "counterfactual_wash": counterfactual_wash_benford(&s.digits).ok(),
        }));
    }
    g.emit(&rows)?;
    Ok(flagged)
}

fn cluster(g: &Global, input: &Input) -> CmdResult {
    let cfg = g.battery()?;
    let loaded = load(g, input)?;
    let mut flagged = false;
    let mut rows = Vec::new();
    for s in loaded.summaries()? {
        let r = run_pair(&s, &cfg, None);
        flagged |= r.clustering_100.is_skipped() || r.clustering_500.is_skipped();
        rows.push(json!({
            "exchange": r.exchange,
            "pair": r.pair,
            "trades": r.n_trades,
            "round_share": r.round_share,
            "clustering_100": outcome_json(&r.clustering_100),
            "clustering_500": outcome_json(&r.clustering_500),
        }));
    }
    g.emit(&rows)?;
    Ok(flagged)
}

fn tail(g: &Global, input: &Input) -> CmdResult {
    let cfg = g.battery()?;
    let loaded = load(g, input)?;
    let mut flagged = false;
    let mut rows = Vec::new();
    for s in loaded.summaries()? {
        let fit = s
            .tail_sample(&cfg.tail)
            .and_then(|t| fit_tail_sample(&t, &cfg.tail));
        flagged |= fit.is_err();
        rows.push(match fit {
            Ok(fit) => {
                let v = pareto_levy_verdict(&fit);
                json!({ "exchange": s.exchange, "pair": s.pair, "fit": fit, "verdict": v })
            }
            Err(e) => json!({ "exchange": s.exchange, "pair": s.pair, "error": e.to_string() }),
        });
    }
    g.emit(&rows)?;
    Ok(flagged)
}

fn roundness(g: &Global, input: &Input) -> CmdResult {
    let cfg = g.battery()?;
    let loaded = load(g, input)?;
    let summaries = loaded.summaries()?;
    let bench = regulated_roundness(&summaries, &loaded.meta);
    if bench.is_empty() {
        return Err(Failure::Fatal(
            "no regulated exchange in input: pass --meta with at least one regulated exchange"
                .into(),
        ));
    }
    let mut flagged = false;
    let mut rows = Vec::new();
    for s in &summaries {
        let result = bench
            .get(&s.pair)
            .ok_or_else(|| {
                Error::Config(format!("roundness benchmark missing for pair {}", s.pair))
            })
            .and_then(|b| roundness_chi_squared(&s.roundness, b, cfg.effective_n, cfg.alpha));
        flagged |= result.is_err();
        rows.push(json!({
            "exchange": s.exchange,
            "pair": s.pair,
            "distribution": s.roundness.frequencies(),
            "test": result.as_ref().ok(),
            "error": result.as_ref().err().map(|e| e.to_string()),
        }));
    }
    g.emit(&rows)?;
    Ok(flagged)
}

fn is_regulated(meta: &BTreeMap<String, ExchangeMeta>, exchange: &str) -> bool {
    meta.get(exchange)
        .is_some_and(|m| m.class == RegulatoryClass::Regulated)
}

fn regulated_rows(
    summaries: &[GroupSummary],
    meta: &BTreeMap<String, ExchangeMeta>,
) -> Vec<washtrade::ingest::WeeklyVolumeSplit> {
    summaries
        .iter()
        .filter(|s| is_regulated(meta, &s.exchange))
        .flat_map(GroupSummary::weekly_panel)
        .collect()
}

fn fit_benchmark(g: &Global, input: &Input, bench: &BenchmarkArgs) -> CmdResult {
    let loaded = load(g, input)?;
    let rows = regulated_rows(&loaded.summaries()?, &loaded.meta);
    if rows.is_empty() {
        return Err(Failure::Fatal("no regulated exchange in input: pass --meta classing at least one exchange as regulated".into()));
    }
    let set = fit_benchmarks(
        &rows,
        bench.scope.into(),
        bench.controls.then_some(&loaded.meta),
    )?;
    for w in &set.warnings {
        eprintln!("warning: {w}");
    }
    let mut w = g.writer()?;
    writeln!(w, "{}", set.to_json()?)?;
    w.flush()?;
    Ok(false)
}

fn benchmark_mode(bench: &BenchmarkArgs) -> Result<WashMode, Failure> {
    Ok(match &bench.benchmark {
        Some(p) => WashMode::Model(BenchmarkSet::from_json(
            &fs::read_to_string(p).map_err(|e| Failure::Fatal(format!("{}: {e}", p.display())))?,
        )?),
        None => WashMode::Fit {
            scope: bench.scope.into(),
            controls: bench.controls,
        },
    })
}

fn estimate(g: &Global, input: &Input, bench: &BenchmarkArgs) -> CmdResult {
    let loaded = load(g, input)?;
    let summaries = loaded.summaries()?;
    let regulated = regulated_rows(&summaries, &loaded.meta);
    let controls = bench.controls.then_some(&loaded.meta);
    let set = match benchmark_mode(bench)? {
        WashMode::Model(set) => set,
        _ => {
            if regulated.is_empty() {
                return Err(Failure::Fatal(
                    "no regulated exchange in input: pass --meta with a regulated exchange or --benchmark".into(),
                ));
            }
            fit_benchmarks(&regulated, bench.scope.into(), controls)?
        }
    };
    let mut panels: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for s in summaries
        .iter()
        .filter(|s| !is_regulated(&loaded.meta, &s.exchange))
    {
        panels
            .entry(s.exchange.as_str())
            .or_default()
            .extend(s.weekly_panel());
    }
    let mut rows = Vec::new();
    for (ex, panel) in panels {
        let covs = loaded
            .meta
            .get(ex)
            .and_then(|m| m.covariates.complete())
            .filter(|_| set.uses_controls());
        let mut est = estimate_exchange(&panel, &set, covs)?;
        if g.bootstrap > 0 && !regulated.is_empty() {
            let cfg = BootstrapConfig {
                replicates: g.bootstrap,
                seed: g.seed,
                scope: set.scope,
            };
            let sd = bootstrap_wash_sd(&panel, &regulated, covs.map(|_| &loaded.meta), covs, &cfg)?;
            for e in &mut est.per_pair {
                e.bootstrap_sd = e.pair.as_ref().and_then(|p| sd.per_pair.get(p)).copied();
            }
            est.aggregate.bootstrap_sd = Some(sd.aggregate);
        }
        rows.extend(est.per_pair);
        rows.push(est.aggregate);
    }
    let w = g.writer()?;
    write_report_csv(&rows, w)?;
    Ok(false)
}

fn report(
    g: &Global,
    input: &Input,
    bench: &BenchmarkArgs,
    rank: &RankArgs,
    no_wash: bool,
) -> CmdResult {
    let loaded = load(g, input)?;
    let summaries = loaded.summaries()?;
    let opts = ReportOptions {
        battery: g.battery()?,
        wash: if no_wash {
            WashMode::Skip
        } else {
            benchmark_mode(bench)?
        },
        bootstrap: g.bootstrap,
        seed: g.seed,
        rank_model: rank.model(),
    };
    let report = build_report(&summaries, &loaded.meta, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match &g.out {
        None => g.emit(&report)?,
        Some(_) => {
            let dir = g.out_dir()?;
            fs::write(dir.join("report.json"), report.to_json()? + "\n")?;
            report.write_flat_csv(File::create(dir.join("report.csv"))?)?;
            let estimates: Vec<_> = report
                .exchanges
                .iter()
                .filter_map(|e| e.wash.as_ref())
                .flat_map(|w| {
                    w.per_pair
                        .iter()
                        .cloned()
                        .chain(std::iter::once(w.aggregate.clone()))
                })
                .collect();
            if !estimates.is_empty() {
                write_report_csv(&estimates, File::create(dir.join("wash.csv"))?)?;
            }
        }
    }
    Ok(report.has_flagged_groups())
}

fn file_stem(kind: &str, exchange: &str, pair: &str) -> String {
    let clean = |s: &str| {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect::<String>()
    };
    format!("{kind}_{}_{}.csv", clean(exchange), clean(pair))
}

fn plot_data(g: &Global, which: Plot, input: &Input, size_lo: u64, size_hi: u64) -> CmdResult {
    let cfg = g.battery()?;
    let loaded = load(g, input)?;
    let dir = g.out_dir()?;
    let mut flagged = false;
    for s in loaded.summaries()? {
        match which {
            Plot::Benford => {
                s.digits.write_csv(File::create(dir.join(file_stem(
                    "benford",
                    &s.exchange,
                    &s.pair,
                )))?)?;
            }
            Plot::Sizes => {
                if size_hi <= size_lo {
                    return Err(Failure::Fatal("--size-hi must exceed --size-lo".into()));
                }
                s.sizes.write_csv(
                    File::create(dir.join(file_stem("sizes", &s.exchange, &s.pair)))?,
                    size_lo,
                    size_hi,
                    100,
                )?;
            }
            Plot::Tail => match s.tail_sample(&cfg.tail) {
                Ok(sample) => {
                    let fit = fit_tail_sample(&sample, &cfg.tail)?;
                    fit.write_plot_csv(
                        &sample.tail,
                        cfg.tail.bins_per_decade,
                        File::create(dir.join(file_stem("tail", &s.exchange, &s.pair)))?,
                    )?;
                }
                Err(e) => {
                    eprintln!("warning: {}/{}: {e}", s.exchange, s.pair);
                    flagged = true;
                }
            },
        }
    }
    Ok(flagged)
}
