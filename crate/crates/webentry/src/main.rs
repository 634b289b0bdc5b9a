use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use webentry::config::{AnalysisConfig, MAX_PRECISION};
use webentry::error::{exit, Error, Result};
use webentry::generate::{generate, GenSpec, GenerateError};
use webentry::ingest::Analyzer;
use webentry::report::{drilldown, render_report, DrillBy, DrillType, Format, Level, Locale, ReportOptions};
use webentry::store::Store;
use webentry_core::{Anonymization, BotHandling, EntityId, Granularity, RankKey};

const TOP_LIMIT: usize = 20;

/// Web entry analysis of access logs: how downloads arrive (search engine,
/// backlink or direct access) per site, directory and page.
#[derive(Parser)]
#[command(name = "webentry", version)]
struct Cli {
    /// Analysis configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Decimals for indicators (default from the configuration).
    #[arg(long, global = true)]
    precision: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, classify and count log files into a store.
    Analyze {
        /// Log files (plain or gzip); `-` reads standard input.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        /// Exclude requests from known crawlers.
        #[arg(long)]
        filter_bots: bool,
        /// Override the configured client anonymization.
        #[arg(long, value_parser = parse_anonymization)]
        anonymize: Option<Anonymization>,
        /// Print throughput and peak memory to stderr.
        #[arg(long)]
        stats: bool,
    },
    /// Indicator table for the entities in a store.
    Report {
        store: PathBuf,
        #[command(flatten)]
        view: View,
        /// Sort key (i_se, i_bl, i_da, d_se, d_bl, d_da, d_total); path order if absent.
        #[arg(long, value_parser = parse_rank_key)]
        sort: Option<RankKey>,
        #[arg(long, default_value_t = 0)]
        min_total: u64,
        #[arg(long, value_enum, default_value_t = Level::All)]
        level: Level,
    },
    /// Entities ranked by one indicator or counter.
    Top {
        store: PathBuf,
        #[command(flatten)]
        view: View,
        #[arg(long, value_parser = parse_rank_key, default_value = "i_se")]
        by: RankKey,
        #[arg(long, default_value_t = 10)]
        min_total: u64,
        #[arg(long, value_enum, default_value_t = Level::Page)]
        level: Level,
    },
    /// Break one entity's indicator down into engines, queries, terms,
    /// referring URLs or time buckets.
    Drilldown {
        store: PathBuf,
        /// `/` for the site, a trailing `/` for a directory, else a page.
        entity: String,
        #[arg(long = "type", value_enum)]
        kind: DrillType,
        /// Defaults: engine for se, referer for bl, time for da.
        #[arg(long, value_enum)]
        by: Option<DrillBy>,
        /// Time bucket (default from the configuration).
        #[arg(long, value_parser = parse_granularity)]
        bucket: Option<Granularity>,
        #[arg(long, value_enum, default_value_t = Locale::Plain)]
        locale: Locale,
    },
    /// Write a synthetic log and its ground truth.
    Generate {
        spec: PathBuf,
        /// Log output; `-` for standard output.
        #[arg(long)]
        log: PathBuf,
        /// Ground truth JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Leave per-line labels out of the truth file.
        #[arg(long)]
        no_labels: bool,
    },
    /// Combine stores built under the same configuration.
    Merge {
        #[arg(required = true)]
        stores: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct View {
    #[arg(long)]
    max_depth: Option<usize>,
    /// Maximum rows (default: all for report, 20 for top).
    #[arg(long)]
    limit: Option<usize>,
    /// `paper` groups digits as 10.000.
    #[arg(long, value_enum, default_value_t = Locale::Plain)]
    locale: Locale,
}

fn parse_anonymization(s: &str) -> std::result::Result<Anonymization, String> {
    s.parse().map_err(|_| "expected none, last-octet or full-hash".to_string())
}

fn parse_rank_key(s: &str) -> std::result::Result<RankKey, String> {
    s.parse().map_err(|e: webentry_core::indicators::UnknownRankKey| e.to_string())
}

fn parse_granularity(s: &str) -> std::result::Result<Granularity, String> {
    s.parse().map_err(|_| "expected day, week or month".to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("webentry: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<AnalysisConfig> {
    path.map_or_else(|| Ok(AnalysisConfig::default()), AnalysisConfig::load)
}

/// The store plus the configuration used for presentation. A configuration
/// given on the command line must count the same way the store did.
fn open_store(path: &Path, config: Option<&Path>) -> Result<(Store, AnalysisConfig)> {
    let store = Store::load(path)?;
    let config = match config {
        Some(p) => {
            let cfg = AnalysisConfig::load(p)?;
            if cfg.fingerprint() != store.config_fingerprint {
                return Err(Error::Mismatch(format!(
                    "{} counts differently from the configuration {} was built with",
                    p.display(),
                    path.display()
                )));
            }
            cfg
        }
        None => store.config.clone(),
    };
    Ok((store, config))
}

fn precision(flag: Option<u32>, config: &AnalysisConfig) -> Result<u32> {
    let p = flag.unwrap_or(config.precision);
    if p > MAX_PRECISION {
        return Err(Error::Usage(format!("--precision must be at most {MAX_PRECISION}")));
    }
    Ok(p)
}

fn print(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Analyze { logs, out, filter_bots, anonymize, stats } => {
            let mut config = load_config(config_path)?;
            if filter_bots {
                config.policy.bot_handling = BotHandling::Exclude;
            }
            if let Some(a) = anonymize {
                config.anonymization = a;
            }
            let started = Instant::now();
            let analyzer = Analyzer::new(config)?;
            let mut parts = Vec::with_capacity(logs.len());
            for log in &logs {
                let part = analyzer.ingest_path(log)?;
                for m in &part.malformed_samples {
                    eprintln!("{}: {m}", log.display());
                }
                parts.push(part);
            }
            let store = analyzer.store_from(parts);
            store.save(&out)?;
            let s = &store.summary;
            if cli.format == Format::Json {
                print(&format!("{}\n", serde_json::to_string_pretty(s).expect("summary serializes")))?;
            } else {
                print(&format!(
                    "lines {}  counted {}  excluded {}  internal {}  malformed {}\n",
                    s.lines, s.counted, s.excluded, s.internal, s.malformed
                ))?;
            }
            if stats {
                let secs = started.elapsed().as_secs_f64();
                eprintln!(
                    "elapsed {secs:.3}s  {:.0} lines/s  peak_rss_kib {}",
                    s.lines as f64 / secs.max(1e-9),
                    peak_rss_kib().map_or_else(|| "unknown".into(), |k| k.to_string())
                );
            }
            Ok(())
        }
        Command::Report { store, view, sort, min_total, level } => {
            let (store, config) = open_store(&store, config_path)?;
            let opts = ReportOptions {
                level,
                sort,
                min_total,
                max_depth: view.max_depth,
                limit: view.limit,
                precision: precision(cli.precision, &config)?,
                locale: view.locale,
            };
            let store = Store { config, ..store };
            print(&render_report(&store, &opts, cli.format))
        }
        Command::Top { store, view, by, min_total, level } => {
            let (store, config) = open_store(&store, config_path)?;
            let opts = ReportOptions {
                level,
                sort: Some(by),
                min_total,
                max_depth: view.max_depth,
                limit: Some(view.limit.unwrap_or(TOP_LIMIT)),
                precision: precision(cli.precision, &config)?,
                locale: view.locale,
            };
            let store = Store { config, ..store };
            print(&render_report(&store, &opts, cli.format))
        }
        Command::Drilldown { store, entity, kind, by, bucket, locale } => {
            let (store, config) = open_store(&store, config_path)?;
            let id = EntityId::parse(&entity);
            let table = drilldown(&store, &id, kind, by.unwrap_or(kind.default_by()), bucket.unwrap_or(config.bucket))?;
            print(&table.render(cli.format, locale))
        }
        Command::Generate { spec, log, truth, no_labels } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::io(&spec, e))?;
            let gen_spec =
                GenSpec::from_toml(&text).map_err(|e| Error::Config { path: spec.clone(), msg: e.to_string() })?;
            let labels = truth.is_some() && !no_labels;
            let result = if log.as_os_str() == "-" {
                let mut w = BufWriter::new(io::stdout().lock());
                generate(&gen_spec, &mut w, labels).and_then(|t| w.flush().map(|_| t).map_err(GenerateError::from))
            } else {
                let file = File::create(&log).map_err(|e| Error::io(&log, e))?;
                let mut w = BufWriter::new(file);
                generate(&gen_spec, &mut w, labels).and_then(|t| w.flush().map(|_| t).map_err(GenerateError::from))
            };
            let t = match result {
                Ok(t) => t,
                Err(GenerateError::Spec(e)) => return Err(Error::Config { path: spec, msg: e.to_string() }),
                Err(GenerateError::Io(e)) => return Err(Error::io(&log, e)),
            };
            if let Some(path) = truth {
                let mut json = serde_json::to_string_pretty(&t).expect("truth serializes");
                json.push('\n');
                std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Merge { stores, out } => {
            let mut iter = stores.iter();
            let first = iter.next().expect("clap requires one store");
            let mut merged = Store::load(first)?;
            for path in iter {
                merged = merged.merge(Store::load(path)?).map_err(|e| match e {
                    Error::Mismatch(msg) => Error::Mismatch(format!("{}: {msg}", path.display())),
                    other => other,
                })?;
            }
            merged.save(&out)
        }
    }
}

/// Peak resident set size from `/proc/self/status`, where available.
fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}
