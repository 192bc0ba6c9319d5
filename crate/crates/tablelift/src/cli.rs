//! Command-line front end.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tablelift_core::enrich::AggregationStrategy;
use tablelift_core::lakeindex::{
    load_index, save_index, IndexParams, JoinIndex, KeyColumns, INDEX_FORMAT_VERSION,
};
use tablelift_core::mlkit::{
    FeatureSelection, Metric, ModelChoice, SelectionMethod, VectorizeScheme,
};
use tablelift_core::pipeline::{
    compare_modes, generate_lake, run, LakeSpec, Mode, RunConfig, RunStore,
};
use tablelift_core::tablecore::{load_corpus, load_query_table, Corpus, TaskKind};
use tablelift_core::textenc::EmbeddingProvider;

use crate::service::{self, AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(
    name = "tablelift",
    version,
    about = "Enrich a table with columns found in a data lake"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or inspect a join index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Enrich one query table and evaluate it.
    Run(RunArgs),
    /// Run several modes on the same query and print the comparison table.
    Compare(CompareArgs),
    /// Write a synthetic lake with a planted signal table.
    GenLake(GenLakeArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Build {
        corpus_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `first`, `all`, or a comma-separated list of column names.
        #[arg(long, default_value = "first")]
        key_columns: String,
    },
    Load {
        index_file: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Index file written by `index build`.
    #[arg(long, conflicts_with = "corpus")]
    pub index: Option<PathBuf>,
    /// Corpus directory; an index is built in memory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub index_seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregationArg {
    Hard,
    Soft,
    Threshold,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Mse,
    Rmse,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub query: PathBuf,
    /// Join key column name.
    #[arg(long)]
    pub key: String,
    /// Target column name.
    #[arg(long)]
    pub task: String,
    #[arg(long, value_parser = parse_from_str::<TaskKind>, default_value = "regression")]
    pub task_kind: TaskKind,
}

/// Flags mirror `RunConfig`; anything left unset keeps the value from
/// `--config` or the default.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// JSON file with a (possibly partial) run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Threshold aggregation cut-off.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Soft aggregation cluster count.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// lasso, rf or best_of_both.
    #[arg(long, value_parser = parse_from_str::<ModelChoice>)]
    pub model: Option<ModelChoice>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub entity_name: Option<String>,
    #[arg(long)]
    pub task_description: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// f_value, forward, backward, rfe, rf_importance or l1.
    #[arg(long, value_parser = parse_from_str::<SelectionMethod>, requires = "select_count")]
    pub select_method: Option<SelectionMethod>,
    #[arg(long, requires = "select_method")]
    pub select_count: Option<usize>,
    #[arg(long, value_parser = parse_from_str::<VectorizeScheme>)]
    pub vectorize: Option<VectorizeScheme>,
    #[arg(long)]
    pub min_df: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long, value_parser = parse_from_str::<Mode>)]
    pub mode: Option<Mode>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory for enriched.csv, provenance.json and result.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Do not record the run under the data directory.
    #[arg(long)]
    pub no_save: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    /// `all` or a comma-separated list of modes.
    #[arg(long, default_value = "all")]
    pub modes: String,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenLakeArgs {
    /// JSON lake specification; missing fields take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = service::DEFAULT_CONCURRENCY)]
    pub concurrency: usize,
    #[arg(long, default_value_t = service::DEFAULT_QUEUE_CAPACITY)]
    pub queue_capacity: usize,
    #[arg(long, default_value_t = 50)]
    pub max_upload_mb: usize,
    /// Built web UI assets, served under /ui.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

pub fn key_columns(spec: &str) -> KeyColumns {
    match spec.trim().to_ascii_lowercase().as_str() {
        "first" => KeyColumns::First,
        "all" => KeyColumns::All,
        _ => KeyColumns::Named(
            spec.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        ),
    }
}

impl ConfigArgs {
    pub fn resolve(&self, mode: Option<Mode>) -> Result<RunConfig> {
        let mut c: RunConfig = match &self.config {
            Some(path) => serde_json::from_slice(
                &fs::read(path).with_context(|| format!("reading {}", path.display()))?,
            )
            .with_context(|| format!("parsing {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(mode) = mode {
            c.mode = mode;
        }
        macro_rules! set {
            ($field:ident => $target:expr) => {
                if let Some(v) = self.$field.clone() {
                    $target = v;
                }
            };
        }
        set!(k => c.k);
        set!(m => c.m);
        set!(model => c.model);
        set!(folds => c.folds);
        set!(seed => c.seed);
        set!(lambda => c.hyperparameters.lambda);
        set!(n_trees => c.hyperparameters.forest.n_trees);
        set!(vectorize => c.vectorize.scheme);
        set!(min_df => c.vectorize.min_df);
        if self.entity_name.is_some() {
            c.entity_name = self.entity_name.clone();
        }
        if self.task_description.is_some() {
            c.task_description = self.task_description.clone();
        }
        if let (Some(method), Some(count)) = (self.select_method, self.select_count) {
            c.selection = Some(FeatureSelection { method, count });
        }
        if let Some(metric) = self.metric {
            c.regression_metric = match metric {
                MetricArg::Mse => Metric::Mse,
                MetricArg::Rmse => Metric::Rmse,
            };
        }
        c.aggregation = match (self.aggregation, c.aggregation) {
            (Some(AggregationArg::Hard), _) => AggregationStrategy::Hard,
            (Some(AggregationArg::Soft), _) => AggregationStrategy::Soft {
                cluster_count: self.clusters,
            },
            (Some(AggregationArg::Threshold), _) => AggregationStrategy::Threshold {
                tau: self.tau.unwrap_or(tablelift_core::enrich::DEFAULT_TAU),
            },
            (None, AggregationStrategy::Threshold { tau }) => AggregationStrategy::Threshold {
                tau: self.tau.unwrap_or(tau),
            },
            (None, AggregationStrategy::Soft { cluster_count }) => AggregationStrategy::Soft {
                cluster_count: self.clusters.or(cluster_count),
            },
            (None, other) => other,
        };
        c.validate()?;
        Ok(c)
    }
}

impl SourceArgs {
    pub fn open(&self) -> Result<(Corpus, JoinIndex)> {
        match (&self.index, &self.corpus) {
            (Some(path), _) => {
                load_index(path).with_context(|| format!("loading index {}", path.display()))
            }
            (None, Some(dir)) => {
                let corpus = load_corpus(dir)
                    .with_context(|| format!("loading corpus {}", dir.display()))?;
                let params = IndexParams {
                    seed: self.index_seed,
                    ..IndexParams::default()
                };
                let index = JoinIndex::build(&corpus, params, EmbeddingProvider::default())?;
                Ok((corpus, index))
            }
            (None, None) => bail!("either --index or --corpus is required"),
        }
    }
}

fn read_query(args: &QueryArgs) -> Result<tablelift_core::tablecore::QueryTable> {
    let bytes =
        fs::read(&args.query).with_context(|| format!("reading {}", args.query.display()))?;
    Ok(load_query_table(
        &bytes,
        &args.key,
        &args.task,
        args.task_kind,
    )?)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Index(cmd) => index(cmd),
        Command::Run(args) => run_one(args),
        Command::Compare(args) => compare(args),
        Command::GenLake(args) => gen_lake(args),
        Command::Serve(args) => serve(args),
    }
}

fn index(cmd: IndexCommand) -> Result<()> {
    match cmd {
        IndexCommand::Build {
            corpus_dir,
            output,
            seed,
            key_columns: spec,
        } => {
            let corpus = load_corpus(&corpus_dir)
                .with_context(|| format!("loading corpus {}", corpus_dir.display()))?;
            let params = IndexParams {
                key_columns: key_columns(&spec),
                seed,
                ..IndexParams::default()
            };
            let index = JoinIndex::build(&corpus, params, EmbeddingProvider::default())?;
            save_index(&output, &corpus, &index)?;
            println!(
                "indexed {} cells from {} tables ({} skipped) into {}",
                index.doc_count(),
                corpus.len(),
                corpus.stats().skipped_count,
                output.display()
            );
        }
        IndexCommand::Load { index_file } => {
            let (corpus, index) = load_index(&index_file)?;
            let summary = json!({
                "format_version": INDEX_FORMAT_VERSION,
                "tables": corpus.len(),
                "indexed_cells": index.doc_count(),
                "avgdl": index.avgdl(),
                "lsh_bands": index.num_bands(),
                "seed": index.params().seed,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

fn run_one(args: RunArgs) -> Result<()> {
    let (corpus, index) = args.source.open()?;
    let query = read_query(&args.query)?;
    let config = args.config.resolve(args.mode)?;
    let result = run(&config, &query, &corpus, &index)?;

    println!(
        "{}: {} {:.4} -> {:.4} ({:+.2}%), {} columns added",
        config.mode.label(),
        result.after.metric.label(),
        result.before.mean,
        result.after.mean,
        result.improvement_percent,
        result.enriched.enriched_columns.len()
    );
    for p in &result.provenance {
        println!(
            "  {} {:.4} {} [{}]",
            p.table_id,
            p.score,
            p.title,
            p.contributed_columns.join(", ")
        );
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("enriched.csv"), result.enriched.to_csv())?;
        write_file(
            &dir.join("provenance.json"),
            serde_json::to_vec_pretty(&result.provenance)?,
        )?;
        write_file(
            &dir.join("result.json"),
            serde_json::to_vec_pretty(&result)?,
        )?;
    }
    if !args.no_save {
        let store = RunStore::from_env()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = store.save(&id, &result)?;
        println!("run {id} saved to {}", path.display());
    }
    Ok(())
}

pub fn parse_modes(spec: &str) -> Result<Vec<Mode>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(Mode::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<Mode>().map_err(anyhow::Error::msg))
        .collect()
}

fn compare(args: CompareArgs) -> Result<()> {
    let (corpus, index) = args.source.open()?;
    let query = read_query(&args.query)?;
    let base = args.config.resolve(None)?;
    let configs: Vec<RunConfig> = parse_modes(&args.modes)?
        .into_iter()
        .map(|m| base.with_mode(m))
        .collect();
    let report = compare_modes(&configs, &query, &corpus, &index)?;
    print!("{}", report.to_text());
    if let Some(path) = &args.csv {
        write_file(path, report.to_csv())?;
    }
    Ok(())
}

fn gen_lake(args: GenLakeArgs) -> Result<()> {
    let mut spec: LakeSpec = match &args.spec {
        Some(path) => serde_json::from_slice(
            &fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?,
        None => LakeSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let lake = generate_lake(&spec)?;
    let out = &args.output;
    lake.corpus.save(&out.join("corpus"))?;
    write_file(&out.join("query.csv"), lake.query.to_csv())?;
    let meta = json!({
        "spec": spec,
        "key": lake.query.key_name(),
        "task": lake.query.task_name(),
        "entity_name": lake.entity_name,
        "signal_column": lake.signal_column,
        "signal_table_ids": lake.signal_table_ids,
        "adversarial_table_ids": lake.adversarial_table_ids,
    });
    write_file(&out.join("lake.json"), serde_json::to_vec_pretty(&meta)?)?;
    println!(
        "wrote {} tables and a {}-row query to {}",
        lake.corpus.len(),
        lake.query.num_rows(),
        out.display()
    );
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let (corpus, index) = load_index(&args.index)
        .with_context(|| format!("loading index {}", args.index.display()))?;
    let config = ServiceConfig {
        concurrency: args.concurrency,
        queue_capacity: args.queue_capacity,
        max_upload_bytes: args.max_upload_mb * 1024 * 1024,
        ui_dir: args.ui_dir,
    };
    let state = Arc::new(AppState::new(
        corpus,
        index,
        config,
        Some(RunStore::from_env()?),
    )?);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("bad --host/--port")?;
    tokio::runtime::Runtime::new()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, service::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
