use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rpysco::entities::{aggregate_all_views, AttributionMode};
use rpysco::ingest::{CsvColumns, InputFormat};
use rpysco::output::{read_clusters, read_spectrogram, read_top_n};
use rpysco::plot::render_svg;
use rpysco::run::{
    entity_summaries, execute_run, fetch_metadata, ingest_to_archive, load_countries, write_entity_tables,
    ProviderConfig, RunConfig,
};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Reference publication year spectroscopy over co-citation sets.
#[derive(Parser)]
#[command(name = "rpysco", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge export files into a newline-delimited JSON archive.
    Ingest(IngestArgs),
    /// Run the full analysis and write CSV tables and a manifest.
    Run(RunArgs),
    /// Draw a spectrogram CSV as an SVG line chart.
    Plot(PlotArgs),
    /// Recompute entity tables for an existing run directory.
    Entities(EntitiesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tagged,
    Csv,
    Tsv,
    Archive,
}

impl From<Format> for InputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Tagged => InputFormat::Tagged,
            Format::Csv => InputFormat::Csv,
            Format::Tsv => InputFormat::Tsv,
            Format::Archive => InputFormat::Archive,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Export files (tagged, CSV/TSV, or a .jsonl archive).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Input format; guessed from each file extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value = "UT")]
    id_column: String,
    #[arg(long, default_value = "PY")]
    year_column: String,
    #[arg(long, default_value = "DI")]
    doi_column: String,
    #[arg(long, default_value = "CR")]
    refs_column: String,
    #[arg(long, default_value = "TI")]
    title_column: String,
}

impl InputArgs {
    fn columns(&self) -> CsvColumns {
        CsvColumns {
            id: self.id_column.clone(),
            year: self.year_column.clone(),
            doi: self.doi_column.clone(),
            cited_refs: self.refs_column.clone(),
            title: Some(self.title_column.clone()).filter(|t| !t.is_empty()),
            delimiter: b',',
        }
    }

    fn format(&self) -> Option<InputFormat> {
        self.format.map(Into::into)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Archive to write.
    #[arg(short, long)]
    out: PathBuf,
    /// JSON ingest report; defaults to the archive path with `.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Threshold 0.75, max year 1980, min NCR 5, top-N 10 and 5.
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuthorMode {
    FirstAuthor,
    Enriched,
}

#[derive(Args)]
struct ProviderArgs {
    /// Local metadata table (doi,authors,institutions,countries).
    #[arg(long, conflicts_with = "provider_url")]
    provider_table: Option<PathBuf>,
    /// Base URL of an HTTP metadata service, queried as GET <url>/<doi>.
    #[arg(long, env = "RPYSCO_PROVIDER_URL")]
    provider_url: Option<String>,
    /// Minimum milliseconds between HTTP requests.
    #[arg(long, default_value_t = 100)]
    rate_limit_ms: u64,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Concurrent HTTP lookups.
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Extra country merge rules (raw,canonical).
    #[arg(long)]
    countries: Option<PathBuf>,
    /// How authors are attributed; enriched when a provider is set.
    #[arg(long, value_enum)]
    author_mode: Option<AuthorMode>,
}

impl ProviderArgs {
    fn provider(&self) -> ProviderConfig {
        match (&self.provider_table, &self.provider_url) {
            (Some(p), _) => ProviderConfig::Table(p.clone()),
            (None, Some(url)) => ProviderConfig::Http {
                base_url: url.clone(),
                min_interval_ms: self.rate_limit_ms,
                timeout_ms: self.timeout_ms,
                retries: self.retries,
                parallelism: self.parallelism,
            },
            (None, None) => ProviderConfig::None,
        }
    }

    fn author_mode(&self) -> Option<AttributionMode> {
        self.author_mode.map(|m| match m {
            AuthorMode::FirstAuthor => AttributionMode::FirstAuthor,
            AuthorMode::Enriched => AttributionMode::Enriched,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Marker table (doi,first_author,rpy,volume,page).
    #[arg(long)]
    markers: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Preset parameters; explicit flags override it.
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Similarity threshold for merging reference variants.
    #[arg(long)]
    threshold: Option<f64>,
    /// Drop references published after this year.
    #[arg(long)]
    max_rpy: Option<i32>,
    /// Drop references cited by fewer records.
    #[arg(long)]
    min_ncr: Option<usize>,
    /// Per-year selection sizes, e.g. 10,5.
    #[arg(long, value_delimiter = ',')]
    top_n: Option<Vec<usize>>,
    /// Compare references even when volume or page differ.
    #[arg(long)]
    ignore_vol_page: bool,
    /// Compare references across publication years.
    #[arg(long)]
    cross_year: bool,
    /// First year of the spectrogram axis.
    #[arg(long, requires = "year_to")]
    year_from: Option<i32>,
    /// Last year of the spectrogram axis.
    #[arg(long, requires = "year_from")]
    year_to: Option<i32>,
    /// Also write every cluster member to clusters_audit.csv.
    #[arg(long)]
    audit: bool,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// spectrogram.csv from a run.
    spectrogram: PathBuf,
    /// SVG file to write; defaults to the input with an .svg extension.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "")]
    title: String,
}

#[derive(Args)]
struct EntitiesArgs {
    /// Directory written by `rpysco run`.
    run_dir: PathBuf,
    /// Directory for the entity tables; defaults to the run directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let report = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    let summary = ingest_to_archive(
        &args.input.inputs,
        args.input.format(),
        &args.input.columns(),
        &args.out,
        Some(&report),
    )?;
    eprintln!(
        "ingested {} records, {} cited references, {} warnings",
        summary.records,
        summary.cited_refs,
        summary.warnings.len()
    );
    Ok(())
}

fn run_config(args: &RunArgs) -> RunConfig {
    let mut cfg = RunConfig::new(args.input.inputs.clone(), args.markers.clone(), args.out.clone());
    cfg.format = args.input.format();
    cfg.csv_columns = args.input.columns();
    if let Some(Profile::Paper) = args.profile {
        cfg.apply_paper_profile();
    }
    if let Some(t) = args.threshold {
        cfg.cluster.threshold = t;
    }
    if args.max_rpy.is_some() {
        cfg.max_rpy = args.max_rpy;
    }
    if let Some(n) = args.min_ncr {
        cfg.min_ncr = n;
    }
    if let Some(top) = &args.top_n {
        cfg.top_n = top.clone();
    }
    cfg.cluster.require_vol_page = !args.ignore_vol_page;
    cfg.cluster.require_same_rpy = !args.cross_year;
    cfg.year_range = args.year_from.zip(args.year_to);
    cfg.audit = args.audit;
    cfg.provider = args.provider.provider();
    cfg.author_mode = args.provider.author_mode();
    cfg.countries = args.provider.countries.clone();
    cfg
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = run_config(args);
    let result = execute_run(&cfg)?;
    let c = result.manifest.counts;
    eprintln!(
        "{} citing records ({} co-citing), {} cited references, {} clusters, {} after filters",
        c.citing_records, c.cocited_records, c.total_refs, c.clusters, c.clusters_final
    );
    for w in &result.manifest.warnings {
        log::warn!("{w}");
    }
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let file = File::open(&args.spectrogram).with_context(|| format!("cannot open {}", args.spectrogram.display()))?;
    let rows = read_spectrogram(file).with_context(|| format!("{}", args.spectrogram.display()))?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.spectrogram.with_extension("svg"));
    fs::write(&out, render_svg(&rows, &args.title)).with_context(|| format!("cannot write {}", out.display()))?;
    Ok(())
}

fn top_n_tables(dir: &Path) -> Result<Vec<usize>> {
    let mut ns: Vec<usize> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(n) = name
            .strip_prefix("topN_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse().ok())
        {
            ns.push(n);
        }
    }
    ns.sort_unstable_by(|a, b| b.cmp(a));
    Ok(ns)
}

fn cmd_entities(args: &EntitiesArgs) -> Result<()> {
    let dir = &args.run_dir;
    let clusters_path = dir.join("clusters.csv");
    let clusters =
        read_clusters(File::open(&clusters_path).with_context(|| format!("cannot open {}", clusters_path.display()))?)
            .with_context(|| clusters_path.display().to_string())?;
    let mut selections = Vec::new();
    for n in top_n_tables(dir)? {
        let path = dir.join(format!("topN_{n}.csv"));
        selections.push(read_top_n(File::open(&path)?, n, &clusters).with_context(|| path.display().to_string())?);
    }
    let provider = args.provider.provider();
    let author_mode = match (args.provider.author_mode(), &provider) {
        (Some(AttributionMode::Enriched), ProviderConfig::None) => {
            bail!("enriched author counts need a metadata provider")
        }
        (Some(m), _) => m,
        (None, ProviderConfig::None) => AttributionMode::FirstAuthor,
        (None, _) => AttributionMode::Enriched,
    };
    if let Some(p) = &args.provider.countries {
        if !p.is_file() {
            bail!("{} does not exist", p.display());
        }
    }
    let countries = load_countries(args.provider.countries.as_deref())?;
    let (metadata, warnings) = fetch_metadata(&clusters, &provider)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let tables = aggregate_all_views(&clusters, &selections, &metadata, author_mode, &countries);
    let out = args.out.as_deref().unwrap_or(dir);
    fs::create_dir_all(out)?;
    write_entity_tables(out, &tables)?;
    for s in entity_summaries(&tables) {
        eprintln!(
            "{} {}: {} rows, {} unattributed",
            s.view, s.kind, s.rows, s.unattributed
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Run(a) => cmd_run(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Entities(a) => cmd_entities(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
