//! Run configuration and the end-to-end run that writes an output directory.

use crate::cluster::{write_audit_csv, ClusterConfig};
use crate::entities::{
    aggregate_all_views, coverage, lookup_all, write_provider_table, AttributionMode, CountryMergeTable,
    CountryTableError, Coverage, EntityTable, HttpProvider, LocalTableProvider, MetadataMap, MetadataProvider,
    ProviderError, RetryPolicy,
};
use crate::ingest::{read_files, write_archive, Corpus, CsvColumns, IngestError, IngestWarning, InputFormat};
use crate::model::{InvalidMarker, MarkerSpec};
use crate::output::{
    entity_file_name, top_n_file_name, write_clusters, write_entities, write_spectrogram, write_top_n,
};
use crate::spectroscopy::{run_pipeline, FilterConfig, PipelineError, PipelineOutput, StageCounts};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("marker file {path}, row {row}: {message}")]
    Marker { path: PathBuf, row: u64, message: String },
    #[error(transparent)]
    Countries(#[from] CountryTableError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Where cluster metadata comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderConfig {
    #[default]
    None,
    Table(PathBuf),
    Http {
        base_url: String,
        min_interval_ms: u64,
        timeout_ms: u64,
        retries: u32,
        parallelism: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// `None` picks the format from each file's extension.
    pub format: Option<InputFormat>,
    pub csv_columns: CsvColumns,
    pub markers: PathBuf,
    pub cluster: ClusterConfig,
    pub max_rpy: Option<i32>,
    pub min_ncr: usize,
    pub top_n: Vec<usize>,
    pub year_range: Option<(i32, i32)>,
    pub provider: ProviderConfig,
    /// Defaults to enriched when a provider is configured.
    pub author_mode: Option<AttributionMode>,
    pub countries: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub audit: bool,
}

impl RunConfig {
    /// Every option at its neutral default: no year cap, no NCR floor.
    pub fn new(inputs: Vec<PathBuf>, markers: PathBuf, output_dir: PathBuf) -> Self {
        RunConfig {
            inputs,
            format: None,
            csv_columns: CsvColumns::default(),
            markers,
            cluster: ClusterConfig::default(),
            max_rpy: None,
            min_ncr: 0,
            top_n: vec![10],
            year_range: None,
            provider: ProviderConfig::None,
            author_mode: None,
            countries: None,
            output_dir,
            audit: false,
        }
    }

    /// Threshold 0.75, references up to 1980, at least five citing records,
    /// top-10 and top-5 selections.
    pub fn apply_paper_profile(&mut self) {
        self.cluster.threshold = 0.75;
        self.cluster.require_vol_page = true;
        self.cluster.require_same_rpy = true;
        self.max_rpy = Some(1980);
        self.min_ncr = 5;
        self.top_n = vec![10, 5];
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.inputs.is_empty() {
            return bad("no input files".into());
        }
        let mut paths: Vec<&Path> = self.inputs.iter().map(PathBuf::as_path).collect();
        paths.push(&self.markers);
        if let ProviderConfig::Table(p) = &self.provider {
            paths.push(p);
        }
        if let Some(p) = &self.countries {
            paths.push(p);
        }
        if let Some(p) = paths.iter().find(|p| !p.is_file()) {
            return bad(format!("{} does not exist", p.display()));
        }
        if self.cluster.validate().is_err() {
            return bad(format!("threshold {} outside [0, 1]", self.cluster.threshold));
        }
        if self.top_n.is_empty() || self.top_n.contains(&0) {
            return bad("top-N sizes must be at least 1".into());
        }
        if let Some((a, b)) = self.year_range {
            if a > b {
                return bad(format!("year range {a}..{b} is empty"));
            }
        }
        if let ProviderConfig::Http {
            base_url, parallelism, ..
        } = &self.provider
        {
            if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
                return bad(format!("provider URL {base_url:?} is not http(s)"));
            }
            if *parallelism == 0 {
                return bad("provider parallelism must be at least 1".into());
            }
        }
        if self.author_mode == Some(AttributionMode::Enriched) && self.provider == ProviderConfig::None {
            return bad("enriched author counts need a metadata provider".into());
        }
        Ok(())
    }

    fn resolved_author_mode(&self) -> AttributionMode {
        self.author_mode.unwrap_or(match self.provider {
            ProviderConfig::None => AttributionMode::FirstAuthor,
            _ => AttributionMode::Enriched,
        })
    }
}

/// Reads a marker table: `doi,first_author,rpy,volume,page`, any subset per row.
pub fn read_markers(path: &Path) -> Result<Vec<MarkerSpec>, RunError> {
    let file = File::open(path).map_err(io_err(path))?;
    let markers = parse_markers(file, path)?;
    if markers.is_empty() {
        return Err(RunError::Marker {
            path: path.to_owned(),
            row: 1,
            message: "no markers".into(),
        });
    }
    Ok(markers)
}

fn parse_markers(input: impl Read, path: &Path) -> Result<Vec<MarkerSpec>, RunError> {
    #[derive(Deserialize)]
    struct Row {
        #[serde(default)]
        doi: Option<String>,
        #[serde(default)]
        first_author: Option<String>,
        #[serde(default)]
        rpy: Option<String>,
        #[serde(default)]
        volume: Option<String>,
        #[serde(default)]
        page: Option<String>,
    }
    let marker_err = |row: u64, message: String| RunError::Marker {
        path: path.to_owned(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<Row>().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| marker_err(row, e.to_string()))?;
        let rpy = match rec.rpy.as_deref().filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse().map_err(|_| marker_err(row, format!("bad year {s:?}")))?),
            None => None,
        };
        if let Some(doi) = rec.doi.as_deref().filter(|s| !s.is_empty()) {
            if crate::model::normalize_doi(doi).is_none() {
                return Err(marker_err(row, format!("bad DOI {doi:?}")));
            }
        }
        let marker = MarkerSpec::new(
            rec.doi.as_deref(),
            rec.first_author.as_deref(),
            rpy,
            rec.volume.as_deref(),
            rec.page.as_deref(),
        )
        .map_err(|e: InvalidMarker| marker_err(row, e.to_string()))?;
        out.push(marker);
    }
    Ok(out)
}

pub fn load_countries(path: Option<&Path>) -> Result<CountryMergeTable, RunError> {
    let mut table = CountryMergeTable::default();
    if let Some(p) = path {
        table.extend_from_csv(File::open(p).map_err(io_err(p))?)?;
    }
    Ok(table)
}

/// A provider with its retry policy and lookup parallelism.
type ProviderSetup = (Box<dyn MetadataProvider>, RetryPolicy, usize);

fn build_provider(cfg: &ProviderConfig) -> Result<Option<ProviderSetup>, RunError> {
    Ok(match cfg {
        ProviderConfig::None => None,
        ProviderConfig::Table(p) => {
            let table = LocalTableProvider::from_reader(File::open(p).map_err(io_err(p))?)?;
            Some((
                Box::new(table),
                RetryPolicy {
                    retries: 0,
                    backoff: Duration::ZERO,
                },
                1,
            ))
        }
        ProviderConfig::Http {
            base_url,
            min_interval_ms,
            timeout_ms,
            retries,
            parallelism,
        } => {
            let http = HttpProvider::new(
                base_url,
                Duration::from_millis(*min_interval_ms),
                Duration::from_millis(*timeout_ms),
            )?;
            Some((
                Box::new(http),
                RetryPolicy {
                    retries: *retries,
                    ..Default::default()
                },
                *parallelism,
            ))
        }
    })
}

/// Fetches metadata for every DOI carried by `clusters`.
pub fn fetch_metadata<'a>(
    clusters: impl IntoIterator<Item = &'a crate::model::RefCluster>,
    provider: &ProviderConfig,
) -> Result<(MetadataMap, Vec<String>), RunError> {
    match build_provider(provider)? {
        None => Ok((MetadataMap::new(), Vec::new())),
        Some((p, policy, parallelism)) => Ok(lookup_all(
            clusters.into_iter().filter_map(|c| c.doi()),
            p.as_ref(),
            &policy,
            parallelism,
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub file: String,
    pub sha256: String,
}

fn digest(path: &Path) -> Result<InputDigest, RunError> {
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    io::copy(&mut file, &mut hasher).map_err(io_err(path))?;
    Ok(InputDigest {
        file: path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        sha256: hex::encode(hasher.finalize()),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySummary {
    pub view: String,
    pub kind: String,
    pub rows: usize,
    pub unattributed: usize,
}

/// Parameters, input digests, and stage counts of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub threshold: f64,
    pub require_vol_page: bool,
    pub require_same_rpy: bool,
    pub max_rpy: Option<i32>,
    pub min_ncr: usize,
    pub top_n: Vec<usize>,
    pub year_range: Option<(i32, i32)>,
    pub markers: Vec<MarkerSpec>,
    pub author_mode: AttributionMode,
    pub inputs: Vec<InputDigest>,
    pub marker_file: InputDigest,
    pub counts: StageCounts,
    pub coverage: BTreeMap<String, Coverage>,
    pub entities: Vec<EntitySummary>,
    pub warnings: Vec<String>,
}

pub struct RunResult {
    pub output: PipelineOutput,
    pub entities: Vec<EntityTable>,
    pub manifest: RunManifest,
}

fn write_file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<(), RunError>,
) -> Result<(), RunError> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    f(&mut w)?;
    w.flush().map_err(io_err(&path))
}

fn csv_at(dir: &Path, name: &str) -> impl Fn(csv::Error) -> RunError {
    let path = dir.join(name);
    move |source| RunError::Csv {
        path: path.clone(),
        source,
    }
}

/// Writes one table per entity view and kind into `dir`.
pub fn write_entity_tables(dir: &Path, tables: &[EntityTable]) -> Result<(), RunError> {
    for t in tables {
        let name = entity_file_name(t);
        write_file(dir, &name, |w| write_entities(t, w).map_err(csv_at(dir, &name)))?;
    }
    Ok(())
}

pub fn entity_summaries(tables: &[EntityTable]) -> Vec<EntitySummary> {
    tables
        .iter()
        .map(|t| EntitySummary {
            view: t.view.to_string(),
            kind: t.kind.to_string(),
            rows: t.aggregation.rows.len(),
            unattributed: t.aggregation.unattributed,
        })
        .collect()
}

/// Validates `cfg`, runs the analysis, and writes the output directory.
pub fn execute_run(cfg: &RunConfig) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let markers = read_markers(&cfg.markers)?;
    let countries = load_countries(cfg.countries.as_deref())?;
    let corpus = read_files(&cfg.inputs, cfg.format, &cfg.csv_columns)?;

    let filter = FilterConfig {
        max_rpy: cfg.max_rpy,
        min_ncr: cfg.min_ncr,
        markers: markers.clone(),
    };
    let output = run_pipeline(&corpus, &cfg.cluster, &filter, &cfg.top_n, cfg.year_range)?;

    let author_mode = cfg.resolved_author_mode();
    let (metadata, lookup_warnings) = fetch_metadata(&output.clusters, &cfg.provider)?;
    let entities = aggregate_all_views(&output.clusters, &output.selections, &metadata, author_mode, &countries);

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(dir, "spectrogram.csv", |w| {
        write_spectrogram(&output.spectrogram, w).map_err(csv_at(dir, "spectrogram.csv"))
    })?;
    write_file(dir, "clusters.csv", |w| {
        write_clusters(&output.clusters, w).map_err(csv_at(dir, "clusters.csv"))
    })?;
    for sel in &output.selections {
        let name = top_n_file_name(sel.n);
        write_file(dir, &name, |w| write_top_n(sel, w).map_err(csv_at(dir, &name)))?;
    }
    write_entity_tables(dir, &entities)?;
    if cfg.provider != ProviderConfig::None {
        write_file(dir, "metadata.csv", |w| {
            write_provider_table(&metadata, w).map_err(csv_at(dir, "metadata.csv"))
        })?;
    }
    if cfg.audit {
        write_file(dir, "clusters_audit.csv", |w| {
            write_audit_csv(&output.all_clusters, w).map_err(csv_at(dir, "clusters_audit.csv"))
        })?;
    }

    let mut coverage_by_view = BTreeMap::new();
    coverage_by_view.insert("full".to_owned(), coverage(&output.clusters, &metadata));
    for sel in &output.selections {
        coverage_by_view.insert(format!("top{}", sel.n), coverage(sel.clusters(), &metadata));
    }
    let manifest = RunManifest {
        threshold: cfg.cluster.threshold,
        require_vol_page: cfg.cluster.require_vol_page,
        require_same_rpy: cfg.cluster.require_same_rpy,
        max_rpy: cfg.max_rpy,
        min_ncr: cfg.min_ncr,
        top_n: cfg.top_n.clone(),
        year_range: cfg.year_range,
        markers,
        author_mode,
        inputs: cfg.inputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
        marker_file: digest(&cfg.markers)?,
        counts: output.counts,
        coverage: coverage_by_view,
        entities: entity_summaries(&entities),
        warnings: output
            .warnings
            .iter()
            .map(ToString::to_string)
            .chain(lookup_warnings)
            .collect(),
    };
    write_file(dir, "run_manifest.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(|e| RunError::Io {
            path: dir.join("run_manifest.json"),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_err(dir))
    })?;
    Ok(RunResult {
        output,
        entities,
        manifest,
    })
}

/// Summary written next to an archive by [`ingest_to_archive`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub cited_refs: usize,
    pub source_files: Vec<String>,
    pub warnings: Vec<IngestWarning>,
}

impl IngestReport {
    pub fn of(corpus: &Corpus) -> Self {
        IngestReport {
            records: corpus.records.len(),
            cited_refs: corpus.cited_ref_count(),
            source_files: corpus.source_files.clone(),
            warnings: corpus.ingest_warnings.clone(),
        }
    }
}

/// Reads and merges `inputs`, then writes the archive and, when given, the
/// JSON report.
pub fn ingest_to_archive(
    inputs: &[PathBuf],
    format: Option<InputFormat>,
    columns: &CsvColumns,
    archive: &Path,
    report: Option<&Path>,
) -> Result<IngestReport, RunError> {
    let corpus = read_files(inputs, format, columns)?;
    let mut w = BufWriter::new(File::create(archive).map_err(io_err(archive))?);
    write_archive(&corpus.records, &mut w).map_err(io_err(archive))?;
    w.flush().map_err(io_err(archive))?;
    let summary = IngestReport::of(&corpus);
    if let Some(path) = report {
        let mut text = serde_json::to_string_pretty(&summary).map_err(|e| RunError::Io {
            path: path.to_owned(),
            source: e.into(),
        })?;
        text.push('\n');
        fs::write(path, text).map_err(io_err(path))?;
    }
    Ok(summary)
}
