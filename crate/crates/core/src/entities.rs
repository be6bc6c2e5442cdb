//! Author, institution, and country rankings over cluster sets.
//!
//! Full author lists and affiliations are not part of a cited-reference
//! string; they come from a DOI-keyed [`MetadataProvider`]. Each cluster adds
//! one to every distinct entity attributed to it.

use crate::model::{canonical_author, collapse_whitespace, normalize_doi, EntityCount, EntityKind, RefCluster};
use crate::spectroscopy::TopNSelection;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// What a provider knows about one DOI.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefMetadata {
    pub doi: String,
    pub authors: Vec<String>,
    pub institutions: Vec<String>,
    pub countries: Vec<String>,
    pub found: bool,
    pub has_affiliation: bool,
}

impl RefMetadata {
    pub fn not_found(doi: &str) -> Self {
        RefMetadata {
            doi: doi.to_owned(),
            ..Default::default()
        }
    }

    pub fn from_record(doi: &str, rec: ProviderRecord) -> Self {
        let clean = |v: Vec<String>| -> Vec<String> {
            v.into_iter()
                .map(|s| collapse_whitespace(&s))
                .filter(|s| !s.is_empty())
                .collect()
        };
        let institutions = clean(rec.institutions);
        let countries = clean(rec.countries);
        RefMetadata {
            doi: doi.to_owned(),
            authors: clean(rec.authors),
            has_affiliation: !institutions.is_empty() || !countries.is_empty(),
            institutions,
            countries,
            found: true,
        }
    }
}

pub type MetadataMap = BTreeMap<String, RefMetadata>;

/// The body a provider returns for a DOI.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRecord {
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub institutions: Vec<String>,
    #[serde(default)]
    pub countries: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("provider returned status {0}")]
    Status(u16),
    #[error("cannot read provider table: {0}")]
    Table(#[from] csv::Error),
}

pub trait MetadataProvider: Sync {
    /// `Ok(None)` when the provider has no record for `doi`.
    fn fetch(&self, doi: &str) -> Result<Option<ProviderRecord>, ProviderError>;
}

/// Provider backed by a CSV table: `doi,authors,institutions,countries`, list
/// cells separated by `|`.
#[derive(Clone, Debug, Default)]
pub struct LocalTableProvider {
    rows: HashMap<String, ProviderRecord>,
}

impl LocalTableProvider {
    pub fn from_reader(input: impl Read) -> Result<Self, ProviderError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut rows = HashMap::new();
        #[derive(Deserialize)]
        struct Row {
            doi: String,
            #[serde(default)]
            authors: String,
            #[serde(default)]
            institutions: String,
            #[serde(default)]
            countries: String,
        }
        let split = |s: &str| -> Vec<String> {
            s.split('|')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(str::to_owned)
                .collect()
        };
        for row in reader.deserialize::<Row>() {
            let row = row?;
            let Some(doi) = normalize_doi(&row.doi) else {
                log::warn!("provider table: skipping row with invalid DOI {:?}", row.doi);
                continue;
            };
            rows.entry(doi).or_insert_with(|| ProviderRecord {
                authors: split(&row.authors),
                institutions: split(&row.institutions),
                countries: split(&row.countries),
            });
        }
        Ok(LocalTableProvider { rows })
    }

    pub fn insert(&mut self, doi: &str, rec: ProviderRecord) {
        if let Some(d) = normalize_doi(doi) {
            self.rows.insert(d, rec);
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl MetadataProvider for LocalTableProvider {
    fn fetch(&self, doi: &str) -> Result<Option<ProviderRecord>, ProviderError> {
        Ok(self.rows.get(doi).cloned())
    }
}

/// Writes metadata in the local provider table format, found DOIs only.
pub fn write_provider_table(metadata: &MetadataMap, out: impl Write) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["doi", "authors", "institutions", "countries"])?;
    for m in metadata.values().filter(|m| m.found) {
        w.write_record([
            m.doi.as_str(),
            &m.authors.join("|"),
            &m.institutions.join("|"),
            &m.countries.join("|"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Provider answering `GET {base_url}/{doi}` with a JSON [`ProviderRecord`];
/// 404 means not found.
pub struct HttpProvider {
    base_url: String,
    client: reqwest::blocking::Client,
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl HttpProvider {
    pub fn new(base_url: &str, min_interval: Duration, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("rpysco/", env!("CARGO_PKG_VERSION")))
            .build()?;
        Ok(HttpProvider {
            base_url: base_url.trim_end_matches('/').to_owned(),
            client,
            min_interval,
            next_slot: Mutex::new(Instant::now()),
        })
    }

    fn wait_turn(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + self.min_interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

fn encode_path(doi: &str) -> String {
    let mut out = String::with_capacity(doi.len());
    for b in doi.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~/".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl MetadataProvider for HttpProvider {
    fn fetch(&self, doi: &str) -> Result<Option<ProviderRecord>, ProviderError> {
        self.wait_turn();
        let url = format!("{}/{}", self.base_url, encode_path(doi));
        let resp = self.client.get(url).send()?;
        match resp.status().as_u16() {
            404 => Ok(None),
            s if (200..300).contains(&s) => Ok(Some(resp.json()?)),
            s => Err(ProviderError::Status(s)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Looks up one DOI. Provider failures are retried, then reported as not
/// found together with a warning.
pub fn lookup_metadata(
    doi: &str,
    provider: &dyn MetadataProvider,
    policy: &RetryPolicy,
) -> (RefMetadata, Option<String>) {
    let mut attempt = 0;
    loop {
        match provider.fetch(doi) {
            Ok(Some(rec)) => return (RefMetadata::from_record(doi, rec), None),
            Ok(None) => return (RefMetadata::not_found(doi), None),
            Err(e) if attempt < policy.retries => {
                attempt += 1;
                log::debug!("lookup {doi} failed ({e}), retry {attempt}");
                std::thread::sleep(policy.backoff * attempt);
            }
            Err(e) => {
                let msg = format!("metadata lookup for {doi} failed after {} attempts: {e}", attempt + 1);
                log::warn!("{msg}");
                return (RefMetadata::not_found(doi), Some(msg));
            }
        }
    }
}

/// Looks up every DOI with at most `parallelism` requests in flight.
pub fn lookup_all<'a>(
    dois: impl IntoIterator<Item = &'a str>,
    provider: &dyn MetadataProvider,
    policy: &RetryPolicy,
    parallelism: usize,
) -> (MetadataMap, Vec<String>) {
    use rayon::prelude::*;
    let dois: Vec<&str> = dois.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    let run = || -> Vec<(RefMetadata, Option<String>)> {
        dois.par_iter().map(|d| lookup_metadata(d, provider, policy)).collect()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let mut warnings = Vec::new();
    let mut map = MetadataMap::new();
    for (meta, warning) in results {
        warnings.extend(warning);
        map.insert(meta.doi.clone(), meta);
    }
    (map, warnings)
}

/// Raw country name to canonical name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountryMergeTable {
    map: BTreeMap<String, String>,
}

fn country_key(s: &str) -> String {
    collapse_whitespace(s).to_lowercase()
}

#[derive(Debug, thiserror::Error)]
pub enum CountryTableError {
    #[error("country table: {0}")]
    Csv(#[from] csv::Error),
    #[error("country table maps canonical name {canonical:?} to {other:?}")]
    NotIdempotent { canonical: String, other: String },
}

impl Default for CountryMergeTable {
    /// Merges the former West German names into "Germany".
    fn default() -> Self {
        let mut t = CountryMergeTable { map: BTreeMap::new() };
        for raw in ["Fed. Rep. Ger.", "West Germany", "Germany"] {
            t.map.insert(country_key(raw), "Germany".into());
        }
        t
    }
}

impl CountryMergeTable {
    pub fn empty() -> Self {
        CountryMergeTable { map: BTreeMap::new() }
    }

    /// Adds a rule. Canonical names always map to themselves.
    pub fn insert(&mut self, raw: &str, canonical: &str) -> Result<(), CountryTableError> {
        let canonical = collapse_whitespace(canonical);
        if let Some(other) = self.map.get(&country_key(&canonical)) {
            if *other != canonical {
                return Err(CountryTableError::NotIdempotent {
                    canonical,
                    other: other.clone(),
                });
            }
        }
        if self
            .map
            .values()
            .any(|v| country_key(v) == country_key(raw) && country_key(v) != country_key(&canonical))
        {
            return Err(CountryTableError::NotIdempotent {
                canonical: raw.trim().to_owned(),
                other: canonical,
            });
        }
        self.map.insert(country_key(&canonical), canonical.clone());
        self.map.insert(country_key(raw), canonical);
        Ok(())
    }

    /// Extends the table from a `raw,canonical` CSV with a header row.
    pub fn extend_from_csv(&mut self, input: impl Read) -> Result<(), CountryTableError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        for row in reader.records() {
            let row = row?;
            if let (Some(raw), Some(canonical)) = (row.get(0), row.get(1)) {
                self.insert(raw, canonical)?;
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn normalize(&self, name: &str) -> String {
        self.map
            .get(&country_key(name))
            .cloned()
            .unwrap_or_else(|| name.trim().to_owned())
    }
}

pub fn normalize_country(name: &str, table: &CountryMergeTable) -> String {
    table.normalize(name)
}

/// How a cluster's authors are determined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionMode {
    /// The first author parsed from the canonical reference string.
    FirstAuthor,
    /// Provider metadata for the cluster's DOI.
    Enriched,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{0} counts need enriched metadata; reference strings carry no affiliation")]
pub struct NeedsEnrichment(pub EntityKind);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregation {
    pub rows: Vec<EntityCount>,
    /// Clusters that could not be attributed to any entity.
    pub unattributed: usize,
}

fn entity_key(kind: EntityKind, name: &str) -> String {
    match kind {
        EntityKind::Author => canonical_author(name),
        EntityKind::Institution => collapse_whitespace(name).to_uppercase(),
        EntityKind::Country => name.to_owned(),
    }
}

pub fn aggregate<'a>(
    clusters: impl IntoIterator<Item = &'a RefCluster>,
    kind: EntityKind,
    metadata: &MetadataMap,
    mode: AttributionMode,
    countries: &CountryMergeTable,
) -> Result<Aggregation, NeedsEnrichment> {
    if mode == AttributionMode::FirstAuthor && kind != EntityKind::Author {
        return Err(NeedsEnrichment(kind));
    }
    // key -> (display name, count)
    let mut counts: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut unattributed = 0;
    for c in clusters {
        let names: Vec<String> = match mode {
            AttributionMode::FirstAuthor => c.canonical.first_author.iter().map(|a| canonical_author(a)).collect(),
            AttributionMode::Enriched => match c.doi().and_then(|d| metadata.get(d)) {
                Some(m) => match kind {
                    EntityKind::Author => m.authors.clone(),
                    EntityKind::Institution => m.institutions.clone(),
                    EntityKind::Country => m.countries.iter().map(|n| countries.normalize(n)).collect(),
                },
                None => Vec::new(),
            },
        };
        let mut distinct: BTreeMap<String, String> = BTreeMap::new();
        for name in names.into_iter().filter(|n| !n.trim().is_empty()) {
            let key = entity_key(kind, &name);
            let display = distinct.entry(key).or_insert_with(|| name.clone());
            if name < *display {
                *display = name;
            }
        }
        if distinct.is_empty() {
            unattributed += 1;
        }
        for (key, name) in distinct {
            let slot = counts.entry(key).or_insert_with(|| (name.clone(), 0));
            if name < slot.0 {
                slot.0 = name;
            }
            slot.1 += 1;
        }
    }
    let mut rows: Vec<EntityCount> = counts
        .into_values()
        .map(|(name, ncr)| EntityCount { name, kind, ncr })
        .collect();
    rows.sort_by(|a, b| b.ncr.cmp(&a.ncr).then_with(|| a.name.cmp(&b.name)));
    Ok(Aggregation { rows, unattributed })
}

/// One of the cluster subsets entities are ranked over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    Full,
    Top(usize),
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            View::Full => f.write_str("full"),
            View::Top(n) => write!(f, "top{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTable {
    pub view: View,
    pub kind: EntityKind,
    pub aggregation: Aggregation,
}

/// Rankings for every kind over the full cluster set and each top-N
/// selection. Institutions and countries always use metadata; authors use
/// `author_mode`.
pub fn aggregate_all_views(
    clusters: &[RefCluster],
    selections: &[TopNSelection],
    metadata: &MetadataMap,
    author_mode: AttributionMode,
    countries: &CountryMergeTable,
) -> Vec<EntityTable> {
    let mut views: Vec<(View, Vec<&RefCluster>)> = vec![(View::Full, clusters.iter().collect())];
    for sel in selections {
        views.push((View::Top(sel.n), sel.clusters().collect()));
    }
    let mut out = Vec::new();
    for (view, cs) in views {
        for kind in EntityKind::ALL {
            let mode = if kind == EntityKind::Author {
                author_mode
            } else {
                AttributionMode::Enriched
            };
            let aggregation =
                aggregate(cs.iter().copied(), kind, metadata, mode, countries).expect("mode checked per kind");
            out.push(EntityTable {
                view,
                kind,
                aggregation,
            });
        }
    }
    out
}

/// Lookup coverage over a set of clusters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub clusters: usize,
    pub with_doi: usize,
    pub found: usize,
    pub without_affiliation: usize,
}

pub fn coverage<'a>(clusters: impl IntoIterator<Item = &'a RefCluster>, metadata: &MetadataMap) -> Coverage {
    let mut cov = Coverage::default();
    for c in clusters {
        cov.clusters += 1;
        let Some(doi) = c.doi() else { continue };
        cov.with_doi += 1;
        if let Some(m) = metadata.get(doi).filter(|m| m.found) {
            cov.found += 1;
            if !m.has_affiliation {
                cov.without_affiliation += 1;
            }
        }
    }
    cov
}
