//! The RPYS-CO analysis chain: co-citation selection, filtering, the
//! spectrogram, and per-year top-N selection.

use crate::cluster::{cluster_refs, match_form, ClusterConfig, InvalidThreshold};
use crate::ingest::{Corpus, IngestWarning};
use crate::model::{marker_matches, MarkerSpec, RefCluster, SpectrogramRow};
use crate::refparse::{parse_all, parse_cited_ref};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// References published after this year are dropped.
    pub max_rpy: Option<i32>,
    /// Clusters cited by fewer records than this are dropped.
    pub min_ncr: usize,
    pub markers: Vec<MarkerSpec>,
}

impl FilterConfig {
    fn year_ok(&self, rpy: Option<i32>) -> bool {
        match (rpy, self.max_rpy) {
            (None, _) => false,
            (Some(y), Some(max)) => y <= max,
            (Some(_), None) => true,
        }
    }

    /// Tests the canonical member, with the cluster DOI standing in when the
    /// canonical string carries none.
    fn is_marker(&self, c: &RefCluster) -> bool {
        let mut r = c.canonical.clone();
        if r.doi.is_none() {
            r.doi = c.doi().map(str::to_owned);
        }
        self.markers.iter().any(|m| marker_matches(&r, m))
    }
}

/// Keeps the records that cite at least one marker.
pub fn cocite_select(corpus: &Corpus, markers: &[MarkerSpec]) -> Corpus {
    let records: Vec<_> = corpus
        .records
        .iter()
        .filter(|rec| {
            rec.cited_refs.iter().any(|raw| {
                let r = parse_cited_ref(raw, &rec.record_id);
                markers.iter().any(|m| marker_matches(&r, m))
            })
        })
        .cloned()
        .collect();
    let mut out = Corpus {
        records,
        source_files: corpus.source_files.clone(),
        ingest_warnings: corpus.ingest_warnings.clone(),
    };
    if out.records.is_empty() && !corpus.records.is_empty() {
        let w = IngestWarning {
            file: String::new(),
            line: 0,
            message: "no record cites any marker".into(),
        };
        log::warn!("{}", w.message);
        out.ingest_warnings.push(w);
    }
    out
}

/// Survivor counts after each step of [`apply_filters`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub after_year: usize,
    pub after_min_ncr: usize,
    pub after_markers: usize,
}

/// Drops, in order: clusters without a year or published after `max_rpy`,
/// clusters with `ncr < min_ncr`, and clusters whose canonical reference is a
/// marker.
pub fn apply_filters(clusters: Vec<RefCluster>, cfg: &FilterConfig) -> Vec<RefCluster> {
    apply_filters_counted(clusters, cfg).0
}

pub fn apply_filters_counted(clusters: Vec<RefCluster>, cfg: &FilterConfig) -> (Vec<RefCluster>, FilterCounts) {
    let mut kept: Vec<RefCluster> = clusters.into_iter().filter(|c| cfg.year_ok(c.rpy)).collect();
    let after_year = kept.len();
    kept.retain(|c| c.ncr >= cfg.min_ncr);
    let after_min_ncr = kept.len();
    kept.retain(|c| !cfg.is_marker(c));
    let counts = FilterCounts {
        after_year,
        after_min_ncr,
        after_markers: kept.len(),
    };
    (kept, counts)
}

/// Median of a non-empty slice; the mean of the middle pair for even counts.
fn median(values: &mut [u64]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Sums cluster NCR per publication year over a dense year axis and adds the
/// deviation from the five-year median. The window is clipped at the ends of
/// the range. Without an explicit `range`, the axis spans the observed years.
pub fn compute_spectrogram(clusters: &[RefCluster], range: Option<(i32, i32)>) -> Vec<SpectrogramRow> {
    let mut per_year: BTreeMap<i32, u64> = BTreeMap::new();
    for c in clusters {
        if let Some(y) = c.rpy {
            *per_year.entry(y).or_default() += c.ncr as u64;
        }
    }
    let (from, to) = match range {
        Some(r) => r,
        None => match (per_year.keys().next(), per_year.keys().next_back()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Vec::new(),
        },
    };
    if from > to {
        return Vec::new();
    }
    let series: Vec<u64> = (from..=to).map(|y| per_year.get(&y).copied().unwrap_or(0)).collect();
    series
        .iter()
        .enumerate()
        .map(|(i, &ncr)| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(series.len() - 1);
            let mut window = series[lo..=hi].to_vec();
            SpectrogramRow {
                rpy: from + i as i32,
                ncr,
                median_dev: ncr as f64 - median(&mut window),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCluster {
    pub rank: usize,
    pub cluster: RefCluster,
}

/// The `n` most cited clusters of each reference publication year.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopNSelection {
    pub n: usize,
    pub rows: BTreeMap<i32, Vec<RankedCluster>>,
}

impl TopNSelection {
    pub fn cluster_ids(&self) -> BTreeSet<&str> {
        self.rows
            .values()
            .flatten()
            .map(|r| r.cluster.cluster_id.as_str())
            .collect()
    }

    pub fn clusters(&self) -> impl Iterator<Item = &RefCluster> {
        self.rows.values().flatten().map(|r| &r.cluster)
    }
}

/// Per year: NCR descending, then canonical raw string ascending (cluster id
/// last), keeping the first `n`. Clusters without a year are skipped.
///
/// # Panics
/// If `n` is zero.
pub fn top_n_per_year(clusters: &[RefCluster], n: usize) -> TopNSelection {
    assert!(n >= 1, "top-N needs n >= 1");
    let mut by_year: BTreeMap<i32, Vec<&RefCluster>> = BTreeMap::new();
    for c in clusters {
        if let Some(y) = c.rpy {
            by_year.entry(y).or_default().push(c);
        }
    }
    let rows = by_year
        .into_iter()
        .map(|(year, mut cs)| {
            cs.sort_by(|a, b| {
                b.ncr
                    .cmp(&a.ncr)
                    .then_with(|| a.canonical.raw.cmp(&b.canonical.raw))
                    .then_with(|| a.cluster_id.cmp(&b.cluster_id))
            });
            let ranked = cs
                .into_iter()
                .take(n)
                .enumerate()
                .map(|(i, c)| RankedCluster {
                    rank: i + 1,
                    cluster: c.clone(),
                })
                .collect();
            (year, ranked)
        })
        .collect();
    TopNSelection { n, rows }
}

/// Counts at each stage of [`run_pipeline`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub citing_records: usize,
    pub cocited_records: usize,
    /// Non-distinct cited references of the co-cited records.
    pub total_refs: usize,
    /// Distinct reference strings after normalization, before any filter.
    pub distinct_ref_strings: usize,
    pub refs_in_year_range: usize,
    pub clusters: usize,
    pub clusters_after_min_ncr: usize,
    pub clusters_final: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    /// Every cluster formed, before the NCR and marker filters.
    pub all_clusters: Vec<RefCluster>,
    /// Clusters surviving every filter.
    pub clusters: Vec<RefCluster>,
    pub spectrogram: Vec<SpectrogramRow>,
    pub selections: Vec<TopNSelection>,
    pub counts: StageCounts,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PipelineError {
    #[error("at least one marker paper is required")]
    NoMarkers,
    #[error("top-N sizes must be at least 1")]
    InvalidTopN,
    #[error(transparent)]
    Threshold(#[from] InvalidThreshold),
}

/// Co-citation selection, parsing, the year filter, clustering, the NCR and
/// marker filters, then the spectrogram and top-N selections, in that order.
pub fn run_pipeline(
    corpus: &Corpus,
    cluster_cfg: &ClusterConfig,
    filter_cfg: &FilterConfig,
    top_n: &[usize],
    year_range: Option<(i32, i32)>,
) -> Result<PipelineOutput, PipelineError> {
    if filter_cfg.markers.is_empty() {
        return Err(PipelineError::NoMarkers);
    }
    if top_n.contains(&0) {
        return Err(PipelineError::InvalidTopN);
    }
    cluster_cfg.validate()?;

    let selected = cocite_select(corpus, &filter_cfg.markers);
    let refs = parse_all(&selected);
    let total_refs = refs.len();
    let distinct_ref_strings = refs.iter().map(|r| match_form(&r.raw)).collect::<BTreeSet<_>>().len();
    let refs: Vec<_> = refs.into_iter().filter(|r| filter_cfg.year_ok(r.rpy)).collect();
    let refs_in_year_range = refs.len();

    let all_clusters = cluster_refs(refs, cluster_cfg);
    let (clusters, fc) = apply_filters_counted(all_clusters.clone(), filter_cfg);
    let spectrogram = compute_spectrogram(&clusters, year_range);
    let selections = top_n.iter().map(|&n| top_n_per_year(&clusters, n)).collect();

    Ok(PipelineOutput {
        counts: StageCounts {
            citing_records: corpus.records.len(),
            cocited_records: selected.records.len(),
            total_refs,
            distinct_ref_strings,
            refs_in_year_range,
            clusters: all_clusters.len(),
            clusters_after_min_ncr: fc.after_min_ncr,
            clusters_final: fc.after_markers,
        },
        all_clusters,
        clusters,
        spectrogram,
        selections,
        warnings: selected.ingest_warnings,
    })
}
