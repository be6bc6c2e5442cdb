//! Shared domain types and the identity rules every stage relies on.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Earliest reference publication year accepted by the parser.
pub const MIN_RPY: i32 = 1000;
/// Latest reference publication year accepted by the parser.
pub const MAX_RPY: i32 = 2100;

/// One citing publication, as read from an export file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitingRecord {
    pub record_id: String,
    pub publication_year: Option<i32>,
    pub doi: Option<String>,
    pub title: Option<String>,
    pub cited_refs: Vec<String>,
    /// Fields with tags the analysis does not use, kept in input order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_fields: Vec<TaggedField>,
}

/// A tagged-export field the analysis ignores.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedField {
    pub tag: String,
    pub lines: Vec<String>,
}

impl CitingRecord {
    pub fn new(record_id: impl Into<String>) -> Self {
        CitingRecord {
            record_id: record_id.into(),
            publication_year: None,
            doi: None,
            title: None,
            cited_refs: Vec::new(),
            extra_fields: Vec::new(),
        }
    }
}

/// One parsed cited reference.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CitedRef {
    pub raw: String,
    pub first_author: Option<String>,
    pub rpy: Option<i32>,
    pub source: Option<String>,
    pub volume: Option<String>,
    pub page: Option<String>,
    pub doi: Option<String>,
    pub citing_record_id: String,
}

impl CitedRef {
    /// A reference with only the raw string and its citing record set.
    pub fn bare(raw: impl Into<String>, citing_record_id: impl Into<String>) -> Self {
        CitedRef {
            raw: raw.into(),
            first_author: None,
            rpy: None,
            source: None,
            volume: None,
            page: None,
            doi: None,
            citing_record_id: citing_record_id.into(),
        }
    }
}

/// Exact-match blocking key: (rpy, volume, page). Absent parts are `None` / empty.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchKey {
    pub rpy: Option<i32>,
    pub volume: String,
    pub page: String,
}

impl fmt::Display for MatchKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rpy {
            Some(y) => write!(f, "({},{:?},{:?})", y, self.volume, self.page),
            None => write!(f, "(,{:?},{:?})", self.volume, self.page),
        }
    }
}

pub fn ref_match_key(r: &CitedRef) -> MatchKey {
    MatchKey {
        rpy: r.rpy,
        volume: r.volume.clone().unwrap_or_default(),
        page: r.page.clone().unwrap_or_default(),
    }
}

/// An equivalence class of variant spellings of one cited work.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefCluster {
    pub cluster_id: String,
    pub members: Vec<CitedRef>,
    pub canonical: CitedRef,
    /// Distinct citing records referencing any member.
    pub ncr: usize,
    pub rpy: Option<i32>,
}

impl RefCluster {
    /// The canonical member's DOI, falling back to the smallest DOI carried by
    /// any member.
    pub fn doi(&self) -> Option<&str> {
        self.canonical
            .doi
            .as_deref()
            .or_else(|| self.members.iter().filter_map(|m| m.doi.as_deref()).min())
    }

    pub fn citing_records(&self) -> BTreeSet<&str> {
        self.members.iter().map(|m| m.citing_record_id.as_str()).collect()
    }
}

/// One year of the spectrogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramRow {
    pub rpy: i32,
    pub ncr: u64,
    /// `ncr` minus the median of the five-year window around `rpy`. Half
    /// values occur where the clipped window holds an even number of years.
    pub median_dev: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Author,
    Institution,
    Country,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Author, EntityKind::Institution, EntityKind::Country];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Author => "author",
            EntityKind::Institution => "institution",
            EntityKind::Country => "country",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCount {
    pub name: String,
    pub kind: EntityKind,
    pub ncr: usize,
}

/// A marker paper used to select the co-citation set and later removed from it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub doi: Option<String>,
    pub first_author: Option<String>,
    pub rpy: Option<i32>,
    pub volume: Option<String>,
    pub page: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("marker needs a DOI or both a first author and a publication year")]
pub struct InvalidMarker;

impl MarkerSpec {
    /// Builds a marker, normalizing DOI and author and checking that it can
    /// be matched at all.
    pub fn new(
        doi: Option<&str>,
        first_author: Option<&str>,
        rpy: Option<i32>,
        volume: Option<&str>,
        page: Option<&str>,
    ) -> Result<Self, InvalidMarker> {
        fn non_empty(s: Option<&str>) -> Option<&str> {
            s.map(str::trim).filter(|s| !s.is_empty())
        }
        let marker = MarkerSpec {
            doi: non_empty(doi).and_then(normalize_doi),
            first_author: non_empty(first_author).map(canonical_author).filter(|a| !a.is_empty()),
            rpy,
            volume: non_empty(volume).map(str::to_owned),
            page: non_empty(page).map(str::to_owned),
        };
        marker.validate()?;
        Ok(marker)
    }

    pub fn validate(&self) -> Result<(), InvalidMarker> {
        if self.doi.is_some() || (self.first_author.is_some() && self.rpy.is_some()) {
            Ok(())
        } else {
            Err(InvalidMarker)
        }
    }
}

/// True when `r` refers to the marker paper: equal DOIs, or the same first
/// author and year (and the same volume and page where both sides carry them).
pub fn marker_matches(r: &CitedRef, marker: &MarkerSpec) -> bool {
    if let (Some(a), Some(b)) = (r.doi.as_deref(), marker.doi.as_deref()) {
        let a = normalize_doi(a);
        if a.is_some() && a == normalize_doi(b) {
            return true;
        }
    }
    let (Some(ra), Some(ma)) = (r.first_author.as_deref(), marker.first_author.as_deref()) else {
        return false;
    };
    if canonical_author(ra) != canonical_author(ma) {
        return false;
    }
    if r.rpy.is_none() || r.rpy != marker.rpy {
        return false;
    }
    let agree = |x: &Option<String>, y: &Option<String>| match (x, y) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    };
    agree(&r.volume, &marker.volume) && agree(&r.page, &marker.page)
}

/// Normalizes a DOI: drops a `DOI `, `doi:` or resolver-URL prefix, trims
/// whitespace and trailing `.,;`, and lowercases. Returns `None` unless the
/// result starts with `10.`.
pub fn normalize_doi(s: &str) -> Option<String> {
    const PREFIXES: [&str; 6] = [
        "https://doi.org/",
        "http://doi.org/",
        "https://dx.doi.org/",
        "http://dx.doi.org/",
        "doi:",
        "doi ",
    ];
    let mut rest = s.trim();
    loop {
        let lower = rest.get(..20.min(rest.len())).unwrap_or(rest).to_ascii_lowercase();
        match PREFIXES.iter().find(|p| lower.starts_with(*p)) {
            Some(p) => rest = rest[p.len()..].trim_start(),
            None => break,
        }
    }
    let doi = rest
        .trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ';'))
        .to_lowercase();
    doi.starts_with("10.").then_some(doi)
}

/// Canonical author form: uppercase, periods and commas dropped, whitespace
/// collapsed. `"Manabe, S."` becomes `"MANABE S"`.
pub fn canonical_author(name: &str) -> String {
    collapse_whitespace(&name.replace(['.', ','], " ")).to_uppercase()
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
