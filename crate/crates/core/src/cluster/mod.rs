//! Merging of variant cited-reference strings.
//!
//! References are first split into blocks that must agree exactly on
//! publication year, volume, and starting page. Within a block, two
//! references are linked when the normalized similarity of their strings
//! reaches the threshold, and clusters are the connected components of that
//! link relation (single-link).

mod levenshtein;
mod union_find;

pub use levenshtein::{fold, levenshtein_distance, similarity};
pub use union_find::DisjointSet;

use crate::model::{ref_match_key, CitedRef, MatchKey, RefCluster};
use crate::refparse::split_doi;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub threshold: f64,
    pub require_vol_page: bool,
    pub require_same_rpy: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            threshold: 0.75,
            require_vol_page: true,
            require_same_rpy: true,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("similarity threshold must lie in [0, 1], got {0}")]
pub struct InvalidThreshold(pub f64);

impl ClusterConfig {
    pub fn with_threshold(threshold: f64) -> Result<Self, InvalidThreshold> {
        let cfg = ClusterConfig {
            threshold,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), InvalidThreshold> {
        if (0.0..=1.0).contains(&self.threshold) {
            Ok(())
        } else {
            Err(InvalidThreshold(self.threshold))
        }
    }

    /// The exact-match key two references must share before they are compared.
    pub fn blocking_key(&self, r: &CitedRef) -> MatchKey {
        let mut key = ref_match_key(r);
        if !self.require_same_rpy {
            key.rpy = None;
        }
        if !self.require_vol_page {
            key.volume.clear();
            key.page.clear();
        }
        key
    }
}

/// The string form compared during clustering: the DOI segment removed, then
/// case-folded and whitespace-collapsed.
pub fn match_form(raw: &str) -> String {
    let body = split_doi(raw).0;
    if body.trim().is_empty() {
        fold(raw)
    } else {
        fold(body)
    }
}

pub fn cluster_refs(refs: Vec<CitedRef>, cfg: &ClusterConfig) -> Vec<RefCluster> {
    let mut blocks: BTreeMap<MatchKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in refs.iter().enumerate() {
        blocks.entry(cfg.blocking_key(r)).or_default().push(i);
    }
    let blocks: Vec<Vec<usize>> = blocks.into_values().collect();

    let groups: Vec<Vec<usize>> = blocks
        .par_iter()
        .flat_map_iter(|block| {
            let forms: Vec<String> = block.iter().map(|&i| match_form(&refs[i].raw)).collect();
            link_block(&forms, cfg.threshold)
                .into_iter()
                .map(|g| g.into_iter().map(|local| block[local]).collect::<Vec<_>>())
        })
        .collect();

    let mut slots: Vec<Option<CitedRef>> = refs.into_iter().map(Some).collect();
    let mut clusters: Vec<(usize, RefCluster)> = groups
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            let members: Vec<CitedRef> = g
                .iter()
                .map(|&i| slots[i].take().expect("each ref in one group"))
                .collect();
            (g[0], build_cluster(members))
        })
        .collect();

    clusters.sort_by(|(ia, a), (ib, b)| {
        (a.rpy.is_none(), a.rpy, &a.canonical.raw, ia).cmp(&(b.rpy.is_none(), b.rpy, &b.canonical.raw, ib))
    });
    clusters
        .into_iter()
        .enumerate()
        .map(|(n, (_, mut c))| {
            c.cluster_id = format!("C{:06}", n + 1);
            c
        })
        .collect()
}

/// Connected components of the similarity graph over one block, as local
/// indices.
fn link_block(forms: &[String], threshold: f64) -> Vec<Vec<usize>> {
    let mut ds = DisjointSet::new(forms.len());
    // Identical forms always link; compare each distinct form once.
    let mut first_of: HashMap<&str, usize> = HashMap::new();
    let mut distinct: Vec<(usize, Vec<char>)> = Vec::new();
    for (i, f) in forms.iter().enumerate() {
        match first_of.get(f.as_str()) {
            Some(&j) => {
                ds.union(i, j);
            }
            None => {
                first_of.insert(f, i);
                distinct.push((i, f.chars().collect()));
            }
        }
    }
    for x in 0..distinct.len() {
        for y in x + 1..distinct.len() {
            let (i, a) = &distinct[x];
            let (j, b) = &distinct[y];
            if ds.find(*i) == ds.find(*j) {
                continue;
            }
            let longest = a.len().max(b.len());
            let bound = 1.0 - a.len().abs_diff(b.len()) as f64 / longest as f64;
            if bound < threshold {
                continue;
            }
            if levenshtein::similarity_chars(a, b) >= threshold {
                ds.union(*i, *j);
            }
        }
    }
    ds.groups()
}

fn build_cluster(members: Vec<CitedRef>) -> RefCluster {
    let canonical = elect_canonical(&members).clone();
    RefCluster {
        cluster_id: String::new(),
        ncr: compute_ncr(&members),
        rpy: canonical.rpy,
        canonical,
        members,
    }
}

/// The member whose raw string is most frequent; ties go to the smallest raw
/// string.
///
/// # Panics
/// If `members` is empty.
pub fn elect_canonical(members: &[CitedRef]) -> &CitedRef {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for m in members {
        *counts.entry(&m.raw).or_default() += 1;
    }
    let best = counts
        .into_iter()
        .max_by(|(ra, ca), (rb, cb)| ca.cmp(cb).then_with(|| rb.cmp(ra)))
        .map(|(raw, _)| raw)
        .expect("cluster has members");
    members.iter().find(|m| m.raw == best).expect("elected raw is a member")
}

/// Distinct citing records among `members`.
pub fn compute_ncr(members: &[CitedRef]) -> usize {
    members
        .iter()
        .map(|m| m.citing_record_id.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Writes one row per member: cluster_id, raw, citing_record_id, canonical.
pub fn write_audit_csv(clusters: &[RefCluster], out: impl Write) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["cluster_id", "raw", "citing_record_id", "canonical"])?;
    for c in clusters {
        let canonical_at = c.members.iter().position(|m| *m == c.canonical);
        for (i, m) in c.members.iter().enumerate() {
            let flag = if Some(i) == canonical_at { "1" } else { "0" };
            w.write_record([c.cluster_id.as_str(), m.raw.as_str(), m.citing_record_id.as_str(), flag])?;
        }
    }
    w.flush()?;
    Ok(())
}
