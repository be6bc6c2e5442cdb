//! CSV tables written by a run, and the readers used to load them back.
//!
//! All tables are UTF-8, comma-delimited, RFC 4180 quoted, with LF line
//! endings.

use crate::entities::EntityTable;
use crate::model::{RefCluster, SpectrogramRow};
use crate::refparse::parse_cited_ref;
use crate::spectroscopy::{RankedCluster, TopNSelection};
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn opt_year(y: Option<i32>) -> String {
    y.map(|y| y.to_string()).unwrap_or_default()
}

pub fn write_spectrogram(rows: &[SpectrogramRow], out: impl Write) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(["rpy", "ncr", "median_dev"])?;
    for r in rows {
        w.write_record([r.rpy.to_string(), r.ncr.to_string(), r.median_dev.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_clusters(clusters: &[RefCluster], out: impl Write) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(["cluster_id", "rpy", "ncr", "canonical", "doi"])?;
    for c in clusters {
        w.write_record([
            c.cluster_id.as_str(),
            &opt_year(c.rpy),
            &c.ncr.to_string(),
            &c.canonical.raw,
            c.doi().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_top_n(sel: &TopNSelection, out: impl Write) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(["rpy", "rank", "cluster_id", "ncr", "canonical"])?;
    for (year, ranked) in &sel.rows {
        for r in ranked {
            w.write_record([
                year.to_string(),
                r.rank.to_string(),
                r.cluster.cluster_id.clone(),
                r.cluster.ncr.to_string(),
                r.cluster.canonical.raw.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_entities(table: &EntityTable, out: impl Write) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(["name", "kind", "ncr"])?;
    for row in &table.aggregation.rows {
        w.write_record([row.name.as_str(), row.kind.as_str(), &row.ncr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn top_n_file_name(n: usize) -> String {
    format!("topN_{n}.csv")
}

pub fn entity_file_name(table: &EntityTable) -> String {
    format!("entities_{}_{}.csv", table.view, table.kind)
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
}

fn row_err(row: u64, message: impl Into<String>) -> TableError {
    TableError::Row {
        row,
        message: message.into(),
    }
}

fn records(input: impl Read, expected: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, TableError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(row_err(
            1,
            format!(
                "expected header {}, found {}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            row_err(row, e.to_string())
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected.len() {
            return Err(row_err(
                row,
                format!("expected {} fields, found {}", expected.len(), rec.len()),
            ));
        }
        out.push((row, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(row: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, TableError> {
    rec[i]
        .trim()
        .parse()
        .map_err(|_| row_err(row, format!("bad {name} {:?}", &rec[i])))
}

pub fn read_spectrogram(input: impl Read) -> Result<Vec<SpectrogramRow>, TableError> {
    records(input, &["rpy", "ncr", "median_dev"])?
        .into_iter()
        .map(|(row, rec)| {
            let median_dev: f64 = field(row, &rec, 2, "median_dev")?;
            if !median_dev.is_finite() {
                return Err(row_err(row, "median_dev is not finite"));
            }
            Ok(SpectrogramRow {
                rpy: field(row, &rec, 0, "rpy")?,
                ncr: field(row, &rec, 1, "ncr")?,
                median_dev,
            })
        })
        .collect()
}

/// Rebuilds clusters from `clusters.csv`. Each cluster holds only its
/// canonical reference, re-parsed, carrying the listed DOI.
pub fn read_clusters(input: impl Read) -> Result<Vec<RefCluster>, TableError> {
    records(input, &["cluster_id", "rpy", "ncr", "canonical", "doi"])?
        .into_iter()
        .map(|(row, rec)| {
            let rpy = if rec[1].trim().is_empty() {
                None
            } else {
                Some(field(row, &rec, 1, "rpy")?)
            };
            let mut canonical = parse_cited_ref(&rec[3], "");
            let doi = rec[4].trim();
            canonical.doi = (!doi.is_empty()).then(|| doi.to_owned()).or(canonical.doi);
            Ok(RefCluster {
                cluster_id: rec[0].to_owned(),
                members: vec![canonical.clone()],
                canonical,
                ncr: field(row, &rec, 2, "ncr")?,
                rpy,
            })
        })
        .collect()
}

/// Rebuilds a top-N selection from its table, resolving ids against `clusters`.
pub fn read_top_n(input: impl Read, n: usize, clusters: &[RefCluster]) -> Result<TopNSelection, TableError> {
    let by_id: HashMap<&str, &RefCluster> = clusters.iter().map(|c| (c.cluster_id.as_str(), c)).collect();
    let mut rows: BTreeMap<i32, Vec<RankedCluster>> = BTreeMap::new();
    for (row, rec) in records(input, &["rpy", "rank", "cluster_id", "ncr", "canonical"])? {
        let cluster = by_id
            .get(&rec[2])
            .ok_or_else(|| row_err(row, format!("unknown cluster {:?}", &rec[2])))?;
        rows.entry(field(row, &rec, 0, "rpy")?)
            .or_default()
            .push(RankedCluster {
                rank: field(row, &rec, 1, "rank")?,
                cluster: (*cluster).clone(),
            });
    }
    Ok(TopNSelection { n, rows })
}
