//! Reference publication year spectroscopy over co-citation sets (RPYS-CO).
//!
//! The pipeline reads the citing records of one or more marker papers from
//! export files, parses their cited references, merges variant spellings of
//! the same reference, filters the result, and reports:
//!
//! - a spectrogram: citing-record counts (NCR) per reference publication
//!   year, with the deviation from the five-year running median;
//! - the most cited references of each year (top-N);
//! - the authors, institutions, and countries behind those references.
//!
//! ```
//! use rpysco::cluster::{cluster_refs, ClusterConfig};
//! use rpysco::refparse::parse_cited_ref;
//!
//! let refs = vec![
//!     parse_cited_ref("SELLERS WD, 1969, J APPL METEOROL, V8, P392", "A"),
//!     parse_cited_ref("SELLERS W D, 1969, J APPL METEOROL, V8, P392", "B"),
//! ];
//! let clusters = cluster_refs(refs, &ClusterConfig::default());
//! assert_eq!(clusters.len(), 1);
//! assert_eq!(clusters[0].ncr, 2);
//! ```

pub mod cluster;
pub mod entities;
pub mod ingest;
pub mod model;
pub mod output;
pub mod plot;
pub mod refparse;
pub mod run;
pub mod spectroscopy;

pub use model::{CitedRef, CitingRecord, EntityCount, EntityKind, MarkerSpec, RefCluster, SpectrogramRow};
