//! Stage counts on a full export of the climate-change citing corpus.
//!
//! The export is not redistributable, so this only runs when
//! `RPYSCO_PAPER_CORPUS` names a directory holding the export files and a
//! `markers.csv` with the seven marker papers:
//!
//! ```text
//! RPYSCO_PAPER_CORPUS=/data/climate cargo test -p rpysco --test paper_corpus -- --ignored
//! ```

use rpysco::run::{execute_run, RunConfig};
use std::path::PathBuf;

#[test]
#[ignore = "needs RPYSCO_PAPER_CORPUS"]
fn paper_corpus_stage_counts() {
    let dir = PathBuf::from(std::env::var("RPYSCO_PAPER_CORPUS").expect("set RPYSCO_PAPER_CORPUS"));
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().is_some_and(|n| n != "markers.csv") && p.is_file())
        .collect();
    inputs.sort();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(inputs, dir.join("markers.csv"), out.path().to_owned());
    cfg.apply_paper_profile();
    let counts = execute_run(&cfg).unwrap().manifest.counts;
    assert_eq!(counts.cocited_records, 4_340);
    assert_eq!(counts.total_refs, 233_586);
    assert_eq!(counts.distinct_ref_strings, 115_377);
    assert_eq!(counts.clusters_final, 1_424);
}
