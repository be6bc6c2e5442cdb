use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn rpysco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpysco"))
        .args(args)
        .env_remove("RPYSCO_PROVIDER_URL")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn paper_run(out: &Path) -> Output {
    let f = fixtures();
    rpysco(&[
        "run",
        s(&f.join("corpus.txt")),
        "--markers",
        s(&f.join("markers.csv")),
        "--profile",
        "paper",
        "--provider-table",
        s(&f.join("metadata.csv")),
        "--out",
        s(out),
    ])
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_matches_golden_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(paper_run(&a).status.success());
    assert!(paper_run(&b).status.success());
    assert_eq!(dir_contents(&a), dir_contents(&b));

    let golden = fixtures().join("golden");
    for name in [
        "clusters.csv",
        "spectrogram.csv",
        "topN_10.csv",
        "topN_5.csv",
        "entities_top5_country.csv",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(golden.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn explicit_flags_override_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let f = fixtures();
    let out = rpysco(&[
        "run",
        s(&f.join("corpus.txt")),
        "--markers",
        s(&f.join("markers.csv")),
        "--profile",
        "paper",
        "--min-ncr",
        "15",
        "--top-n",
        "3",
        "--out",
        s(tmp.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["min_ncr"], 15);
    assert_eq!(manifest["max_rpy"], 1980);
    assert_eq!(manifest["top_n"], serde_json::json!([3]));
    assert!(tmp.path().join("topN_3.csv").exists());
    assert!(!tmp.path().join("metadata.csv").exists());
}

#[test]
fn invalid_threshold_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let f = fixtures();
    let out = rpysco(&[
        "run",
        s(&f.join("corpus.txt")),
        "--markers",
        s(&f.join("markers.csv")),
        "--threshold",
        "1.5",
        "--out",
        s(&out_dir),
    ]);
    assert!(!out.status.success());
    assert!(!out_dir.exists());
}

#[test]
fn empty_marker_file_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let markers = tmp.path().join("markers.csv");
    fs::write(&markers, "doi,first_author,rpy,volume,page\n").unwrap();
    let out = rpysco(&[
        "run",
        s(&fixtures().join("corpus.txt")),
        "--markers",
        s(&markers),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn warnings_keep_exit_code_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus.txt");
    fs::write(
        &corpus,
        "PT J\nPY 2000\nthis line is not tagged\nCR MANABE S, 1967, J ATMOS SCI, V24, P241\nUT X1\nER\nEF\n",
    )
    .unwrap();
    let out = rpysco(&[
        "run",
        s(&corpus),
        "--markers",
        s(&fixtures().join("markers.csv")),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(tmp.path().join("o/run_manifest.json")).unwrap();
    assert!(manifest.contains("warnings"));
}

#[test]
fn ingest_empty_file_writes_empty_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("empty.txt");
    fs::write(&input, "").unwrap();
    let archive = tmp.path().join("corpus.jsonl");
    let report = tmp.path().join("report.json");
    let out = rpysco(&["ingest", s(&input), "--out", s(&archive), "--report", s(&report)]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&archive).unwrap(), "");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(report["records"], 0);
    assert_eq!(report["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn ingest_archive_feeds_run() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = tmp.path().join("corpus.jsonl");
    assert!(
        rpysco(&["ingest", s(&fixtures().join("corpus.txt")), "--out", s(&archive)])
            .status
            .success()
    );
    let f = fixtures();
    let out_dir = tmp.path().join("o");
    let out = rpysco(&[
        "run",
        s(&archive),
        "--markers",
        s(&f.join("markers.csv")),
        "--profile",
        "paper",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(out_dir.join("clusters.csv")).unwrap(),
        fs::read(f.join("golden/clusters.csv")).unwrap()
    );
}

#[test]
fn plot_three_rows_draws_two_series() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("spectrogram.csv");
    fs::write(&csv, "rpy,ncr,median_dev\n1967,3,0\n1968,9,6\n1969,2,-1\n").unwrap();
    let out = rpysco(&["plot", s(&csv)]);
    assert!(out.status.success());
    let svg = fs::read_to_string(tmp.path().join("spectrogram.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn plot_empty_spectrogram_has_axes_only() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("spectrogram.csv");
    fs::write(&csv, "rpy,ncr,median_dev\n").unwrap();
    let svg_path = tmp.path().join("out.svg");
    let out = rpysco(&["plot", s(&csv), "--out", s(&svg_path)]);
    assert!(out.status.success());
    let svg = fs::read_to_string(svg_path).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 0);
    assert!(svg.contains("<line"));
}

#[test]
fn plot_fixture_matches_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let svg_path = tmp.path().join("out.svg");
    let golden = fixtures().join("golden");
    let out = rpysco(&[
        "plot",
        s(&golden.join("spectrogram.csv")),
        "--title",
        "Fixture spectrogram",
        "--out",
        s(&svg_path),
    ]);
    assert!(out.status.success());
    assert_eq!(
        fs::read(svg_path).unwrap(),
        fs::read(golden.join("spectrogram.svg")).unwrap()
    );
}

#[test]
fn plot_malformed_csv_reports_row() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("spectrogram.csv");
    fs::write(&csv, "rpy,ncr,median_dev\n1967,3,0\n1968,lots,6\n").unwrap();
    let out = rpysco(&["plot", s(&csv)]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 3"), "{stderr}");
}

#[test]
fn entities_recomputes_tables_from_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    assert!(paper_run(&run_dir).status.success());
    let again = tmp.path().join("again");
    let out = rpysco(&[
        "entities",
        s(&run_dir),
        "--provider-table",
        s(&fixtures().join("metadata.csv")),
        "--out",
        s(&again),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for entry in fs::read_dir(&again).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(again.join(&name)).unwrap(),
            fs::read(run_dir.join(&name)).unwrap(),
            "{name:?}"
        );
    }
    assert_eq!(fs::read_dir(&again).unwrap().count(), 9);
}

#[test]
fn entities_without_provider_needs_first_author_only() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    assert!(paper_run(&run_dir).status.success());
    let out = rpysco(&["entities", s(&run_dir), "--author-mode", "enriched"]);
    assert!(!out.status.success());
}
