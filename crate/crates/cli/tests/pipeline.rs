//! End-to-end runs of the `healthscope` binary on the bundled fixture and on
//! small purpose-built corpora.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn healthscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_healthscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Run a subcommand on the fixture config with extra `--set` overrides.
fn run_fixture(command: &str, out: &Path, sets: &[&str]) -> Output {
    let conf = fixture_dir().join("fixture.conf");
    let mut args = vec!["--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap()];
    for s in sets {
        args.push("--set");
        args.push(s);
    }
    args.push(command);
    healthscope(&args)
}

fn manifest(out: &Path) -> Value {
    serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

fn stage_status(m: &Value, name: &str) -> Option<(String, Option<String>)> {
    m["stages"].as_array().unwrap().iter().find(|s| s["name"] == name).map(|s| {
        (
            s["status"].as_str().unwrap().to_owned(),
            s["reason"].as_str().map(str::to_owned),
        )
    })
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn write_reviews(dir: &Path, rows: &[(String, i64)]) -> PathBuf {
    // every point falls inside fixture county 01001
    let lines: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(i, (text, ts))| {
            serde_json::json!({
                "review_id": format!("t{i}"),
                "business_id": format!("b{i}"),
                "text": text,
                "timestamp": ts,
                "latitude": 33.25,
                "longitude": -89.75,
            })
            .to_string()
        })
        .collect();
    let path = dir.join("reviews.jsonl");
    fs::write(&path, lines.join("\n")).unwrap();
    path
}

const MAY_2020: i64 = 1_589_000_000_000;

#[test]
fn full_run_has_expected_shape() {
    let tmp = TempDir::new().unwrap();
    let out = run_fixture("run-all", tmp.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(tmp.path());
    let names: Vec<&str> = m["stages"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("moran_")).count(), 3);
    assert_eq!(names.iter().filter(|n| n.starts_with("pls_")).count(), 5);
    assert_eq!(names.iter().filter(|n| **n == "validation").count(), 1);
    assert!(m["stages"].as_array().unwrap().iter().all(|s| s["status"] == "ok"));

    let table = fs::read_to_string(tmp.path().join("pls_PeakPandemic.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("variable,coefficient,p_value,std_err"));
    assert_eq!(lines.count(), 21);

    let summary: Value = serde_json::from_slice(&fs::read(tmp.path().join("ingest_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["duplicates_removed"], 4);
    assert_eq!(summary["missing_location"], 3);
    assert_eq!(summary["outside_counties"], 3);
    assert_eq!(summary["outside_periods"], 3);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert!(run_fixture("run-all", a.path(), &[]).status.success());
    assert!(run_fixture("run-all", b.path(), &[]).status.success());
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(bytes == &tb[name], "{name} differs between runs");
    }
}

#[test]
fn config_hash_tracks_semantic_fields_only() {
    let dirs: Vec<TempDir> = (0..3).map(|_| TempDir::new().unwrap()).collect();
    let hash = |m: Value| m["config_hash"].as_str().unwrap().to_owned();
    assert!(run_fixture("ingest", dirs[0].path(), &[]).status.success());
    assert!(run_fixture("ingest", dirs[1].path(), &[]).status.success());
    assert!(run_fixture("ingest", dirs[2].path(), &["n_perm=2000"]).status.success());
    let h: Vec<String> = dirs.iter().map(|d| hash(manifest(d.path()))).collect();
    assert_eq!(h[0], h[1], "output directory must not change the hash");
    assert_ne!(h[0], h[2]);
}

#[test]
fn missing_covariates_skip_pls_but_not_moran() {
    let tmp = TempDir::new().unwrap();
    let out = run_fixture("run-all", tmp.path(), &["covariates="]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(tmp.path());
    let (status, reason) = stage_status(&m, "pls_PrePandemic").unwrap();
    assert_eq!(status, "skipped");
    assert!(reason.unwrap().contains("covariates"));
    assert_eq!(stage_status(&m, "moran_PeakPandemic").unwrap().0, "ok");
    assert!(tmp.path().join("moran_PeakPandemic.json").exists());
    assert!(!tmp.path().join("pls_PrePandemic.csv").exists());
}

#[test]
fn unset_counties_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = run_fixture("run-all", tmp.path(), &["counties="]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("counties"));
}

#[test]
fn missing_counties_file_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let absent = tmp.path().join("nope.geojson");
    let set = format!("counties={}", absent.display());
    let out = run_fixture("run-all", tmp.path(), &[&set]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_and_bad_values_exit_one() {
    let tmp = TempDir::new().unwrap();
    for bad in ["colour=blue", "n_perm=10", "weights=hex", "period_peak=2019-06-01..2020-03-01"] {
        let out = run_fixture("ingest", tmp.path(), &[bad]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
    }
}

#[test]
fn unreachable_remote_backend_exits_two() {
    let tmp = TempDir::new().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("endpoint=http://127.0.0.1:{port}");
    let out = run_fixture("run-all", tmp.path(), &["backend=remote", &endpoint, "remote_timeout_secs=2"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(tmp.path());
    assert_eq!(stage_status(&m, "score").unwrap().0, "failed");
    assert_eq!(stage_status(&m, "analyze").unwrap().0, "skipped");
}

#[test]
fn excessive_min_support_is_an_empty_result() {
    let tmp = TempDir::new().unwrap();
    let out = run_fixture("run-all", tmp.path(), &["min_support=1000"]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(tmp.path());
    let (status, reason) = stage_status(&m, "score").unwrap();
    assert_eq!(status, "failed");
    assert!(reason.unwrap().contains("min_support"));
}

#[test]
fn ingest_keeps_only_ontology_matches() {
    let tmp = TempDir::new().unwrap();
    let rows: Vec<(String, i64)> = (0..100)
        .map(|i| {
            let text = if i % 5 < 2 {
                format!("Visit {i}: they had plenty of hand sanitizer")
            } else {
                format!("Visit {i}: friendly cashier and clean floors")
            };
            (text, MAY_2020 + i * 1000)
        })
        .collect();
    let reviews = write_reviews(tmp.path(), &rows);
    let out_dir = tmp.path().join("out");
    let set = format!("reviews={}", reviews.display());
    let out = run_fixture("ingest", &out_dir, &[&set]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&fs::read(out_dir.join("ingest_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ontology_matched"], 40);
    assert_eq!(summary["ontology_dropped"], 60);
    assert_eq!(summary["kept"], 40);
    let filtered = fs::read_to_string(out_dir.join("filtered.jsonl")).unwrap();
    assert_eq!(filtered.lines().count(), 40);
}

#[test]
fn reviews_outside_every_period_keep_nothing() {
    let tmp = TempDir::new().unwrap();
    // 2017 and late 2021 both fall outside the study window
    let rows: Vec<(String, i64)> = (0..30)
        .map(|i| ("no toilet paper anywhere".to_string(), if i % 2 == 0 { 1_490_000_000_000 } else { 1_640_000_000_000 }))
        .collect();
    let reviews = write_reviews(tmp.path(), &rows);
    let out_dir = tmp.path().join("out");
    let set = format!("reviews={}", reviews.display());
    let out = run_fixture("ingest", &out_dir, &[&set]);
    assert!(out.status.success());
    let summary: Value = serde_json::from_slice(&fs::read(out_dir.join("ingest_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["kept"], 0);
    assert_eq!(summary["outside_periods"], 30);
}

#[test]
fn staged_commands_match_run_all() {
    let (staged, whole) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for cmd in ["ingest", "score", "analyze"] {
        let out = run_fixture(cmd, staged.path(), &[]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(run_fixture("run-all", whole.path(), &[]).status.success());
    let (a, b) = (read_tree(staged.path()), read_tree(whole.path()));
    for (name, bytes) in &a {
        if name != "manifest.json" {
            assert!(bytes == &b[name], "{name} differs");
        }
    }
    let out = run_fixture("validate", staged.path(), &[]);
    assert!(out.status.success());
    assert_eq!(
        fs::read(staged.path().join("validation.json")).unwrap(),
        b["validation.json"]
    );
}

#[test]
fn lexicon_labels_agree_with_fixture_gold() {
    let tmp = TempDir::new().unwrap();
    assert!(run_fixture("run-all", tmp.path(), &[]).status.success());
    let gold: BTreeMap<String, String> = csv::Reader::from_path(fixture_dir().join("labels.csv"))
        .unwrap()
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_owned(), r[1].to_owned())
        })
        .collect();
    let mut rdr = csv::Reader::from_path(tmp.path().join("labeled_reviews.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let id = headers.iter().position(|h| h == "review_id").unwrap();
    let label = headers.iter().position(|h| h == "label").unwrap();
    let mut n = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        assert_eq!(gold[&r[id]], &r[label], "review {}", &r[id]);
        n += 1;
    }
    assert!(n >= 2000);
}

#[test]
fn file_backend_reproduces_lexicon_scores() {
    let (lex, file) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert!(run_fixture("run-all", lex.path(), &[]).status.success());
    assert!(run_fixture("run-all", file.path(), &["backend=file"]).status.success());
    assert_eq!(
        fs::read(lex.path().join("scores.csv")).unwrap(),
        fs::read(file.path().join("scores.csv")).unwrap()
    );
}
