use std::path::PathBuf;

use cvsslens::nvd::{self, IngestError, RecordFlag};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn mini_feed_normalizes() {
    let raw = nvd::load_feed(&fixture("nvd_mini.json")).unwrap();
    assert_eq!(raw.len(), 5);
    let n = nvd::normalize(&raw, None);
    let ids: Vec<&str> = n.records.iter().map(|r| r.cve_id.as_str()).collect();
    assert_eq!(ids, ["CVE-2018-4878", "CVE-2019-9964", "CVE-2020-9804"]);
    assert_eq!(n.dropped.rejected, 1);
    assert_eq!(n.dropped.no_v3_vector, 1);
    let flash = &n.records[0];
    assert_eq!(flash.score.to_string(), "9.8");
    assert!(flash.flags.is_empty());
    assert_eq!(n.records[1].version, "3.0");
    assert_eq!(n.records[2].score.to_string(), "4.6");
}

#[test]
fn synthetic_feed_is_byte_stable() {
    let path = fixture("nvd_synthetic_2018_2020.json.gz");
    let a = nvd::to_jsonl(&nvd::normalize(&nvd::load_feed(&path).unwrap(), Some(&nvd::DEFAULT_YEARS)).records);
    let b = nvd::to_jsonl(&nvd::normalize(&nvd::load_feed(&path).unwrap(), Some(&nvd::DEFAULT_YEARS)).records);
    assert_eq!(a, b);
    let records = nvd::from_jsonl(&a).unwrap();
    assert_eq!(records.len(), 2000);
    assert!(records.iter().all(|r| r.is_consistent()));
    let flagged = records.iter().filter(|r| r.flags.contains(&RecordFlag::ScoreMismatch)).count();
    assert!(flagged > 0);
    assert_eq!(nvd::to_jsonl(&records), a);
}

#[test]
fn split_sizes_follow_floor_and_ceil() {
    let records = nvd::normalize(&nvd::load_feed(&fixture("nvd_synthetic_2018_2020.json.gz")).unwrap(), None).records;
    for n in [1usize, 2, 7, 1999, 2000] {
        let s = nvd::split(&records[..n], 11, 0.5).unwrap();
        assert_eq!(s.train.len(), n / 2);
        assert_eq!(s.test.len(), n - n / 2);
        let again = nvd::apply_manifest(&records[..n], &s.manifest).unwrap();
        assert_eq!(again.train, s.train);
        assert_eq!(again.test, s.test);
    }
    assert!(matches!(nvd::split(&records, 1, 1.5), Err(IngestError::InvalidFraction(_))));
}

#[test]
fn malformed_feeds_report_paths() {
    let err = nvd::parse_feed(br#"{"CVE_Items":[{"cve":{}}]}"#, "inline").unwrap_err();
    match err {
        IngestError::SchemaViolation { path, .. } => assert!(path.starts_with("$.CVE_Items[0]"), "{path}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        nvd::load_feed("/nonexistent/feed.json"),
        Err(IngestError::UnreadableSource { .. })
    ));
}
