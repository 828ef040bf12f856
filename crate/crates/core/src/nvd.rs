//! NVD JSON 1.1 feed loading, normalization into [`VulnRecord`]s, the JSONL
//! dataset format and seeded train/test splits.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cvss::{parse_vector_versioned, CvssVector, CvssVersion, Score};
use crate::digest::{sha256_hex, write_atomic};

pub const REJECT_MARKER: &str = "** REJECT **";
pub const DEFAULT_YEARS: [u16; 3] = [2018, 2019, 2020];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {source_name}: {reason}")]
    UnreadableSource { source_name: String, reason: String },
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("no records to split")]
    EmptyCorpus,
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("manifest references unknown record {0}")]
    UnknownId(String),
    #[error("dataset line {line}: {reason}")]
    MalformedDataset { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One CVE item as found in a feed, before filtering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawEntry {
    pub cve_id: String,
    /// First description with language tag `en`.
    pub description: Option<String>,
    pub vector: Option<String>,
    pub base_score: Option<f64>,
}

fn unreadable(source: &str, reason: impl ToString) -> IngestError {
    IngestError::UnreadableSource {
        source_name: source.to_string(),
        reason: reason.to_string(),
    }
}

fn violation(path: String, reason: &str) -> IngestError {
    IngestError::SchemaViolation {
        path,
        reason: reason.to_string(),
    }
}

#[cfg(feature = "http")]
fn fetch(url: &str) -> Result<Vec<u8>, IngestError> {
    let mut last = String::new();
    for attempt in 0..3 {
        if attempt > 0 {
            std::thread::sleep(std::time::Duration::from_secs(2 * attempt));
        }
        match ureq::get(url).call() {
            Ok(mut resp) => {
                return resp
                    .body_mut()
                    .with_config()
                    .limit(1 << 30)
                    .read_to_vec()
                    .map_err(|e| unreadable(url, e));
            }
            Err(e) => {
                log::warn!("fetch {url} failed (attempt {}): {e}", attempt + 1);
                last = e.to_string();
            }
        }
    }
    Err(unreadable(url, last))
}

#[cfg(not(feature = "http"))]
fn fetch(url: &str) -> Result<Vec<u8>, IngestError> {
    Err(unreadable(url, "built without the `http` feature"))
}

/// Reads a feed from a local path or an `http(s)://` URL. Gzip input is
/// detected by its magic bytes.
pub fn load_feed(source: &str) -> Result<Vec<RawEntry>, IngestError> {
    let bytes = if source.starts_with("https://") || source.starts_with("http://") {
        fetch(source)?
    } else {
        fs::read(source).map_err(|e| unreadable(source, e))?
    };
    parse_feed(&bytes, source)
}

/// Parses feed bytes (plain or gzipped JSON).
pub fn parse_feed(bytes: &[u8], source: &str) -> Result<Vec<RawEntry>, IngestError> {
    let text = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| unreadable(source, format!("gzip: {e}")))?;
        out
    } else {
        bytes.to_vec()
    };
    let json: Value = serde_json::from_slice(&text)
        .map_err(|e| violation("$".into(), &format!("invalid JSON: {e}")))?;
    let items = json
        .get("CVE_Items")
        .ok_or_else(|| violation("$.CVE_Items".into(), "missing"))?
        .as_array()
        .ok_or_else(|| violation("$.CVE_Items".into(), "not an array"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| parse_item(item, &format!("$.CVE_Items[{i}]")))
        .collect()
}

fn parse_item(item: &Value, path: &str) -> Result<RawEntry, IngestError> {
    let id_path = format!("{path}.cve.CVE_data_meta.ID");
    let cve_id = item
        .pointer("/cve/CVE_data_meta/ID")
        .ok_or_else(|| violation(id_path.clone(), "missing"))?
        .as_str()
        .ok_or_else(|| violation(id_path, "not a string"))?
        .to_string();

    let desc_path = format!("{path}.cve.description.description_data");
    let descs = match item.pointer("/cve/description/description_data") {
        None => &[][..],
        Some(Value::Array(a)) => a.as_slice(),
        Some(_) => return Err(violation(desc_path, "not an array")),
    };
    let mut description = None;
    for (j, d) in descs.iter().enumerate() {
        if d.get("lang").and_then(Value::as_str) == Some("en") {
            let value = d
                .get("value")
                .and_then(Value::as_str)
                .ok_or_else(|| violation(format!("{desc_path}[{j}].value"), "missing string"))?;
            description = Some(value.to_string());
            break;
        }
    }

    let (mut vector, mut base_score) = (None, None);
    if let Some(cvss) = item.pointer("/impact/baseMetricV3/cvssV3") {
        let vpath = format!("{path}.impact.baseMetricV3.cvssV3");
        vector = Some(
            cvss.get("vectorString")
                .and_then(Value::as_str)
                .ok_or_else(|| violation(format!("{vpath}.vectorString"), "missing string"))?
                .to_string(),
        );
        base_score = match cvss.get("baseScore") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_f64()
                    .ok_or_else(|| violation(format!("{vpath}.baseScore"), "not a number"))?,
            ),
        };
    }
    Ok(RawEntry {
        cve_id,
        description,
        vector,
        base_score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    /// The feed's score differs from the locally computed one.
    ScoreMismatch,
    /// The feed carried no score; the computed one is stored.
    ScoreMissing,
}

/// One normalized CVE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnRecord {
    pub cve_id: String,
    pub description: String,
    pub vector: CvssVector,
    /// Score as published in the feed (or computed, if absent).
    pub score: Score,
    pub year: u16,
    pub version: String,
    #[serde(default)]
    pub flags: Vec<RecordFlag>,
}

impl VulnRecord {
    pub fn recomputed_score(&self) -> Score {
        self.vector.score()
    }

    pub fn is_consistent(&self) -> bool {
        self.score == self.recomputed_score() || self.flags.contains(&RecordFlag::ScoreMismatch)
    }
}

/// How many raw entries each filter removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DropCounts {
    pub no_english: usize,
    pub rejected: usize,
    pub no_v3_vector: usize,
    pub unparseable_vector: usize,
    pub outside_years: usize,
    pub duplicate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub records: Vec<VulnRecord>,
    pub dropped: DropCounts,
}

fn cve_year(id: &str) -> Option<u16> {
    let mut parts = id.split('-');
    match (parts.next(), parts.next(), parts.next()) {
        (Some("CVE"), Some(y), Some(n)) if y.len() == 4 && !n.is_empty() => y.parse().ok(),
        _ => None,
    }
}

/// Filters raw entries into records sorted by CVE id. The first occurrence
/// of a duplicated id wins. `years = None` keeps every year.
pub fn normalize(raw: &[RawEntry], years: Option<&[u16]>) -> Normalized {
    let mut dropped = DropCounts::default();
    let mut by_id: BTreeMap<String, VulnRecord> = BTreeMap::new();
    for entry in raw {
        let Some(desc) = entry.description.as_deref().map(str::trim).filter(|d| !d.is_empty())
        else {
            dropped.no_english += 1;
            continue;
        };
        if desc.starts_with(REJECT_MARKER) {
            dropped.rejected += 1;
            continue;
        }
        let Some(vs) = &entry.vector else {
            dropped.no_v3_vector += 1;
            continue;
        };
        let Ok(parsed) = parse_vector_versioned(vs) else {
            dropped.unparseable_vector += 1;
            continue;
        };
        let Some(year) = cve_year(&entry.cve_id) else {
            dropped.unparseable_vector += 1;
            continue;
        };
        if years.is_some_and(|ys| !ys.contains(&year)) {
            dropped.outside_years += 1;
            continue;
        }
        if by_id.contains_key(&entry.cve_id) {
            dropped.duplicate += 1;
            continue;
        }
        let computed = parsed.vector.score();
        let mut flags = Vec::new();
        let score = match entry.base_score.map(Score::from_f64) {
            Some(Ok(s)) => {
                if s != computed {
                    flags.push(RecordFlag::ScoreMismatch);
                }
                s
            }
            Some(Err(_)) => {
                flags.push(RecordFlag::ScoreMismatch);
                computed
            }
            None => {
                flags.push(RecordFlag::ScoreMissing);
                computed
            }
        };
        let version = match parsed.version {
            Some(CvssVersion::V3_0) => "3.0",
            Some(CvssVersion::V3_1) => "3.1",
            None => "unknown",
        };
        by_id.insert(
            entry.cve_id.clone(),
            VulnRecord {
                cve_id: entry.cve_id.clone(),
                description: desc.to_string(),
                vector: parsed.vector,
                score,
                year,
                version: version.to_string(),
                flags,
            },
        );
    }
    Normalized {
        records: by_id.into_values().collect(),
        dropped,
    }
}

/// One JSON object per line, newline-terminated.
pub fn to_jsonl(records: &[VulnRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<VulnRecord>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IngestError::MalformedDataset {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_dataset(path: &Path, records: &[VulnRecord]) -> Result<(), IngestError> {
    write_atomic(path, to_jsonl(records).as_bytes())?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<VulnRecord>, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| unreadable(&path.display().to_string(), e))?;
    from_jsonl(&text)
}

pub fn dataset_digest(records: &[VulnRecord]) -> String {
    sha256_hex(to_jsonl(records).as_bytes())
}

/// Persisted description of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fraction: f64,
    pub dataset_digest: String,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SplitManifest, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| unreadable(&path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| violation("$".into(), &e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<VulnRecord>,
    pub test: Vec<VulnRecord>,
    pub manifest: SplitManifest,
}

impl DatasetSplit {
    pub fn seed(&self) -> u64 {
        self.manifest.seed
    }

    pub fn manifest_digest(&self) -> String {
        self.manifest.digest()
    }
}

/// Seeded shuffle of the id-sorted records; `floor(n * fraction)` go to
/// train and the rest to test.
pub fn split(records: &[VulnRecord], seed: u64, fraction: f64) -> Result<DatasetSplit, IngestError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(IngestError::InvalidFraction(fraction));
    }
    if records.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    let mut sorted: Vec<&VulnRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let n_train = (records.len() as f64 * fraction).floor() as usize;
    let ids = |rs: &[&VulnRecord]| rs.iter().map(|r| r.cve_id.clone()).collect::<Vec<_>>();
    let manifest = SplitManifest {
        seed,
        fraction,
        dataset_digest: dataset_digest(records),
        train_ids: ids(&sorted[..n_train]),
        test_ids: ids(&sorted[n_train..]),
    };
    Ok(DatasetSplit {
        train: sorted[..n_train].iter().map(|r| (*r).clone()).collect(),
        test: sorted[n_train..].iter().map(|r| (*r).clone()).collect(),
        manifest,
    })
}

/// Rebuilds a split from a saved manifest.
pub fn apply_manifest(records: &[VulnRecord], manifest: &SplitManifest) -> Result<DatasetSplit, IngestError> {
    let by_id: BTreeMap<&str, &VulnRecord> = records.iter().map(|r| (r.cve_id.as_str(), r)).collect();
    let pick = |ids: &[String]| -> Result<Vec<VulnRecord>, IngestError> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| IngestError::UnknownId(id.clone()))
            })
            .collect()
    };
    Ok(DatasetSplit {
        train: pick(&manifest.train_ids)?,
        test: pick(&manifest.test_ids)?,
        manifest: manifest.clone(),
    })
}
