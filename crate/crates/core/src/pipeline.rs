//! Eight-metric prediction: one tokenization fans out to a classifier per
//! base metric, the predicted values are concatenated into a vector, and the
//! vector is scored.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvss::{parse_vector, CvssVector, Metric, Rating, Score};
use crate::digest::{sha256_hex, write_atomic};
use crate::model::{ModelCheckpoint, ModelError, Prediction, Preset};
use crate::saliency::SaliencyReport;
use crate::textprep::{tokenize_to, TextError, TokenSequence, Vocabulary, DEFAULT_SEQ_LEN};
use crate::train::EvalError;

/// Fewer known content tokens than this marks a prediction low-information.
pub const LOW_INFORMATION_TOKENS: usize = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no checkpoint for metric {0}")]
    MissingCheckpoint(Metric),
    #[error("more than one checkpoint for metric {0}")]
    DuplicateCheckpoint(Metric),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("predicted vector {vector} scores {rederived}, result claims {claimed}")]
    Inconsistent {
        vector: String,
        claimed: Score,
        rederived: Score,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A per-metric classifier usable by the pipeline.
pub trait MetricClassifier: Sync {
    fn metric(&self) -> Metric;
    fn vocab_digest(&self) -> &str;
    fn seq_len(&self) -> usize;
    /// Classifies one description; `seq` is its tokenization.
    fn classify(&self, text: &str, seq: &TokenSequence) -> Result<Prediction, ModelError>;
}

impl MetricClassifier for ModelCheckpoint {
    fn metric(&self) -> Metric {
        self.metric
    }

    fn vocab_digest(&self) -> &str {
        &self.vocab_digest
    }

    fn seq_len(&self) -> usize {
        self.model.config().seq_len
    }

    fn classify(&self, _text: &str, seq: &TokenSequence) -> Result<Prediction, ModelError> {
        self.model.predict(seq)
    }
}

/// Exactly one classifier per metric, all sharing one vocabulary and
/// sequence length.
#[derive(Debug)]
pub struct ClassifierSet<C> {
    members: Vec<C>,
}

impl<C: MetricClassifier> ClassifierSet<C> {
    pub fn new(classifiers: Vec<C>) -> Result<ClassifierSet<C>, PipelineError> {
        let mut slots: Vec<Option<C>> = Metric::ALL.iter().map(|_| None).collect();
        for c in classifiers {
            let idx = Metric::ALL.iter().position(|&m| m == c.metric()).expect("known metric");
            if slots[idx].is_some() {
                return Err(PipelineError::DuplicateCheckpoint(c.metric()));
            }
            slots[idx] = Some(c);
        }
        let members = slots
            .into_iter()
            .zip(Metric::ALL)
            .map(|(s, m)| s.ok_or(PipelineError::MissingCheckpoint(m)))
            .collect::<Result<Vec<C>, _>>()?;
        let (digest, seq_len) = (members[0].vocab_digest(), members[0].seq_len());
        if let Some(odd) = members.iter().find(|c| c.vocab_digest() != digest) {
            return Err(PipelineError::VocabMismatch(format!(
                "{} uses vocabulary {}, {} uses {}",
                odd.metric(),
                odd.vocab_digest(),
                members[0].metric(),
                digest
            )));
        }
        if members.iter().any(|c| c.seq_len() != seq_len) {
            return Err(PipelineError::Config("classifiers disagree on sequence length".into()));
        }
        Ok(ClassifierSet { members })
    }

    pub fn get(&self, metric: Metric) -> &C {
        &self.members[Metric::ALL.iter().position(|&m| m == metric).expect("known metric")]
    }

    pub fn iter(&self) -> impl Iterator<Item = &C> {
        self.members.iter()
    }

    pub fn vocab_digest(&self) -> &str {
        self.members[0].vocab_digest()
    }

    pub fn seq_len(&self) -> usize {
        self.members[0].seq_len()
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), PipelineError> {
        if vocab.digest() != self.vocab_digest() {
            return Err(PipelineError::VocabMismatch(format!(
                "classifiers expect vocabulary {}, got {}",
                self.vocab_digest(),
                vocab.digest()
            )));
        }
        Ok(())
    }
}

pub fn checkpoint_path(dir: &Path, metric: Metric) -> PathBuf {
    dir.join(format!("{}.ckpt", metric.key()))
}

impl ClassifierSet<ModelCheckpoint> {
    /// Loads `<KEY>.ckpt` for every metric from `dir`.
    pub fn load_dir(dir: &Path) -> Result<ClassifierSet<ModelCheckpoint>, PipelineError> {
        let mut out = Vec::with_capacity(8);
        for m in Metric::ALL {
            let path = checkpoint_path(dir, m);
            if !path.exists() {
                return Err(PipelineError::MissingCheckpoint(m));
            }
            let ckpt = ModelCheckpoint::load(&path)?;
            if ckpt.metric != m {
                return Err(PipelineError::Config(format!(
                    "{} holds a {} checkpoint",
                    path.display(),
                    ckpt.metric
                )));
            }
            out.push(ckpt);
        }
        ClassifierSet::new(out)
    }
}

/// Predicted vector and per-metric predictions for one description.
pub fn predict_vector<C: MetricClassifier>(
    text: &str,
    set: &ClassifierSet<C>,
    vocab: &Vocabulary,
) -> Result<(CvssVector, Vec<Prediction>), PipelineError> {
    let seq = tokenize_to(text, vocab, set.seq_len())?;
    predict_sequence(text, &seq, set)
}

fn predict_sequence<C: MetricClassifier>(
    text: &str,
    seq: &TokenSequence,
    set: &ClassifierSet<C>,
) -> Result<(CvssVector, Vec<Prediction>), PipelineError> {
    let mut vector = CvssVector::all().next().expect("non-empty domain");
    let mut preds = Vec::with_capacity(8);
    for c in set.iter() {
        let p = c.classify(text, seq)?;
        if !c.metric().set_class(&mut vector, p.class) {
            return Err(ModelError::TargetOutOfRange {
                target: p.class,
                classes: c.metric().num_classes(),
            }
            .into());
        }
        preds.push(p);
    }
    Ok((vector, preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPrediction {
    pub metric: Metric,
    pub class_index: usize,
    pub code: String,
    pub name: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub cve_id: Option<String>,
    pub description_sha256: String,
    pub content_tokens: usize,
    pub truncated: bool,
    pub low_information: bool,
    pub predictions: Vec<MetricPrediction>,
    pub vector: String,
    pub score: Score,
    pub rating: Rating,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency: Option<Vec<SaliencyReport>>,
}

impl PredictionResult {
    /// Re-parses and re-scores `vector`.
    pub fn check_consistency(&self) -> Result<(), PipelineError> {
        let v = parse_vector(&self.vector).map_err(|e| PipelineError::Config(e.to_string()))?;
        let rederived = v.score();
        if rederived != self.score || Rating::from_score(rederived) != self.rating {
            return Err(PipelineError::Inconsistent {
                vector: self.vector.clone(),
                claimed: self.score,
                rederived,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}  {} ({})\n", self.vector, self.score, self.rating.as_str());
        for p in &self.predictions {
            out.push_str(&format!(
                "  {:<2} {:<12} {:.4}\n",
                p.metric.key(),
                p.name,
                p.confidence
            ));
        }
        if self.low_information {
            out.push_str("  warning: description carries little information\n");
        }
        for r in self.saliency.iter().flatten() {
            out.push('\n');
            out.push_str(&crate::saliency::render_text(r, false));
        }
        out
    }
}

/// Tokenizes once, runs all eight classifiers, scores the assembled vector
/// and checks the result against its own vector string.
pub fn predict_full<C: MetricClassifier>(
    text: &str,
    set: &ClassifierSet<C>,
    vocab: &Vocabulary,
) -> Result<PredictionResult, PipelineError> {
    set.check_vocab(vocab)?;
    let seq = tokenize_to(text, vocab, set.seq_len())?;
    let (vector, preds) = predict_sequence(text, &seq, set)?;
    let unk = vocab.specials().unk;
    let known = seq.content_positions().filter(|&p| seq.ids[p] != unk).count();
    let severity = crate::cvss::base_score(&vector);
    let result = PredictionResult {
        cve_id: None,
        description_sha256: sha256_hex(text.as_bytes()),
        content_tokens: seq.content_positions().len(),
        truncated: seq.truncated,
        low_information: known < LOW_INFORMATION_TOKENS,
        predictions: Metric::ALL
            .iter()
            .zip(&preds)
            .map(|(&m, p)| MetricPrediction {
                metric: m,
                class_index: p.class,
                code: m.class_codes()[p.class].to_string(),
                name: m.class_names()[p.class].to_string(),
                confidence: p.confidence,
            })
            .collect(),
        vector: crate::cvss::format_vector(&vector, true),
        score: severity.score,
        rating: severity.rating,
        saliency: None,
    };
    result.check_consistency()?;
    Ok(result)
}

/// Single configuration surface for the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub manifest: PathBuf,
    pub vocab: PathBuf,
    pub checkpoints_dir: PathBuf,
    pub reports_dir: PathBuf,
    pub preset: Preset,
    pub seed: u64,
    pub seq_len: usize,
    pub vocab_size: usize,
    pub confidence_threshold: f64,
    pub top_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: "data/dataset.jsonl".into(),
            manifest: "data/split.json".into(),
            vocab: "data/vocab.txt".into(),
            checkpoints_dir: "checkpoints".into(),
            reports_dir: "reports".into(),
            preset: Preset::Desk,
            seed: 7,
            seq_len: DEFAULT_SEQ_LEN,
            vocab_size: 8000,
            confidence_threshold: 0.9,
            top_k: 5,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; missing fields take their defaults. Relative
    /// paths resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = fs::read_to_string(path)?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            for p in [
                &mut cfg.dataset,
                &mut cfg.manifest,
                &mut cfg.vocab,
                &mut cfg.checkpoints_dir,
                &mut cfg.reports_dir,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }
}

/// Writes `bytes` atomically as `<dir>/<kind>-<hash16>.<ext>` and returns
/// the path.
pub fn write_report(dir: &Path, kind: &str, ext: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
    let hash = sha256_hex(bytes);
    let path = dir.join(format!("{kind}-{}.{ext}", &hash[..16]));
    write_atomic(&path, bytes)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed {
        metric: Metric,
        class: usize,
        digest: String,
    }

    impl MetricClassifier for Fixed {
        fn metric(&self) -> Metric {
            self.metric
        }
        fn vocab_digest(&self) -> &str {
            &self.digest
        }
        fn seq_len(&self) -> usize {
            16
        }
        fn classify(&self, _: &str, _: &TokenSequence) -> Result<Prediction, ModelError> {
            Ok(Prediction {
                class: self.class,
                confidence: 1.0,
            })
        }
    }

    fn fixed(vector: &str, digest: &str) -> Vec<Fixed> {
        let v: CvssVector = vector.parse().unwrap();
        Metric::ALL
            .iter()
            .map(|&m| Fixed {
                metric: m,
                class: m.class_of(&v),
                digest: digest.into(),
            })
            .collect()
    }

    fn vocab() -> Vocabulary {
        Vocabulary::build(["a remote attacker can execute code"], 300).unwrap()
    }

    #[test]
    fn oracle_vectors_score() {
        let v = vocab();
        let set = ClassifierSet::new(fixed("AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H", v.digest())).unwrap();
        let r = predict_full("a remote attacker can execute code", &set, &v).unwrap();
        assert_eq!(r.vector, "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H");
        assert_eq!((r.score.to_string().as_str(), r.rating), ("9.8", Rating::Critical));
        assert!(!r.low_information);

        let set = ClassifierSet::new(fixed("AV:L/AC:H/PR:H/UI:R/S:C/C:N/I:N/A:N", v.digest())).unwrap();
        let r = predict_full("", &set, &v).unwrap();
        assert_eq!((r.score, r.rating), (Score::ZERO, Rating::None));
        assert!(r.low_information);
        assert_eq!(r.content_tokens, 0);
    }

    #[test]
    fn set_validation() {
        let v = vocab();
        let mut cs = fixed("AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H", v.digest());
        cs.pop();
        assert!(matches!(
            ClassifierSet::new(cs),
            Err(PipelineError::MissingCheckpoint(Metric::Availability))
        ));
        let mut cs = fixed("AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H", v.digest());
        cs[3].digest = "other".into();
        assert!(matches!(ClassifierSet::new(cs), Err(PipelineError::VocabMismatch(_))));
        let set = ClassifierSet::new(fixed("AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H", "other")).unwrap();
        assert!(matches!(predict_full("x", &set, &v), Err(PipelineError::VocabMismatch(_))));
    }

    #[test]
    fn consistency_check_catches_tampering() {
        let v = vocab();
        let set = ClassifierSet::new(fixed("AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H", v.digest())).unwrap();
        let mut r = predict_full("code", &set, &v).unwrap();
        r.score = Score::from_tenths(97).unwrap();
        assert!(matches!(r.check_consistency(), Err(PipelineError::Inconsistent { .. })));
    }

    #[test]
    fn config_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        fs::write(&p, r#"{"seed": 11, "reports_dir": "out"}"#).unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.reports_dir, dir.path().join("out"));
        assert_eq!(c.top_k, 5);
        fs::write(&p, r#"{"sed": 11}"#).unwrap();
        assert!(matches!(PipelineConfig::load(&p), Err(PipelineError::Config(_))));
    }

    #[test]
    fn reports_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_report(dir.path(), "eval", "json", b"{}").unwrap();
        let b = write_report(dir.path(), "eval", "json", b"{}").unwrap();
        assert_eq!(a, b);
        assert!(a.file_name().unwrap().to_str().unwrap().starts_with("eval-44136fa355b3678a"));
    }
}
