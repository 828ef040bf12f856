//! Per-metric training with a frozen-encoder warm-up, and the evaluation
//! metrics (classification blocks and score-level errors).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvss::{CvssVector, Metric, Score};
use crate::model::{
    derive_seed, predict_from_logits, EncoderClassifier, GradAccumulator, ModelCheckpoint,
    ModelConfig, ModelError, Preset, Trainable, TrainingMeta,
};
use crate::numerics::{Adam, AdamConfig, Optimizer, Sgd};
use crate::nvd::VulnRecord;
use crate::par::{self, Execution};
use crate::pipeline::{ClassifierSet, MetricClassifier};
use crate::textprep::{tokenize_to, TextError, TokenSequence, Vocabulary, DEFAULT_SEQ_LEN};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("sample {index}: label {label} out of range for {classes} classes")]
    LabelProjection { index: usize, label: usize, classes: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("no samples to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub metric: Metric,
    pub preset: Preset,
    pub epochs_frozen: usize,
    pub epochs_joint: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub seq_len: usize,
    pub manifest_digest: String,
}

impl TrainConfig {
    /// 3 frozen + 3 joint epochs, batch 32, Adam at 1e-3 (`desk`) or 2e-5
    /// (`paper-small`).
    pub fn new(metric: Metric, preset: Preset, seed: u64) -> TrainConfig {
        TrainConfig {
            metric,
            preset,
            epochs_frozen: 3,
            epochs_joint: 3,
            batch_size: 32,
            learning_rate: match preset {
                Preset::Desk => 1e-3,
                Preset::PaperSmall => 2e-5,
            },
            optimizer: OptimizerKind::Adam,
            seed,
            seq_len: DEFAULT_SEQ_LEN,
            manifest_digest: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs_joint == 0 {
            return Err(TrainError::InvalidConfig("epochs_joint must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_frozen + self.epochs_joint
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            seq_len: self.seq_len,
            ..ModelConfig::for_metric(self.preset, vocab_size, self.metric, self.seed)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Frozen,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    pub accuracy: f64,
    pub encoder_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub config: TrainConfig,
    pub num_samples: usize,
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    /// A config line followed by one line per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&serde_json::json!({
            "config": self.config,
            "num_samples": self.num_samples,
        }))
        .expect("log serializes");
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("log serializes"));
            out.push('\n');
        }
        out
    }
}

/// A tokenized description with its class label.
#[derive(Debug, Clone)]
pub struct Example {
    pub seq: TokenSequence,
    pub label: usize,
}

pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub log: TrainingLog,
}

/// Tokenizes `records` and projects each vector onto `metric`.
pub fn examples_for(
    records: &[VulnRecord],
    metric: Metric,
    vocab: &Vocabulary,
    seq_len: usize,
    exec: Execution,
) -> Result<Vec<Example>, TrainError> {
    par::map(exec, records, |_, r| {
        Ok(Example {
            seq: tokenize_to(&r.description, vocab, seq_len)?,
            label: metric.class_of(&r.vector),
        })
    })
    .into_iter()
    .collect()
}

pub fn train_metric(
    config: &TrainConfig,
    records: &[VulnRecord],
    vocab: &Vocabulary,
    exec: Execution,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let examples = examples_for(records, config.metric, vocab, config.seq_len, exec)?;
    train_examples(config, &examples, vocab, exec)
}

/// Epochs `1..=epochs_frozen` update only the classification head; later
/// epochs update everything. Each epoch visits the examples in an order
/// seeded by `(seed, epoch)`.
pub fn train_examples(
    config: &TrainConfig,
    examples: &[Example],
    vocab: &Vocabulary,
    exec: Execution,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let classes = config.metric.num_classes();
    if let Some((index, ex)) = examples.iter().enumerate().find(|(_, e)| e.label >= classes) {
        return Err(TrainError::LabelProjection {
            index,
            label: ex.label,
            classes,
        });
    }
    let mut model = EncoderClassifier::new(config.model_config(vocab.len()))?;
    let mut optimizer: Box<dyn Optimizer> = match config.optimizer {
        OptimizerKind::Adam => Box::new(Adam::new(AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        })),
        OptimizerKind::Sgd => Box::new(Sgd {
            lr: config.learning_rate,
        }),
    };
    let encoder_mask = model.encoder_mask();
    let thawed = vec![false; encoder_mask.len()];
    let mut epochs = Vec::with_capacity(config.total_epochs());

    for epoch in 1..=config.total_epochs() {
        let phase = if epoch <= config.epochs_frozen {
            Phase::Frozen
        } else {
            Phase::Joint
        };
        let (trainable, frozen) = match phase {
            Phase::Frozen => (Trainable::HeadOnly, &encoder_mask),
            Phase::Joint => (Trainable::All, &thawed),
        };
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, epoch as u64])));

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let grads = par::map(exec, batch, |_, &idx| {
                let drop_seed = derive_seed(&[config.seed, epoch as u64, idx as u64]);
                model.sample_gradients(&examples[idx].seq, examples[idx].label, trainable, Some(drop_seed))
            });
            let mut acc = GradAccumulator::new(&model);
            for (g, &idx) in grads.into_iter().zip(batch) {
                let g = g?;
                loss_sum += g.loss;
                if predict_from_logits(&g.logits).class == examples[idx].label {
                    correct += 1;
                }
                acc.add(&g);
            }
            optimizer.step(model.params_mut(), &acc.mean(), frozen);
        }
        let n = examples.len() as f64;
        let entry = EpochLog {
            epoch,
            phase,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
            encoder_digest: model.encoder_digest(),
        };
        log::info!(
            "{} epoch {epoch} ({:?}): loss {:.4} acc {:.4}",
            config.metric.key(),
            phase,
            entry.loss,
            entry.accuracy
        );
        epochs.push(entry);
    }

    let checkpoint = ModelCheckpoint {
        metric: config.metric,
        model,
        vocab_digest: vocab.digest().to_string(),
        training: TrainingMeta {
            epochs_frozen: config.epochs_frozen,
            epochs_joint: config.epochs_joint,
            seed: config.seed,
            batch_size: config.batch_size,
            optimizer: serde_json::to_value(config.optimizer)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            learning_rate: config.learning_rate,
            manifest_digest: config.manifest_digest.clone(),
        },
    };
    Ok(TrainOutcome {
        checkpoint,
        log: TrainingLog {
            config: config.clone(),
            num_samples: examples.len(),
            epochs,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub num_samples: u64,
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassStats>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class P/R/F1 (0 when a denominator is 0) and their
/// support-weighted averages.
pub fn classification_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    num_classes: usize,
) -> Result<ClassificationMetrics, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&label) = y_true.iter().chain(y_pred).find(|&&l| l >= num_classes) {
        return Err(EvalError::LabelOutOfRange {
            label,
            classes: num_classes,
        });
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let total = y_true.len() as u64;
    let correct: u64 = (0..num_classes).map(|c| confusion[c][c]).sum();
    let mut per_class = Vec::with_capacity(num_classes);
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for c in 0..num_classes {
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let w = support as f64 / total as f64;
        wp += w * precision;
        wr += w * recall;
        wf += w * f1;
        per_class.push(ClassStats {
            support,
            precision,
            recall,
            f1,
        });
    }
    Ok(ClassificationMetrics {
        num_samples: total,
        accuracy: ratio(correct, total),
        weighted_precision: wp,
        weighted_recall: wr,
        weighted_f1: wf,
        per_class,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMetrics {
    pub num_samples: u64,
    pub mse: f64,
    pub mae: f64,
    pub exact_match_fraction: f64,
    pub mae_lt1_fraction: f64,
}

/// Error metrics between two score lists, computed on integer tenths so the
/// sums are exact.
pub fn score_metrics(predicted: &[Score], truth: &[Score]) -> Result<ScoreMetrics, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut abs, mut sq, mut exact, mut lt1) = (0u64, 0u64, 0u64, 0u64);
    for (p, t) in predicted.iter().zip(truth) {
        let d = (p.tenths() as i64 - t.tenths() as i64).unsigned_abs();
        abs += d;
        sq += d * d;
        exact += (d == 0) as u64;
        lt1 += (d < 10) as u64;
    }
    let n = truth.len() as u64;
    Ok(ScoreMetrics {
        num_samples: n,
        mse: sq as f64 / (100 * n) as f64,
        mae: abs as f64 / (10 * n) as f64,
        exact_match_fraction: ratio(exact, n),
        mae_lt1_fraction: ratio(lt1, n),
    })
}

/// Scores each predicted vector and compares it with the true scores.
pub fn score_error_metrics(predicted: &[CvssVector], truth: &[Score]) -> Result<ScoreMetrics, EvalError> {
    let scores: Vec<Score> = predicted.iter().map(CvssVector::score).collect();
    score_metrics(&scores, truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub classes: Vec<String>,
    /// Accuracy of always predicting the most frequent true class.
    pub majority_baseline: f64,
    pub classification: ClassificationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_records: usize,
    pub vocab_digest: String,
    pub manifest_digest: String,
    pub metrics: Vec<MetricReport>,
    pub score: ScoreMetrics,
}

impl EvalReport {
    pub fn metric(&self, m: Metric) -> Option<&MetricReport> {
        self.metrics.iter().find(|r| r.metric == m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("records: {}\n", self.num_records);
        out.push_str("metric  accuracy  precision  recall    f1        majority\n");
        for r in &self.metrics {
            let c = &r.classification;
            out.push_str(&format!(
                "{:<6}  {:<8.4}  {:<9.4}  {:<8.4}  {:<8.4}  {:.4}\n",
                r.metric.key(),
                c.accuracy,
                c.weighted_precision,
                c.weighted_recall,
                c.weighted_f1,
                r.majority_baseline
            ));
        }
        let s = &self.score;
        out.push_str(&format!(
            "score: mse {:.4}  mae {:.4}  exact {:.4}  |diff|<1 {:.4}\n",
            s.mse, s.mae, s.exact_match_fraction, s.mae_lt1_fraction
        ));
        out
    }
}

pub fn majority_baseline(labels: &[usize], num_classes: usize) -> f64 {
    let mut counts = vec![0u64; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    ratio(counts.into_iter().max().unwrap_or(0), labels.len() as u64)
}

/// Runs all eight classifiers over `records` and assembles both metric
/// blocks. True scores are recomputed from the true vectors.
pub fn evaluate<C: MetricClassifier>(
    set: &ClassifierSet<C>,
    vocab: &Vocabulary,
    records: &[VulnRecord],
    manifest_digest: &str,
    exec: Execution,
) -> Result<EvalReport, crate::pipeline::PipelineError> {
    set.check_vocab(vocab)?;
    if records.is_empty() {
        return Err(EvalError::Empty.into());
    }
    let predicted: Vec<CvssVector> = par::map(exec, records, |_, r| {
        crate::pipeline::predict_vector(&r.description, set, vocab).map(|(v, _)| v)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut metrics = Vec::with_capacity(8);
    for m in Metric::ALL {
        let y_true: Vec<usize> = records.iter().map(|r| m.class_of(&r.vector)).collect();
        let y_pred: Vec<usize> = predicted.iter().map(|v| m.class_of(v)).collect();
        metrics.push(MetricReport {
            metric: m,
            classes: m.class_codes().iter().map(char::to_string).collect(),
            majority_baseline: majority_baseline(&y_true, m.num_classes()),
            classification: classification_metrics(&y_true, &y_pred, m.num_classes())?,
        });
    }
    let truth: Vec<Score> = records.iter().map(VulnRecord::recomputed_score).collect();
    Ok(EvalReport {
        num_records: records.len(),
        vocab_digest: vocab.digest().to_string(),
        manifest_digest: manifest_digest.to_string(),
        metrics,
        score: score_error_metrics(&predicted, &truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Score {
        Score::from_f64(x).unwrap()
    }

    #[test]
    fn classification_hand_example() {
        let m = classification_metrics(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.weighted_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.confusion, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(m.weighted_recall, m.accuracy);
    }

    #[test]
    fn perfect_and_absent_classes() {
        let m = classification_metrics(&[0, 2, 2, 0], &[0, 2, 2, 0], 3).unwrap();
        assert_eq!(
            (m.accuracy, m.weighted_precision, m.weighted_recall, m.weighted_f1),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(m.per_class[1].support, 0);
        assert_eq!(m.per_class[1].f1, 0.0);
    }

    #[test]
    fn classification_errors() {
        assert_eq!(
            classification_metrics(&[0], &[0, 1], 2),
            Err(EvalError::LengthMismatch { left: 1, right: 2 })
        );
        assert_eq!(
            classification_metrics(&[0], &[2], 2),
            Err(EvalError::LabelOutOfRange { label: 2, classes: 2 })
        );
        assert_eq!(classification_metrics(&[], &[], 2), Err(EvalError::Empty));
    }

    #[test]
    fn score_fixture() {
        let m = score_metrics(&[s(9.8)], &[s(8.8)]).unwrap();
        assert_eq!((m.mse, m.mae, m.exact_match_fraction, m.mae_lt1_fraction), (1.0, 1.0, 0.0, 0.0));

        let truth = [s(5.0), s(5.0), s(5.0), s(5.0)];
        let pred = [s(5.0), s(5.5), s(6.0), s(7.0)];
        let m = score_metrics(&pred, &truth).unwrap();
        assert!((m.mae - 0.875).abs() < 1e-12);
        assert!((m.mse - 1.3125).abs() < 1e-12);
        assert_eq!((m.exact_match_fraction, m.mae_lt1_fraction), (0.25, 0.5));

        let m = score_metrics(&truth, &truth).unwrap();
        assert_eq!((m.mse, m.mae, m.exact_match_fraction, m.mae_lt1_fraction), (0.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn vectors_are_scored() {
        let v: CvssVector = "AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H".parse().unwrap();
        let m = score_error_metrics(&[v], &[s(9.8)]).unwrap();
        assert_eq!(m.exact_match_fraction, 1.0);
        assert!(score_error_metrics(&[v], &[]).is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::new(Metric::AttackVector, Preset::Desk, 7);
        assert_eq!((c.epochs_frozen, c.epochs_joint, c.batch_size), (3, 3, 32));
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(TrainConfig::new(Metric::Scope, Preset::PaperSmall, 7).learning_rate, 2e-5);
        let mut bad = c.clone();
        bad.epochs_joint = 0;
        assert!(matches!(bad.validate(), Err(TrainError::InvalidConfig(_))));
    }

    #[test]
    fn majority() {
        assert_eq!(majority_baseline(&[0, 1, 1, 2], 3), 0.5);
    }
}
