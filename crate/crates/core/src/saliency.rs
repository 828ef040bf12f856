//! Gradient×Input token saliency and per-class token associations.
//!
//! For the predicted class `c`, the importance of position `i` is
//! `‖∂f_c/∂X_i ⊙ X_i‖₂`, where `f_c` is the pre-softmax logit and `X_i` the
//! input embedding of the token (token plus position embedding, before the
//! embedding layer norm).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cvss::Metric;
use crate::model::{predict_from_logits, EncoderClassifier, ModelCheckpoint, ModelError, Trainable};
use crate::numerics::{Tape, Tensor};
use crate::par::{self, Execution};
use crate::textprep::{tokenize_to, TextError, TokenSequence, Vocabulary};

/// Logits and the gradient of one logit with respect to the input
/// embeddings of the attention window.
pub struct InputGradient {
    pub logits: Vec<f64>,
    pub class: usize,
    /// `[window, hidden]`.
    pub inputs: Tensor,
    /// Same shape as `inputs`.
    pub gradient: Vec<f64>,
}

/// A differentiable classifier over token sequences.
pub trait SaliencyModel: Sync {
    fn seq_len(&self) -> usize;

    /// Gradient of logit `class` (the argmax when `None`).
    fn input_gradient(&self, seq: &TokenSequence, class: Option<usize>) -> Result<InputGradient, ModelError>;
}

impl SaliencyModel for EncoderClassifier {
    fn seq_len(&self) -> usize {
        self.config().seq_len
    }

    fn input_gradient(&self, seq: &TokenSequence, class: Option<usize>) -> Result<InputGradient, ModelError> {
        let inputs = self.input_embeddings(seq)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Trainable::Nothing);
        let x = tape.leaf(inputs.clone(), true);
        let enc = self.encode(&mut tape, &bound, x, seq, None)?;
        let logits = tape.value(enc.logits).data().to_vec();
        let class = class.unwrap_or_else(|| predict_from_logits(&logits).class);
        let f_c = tape.element(enc.logits, class)?;
        let grads = tape.backward(f_c)?;
        let gradient = grads
            .get(x)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs.len()]);
        Ok(InputGradient {
            logits,
            class,
            inputs,
            gradient,
        })
    }
}

impl SaliencyModel for ModelCheckpoint {
    fn seq_len(&self) -> usize {
        self.model.config().seq_len
    }

    fn input_gradient(&self, seq: &TokenSequence, class: Option<usize>) -> Result<InputGradient, ModelError> {
        self.model.input_gradient(seq, class)
    }
}

/// Bag-of-embeddings linear classifier: `f = (Σ_i m_i X_i) W + b` with
/// `X_i` the embedding row of token `i` and `m` the attention mask.
#[derive(Debug, Clone)]
pub struct LinearSurrogate {
    pub embeddings: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
    pub seq_len: usize,
}

impl SaliencyModel for LinearSurrogate {
    fn seq_len(&self) -> usize {
        self.seq_len
    }

    fn input_gradient(&self, seq: &TokenSequence, class: Option<usize>) -> Result<InputGradient, ModelError> {
        let h = self.embeddings.cols();
        let n = seq.mask.iter().rposition(|&m| m == 1).map_or(1, |p| p + 1);
        let mut data = Vec::with_capacity(n * h);
        for &id in &seq.ids[..n] {
            if id as usize >= self.embeddings.rows() {
                return Err(ModelError::VocabMismatch(format!("token id {id}")));
            }
            data.extend_from_slice(self.embeddings.row(id as usize));
        }
        let inputs = Tensor::new(vec![n, h], data)?;
        let mask = Tensor::new(vec![1, n], seq.mask[..n].iter().map(|&m| m as f64).collect())?;

        let mut tape = Tape::new();
        let x = tape.leaf(inputs.clone(), true);
        let m = tape.leaf(mask, false);
        let w = tape.param(&self.weights, false);
        let b = tape.param(&self.bias, false);
        let pooled = tape.matmul(m, x)?;
        let y = tape.matmul(pooled, w)?;
        let logits_var = tape.add_row(y, b)?;
        let logits = tape.value(logits_var).data().to_vec();
        let class = class.unwrap_or_else(|| predict_from_logits(&logits).class);
        let f_c = tape.element(logits_var, class)?;
        let gradient = tape.backward(f_c)?.get(x).map(<[f64]>::to_vec).unwrap_or_default();
        Ok(InputGradient {
            logits,
            class,
            inputs,
            gradient,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenImportance {
    pub position: usize,
    pub token: String,
    /// Merged word this piece belongs to.
    pub word: String,
    pub char_span: Option<(usize, usize)>,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedToken {
    pub rank: usize,
    pub position: usize,
    pub token: String,
    pub word: String,
    /// Positions of every piece of `word`.
    pub word_positions: (usize, usize),
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub cve_id: Option<String>,
    pub metric: Option<Metric>,
    pub predicted_class: usize,
    pub predicted_label: Option<String>,
    pub confidence: f64,
    pub logit: f64,
    pub description: String,
    /// Real non-special positions, in order.
    pub tokens: Vec<TokenImportance>,
    pub top_k: Vec<RankedToken>,
}

/// Importance of every real, non-special position for `class` (the
/// prediction when `None`).
pub fn gradient_x_input<M: SaliencyModel + ?Sized>(
    model: &M,
    seq: &TokenSequence,
    class: Option<usize>,
) -> Result<(InputGradient, Vec<TokenImportance>), ModelError> {
    let g = model.input_gradient(seq, class)?;
    let h = g.inputs.cols();
    let tokens = seq
        .content_positions()
        .filter(|&p| seq.mask[p] == 1)
        .map(|p| {
            let x = g.inputs.row(p);
            let d = &g.gradient[p * h..(p + 1) * h];
            let importance = x.iter().zip(d).map(|(a, b)| (a * b) * (a * b)).sum::<f64>().sqrt();
            TokenImportance {
                position: p,
                token: seq.surfaces[p].clone(),
                word: seq.word_text(p),
                char_span: seq.char_spans[p],
                importance,
            }
        })
        .collect();
    Ok((g, tokens))
}

/// The `k` most important positions (ties to the earlier position), each
/// labelled with its merged word.
pub fn top_k_tokens(tokens: &[TokenImportance], seq: &TokenSequence, k: usize) -> Vec<RankedToken> {
    let mut order: Vec<&TokenImportance> = tokens.iter().collect();
    order.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then(a.position.cmp(&b.position))
    });
    order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, t)| {
            let r = seq.word_range(t.position);
            RankedToken {
                rank: rank + 1,
                position: t.position,
                token: t.token.clone(),
                word: t.word.clone(),
                word_positions: (r.start, r.end),
                importance: t.importance,
            }
        })
        .collect()
}

/// Full report for one description.
pub fn explain<M: SaliencyModel + ?Sized>(
    model: &M,
    metric: Option<Metric>,
    description: &str,
    vocab: &Vocabulary,
    k: usize,
) -> Result<SaliencyReport, SaliencyError> {
    let seq = tokenize_to(description, vocab, model.seq_len())?;
    explain_sequence(model, metric, description, &seq, k)
}

pub fn explain_sequence<M: SaliencyModel + ?Sized>(
    model: &M,
    metric: Option<Metric>,
    description: &str,
    seq: &TokenSequence,
    k: usize,
) -> Result<SaliencyReport, SaliencyError> {
    if k == 0 {
        return Err(SaliencyError::InvalidK);
    }
    let (g, tokens) = gradient_x_input(model, seq, None)?;
    let pred = predict_from_logits(&g.logits);
    let top_k = top_k_tokens(&tokens, seq, k);
    Ok(SaliencyReport {
        cve_id: None,
        metric,
        predicted_class: g.class,
        predicted_label: metric.map(|m| m.class_names()[g.class].to_string()),
        confidence: pred.confidence,
        logit: g.logits[g.class],
        description: description.to_string(),
        tokens,
        top_k,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum SaliencyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub threshold: f64,
    pub k: usize,
    pub top_unigrams: usize,
    pub top_bigrams: usize,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            threshold: 0.9,
            k: 5,
            top_unigrams: 10,
            top_bigrams: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counted {
    pub text: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassStatus {
    Ok,
    EmptyFilteredSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAssociations {
    pub class_index: usize,
    pub code: String,
    pub name: String,
    pub status: ClassStatus,
    pub filtered_records: u64,
    pub unigrams: Vec<Counted>,
    pub bigrams: Vec<Counted>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAssociationTable {
    pub metric: Metric,
    pub confidence_threshold: f64,
    pub k: usize,
    /// Bigrams are counted once per occurrence, not once per record.
    pub bigram_counting: String,
    pub manifest_digest: String,
    pub records_seen: u64,
    pub classes: Vec<ClassAssociations>,
}

impl ClassAssociationTable {
    pub fn class(&self, index: usize) -> &ClassAssociations {
        &self.classes[index]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} ({}), confidence > {}, top {} tokens per record\n",
            self.metric.long_name(),
            self.metric.key(),
            self.confidence_threshold,
            self.k
        );
        for c in &self.classes {
            out.push_str(&format!("\n{} ({}): {} records\n", c.name, c.code, c.filtered_records));
            if c.status == ClassStatus::EmptyFilteredSet {
                out.push_str("  no records above threshold\n");
                continue;
            }
            let list = |xs: &[Counted]| {
                xs.iter()
                    .map(|x| format!("'{}' ({})", x.text, x.count))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            out.push_str(&format!("  tokens:  {}\n", list(&c.unigrams)));
            out.push_str(&format!("  bigrams: {}\n", list(&c.bigrams)));
        }
        out
    }
}

/// Unigram and bigram entries contributed by one record's top-k list.
///
/// Every ranked position contributes its merged word. A bigram is a pair of
/// adjacent positions that are both ranked and belong to different words.
pub fn record_ngrams(top: &[RankedToken]) -> (Vec<String>, Vec<String>) {
    let unigrams = top.iter().map(|t| t.word.clone()).collect();
    let ranked: BTreeMap<usize, &RankedToken> = top.iter().map(|t| (t.position, t)).collect();
    let mut bigrams = Vec::new();
    for (&p, t) in &ranked {
        if let Some(next) = ranked.get(&(p + 1)) {
            if next.word_positions != t.word_positions {
                bigrams.push(format!("{} {}", t.word, next.word));
            }
        }
    }
    (unigrams, bigrams)
}

fn top_counts(counts: BTreeMap<String, u64>, n: usize) -> Vec<Counted> {
    let mut v: Vec<Counted> = counts
        .into_iter()
        .map(|(text, count)| Counted { text, count })
        .collect();
    v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.text.cmp(&b.text)));
    v.truncate(n);
    v
}

/// Keeps descriptions whose predicted-class confidence exceeds the
/// threshold, then counts top-k words and bigrams per predicted class.
pub fn aggregate_associations<M: SaliencyModel + ?Sized>(
    model: &M,
    metric: Metric,
    descriptions: &[&str],
    vocab: &Vocabulary,
    config: &AggregationConfig,
    manifest_digest: &str,
    exec: Execution,
) -> Result<ClassAssociationTable, SaliencyError> {
    if config.k == 0 {
        return Err(SaliencyError::InvalidK);
    }
    let per_record = par::map(exec, descriptions, |_, d| -> Result<_, SaliencyError> {
        let seq = tokenize_to(d, vocab, model.seq_len())?;
        let (g, tokens) = gradient_x_input(model, &seq, None)?;
        let pred = predict_from_logits(&g.logits);
        if pred.confidence <= config.threshold {
            return Ok(None);
        }
        let top = top_k_tokens(&tokens, &seq, config.k);
        Ok(Some((pred.class, record_ngrams(&top))))
    });

    let n_classes = metric.num_classes();
    let mut uni = vec![BTreeMap::<String, u64>::new(); n_classes];
    let mut bi = vec![BTreeMap::<String, u64>::new(); n_classes];
    let mut filtered = vec![0u64; n_classes];
    for r in per_record {
        let Some((class, (us, bs))) = r? else { continue };
        if class >= n_classes {
            return Err(ModelError::TargetOutOfRange {
                target: class,
                classes: n_classes,
            }
            .into());
        }
        filtered[class] += 1;
        for u in us {
            *uni[class].entry(u).or_default() += 1;
        }
        for b in bs {
            *bi[class].entry(b).or_default() += 1;
        }
    }
    let codes = metric.class_codes();
    let names = metric.class_names();
    let classes = (0..n_classes)
        .map(|c| ClassAssociations {
            class_index: c,
            code: codes[c].to_string(),
            name: names[c].to_string(),
            status: if filtered[c] == 0 {
                ClassStatus::EmptyFilteredSet
            } else {
                ClassStatus::Ok
            },
            filtered_records: filtered[c],
            unigrams: top_counts(std::mem::take(&mut uni[c]), config.top_unigrams),
            bigrams: top_counts(std::mem::take(&mut bi[c]), config.top_bigrams),
        })
        .collect();
    Ok(ClassAssociationTable {
        metric,
        confidence_threshold: config.threshold,
        k: config.k,
        bigram_counting: "each_occurrence".into(),
        manifest_digest: manifest_digest.to_string(),
        records_seen: descriptions.len() as u64,
        classes,
    })
}

struct WordMark {
    start: usize,
    end: usize,
    score: f64,
    top: bool,
}

/// One mark per word: span covers all pieces, score is the maximum piece
/// importance, and the word is "top" if any of its pieces is ranked.
fn word_marks(report: &SaliencyReport) -> Vec<WordMark> {
    let mut marks: Vec<WordMark> = Vec::new();
    let mut prev_pos = None;
    for t in &report.tokens {
        let Some((s, e)) = t.char_span else { continue };
        let top = report
            .top_k
            .iter()
            .any(|r| (r.word_positions.0..r.word_positions.1).contains(&t.position));
        let continues = t.token.starts_with("##") && prev_pos == Some(t.position.wrapping_sub(1));
        match marks.last_mut() {
            Some(m) if continues => {
                m.end = m.end.max(e);
                m.score = m.score.max(t.importance);
                m.top |= top;
            }
            _ => marks.push(WordMark {
                start: s,
                end: e,
                score: t.importance,
                top,
            }),
        }
        prev_pos = Some(t.position);
    }
    marks
}

/// Terminal rendering: the description with top-k words in bold and each
/// word's score in brackets, then the ranked list.
pub fn render_text(report: &SaliencyReport, ansi: bool) -> String {
    let text = &report.description;
    let mut out = String::new();
    let header = match (report.metric, &report.predicted_label) {
        (Some(m), Some(l)) => format!("{} ({}): {} ", m.long_name(), m.key(), l),
        _ => format!("class {} ", report.predicted_class),
    };
    out.push_str(&format!("{header}confidence {:.4}\n", report.confidence));
    let mut cursor = 0;
    for m in word_marks(report) {
        if m.start < cursor {
            continue;
        }
        out.push_str(&text[cursor..m.start]);
        let word = &text[m.start..m.end];
        if m.top {
            if ansi {
                out.push_str(&format!("\x1b[1m{word}\x1b[0m"));
            } else {
                out.push_str(&format!("**{word}**"));
            }
        } else {
            out.push_str(word);
        }
        out.push_str(&format!("[{:.3}]", m.score));
        cursor = m.end;
    }
    out.push_str(&text[cursor..]);
    out.push('\n');
    for r in &report.top_k {
        out.push_str(&format!("{:>2}. {:<20} {:.6}  (position {}, piece '{}')\n", r.rank, r.word, r.importance, r.position, r.token));
    }
    out
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Standalone HTML fragment: word background opacity follows the score,
/// top-k words are bold.
pub fn render_html(report: &SaliencyReport) -> String {
    let text = &report.description;
    let marks = word_marks(report);
    let max = marks.iter().map(|m| m.score).fold(0.0, f64::max);
    let mut body = String::new();
    let mut cursor = 0;
    for m in &marks {
        if m.start < cursor {
            continue;
        }
        body.push_str(&escape_html(&text[cursor..m.start]));
        let alpha = if max > 0.0 { m.score / max } else { 0.0 };
        let word = escape_html(&text[m.start..m.end]);
        let inner = if m.top { format!("<b>{word}</b>") } else { word };
        body.push_str(&format!(
            "<span title=\"{:.6}\" style=\"background: rgba(220, 50, 47, {:.3})\">{inner}</span>",
            m.score, alpha
        ));
        cursor = m.end;
    }
    body.push_str(&escape_html(&text[cursor..]));
    let label = report.predicted_label.clone().unwrap_or_else(|| report.predicted_class.to_string());
    let title = match report.metric {
        Some(m) => format!("{} ({})", m.long_name(), m.key()),
        None => "prediction".to_string(),
    };
    let mut items = String::new();
    for r in &report.top_k {
        items.push_str(&format!("<li>{} ({:.6})</li>", escape_html(&r.word), r.importance));
    }
    format!(
        "<div class=\"saliency\">\n<h3>{}: {} (confidence {:.4})</h3>\n<p>{body}</p>\n<ol>{items}</ol>\n</div>\n",
        escape_html(&title),
        escape_html(&label),
        report.confidence
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Preset};

    fn vocab() -> Vocabulary {
        Vocabulary::build(
            ["inserting a usb device may lead to an unexpected system termination xss catalina"],
            300,
        )
        .unwrap()
    }

    fn surrogate(v: &Vocabulary, h: usize, classes: usize) -> LinearSurrogate {
        let emb: Vec<f64> = (0..v.len() * h).map(|i| ((i * 37 % 101) as f64 - 50.0) / 40.0).collect();
        let w: Vec<f64> = (0..h * classes).map(|i| ((i * 13 % 17) as f64 - 8.0) / 5.0).collect();
        LinearSurrogate {
            embeddings: Tensor::new(vec![v.len(), h], emb).unwrap(),
            weights: Tensor::new(vec![h, classes], w).unwrap(),
            bias: Tensor::zeros(vec![classes]),
            seq_len: 16,
        }
    }

    #[test]
    fn linear_closed_form() {
        let v = vocab();
        let s = surrogate(&v, 6, 3);
        let seq = tokenize_to("Inserting a USB device", &v, 16).unwrap();
        let (g, toks) = gradient_x_input(&s, &seq, None).unwrap();
        assert_eq!(toks.len(), 4);
        for t in &toks {
            let x = s.embeddings.row(seq.ids[t.position] as usize);
            let expect: f64 = (0..6)
                .map(|j| (s.weights.get(j, g.class) * x[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((t.importance - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_head_gives_zero_importance() {
        let v = vocab();
        let mut s = surrogate(&v, 4, 2);
        s.weights = Tensor::zeros(vec![4, 2]);
        let seq = tokenize_to("usb device", &v, 16).unwrap();
        let (_, toks) = gradient_x_input(&s, &seq, None).unwrap();
        assert!(toks.iter().all(|t| t.importance == 0.0));

        let mut m = EncoderClassifier::new(ModelConfig {
            seq_len: 16,
            ..ModelConfig::preset(Preset::Desk, v.len(), 2, 1)
        })
        .unwrap();
        let n = m.params().len();
        for t in &mut m.params_mut()[n - 2..] {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let (_, toks) = gradient_x_input(&m, &seq, None).unwrap();
        assert!(toks.iter().all(|t| t.importance == 0.0));
    }

    fn imp(scores: &[f64]) -> (Vec<TokenImportance>, TokenSequence) {
        let v = vocab();
        let seq = tokenize_to("inserting a usb device may lead", &v, 16).unwrap();
        let toks = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| TokenImportance {
                position: i + 1,
                token: seq.surfaces[i + 1].clone(),
                word: seq.word_text(i + 1),
                char_span: seq.char_spans[i + 1],
                importance: s,
            })
            .collect();
        (toks, seq)
    }

    #[test]
    fn ranking_and_ties() {
        let (t, seq) = imp(&[5.0, 4.0, 3.0, 2.0, 1.0, 0.5]);
        let top = top_k_tokens(&t, &seq, 5);
        assert_eq!(top.iter().map(|r| r.position).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
        let (t, seq) = imp(&[5.0, 4.0, 3.0, 2.0, 1.0, 1.0]);
        assert_eq!(top_k_tokens(&t, &seq, 5)[4].position, 5);
        let (t, seq) = imp(&[1.0, 1.0, 1.0]);
        let top = top_k_tokens(&t, &seq, 5);
        assert_eq!(top.len(), 3);
        assert_eq!(top.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn ngrams_merge_pieces_and_skip_intra_word_pairs() {
        let v = Vocabulary::from_tokens(
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "x", "##ss", "in", "safari"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap();
        let seq = tokenize_to("xss in safari", &v, 16).unwrap();
        assert_eq!(&seq.surfaces[1..5], ["x", "##ss", "in", "safari"]);
        let (t, _) = {
            let toks: Vec<TokenImportance> = (1..5)
                .map(|p| TokenImportance {
                    position: p,
                    token: seq.surfaces[p].clone(),
                    word: seq.word_text(p),
                    char_span: seq.char_spans[p],
                    importance: 1.0 / p as f64,
                })
                .collect();
            (toks, ())
        };
        let top = top_k_tokens(&t, &seq, 3);
        let (u, b) = record_ngrams(&top);
        assert_eq!(u, ["xss", "xss", "in"]);
        assert_eq!(b, ["xss in"]);
    }

    #[test]
    fn aggregation_threshold_above_one_empties_every_class() {
        let v = vocab();
        let s = surrogate(&v, 4, 4);
        let table = aggregate_associations(
            &s,
            Metric::AttackVector,
            &["usb device", "system termination"],
            &v,
            &AggregationConfig {
                threshold: 1.01,
                ..Default::default()
            },
            "m",
            Execution::Sequential,
        )
        .unwrap();
        assert!(table.classes.iter().all(|c| c.status == ClassStatus::EmptyFilteredSet));
        assert_eq!(table.records_seen, 2);
    }

    #[test]
    fn renderers_mark_top_words() {
        let v = vocab();
        let s = surrogate(&v, 4, 4);
        let r = explain(&s, Some(Metric::AttackVector), "Inserting a USB <device>", &v, 2).unwrap();
        let txt = render_text(&r, false);
        assert_eq!(txt.matches("**").count(), 4);
        assert!(txt.contains("USB") || txt.contains("Inserting"));
        let html = render_html(&r);
        assert!(html.contains("&lt;"));
        assert_eq!(html.matches("<b>").count(), 2);
        assert!(!html.contains("<device>"));
    }
}
