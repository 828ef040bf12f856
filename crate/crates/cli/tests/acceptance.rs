//! Acceptance suite. Runs every criterion in turn and prints one PASS/FAIL
//! line each; exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cvsslens::gradcheck::{check_gradients, GradCheckConfig};
use cvsslens::model::{derive_seed, EncoderClassifier, ModelConfig, Preset};
use cvsslens::numerics::Tensor;
use cvsslens::nvd::{self, RecordFlag, VulnRecord};
use cvsslens::saliency::{aggregate_associations, gradient_x_input, AggregationConfig, LinearSurrogate};
use cvsslens::synth::{marker, planted_corpus};
use cvsslens::textprep::{tokenize_to, TokenSequence, Vocabulary};
use cvsslens::train::{self, classification_metrics, score_metrics, Phase, TrainConfig};
use cvsslens::{base_score, parse_vector, Execution, Metric, Score};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// Uniform draw in `lo..hi` from a counter-based stream.
fn draw(seed: u64, i: u64, lo: usize, hi: usize) -> usize {
    lo + (derive_seed(&[seed, i]) % (hi - lo) as u64) as usize
}

fn unit(seed: u64, i: u64) -> f64 {
    (derive_seed(&[seed, i]) >> 11) as f64 / (1u64 << 53) as f64
}

fn raw_sequence(body: &[u32], len: usize) -> TokenSequence {
    let mut ids = vec![2u32];
    ids.extend_from_slice(body);
    ids.push(3);
    let real = ids.len();
    ids.resize(len, 0);
    let mut mask = vec![1u8; real];
    mask.resize(len, 0);
    TokenSequence {
        surfaces: ids.iter().map(|i| i.to_string()).collect(),
        char_spans: vec![None; len],
        ids,
        mask,
        truncated: false,
    }
}

fn c1_scorer_oracle() -> Outcome {
    let start = Instant::now();
    let text = std::fs::read_to_string(fixtures().join("cvss31_oracle.csv")).map_err(|e| e.to_string())?;
    let mut n = 0;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let v = parse_vector(&format!("CVSS:3.1/{}", cols[0])).map_err(|e| e.to_string())?;
        let s = base_score(&v);
        ensure(s.score.to_string() == cols[1] && s.rating.as_str() == cols[2], || {
            format!("{}: got {} {}, oracle {} {}", cols[0], s.score, s.rating.as_str(), cols[1], cols[2])
        })?;
        n += 1;
    }
    ensure(n == 2592, || format!("oracle has {n} rows"))?;
    let ex = base_score(&parse_vector("CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H").map_err(|e| e.to_string())?);
    ensure(ex.score.to_string() == "9.8" && ex.rating.as_str() == "Critical", || format!("example gave {ex}"))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("{n} vectors equal, example 9.8 Critical, {:.0?}", start.elapsed()))
}

fn c2_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for trial in 0..5u64 {
        let seed = 1000 + trial;
        let classes = draw(seed, 0, 2, 5);
        let mut cfg = ModelConfig::preset(Preset::Desk, 60, classes, seed);
        cfg.seq_len = 16;
        ensure(cfg.num_layers == 2 && cfg.hidden_dim == 64, || "desk preset changed".into())?;
        let model = EncoderClassifier::new(cfg).map_err(|e| e.to_string())?;
        let real = draw(seed, 1, 1, 5);
        let body: Vec<u32> = (0..real).map(|i| draw(seed, 10 + i as u64, 5, 60) as u32).collect();
        let seq = raw_sequence(&body, 16);
        let target = draw(seed, 2, 0, classes);
        let r = check_gradients(&model, &seq, target, &GradCheckConfig::default(), Execution::Parallel)
            .map_err(|e| e.to_string())?;
        ensure(r.max_rel_error < 1e-4, || format!("trial {trial}: {r:?}"))?;
        worst = worst.max(r.max_rel_error);
        entries += r.entries;
    }
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "5 configs, {entries} entries, max rel error {worst:.2e}, {:.1?}",
        start.elapsed()
    ))
}

fn c3_linear_saliency() -> Outcome {
    let vocab = Vocabulary::build(
        ["stack buffer overflow in the image parser lets remote attackers run code"],
        300,
    )
    .map_err(|e| e.to_string())?;
    let (rows, h, c) = (vocab.len(), 8, 3);
    let mut worst: f64 = 0.0;
    for trial in 0..20u64 {
        let emb: Vec<f64> = (0..rows * h).map(|i| unit(trial, i as u64) * 4.0 - 2.0).collect();
        let w: Vec<f64> = (0..h * c).map(|i| unit(trial + 100, i as u64) * 4.0 - 2.0).collect();
        let model = LinearSurrogate {
            embeddings: Tensor::matrix(rows, h, emb).map_err(|e| e.to_string())?,
            weights: Tensor::matrix(h, c, w.clone()).map_err(|e| e.to_string())?,
            bias: Tensor::vector(vec![0.0; c]),
            seq_len: 32,
        };
        let seq = tokenize_to("remote attackers run code via a stack buffer overflow", &vocab, 32)
            .map_err(|e| e.to_string())?;
        let class = trial as usize % c;
        let (_, tokens) = gradient_x_input(&model, &seq, Some(class)).map_err(|e| e.to_string())?;
        for t in &tokens {
            let x = model.embeddings.row(seq.ids[t.position] as usize);
            let expected = (0..h).map(|j| (w[j * c + class] * x[j]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max((t.importance - expected).abs());
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("20 surrogates, max deviation {worst:.1e}"))
}

fn c4_padding() -> Outcome {
    let len = 32;
    let mut cfg = ModelConfig::preset(Preset::Desk, 80, 4, 77);
    cfg.seq_len = len;
    let model = EncoderClassifier::new(cfg).map_err(|e| e.to_string())?;
    for trial in 0..100u64 {
        let real = draw(trial, 0, 1, len - 3);
        let body: Vec<u32> = (0..real).map(|i| draw(trial, 1 + i as u64, 5, 80) as u32).collect();
        let clean = raw_sequence(&body, len);
        let mut noisy = clean.clone();
        for p in real + 2..len {
            noisy.ids[p] = draw(trial, 1000 + p as u64, 0, 80) as u32;
        }
        let a = model.logits(&clean).map_err(|e| e.to_string())?;
        let b = model.logits(&noisy).map_err(|e| e.to_string())?;
        let same = a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same, || format!("trial {trial}: {a:?} vs {b:?}"))?;
    }
    Ok("100 randomized pad tails, logits bit-identical".into())
}

fn train_all(
    train_set: &[VulnRecord],
    vocab: &Vocabulary,
    seq_len: usize,
    seed: u64,
) -> Result<Vec<cvsslens::model::ModelCheckpoint>, String> {
    Metric::ALL
        .iter()
        .map(|&m| {
            let mut cfg = TrainConfig::new(m, Preset::Desk, seed);
            cfg.seq_len = seq_len;
            train::train_metric(&cfg, train_set, vocab, Execution::Parallel)
                .map(|o| o.checkpoint)
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn c5_planted() -> Outcome {
    let start = Instant::now();
    let records = planted_corpus(2000, 5);
    let split = nvd::split(&records, 5, 0.5).map_err(|e| e.to_string())?;
    let vocab = Vocabulary::build(split.train.iter().map(|r| r.description.as_str()), 8000).map_err(|e| e.to_string())?;
    let ckpts = train_all(&split.train, &vocab, 32, 5)?;
    let mut worst_acc: f64 = 1.0;
    let descriptions: Vec<&str> = split.test.iter().map(|r| r.description.as_str()).collect();
    for ckpt in &ckpts {
        let m = ckpt.metric;
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for r in &split.test {
            let seq = tokenize_to(&r.description, &vocab, 32).map_err(|e| e.to_string())?;
            truth.push(m.class_of(&r.vector));
            pred.push(ckpt.model.predict(&seq).map_err(|e| e.to_string())?.class);
        }
        let acc = classification_metrics(&truth, &pred, m.num_classes()).map_err(|e| e.to_string())?.accuracy;
        ensure(acc >= 0.95, || format!("{} test accuracy {acc:.4}", m.key()))?;
        worst_acc = worst_acc.min(acc);

        let table = aggregate_associations(
            ckpt,
            m,
            &descriptions,
            &vocab,
            &AggregationConfig::default(),
            &split.manifest_digest(),
            Execution::Parallel,
        )
        .map_err(|e| e.to_string())?;
        for class in &table.classes {
            let want = marker(m, class.class_index);
            ensure(class.unigrams.iter().any(|u| u.text == want), || {
                format!("{}:{} top unigrams lack {want}: {:?}", m.key(), class.code, class.unigrams)
            })?;
        }
    }
    within(start, Duration::from_secs(600))?;
    Ok(format!(
        "8 metrics, min test accuracy {worst_acc:.4}, every marker in its class top-10, {:.1?}",
        start.elapsed()
    ))
}

fn c6_nvd_sanity() -> Outcome {
    let start = Instant::now();
    let raw = nvd::load_feed(&fixtures().join("nvd_synthetic_2018_2020.json.gz").to_string_lossy())
        .map_err(|e| e.to_string())?;
    let records = nvd::normalize(&raw, Some(&nvd::DEFAULT_YEARS)).records;
    let split = nvd::split(&records, 7, 0.5).map_err(|e| e.to_string())?;
    let vocab = Vocabulary::build(split.train.iter().map(|r| r.description.as_str()), 8000).map_err(|e| e.to_string())?;
    let set = cvsslens::pipeline::ClassifierSet::new(train_all(&split.train, &vocab, 64, 7)?)
        .map_err(|e| e.to_string())?;
    let report = train::evaluate(&set, &vocab, &split.test, &split.manifest_digest(), Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let margins: Vec<String> = report
        .metrics
        .iter()
        .map(|r| format!("{} {:+.1}", r.metric.key(), 100.0 * (r.classification.accuracy - r.majority_baseline)))
        .collect();
    let beating = report
        .metrics
        .iter()
        .filter(|r| r.classification.accuracy - r.majority_baseline >= 0.03)
        .count();
    ensure(beating >= 5, || format!("only {beating}/8 beat majority by 3 pp: {}", margins.join(", ")))?;
    Ok(format!(
        "{} records, {beating}/8 beat majority by >= 3 pp ({}), {:.1?}",
        records.len(),
        margins.join(", "),
        start.elapsed()
    ))
}

fn c7_metric_formulas() -> Outcome {
    let close = |a: f64, b: f64, what: &str| ensure((a - b).abs() <= 1e-12, || format!("{what}: {a} vs {b}"));
    let m = classification_metrics(&[0, 0, 1], &[0, 1, 1], 2).map_err(|e| e.to_string())?;
    close(m.accuracy, 2.0 / 3.0, "accuracy")?;
    close(m.weighted_f1, 2.0 / 3.0, "weighted F1")?;
    let s = |t: u8| Score::from_tenths(t).expect("valid tenths");
    let truth = [s(50), s(50), s(50), s(50)];
    let pred = [s(50), s(55), s(60), s(70)];
    let e = score_metrics(&pred, &truth).map_err(|e| e.to_string())?;
    close(e.mae, 0.875, "MAE")?;
    close(e.mse, 1.3125, "MSE")?;
    close(e.exact_match_fraction, 0.25, "exact")?;
    close(e.mae_lt1_fraction, 0.5, "lt1")?;
    Ok("classification and score-error fixtures exact to 1e-12".into())
}

fn c8_freeze_schedule() -> Outcome {
    let records = planted_corpus(64, 8);
    let vocab = Vocabulary::build(records.iter().map(|r| r.description.as_str()), 400).map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::new(Metric::AttackVector, Preset::Desk, 8);
    cfg.epochs_frozen = 3;
    cfg.epochs_joint = 2;
    cfg.seq_len = 24;
    cfg.batch_size = 16;
    let initial = EncoderClassifier::new(cfg.model_config(vocab.len()))
        .map_err(|e| e.to_string())?
        .encoder_digest();
    let out = train::train_metric(&cfg, &records, &vocab, Execution::Parallel).map_err(|e| e.to_string())?;
    let e = &out.log.epochs;
    for entry in &e[..3] {
        ensure(entry.phase == Phase::Frozen && entry.encoder_digest == initial, || {
            format!("encoder changed in epoch {}", entry.epoch)
        })?;
    }
    ensure(e[3].phase == Phase::Joint && e[3].encoder_digest != initial, || {
        "encoder unchanged in epoch 4".into()
    })?;
    Ok("encoder digest constant through epoch 3, changed in epoch 4".into())
}

fn cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cvsslens"))
        .current_dir(dir)
        .args(["--format", "structured"])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn end_to_end(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    nvd::write_dataset(&dir.join("data/dataset.jsonl"), &planted_corpus(120, 9)).map_err(|e| e.to_string())?;
    let text = "zqavnx zqaclx remote attacker zqprnx zqunx zqsux crafted request zqchx zqihx zqahx";
    let steps: Vec<(&str, Vec<&str>)> = vec![
        ("split", vec!["split", "--seed", "13"]),
        ("build-vocab", vec!["build-vocab", "--max-size", "400"]),
        (
            "train",
            vec![
                "train", "--metric", "all", "--seed", "13", "--epochs-frozen", "1", "--epochs-joint", "1",
                "--seq-len", "32", "--batch-size", "16",
            ],
        ),
        ("evaluate", vec!["evaluate"]),
        ("predict", vec!["predict", "--text", text, "--explain"]),
        ("explain", vec!["explain", "--cve", "CVE-2099-00007", "--metric", "AV", "--html"]),
    ];
    let mut outputs = Vec::new();
    for (name, args) in steps {
        outputs.push((name.to_string(), cli(dir, &args)?));
    }
    let mut files: Vec<PathBuf> = ["checkpoints", "reports", "data"]
        .iter()
        .flat_map(|d| std::fs::read_dir(dir.join(d)).into_iter().flatten())
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    files.sort();
    for f in files {
        let rel = f.strip_prefix(dir).expect("inside run dir").display().to_string();
        outputs.push((rel, std::fs::read(&f).map_err(|e| e.to_string())?));
    }
    Ok(outputs)
}

fn c9_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ra = end_to_end(a.path())?;
    let rb = end_to_end(b.path())?;
    ensure(ra.len() == rb.len(), || "different artifact sets".into())?;
    for ((na, xa), (nb, xb)) in ra.iter().zip(&rb) {
        ensure(na == nb && xa == xb, || format!("{na} differs between runs"))?;
    }
    let bytes: usize = ra.iter().map(|(_, x)| x.len()).sum();
    Ok(format!("{} outputs and artifacts byte-identical ({bytes} bytes)", ra.len()))
}

fn c10_ingest() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let feed = fixtures().join("nvd_synthetic_2018_2020.json.gz");
    let feed = feed.to_string_lossy();
    let mut copies = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        cli(dir.path(), &["ingest", "--feeds", &feed, "--out", name])?;
        copies.push(std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?);
    }
    ensure(copies[0] == copies[1], || "normalized datasets differ".into())?;
    let records = nvd::read_dataset(&dir.path().join("a.jsonl")).map_err(|e| e.to_string())?;
    let flagged = records.iter().filter(|r| r.flags.contains(&RecordFlag::ScoreMismatch)).count();
    for r in &records {
        ensure(r.is_consistent(), || format!("{} stores {} without a mismatch flag", r.cve_id, r.score))?;
    }
    let n = records.len();
    let s = nvd::split(&records, 7, 0.5).map_err(|e| e.to_string())?;
    ensure(s.train.len() == n / 2 && s.test.len() == n.div_ceil(2), || {
        format!("split {}/{} of {n}", s.train.len(), s.test.len())
    })?;
    let odd = nvd::split(&records[..n - 1], 7, 0.5).map_err(|e| e.to_string())?;
    ensure(odd.train.len() == (n - 1) / 2 && odd.test.len() == (n - 1).div_ceil(2), || "odd split sizes".into())?;
    Ok(format!(
        "{n} records byte-identical across runs, {flagged} flagged mismatches, split {}/{}",
        s.train.len(),
        s.test.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 scorer oracle equivalence", c1_scorer_oracle),
        ("2 gradient correctness", c2_gradients),
        ("3 saliency linear oracle", c3_linear_saliency),
        ("4 padding invariance", c4_padding),
        ("5 planted-signal learnability", c5_planted),
        ("6 real-data sanity (synthetic NVD fixture)", c6_nvd_sanity),
        ("7 metric-formula oracle", c7_metric_formulas),
        ("8 freeze-schedule contract", c8_freeze_schedule),
        ("9 determinism", c9_determinism),
        ("10 ingest integrity", c10_ingest),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
