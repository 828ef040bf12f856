//! Central finite-difference checks of the encoder's analytic gradients.

use serde::Serialize;

use crate::model::{cross_entropy_loss, EncoderClassifier, ModelError, Trainable};
use crate::numerics::{Tape, Tensor};
use crate::par::{self, Execution};
use crate::textprep::TokenSequence;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Denominator floor, so entries with near-zero gradient are compared
    /// absolutely.
    pub floor: f64,
    /// Check at most this many entries per tensor; `None` checks all.
    pub max_per_tensor: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            floor: 1e-6,
            max_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub entries: usize,
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn loss_at_inputs(model: &EncoderClassifier, x: Tensor, seq: &TokenSequence, target: usize) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, Trainable::Nothing);
    let x = tape.leaf(x, false);
    let enc = model.encode(&mut tape, &bound, x, seq, None)?;
    let loss = tape.cross_entropy(enc.logits, target)?;
    Ok(tape.value(loss).data()[0])
}

/// Analytic gradient of the loss with respect to the summed input
/// embeddings of the window.
pub fn input_loss_gradient(model: &EncoderClassifier, seq: &TokenSequence, target: usize) -> Result<(Tensor, Vec<f64>), ModelError> {
    let inputs = model.input_embeddings(seq)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, Trainable::Nothing);
    let x = tape.leaf(inputs.clone(), true);
    let enc = model.encode(&mut tape, &bound, x, seq, None)?;
    let loss = tape.cross_entropy(enc.logits, target)?;
    let grad = tape.backward(loss)?.get(x).map(<[f64]>::to_vec).unwrap_or_default();
    Ok((inputs, grad))
}

fn pick(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < len => (0..m).map(|i| i * len / m + (len / m) / 2).collect(),
        _ => (0..len).collect(),
    }
}

/// Compares every parameter gradient from [`EncoderClassifier::sample_gradients`]
/// and the input-embedding gradient against central differences of the loss.
pub fn check_gradients(
    model: &EncoderClassifier,
    seq: &TokenSequence,
    target: usize,
    cfg: &GradCheckConfig,
    exec: Execution,
) -> Result<GradCheck, ModelError> {
    let g = model.sample_gradients(seq, target, Trainable::All, None)?;
    let h = model.config().hidden_dim;
    let names = model.param_names();

    // Dense analytic gradients for every tensor, embeddings scattered.
    let mut analytic: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
    for (i, d) in g.dense.iter().enumerate() {
        if let Some(d) = d {
            analytic[i].copy_from_slice(d);
        }
    }
    for (id, row) in &g.token_rows {
        for (a, r) in analytic[0][id * h..(id + 1) * h].iter_mut().zip(row) {
            *a += r;
        }
    }
    if let Some(p) = &g.position_rows {
        analytic[1][..p.len()].copy_from_slice(p);
    }

    // Embedding rows outside the sequence have exactly zero gradient; only
    // rows the sequence touches are probed.
    let window = g.position_rows.as_ref().map_or(0, |p| p.len() / h);
    let mut token_ids: Vec<usize> = g.token_rows.iter().map(|(id, _)| *id).collect();
    token_ids.sort_unstable();
    token_ids.dedup();

    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for (t, p) in model.params().iter().enumerate() {
        let candidates: Vec<usize> = match t {
            0 => token_ids.iter().flat_map(|&id| id * h..(id + 1) * h).collect(),
            1 => (0..window * h).collect(),
            _ => (0..p.len()).collect(),
        };
        jobs.extend(pick(candidates.len(), cfg.max_per_tensor).into_iter().map(|k| (t, candidates[k])));
    }

    // One model copy per chunk; each entry is restored after probing.
    let chunks: Vec<&[(usize, usize)]> = jobs.chunks(512).collect();
    let param_results: Vec<Result<(String, usize, f64, f64), ModelError>> = par::map(exec, &chunks, |_, chunk| {
        let mut m = model.clone();
        chunk
            .iter()
            .map(|&(t, k)| {
                let orig = m.params()[t].data()[k];
                m.params_mut()[t].data_mut()[k] = orig + cfg.step;
                let up = cross_entropy_loss(&m.logits(seq)?, target);
                m.params_mut()[t].data_mut()[k] = orig - cfg.step;
                let down = cross_entropy_loss(&m.logits(seq)?, target);
                m.params_mut()[t].data_mut()[k] = orig;
                Ok((names[t].clone(), k, analytic[t][k], (up? - down?) / (2.0 * cfg.step)))
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();

    let (inputs, input_grad) = input_loss_gradient(model, seq, target)?;
    let input_idx = pick(inputs.len(), cfg.max_per_tensor);
    let input_results = par::map(exec, &input_idx, |_, &k| -> Result<(String, usize, f64, f64), ModelError> {
        let mut x = inputs.clone();
        x.data_mut()[k] += cfg.step;
        let up = loss_at_inputs(model, x.clone(), seq, target)?;
        x.data_mut()[k] -= 2.0 * cfg.step;
        let down = loss_at_inputs(model, x, seq, target)?;
        Ok(("input_embeddings".to_string(), k, input_grad[k], (up - down) / (2.0 * cfg.step)))
    });

    let mut out = GradCheck {
        entries: 0,
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for r in param_results.into_iter().chain(input_results) {
        let (name, k, a, n) = r?;
        out.entries += 1;
        let e = relative_error(a, n, cfg.floor);
        if e > out.max_rel_error || out.worst.0.is_empty() {
            out.max_rel_error = e;
            out.worst = (name, k);
            out.analytic = a;
            out.numeric = n;
        }
    }
    Ok(out)
}
