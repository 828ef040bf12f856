use cvsslens::gradcheck::{check_gradients, GradCheckConfig};
use cvsslens::model::{EncoderClassifier, ModelConfig};
use cvsslens::numerics::{Tape, Tensor};
use cvsslens::textprep::TokenSequence;
use cvsslens::Execution;
use proptest::prelude::*;

fn sequence(body: &[u32], len: usize) -> TokenSequence {
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tiny_encoders_match_central_differences(
        seed in 0u64..10_000,
        layers in 1usize..=2,
        heads in prop::sample::select(vec![1usize, 2, 4]),
        classes in 2usize..=4,
        body in prop::collection::vec(5u32..20, 1..6),
        target_pick in 0usize..4,
    ) {
        let model = EncoderClassifier::new(ModelConfig {
            vocab_size: 20,
            seq_len: 10,
            hidden_dim: 8,
            num_layers: layers,
            num_heads: heads,
            ffn_dim: 12,
            num_classes: classes,
            dropout_rate: 0.1,
            seed,
        }).unwrap();
        let seq = sequence(&body, 10);
        let r = check_gradients(&model, &seq, target_pick % classes, &GradCheckConfig::default(), Execution::Sequential).unwrap();
        prop_assert!(r.max_rel_error < 1e-4, "{:?}", r);
    }
}

/// f(x) = sum(w ⊙ layer_norm(x A + b)) over a small tape graph, checked
/// against central differences in every input.
#[test]
fn composite_tape_graph_matches_central_differences() {
    let a = Tensor::matrix(3, 4, (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) / 6.0).collect()).unwrap();
    let b = Tensor::vector(vec![0.1, -0.2, 0.3, 0.05]);
    let gamma = Tensor::vector(vec![1.2, 0.8, -0.5, 1.0]);
    let beta = Tensor::vector(vec![0.0, 0.1, -0.1, 0.2]);
    let w = Tensor::matrix(2, 4, vec![0.3, -1.0, 0.5, 0.7, -0.2, 0.4, 0.9, -0.6]).unwrap();
    let x0 = Tensor::matrix(2, 3, vec![0.5, -1.5, 0.25, 1.0, 0.75, -0.3]).unwrap();

    let f = |x: &Tensor| -> (f64, Vec<f64>) {
        let mut t = Tape::new();
        let xv = t.leaf(x.clone(), true);
        let av = t.param(&a, false);
        let bv = t.param(&b, false);
        let g = t.param(&gamma, false);
        let be = t.param(&beta, false);
        let y = t.matmul(xv, av).unwrap();
        let y = t.add_row(y, bv).unwrap();
        let y = t.gelu(y);
        let y = t.layer_norm(y, g, be, 1e-12).unwrap();
        let s = t.softmax(y);
        let y = t.mul_const(s, w.data().to_vec()).unwrap();
        let out = t.sum(y);
        let v = t.value(out).data()[0];
        let grad = t.backward(out).unwrap().get(xv).unwrap().to_vec();
        (v, grad)
    };
    let (_, analytic) = f(&x0);
    let h = 1e-5;
    for (k, &a) in analytic.iter().enumerate() {
        let mut up = x0.clone();
        up.data_mut()[k] += h;
        let mut down = x0.clone();
        down.data_mut()[k] -= h;
        let numeric = (f(&up).0 - f(&down).0) / (2.0 * h);
        assert!((numeric - a).abs() < 1e-8, "entry {k}: {numeric} vs {a}");
    }
}
