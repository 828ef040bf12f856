use cvsslens::numerics::Tensor;
use cvsslens::saliency::{explain, gradient_x_input, LinearSurrogate};
use cvsslens::textprep::{tokenize_to, Vocabulary};
use proptest::prelude::*;

fn vocab() -> Vocabulary {
    Vocabulary::build(["buffer overflow in the parser allows remote attackers to crash the service"], 300).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_surrogate_matches_closed_form(
        emb in prop::collection::vec(-2.0f64..2.0, 300 * 6),
        w in prop::collection::vec(-2.0f64..2.0, 6 * 3),
        class in 0usize..3,
    ) {
        let v = vocab();
        let rows = v.len();
        let model = LinearSurrogate {
            embeddings: Tensor::matrix(rows, 6, emb[..rows * 6].to_vec()).unwrap(),
            weights: Tensor::matrix(6, 3, w.clone()).unwrap(),
            bias: Tensor::vector(vec![0.1, -0.2, 0.3]),
            seq_len: 24,
        };
        let seq = tokenize_to("remote attackers crash the parser via buffer overflow", &v, 24).unwrap();
        let (_, tokens) = gradient_x_input(&model, &seq, Some(class)).unwrap();
        prop_assert_eq!(tokens.len(), seq.content_positions().len());
        for t in &tokens {
            let x = model.embeddings.row(seq.ids[t.position] as usize);
            let expected = (0..6).map(|j| (w[j * 3 + class] * x[j]).powi(2)).sum::<f64>().sqrt();
            prop_assert!((t.importance - expected).abs() <= 1e-10, "{} vs {}", t.importance, expected);
        }
    }
}

#[test]
fn aligned_token_ranks_first() {
    let v = vocab();
    let rows = v.len();
    let hot = v.id_of("overflow").unwrap() as usize;
    let mut emb = vec![0.01; rows * 4];
    emb[hot * 4..hot * 4 + 4].copy_from_slice(&[3.0, 0.0, 0.0, 0.0]);
    let model = LinearSurrogate {
        embeddings: Tensor::matrix(rows, 4, emb).unwrap(),
        weights: Tensor::matrix(4, 2, vec![1.0, -1.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2]).unwrap(),
        bias: Tensor::vector(vec![0.0, 0.0]),
        seq_len: 24,
    };
    let r = explain(&model, None, "buffer overflow in the parser", &v, 3).unwrap();
    assert_eq!(r.predicted_class, 0);
    assert_eq!(r.top_k[0].word, "overflow");
    assert_eq!(r.top_k.len(), 3);
    assert!(explain(&model, None, "x", &v, 0).is_err());
}
