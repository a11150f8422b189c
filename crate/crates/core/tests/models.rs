use modlens_core::autodiff::{finite_diff_check, ParamStore, Tape};
use modlens_core::models::{
    classifier_loss, classify_pooled, encode, init_encoder, init_lstm, init_rcnn, param_count, train_classifier,
    CellKind, ClassifierConfig, ClassifierModel, ClassifierOutput, ClassifierTrainConfig, EncoderConfig, LstmNodes,
    Pooling, RcnnNodes,
};
use modlens_core::rng;
use modlens_core::text::{generate_synthetic_corpus, split_corpus, token_bags, EmbeddingConfig, Label, SynthConfig};
use modlens_core::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn random(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn vecmat(v: &[f64], m: &Tensor) -> Vec<f64> {
    let (rows, cols) = (m.rows(), m.cols());
    assert_eq!(v.len(), rows);
    (0..cols).map(|j| (0..rows).map(|i| v[i] * m.get2(i, j)).sum()).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Plain-loop RCNN step over `c[0..n]`.
fn rcnn_reference(p: &ParamStore, prefix: &str, order: usize, c: &[Vec<f64>], x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let get = |n: &str| p.get(&format!("{prefix}.{n}")).unwrap();
    let gx = vecmat(x, get("w_gate"));
    let gc = vecmat(&c[order - 1], get("u_gate"));
    let d = gx.len();
    let lambda: Vec<f64> = (0..d).map(|j| sig(gx[j] + gc[j] + get("b_gate").data()[j])).collect();
    let mut next = Vec::new();
    for l in 0..order {
        let wx = vecmat(x, get(&format!("w{}", l + 1)));
        let cand: Vec<f64> = (0..d).map(|j| if l == 0 { wx[j] } else { c[l - 1][j] + wx[j] }).collect();
        next.push((0..d).map(|j| lambda[j] * c[l][j] + (1.0 - lambda[j]) * cand[j]).collect::<Vec<_>>());
    }
    let h = (0..d).map(|j| (next[order - 1][j] + get("bias").data()[j]).tanh()).collect();
    (next, h)
}

/// Plain-loop LSTM step; returns `(h, c)`.
fn lstm_reference(p: &ParamStore, prefix: &str, h: &[f64], c: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gate = |g: &str, squash: fn(f64) -> f64| -> Vec<f64> {
        let a = vecmat(x, p.get(&format!("{prefix}.w_{g}")).unwrap());
        let b = vecmat(h, p.get(&format!("{prefix}.u_{g}")).unwrap());
        let bias = p.get(&format!("{prefix}.b_{g}")).unwrap().data();
        (0..a.len()).map(|j| squash(a[j] + b[j] + bias[j])).collect()
    };
    let (i, f, o, g) = (gate("i", sig), gate("f", sig), gate("o", sig), gate("g", f64::tanh));
    let c2: Vec<f64> = (0..c.len()).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
    let h2 = (0..c.len()).map(|j| o[j] * c2[j].tanh()).collect();
    (h2, c2)
}

fn rcnn_params(seed: u64, d_in: usize, d: usize, order: usize) -> ParamStore {
    let mut p = ParamStore::new();
    let mut r = rng::seeded(seed);
    init_rcnn(&mut p, "c", d_in, d, order, &mut r);
    // Randomize the biases too so they are exercised.
    p.insert("c.b_gate", random(&mut r, 1, d));
    p.insert("c.bias", random(&mut r, 1, d));
    p
}

#[test]
fn rcnn_step_with_zero_weights_outputs_zero() {
    let mut p = rcnn_params(0, 3, 4, 2);
    let names: Vec<String> = p.names().map(String::from).collect();
    for n in names {
        let shape = p.get(&n).unwrap().shape().to_vec();
        p.insert(n, Tensor::zeros(&shape));
    }
    let mut tape = Tape::new(&p);
    let cell = RcnnNodes::bind(&mut tape, "c", 2).unwrap();
    let state = cell.zero_state(&mut tape);
    let x = tape.constant(Tensor::row(&[0.3, -1.0, 2.0]));
    let (_, h) = cell.step(&mut tape, &state, x).unwrap();
    assert_eq!(tape.value(h).data(), &[0.0; 4]);
}

#[test]
fn rcnn_saturated_gate_ignores_input() {
    let mut p = rcnn_params(1, 3, 4, 2);
    p.insert("c.b_gate", Tensor::full(&[1, 4], 60.0));
    let mut tape = Tape::new(&p);
    let cell = RcnnNodes::bind(&mut tape, "c", 2).unwrap();
    let start = vec![
        tape.constant(Tensor::row(&[0.1, 0.2, 0.3, 0.4])),
        tape.constant(Tensor::row(&[-0.5, 0.6, -0.7, 0.8])),
    ];
    let x = tape.constant(Tensor::row(&[5.0, -3.0, 1.0]));
    let (next, _) = cell.step(&mut tape, &start, x).unwrap();
    for l in 0..2 {
        assert_eq!(tape.value(next[l]), tape.value(start[l]));
    }
}

#[test]
fn rcnn_step_matches_scalar_reference() {
    for (seed, order) in [(2, 1), (3, 2), (4, 4)] {
        let (d_in, d) = (5, 3);
        let p = rcnn_params(seed, d_in, d, order);
        let mut r = rng::seeded(seed + 100);
        let mut tape = Tape::new(&p);
        let cell = RcnnNodes::bind(&mut tape, "c", order).unwrap();
        let mut state = cell.zero_state(&mut tape);
        let mut ref_state = vec![vec![0.0; d]; order];
        for _ in 0..6 {
            let x = random(&mut r, 1, d_in);
            let xn = tape.constant(x.clone());
            let (next, h) = cell.step(&mut tape, &state, xn).unwrap();
            let (ref_next, ref_h) = rcnn_reference(&p, "c", order, &ref_state, x.data());
            for (a, b) in tape.value(h).data().iter().zip(&ref_h) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            state = next;
            ref_state = ref_next;
        }
    }
}

#[test]
fn lstm_zero_weights_and_gate_identity() {
    let mut p = ParamStore::new();
    init_lstm(&mut p, "c", 2, 3, &mut rng::seeded(0));
    let names: Vec<String> = p.names().map(String::from).collect();
    for n in &names {
        let shape = p.get(n).unwrap().shape().to_vec();
        p.insert(n.clone(), Tensor::zeros(&shape));
    }
    {
        let mut tape = Tape::new(&p);
        let cell = LstmNodes::bind(&mut tape, "c").unwrap();
        let state = cell.zero_state(&mut tape);
        let x = tape.constant(Tensor::row(&[1.0, -2.0]));
        let (_, h) = cell.step(&mut tape, &state, x).unwrap();
        assert_eq!(tape.value(h).data(), &[0.0; 3]);
    }
    let mut r = rng::seeded(9);
    init_lstm(&mut p, "c", 2, 3, &mut r);
    p.insert("c.b_f", Tensor::full(&[1, 3], 60.0));
    p.insert("c.b_i", Tensor::full(&[1, 3], -60.0));
    let mut tape = Tape::new(&p);
    let cell = LstmNodes::bind(&mut tape, "c").unwrap();
    let c0 = Tensor::row(&[0.5, -0.25, 1.5]);
    let mut state = vec![tape.constant(Tensor::row(&[0.1, 0.2, 0.3])), tape.constant(c0.clone())];
    for _ in 0..4 {
        let x = tape.constant(random(&mut r, 1, 2));
        let (next, _) = cell.step(&mut tape, &state, x).unwrap();
        assert_eq!(tape.value(next[1]), &c0);
        state = next;
    }
}

#[test]
fn lstm_step_matches_scalar_reference() {
    let (d_in, d) = (4, 3);
    let mut p = ParamStore::new();
    let mut r = rng::seeded(5);
    init_lstm(&mut p, "c", d_in, d, &mut r);
    for g in ["i", "f", "o", "g"] {
        p.insert(format!("c.b_{g}"), random(&mut r, 1, d));
    }
    let mut tape = Tape::new(&p);
    let cell = LstmNodes::bind(&mut tape, "c").unwrap();
    let mut state = cell.zero_state(&mut tape);
    let (mut h, mut c) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..6 {
        let x = random(&mut r, 1, d_in);
        let xn = tape.constant(x.clone());
        let (next, out) = cell.step(&mut tape, &state, xn).unwrap();
        let (h2, c2) = lstm_reference(&p, "c", &h, &c, x.data());
        for (a, b) in tape.value(out).data().iter().zip(&h2) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for (a, b) in tape.value(next[1]).data().iter().zip(&c2) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        state = next;
        (h, c) = (h2, c2);
    }
}

/// Copies every `.fwd.` parameter over its `.bwd.` twin.
fn tie_directions(p: &mut ParamStore) {
    let fwd: Vec<(String, Tensor)> =
        p.iter().filter(|(n, _)| n.contains(".fwd.")).map(|(n, t)| (n.replace(".fwd.", ".bwd."), t.clone())).collect();
    for (n, t) in fwd {
        p.insert(n, t);
    }
}

fn encoder_params(cfg: &EncoderConfig, d_in: usize, seed: u64) -> ParamStore {
    let mut p = ParamStore::new();
    init_encoder(&mut p, "enc", cfg, d_in, &mut rng::seeded(seed));
    p
}

#[test]
fn length_one_bidirectional_halves_agree_with_tied_weights() {
    let cfg = EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 4, layers: 2, bidirectional: true };
    let mut p = encoder_params(&cfg, 3, 1);
    tie_directions(&mut p);
    let mut tape = Tape::new(&p);
    let x = tape.constant(Tensor::row(&[0.5, -0.1, 0.9]));
    let enc = encode(&mut tape, "enc", &cfg, x).unwrap();
    let out = tape.value(enc.outputs).data();
    assert_eq!(&out[..4], &out[4..]);
}

#[test]
fn unidirectional_encode_folds_the_cell() {
    let cfg = EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 3, layers: 1, bidirectional: false };
    let p = encoder_params(&cfg, 2, 2);
    let mut r = rng::seeded(7);
    let x = random(&mut r, 5, 2);
    let mut tape = Tape::new(&p);
    let xn = tape.constant(x.clone());
    let enc = encode(&mut tape, "enc", &cfg, xn).unwrap();
    let mut state = vec![vec![0.0; 3]; 2];
    for t in 0..5 {
        let (next, h) = rcnn_reference(&p, "enc.l0.fwd", 2, &state, x.row_slice(t));
        let got = tape.value(enc.outputs).row_slice(t);
        for (a, b) in got.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
        state = next;
    }
}

#[test]
fn palindrome_with_tied_weights_mirrors_halves() {
    for cell in [CellKind::Rcnn { order: 2 }, CellKind::Lstm] {
        let cfg = EncoderConfig { cell, hidden: 3, layers: 1, bidirectional: true };
        let mut p = encoder_params(&cfg, 2, 3);
        tie_directions(&mut p);
        let rows = [[0.1, 0.7], [-0.4, 0.2], [0.9, -0.3], [-0.4, 0.2], [0.1, 0.7]];
        let x = Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let mut tape = Tape::new(&p);
        let xn = tape.constant(x);
        let enc = encode(&mut tape, "enc", &cfg, xn).unwrap();
        let out = tape.value(enc.outputs);
        for t in 0..5 {
            let (a, b) = (out.row_slice(t), out.row_slice(4 - t));
            for j in 0..3 {
                assert!((a[j] - b[3 + j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn empty_sequence_is_rejected() {
    let cfg = ClassifierConfig { embedding: EmbeddingConfig { dim: 2, buckets: 16, ..Default::default() }, ..ClassifierConfig::desk() };
    let model = ClassifierModel::init(cfg, 0).unwrap();
    assert!(model.classify_tokens(&[]).is_err());
}

fn head_params(w: Tensor, b: Tensor) -> ParamStore {
    let mut p = ParamStore::new();
    p.insert("head.w", w);
    p.insert("head.b", b);
    p
}

fn head_output(p: &ParamStore, pooled: Tensor) -> ClassifierOutput {
    let mut tape = Tape::new(p);
    let x = tape.constant(pooled);
    let nodes = classify_pooled(&mut tape, x, "head").unwrap();
    ClassifierOutput::from_probs(tape.value(nodes.probs))
}

#[test]
fn zero_head_is_uniform_and_saturated_head_is_certain() {
    let p = head_params(Tensor::zeros(&[3, 2]), Tensor::zeros(&[1, 2]));
    assert_eq!(head_output(&p, Tensor::row(&[1.0, -2.0, 3.0])).probs, [0.5, 0.5]);
    let p = head_params(Tensor::zeros(&[3, 2]), Tensor::row(&[10.0, -10.0]));
    let out = head_output(&p, Tensor::row(&[1.0, -2.0, 3.0]));
    assert!((out.probs[0] - 1.0).abs() < 1e-4);
    assert_eq!(out.label(), Label::Appropriate);
}

#[test]
fn head_output_is_a_distribution_on_random_inputs() {
    let mut r = rng::seeded(11);
    for _ in 0..1000 {
        let scale = r.gen_range(0.1..50.0);
        let p = head_params(random(&mut r, 4, 2).map(|v| v * scale), random(&mut r, 1, 2));
        let out = head_output(&p, random(&mut r, 1, 4));
        assert!(out.probs.iter().all(|&v| v >= 0.0));
        assert!((out.probs[0] + out.probs[1] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn param_count_worked_examples() {
    let rcnn = EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 2, layers: 1, bidirectional: false };
    assert_eq!(param_count(&rcnn, 2), 20);
    let lstm = EncoderConfig { cell: CellKind::Lstm, hidden: 1, layers: 1, bidirectional: false };
    assert_eq!(param_count(&lstm, 1), 12);
    let two = EncoderConfig { layers: 2, ..rcnn };
    assert!(param_count(&two, 1) > 2 * param_count(&rcnn, 1));
    let bi = EncoderConfig { bidirectional: true, ..rcnn };
    let bi2 = EncoderConfig { layers: 2, ..bi };
    assert!(param_count(&bi2, 2) > 2 * param_count(&bi, 2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn param_count_matches_initialized_tensors(
        d_in in 1usize..6, hidden in 1usize..6, layers in 1usize..4, bidirectional: bool, order in 1usize..5, lstm: bool,
    ) {
        let cell = if lstm { CellKind::Lstm } else { CellKind::Rcnn { order } };
        let cfg = EncoderConfig { cell, hidden, layers, bidirectional };
        prop_assert_eq!(encoder_params(&cfg, d_in, 0).numel(), param_count(&cfg, d_in));
    }

    #[test]
    fn order_two_rcnn_is_smaller_than_lstm(d_in in 1usize..400, hidden in 1usize..400, layers in 1usize..4, bidirectional: bool) {
        let rcnn = EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden, layers, bidirectional };
        let lstm = EncoderConfig { cell: CellKind::Lstm, ..rcnn };
        prop_assert!(param_count(&rcnn, d_in) < param_count(&lstm, d_in));
    }
}

fn tiny_config(cell: CellKind, pooling: Pooling) -> ClassifierConfig {
    ClassifierConfig {
        embedding: EmbeddingConfig { dim: 4, min_n: 3, max_n: 4, buckets: 64 },
        encoder: EncoderConfig { cell, hidden: 3, layers: 2, bidirectional: true },
        pooling,
    }
}

#[test]
fn encode_and_classify_gradients_match_finite_differences() {
    let tokens: Vec<String> = ["you", "are", "an", "1nsult", "!"].iter().map(|s| s.to_string()).collect();
    for cell in [CellKind::Rcnn { order: 2 }, CellKind::Lstm] {
        for pooling in [Pooling::Final, Pooling::Mean] {
            let cfg = tiny_config(cell, pooling);
            let model = ClassifierModel::init(cfg, 4).unwrap();
            let mut tape = Tape::new(&model.params);
            let nodes = model.forward(&mut tape, &tokens).unwrap();
            let loss = classifier_loss(&mut tape, &nodes, Label::Inappropriate).unwrap();
            let graph = tape.into_graph();
            let err = finite_diff_check(&graph, loss, &model.params, 1e-5).unwrap();
            assert!(err < 1e-4, "{cell:?} {pooling:?}: {err}");
        }
    }
}

#[test]
fn encoding_is_bit_identical_across_runs() {
    let cfg = tiny_config(CellKind::Rcnn { order: 2 }, Pooling::Final);
    let model = ClassifierModel::init(cfg, 8).unwrap();
    let bags = token_bags(&["abc".to_string(), "defg".to_string()], &cfg.embedding);
    let run = || {
        let mut tape = Tape::new(&model.params);
        let nodes = model.forward_bags(&mut tape, bags.clone()).unwrap();
        let loss = classifier_loss(&mut tape, &nodes, Label::Appropriate).unwrap();
        let grads = tape.backward(loss).unwrap();
        (tape.value(nodes.probs).clone(), grads.into_map())
    };
    assert_eq!(run(), run());
}

#[test]
fn small_classifier_learns_planted_tokens() {
    let corpus =
        generate_synthetic_corpus(&SynthConfig { comments: 700, min_len: 4, max_len: 8, seed: 2, ..Default::default() })
            .unwrap();
    let split = split_corpus(&corpus.comments, 100, 100, 2).unwrap();
    let mut cfg = ClassifierConfig::desk();
    cfg.embedding.buckets = 1 << 12;
    cfg.encoder.hidden = 8;
    let tc = ClassifierTrainConfig { epochs: 2, batch_size: 16, ..Default::default() };
    let (model, log) = train_classifier(cfg, &split.train, &split.validation, &tc).unwrap();
    assert_eq!(log.epochs.len(), 2);
    let best = &log.epochs[log.best_epoch];
    assert!(log.epochs.iter().all(|e| e.val_loss >= best.val_loss));
    assert!(best.val_accuracy > 0.9, "{log:?}");
    let (again, log2) = train_classifier(cfg, &split.train, &split.validation, &tc).unwrap();
    assert_eq!(log, log2);
    assert_eq!(model, again);
}
