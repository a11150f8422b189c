use std::path::Path;

use modlens::checkpoint::{load_classifier, load_rationale, read_checkpoint, save_classifier, save_rationale};
use modlens::corpus::{parse_corpus, read_corpus, write_corpus};
use modlens::error::{exit, Error};
use modlens_core::models::{CellKind, ClassifierConfig, ClassifierModel, EncoderConfig, Pooling};
use modlens_core::rationale::{JointConfig, RationaleModel};
use modlens_core::text::{generate_synthetic_corpus, EmbeddingConfig, Label, SynthConfig};
use serde_json::json;

fn classifier(seed: u64) -> ClassifierModel {
    ClassifierModel::init(
        ClassifierConfig {
            embedding: EmbeddingConfig { dim: 5, min_n: 3, max_n: 5, buckets: 32 },
            encoder: EncoderConfig { cell: CellKind::Lstm, hidden: 3, layers: 2, bidirectional: false },
            pooling: Pooling::Mean,
        },
        seed,
    )
    .unwrap()
}

fn rationale(seed: u64) -> RationaleModel {
    let enc = EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 3, layers: 1, bidirectional: true };
    let cfg = JointConfig { generator: enc, classifier: EncoderConfig { bidirectional: false, ..enc }, z_hidden: 2, ..JointConfig::desk() };
    RationaleModel::init(cfg, 5, seed).unwrap()
}

#[test]
fn classifier_checkpoint_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.ckpt");
    let model = classifier(3);
    let run = json!({"seed": 3});
    save_classifier(&path, &model, &run).unwrap();
    let (loaded, header) = load_classifier(&path).unwrap();
    assert_eq!(loaded.config, model.config);
    assert_eq!(header.run, run);
    for (name, t) in model.params.iter() {
        let l = loaded.params.get(name).unwrap();
        assert_eq!(l.shape(), t.shape());
        assert!(l.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()), "{name}");
    }
    // Saving again gives identical bytes.
    let again = dir.path().join("again.ckpt");
    save_classifier(&again, &loaded, &run).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn rationale_checkpoint_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rat.ckpt");
    let model = rationale(4);
    save_rationale(&path, &model, &json!({})).unwrap();
    let (loaded, _) = load_rationale(&path, 5).unwrap();
    assert_eq!(loaded.config, model.config);
    assert_eq!(loaded.params, model.params);
    assert!(matches!(load_rationale(&path, 6), Err(Error::BadFile { .. })));
}

fn assert_bad_file(r: Result<impl std::fmt::Debug, Error>) {
    match r {
        Err(e @ Error::BadFile { .. }) => assert_eq!(e.exit_code(), exit::DATA),
        other => panic!("expected a bad-file error, got {other:?}"),
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.ckpt");
    save_classifier(&path, &classifier(5), &json!({})).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let write = |name: &str, b: &[u8]| {
        let p = dir.path().join(name);
        std::fs::write(&p, b).unwrap();
        p
    };
    assert_bad_file(read_checkpoint(&write("trunc", &bytes[..bytes.len() - 3])));
    assert_bad_file(read_checkpoint(&write("short", &bytes[..4])));
    let mut extra = bytes.clone();
    extra.push(0);
    assert_bad_file(read_checkpoint(&write("extra", &extra)));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert_bad_file(read_checkpoint(&write("magic", &magic)));
    let mut version = bytes.clone();
    version[8] = 9;
    assert_bad_file(read_checkpoint(&write("version", &version)));
    assert_bad_file(read_checkpoint(&write("empty", &[])));
}

#[test]
fn checkpoint_kind_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rat.ckpt");
    save_rationale(&path, &rationale(1), &json!({})).unwrap();
    assert_bad_file(load_classifier(&path));
}

#[test]
fn missing_checkpoint_is_an_io_error() {
    let e = load_classifier(Path::new("/nonexistent/clf.ckpt")).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
    assert_eq!(e.exit_code(), exit::IO);
}

#[test]
fn corpus_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let corpus = generate_synthetic_corpus(&SynthConfig { comments: 50, seed: 2, ..Default::default() }).unwrap();
    write_corpus(&path, &corpus.comments).unwrap();
    assert_eq!(read_corpus(&path).unwrap(), corpus.comments);
}

fn malformed_line(text: &str) -> usize {
    match parse_corpus(text.as_bytes(), Path::new("c.jsonl")) {
        Err(Error::Malformed { line, .. }) => line,
        other => panic!("expected a malformed-line error, got {other:?}"),
    }
}

#[test]
fn corpus_errors_name_the_line() {
    let good = r#"{"id":"a","text":"hello there","label":"appropriate"}"#;
    let good2 = r#"{"id":"b","text":"you idiot","label":"inappropriate","reasons":["insults"],"gold_spans":[1]}"#;
    assert_eq!(malformed_line(&format!("{good}\n{{not json\n")), 2);
    assert_eq!(malformed_line(&format!("{good}\n\n{good2}\n{good}\n")), 4);
    assert_eq!(malformed_line(&format!("{good}\n{good}\n")), 2);
    assert_eq!(malformed_line(&format!("{good}\n{}\n", r#"{"id":"c","text":"x","label":"maybe"}"#)), 2);
    assert_eq!(malformed_line(&format!("{}\n", r#"{"id":"c","text":"x","label":"appropriate","extra":1}"#)), 1);
    assert_eq!(malformed_line(&format!("{}\n", r#"{"id":"c","text":"one two","label":"inappropriate","gold_spans":[5]}"#)), 1);

    let parsed = parse_corpus(format!("{good}\n\n{good2}\n").as_bytes(), Path::new("c.jsonl")).unwrap();
    assert_eq!(parsed.len(), 2);
    assert_eq!(parsed[1].label, Label::Inappropriate);
    assert_eq!(parsed[1].tokens, ["you", "idiot"]);
}
