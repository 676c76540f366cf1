mod common;

use std::fs;

use srlp::event_data::{
    parse_events, read_embeddings, read_minute_bars, write_embeddings, write_events, write_minute_bars, Label,
    D_FACTOR, EMBEDDINGS_MAGIC,
};
use srlp::train::{read_predictions, write_predictions};

fn u32le(v: u32) -> [u8; 4] {
    v.to_le_bytes()
}

fn event_line(id: &str, factor0: &str) -> String {
    let mut factors = vec!["0.5".to_string(); D_FACTOR];
    factors[0] = factor0.to_string();
    format!(
        r#"{{"event_id":"{id}","stock_id":"600519","published_at":"2021-03-01T10:15:00+08:00","sentences":[{{"tokens":["A","rose","B"],"frames":[{{"v":[1],"a0":[0],"a1":[2]}}]}}],"factors":[{}],"return_rate":0.0125,"label":"outperforming"}}"#,
        factors.join(",")
    )
}

/// Magic, d_tok = 2, then one record for sentence 0 of "e1" with 3 tokens.
fn hand_built_embeddings() -> Vec<u8> {
    let mut b = b"SRLPEMB1".to_vec();
    b.extend(u32le(2));
    b.extend(u32le(2));
    b.extend(b"e1");
    b.extend(u32le(0));
    b.extend(u32le(3));
    for v in [1.0f32, -2.0, 0.5, 0.25, 3.0, -0.125] {
        b.extend(v.to_le_bytes());
    }
    b
}

#[test]
fn embeddings_byte_layout() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = hand_built_embeddings();
    let emb = dir.path().join("e.emb");
    fs::write(&emb, &bytes).unwrap();
    let (d_tok, blocks) = read_embeddings(&emb).unwrap();
    assert_eq!(d_tok, 2);
    assert_eq!(blocks.len(), 1);
    assert_eq!((blocks[0].event_id.as_str(), blocks[0].sentence), ("e1", 0));
    assert_eq!(blocks[0].values.row(1), &[0.5, 0.25]);

    let events = dir.path().join("e.jsonl");
    fs::write(&events, event_line("e1", "null") + "\n").unwrap();
    let corpus = parse_events(&events, Some(&emb)).unwrap();
    let out = dir.path().join("out.emb");
    write_embeddings(&out, 2, &corpus.events).unwrap();
    assert_eq!(fs::read(&out).unwrap(), bytes);
}

#[test]
fn truncated_embeddings_report_offset() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = hand_built_embeddings();
    let emb = dir.path().join("e.emb");
    fs::write(&emb, &bytes[..bytes.len() - 3]).unwrap();
    let err = read_embeddings(&emb).unwrap_err().to_string();
    assert!(err.contains("offset 26"), "{err}");
}

#[test]
fn events_line_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    fs::write(&path, event_line("e1", "null") + "\n").unwrap();
    let corpus = parse_events(&path, None).unwrap();
    let e = &corpus.events[0];
    assert_eq!(e.stock_id, "600519");
    assert_eq!(e.published_at.to_rfc3339(), "2021-03-01T10:15:00+08:00");
    assert_eq!(e.sentences[0].frames[0].v, vec![1]);
    assert_eq!(e.factors.values[0], None);
    assert_eq!(e.factors.values[1], Some(0.5));
    assert_eq!(e.return_rate, Some(0.0125));
    assert_eq!(e.label, Some(Label::Outperforming));

    fs::write(&path, event_line("e1", "0.5").replace(",0.5]", "]") + "\n").unwrap();
    let err = parse_events(&path, None).unwrap_err().to_string();
    assert!(err.contains("expected 24 factors"), "{err}");
}

#[test]
fn canonical_files_round_trip_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let small = common::fixtures().join("small");
    let corpus = parse_events(&small.join("events.jsonl"), Some(&small.join("events.emb"))).unwrap();
    write_events(&dir.path().join("e.jsonl"), &corpus.events).unwrap();
    write_embeddings(&dir.path().join("e.emb"), corpus.d_tok.unwrap(), &corpus.events).unwrap();
    assert!(fs::read(dir.path().join("e.jsonl")).unwrap() == fs::read(small.join("events.jsonl")).unwrap(), "events differ");
    assert!(fs::read(dir.path().join("e.emb")).unwrap() == fs::read(small.join("events.emb")).unwrap(), "embeddings differ");

    let prices = common::fixtures().join("market/prices/minute/600100.csv");
    let bars = read_minute_bars(&prices).unwrap();
    write_minute_bars(&dir.path().join("p.csv"), &bars).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("p.csv")).unwrap(), fs::read_to_string(&prices).unwrap());
}

#[test]
fn price_header_is_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    write_minute_bars(&path, &[]).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "timestamp,open,high,low,close,volume\n");
    assert!(read_minute_bars(&path).unwrap().is_empty());
}

#[test]
fn empty_inputs_give_valid_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let (events, emb, preds) = (dir.path().join("e.jsonl"), dir.path().join("e.emb"), dir.path().join("p.csv"));
    write_events(&events, &[]).unwrap();
    write_embeddings(&emb, 8, &[]).unwrap();
    write_predictions(&preds, &[]).unwrap();

    assert_eq!(fs::read(&events).unwrap(), b"");
    let mut header = EMBEDDINGS_MAGIC.to_vec();
    header.extend(u32le(8));
    assert_eq!(fs::read(&emb).unwrap(), header);
    assert_eq!(
        fs::read_to_string(&preds).unwrap(),
        "event_id,stock_id,published_at,pred_label,p_outperform,p_neutral,p_underperform\n"
    );
    let corpus = parse_events(&events, Some(&emb)).unwrap();
    assert!(corpus.is_empty());
    assert!(read_predictions(&preds).unwrap().is_empty());
}
