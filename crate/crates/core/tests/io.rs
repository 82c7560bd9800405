mod common;

use alloop_core::extxyz::{decode_frames, encode_frame, Frame};
use alloop_core::frame::LabeledFrame;
use alloop_core::geometry::{Cell, Vec3};
use alloop_core::report::*;
use alloop_core::AtomicConfiguration;
use common::*;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

fn random_frame(r: &mut ChaCha8Rng, k: usize) -> Frame {
    let n = r.random_range(1..12);
    let cell = if r.random::<f64>() < 0.2 { Cell::open() } else { random_cell(r) };
    let species = ["Cu", "Ar", "H", "Li"];
    let pos: Vec<Vec3> =
        (0..n).map(|_| Vec3::new(r.random_range(-50.0..50.0), r.random_range(-1e-3..1e-3), r.random_range(0.0..1e4))).collect();
    let mut c = AtomicConfiguration::new(cell, (0..n).map(|_| species[r.random_range(0..4)].to_string()).collect(), pos);
    c.structure_id = format!("s{k}");
    c.is_validation = r.random::<bool>();
    if r.random::<bool>() {
        c.velocities = Some((0..n).map(|_| Vec3::new(r.random(), -r.random::<f64>(), 1e-20)).collect());
    }
    if r.random::<bool>() {
        c.region_tags = Some((0..n).map(|i| if i % 2 == 0 { "lower" } else { "upper" }.to_string()).collect());
    }
    if r.random::<bool>() {
        c.info.insert("temperature".into(), format!("{}", r.random_range(100.0..2000.0)));
        c.info.insert("note".into(), "two words".into());
    }
    if r.random::<bool>() {
        let forces = (0..n).map(|_| Vec3::new(r.random_range(-5.0..5.0), r.random(), 0.0)).collect();
        Frame::Labeled(LabeledFrame::new(c, r.random_range(-500.0..0.0), forces, "oracle-lj-0123abcd").unwrap())
    } else {
        Frame::Bare(c)
    }
}

#[test]
fn thousand_random_frames_round_trip_bit_exact() {
    let mut r = rng(51);
    let frames: Vec<Frame> = (0..1000).map(|k| random_frame(&mut r, k)).collect();
    let text: String = frames.iter().map(encode_frame).collect();
    let back = decode_frames(&text).unwrap();
    assert_eq!(back.len(), frames.len());
    for (a, b) in frames.iter().zip(&back) {
        assert_eq!(a, b);
    }
}

fn decision(step: u64, tag: &str) -> ReportRecord {
    ReportRecord::now(
        step,
        Payload::Decision(DecisionRecord {
            next_task: "train".into(),
            descriptions: tag.into(),
            directive: serde_json::json!({"mode": "quick"}),
            policy: "scripted".into(),
            ok: true,
            outcome: String::new(),
        }),
    )
}

#[test]
fn concurrent_writers_keep_whole_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reports/decision.jsonl");
    std::thread::scope(|s| {
        for w in 0..8 {
            let path = &path;
            s.spawn(move || {
                for k in 0..100 {
                    append_record(path, &decision(k, &format!("w{w}-{k}-{}", "x".repeat(500)))).unwrap();
                }
            });
        }
    });
    let log = read_records(&path).unwrap();
    assert!(log.errors.is_empty());
    assert_eq!(log.records.len(), 800);
}

#[test]
fn corrupt_middle_line_is_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    append_record(&path, &decision(1, "a")).unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{not json\n");
    std::fs::write(&path, text).unwrap();
    append_record(&path, &decision(2, "b")).unwrap();
    let log = read_records(&path).unwrap();
    assert_eq!(log.records.len(), 2);
    match &log.errors[..] {
        [ReportError::Corrupt { line, raw, .. }] => {
            assert_eq!(*line, 2);
            assert_eq!(raw, "{not json");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncation_drops_later_steps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    for k in 0..10 {
        append_record(&path, &decision(k, "x")).unwrap();
    }
    assert_eq!(truncate_from_step(&path, 6).unwrap(), 4);
    let steps: Vec<u64> = read_records(&path).unwrap().strict().unwrap().iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 1, 2, 3, 4, 5]);
}

#[test]
fn torn_last_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    for k in 0..3 {
        append_record(&path, &decision(k, "x")).unwrap();
    }
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, format!("{text}{{\"variant\":\"DecisionRecord\",\"step\":1")).unwrap();
    assert_eq!(truncate_from_step(&path, 3).unwrap(), 1);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn unknown_variant_survives() {
    let line = r#"{"variant":"future","timestamp":"t","step":3,"payload":{"a":1}}"#;
    let r = ReportRecord::from_line(line).unwrap();
    assert!(matches!(&r.payload, Payload::Raw { variant, .. } if variant == "future"));
    assert_eq!(ReportRecord::from_line(&r.to_line().unwrap()).unwrap(), r);
}
