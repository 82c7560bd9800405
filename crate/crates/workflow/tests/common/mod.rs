#![allow(dead_code)]

use std::path::{Path, PathBuf};

use alloop::prepare::prepare_from_spec;
use alloop::TaskSpec;
use serde_json::{json, Value};

pub const SEED: u64 = 11;

pub fn toy_value() -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tasks/toy_binary_lj.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// The toy task shrunk to a few seconds per loop: two small variants per
/// plan, short runs and one round per stage.
pub fn tiny_value() -> Value {
    let mut v = toy_value();
    let plans = v["categories"].as_array_mut().unwrap();
    for p in plans.iter_mut() {
        p["variants"] = json!(2);
    }
    plans[0]["builder"]["reps"] = json!([2, 2, 2]);
    plans[1]["builder"]["counts"] = json!({"Ar": 32});
    plans[2]["builder"]["layers"][0]["reps"] = json!([2, 2, 1]);
    plans[2]["builder"]["layers"][1]["counts"] = json!({"Ar": 16});
    v["config"] = json!({
        "basis": {"n_radial": 8},
        "reference": {"run": {"steps": 200, "snapshot_interval": 10, "equilibration_steps": 40}},
        "oracle_sample": {
            "ladder": [{"ensemble": "NVT", "temperature": 300.0}, {"ensemble": "NVT", "temperature": 900.0}],
            "run": {"steps": 100, "snapshot_interval": 50, "equilibration_steps": 0},
            "compression": {"min_scale": 0.97, "max_scale": 1.03, "points": 3},
            "rattle": {"sigma": 0.05, "count": 2}
        },
        "sampling": {"ensemble": "NVT", "run": {"steps": 100, "snapshot_interval": 10, "equilibration_steps": 20}},
        "evaluation": {"density_bound_pct": 100.0},
        "policy": {"min_rounds": 1, "max_rounds": 1, "budget": 30}
    });
    v
}

pub fn tiny_spec() -> TaskSpec {
    TaskSpec::from_value(tiny_value()).unwrap()
}

pub fn prepared(dir: &Path) -> PathBuf {
    let root = dir.join("ws");
    prepare_from_spec(&root, &tiny_spec(), SEED).unwrap();
    root
}
