use blimpswarm::perception::{rgb_to_lab, ColorFamily};
use blimpswarm::training::Labels;
use blimpswarm::SimConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const RED: [u8; 3] = [205, 25, 30];

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

/// Writes `n` noisy 320x240 images each holding one disk of `RED` and labels
/// the 16 px cells that lie entirely inside the disk.
fn red_disk_set(dir: &Path, n: usize) -> Labels {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut cells = BTreeMap::new();
    for k in 0..n {
        let (cx, cy, r) = (rng.gen_range(80.0..240.0), rng.gen_range(70.0..170.0), rng.gen_range(40.0..65.0));
        let img = image::RgbImage::from_fn(320, 240, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let base = if dx * dx + dy * dy <= r * r { RED } else { [120, 122, 118] };
            image::Rgb(base.map(|c| (c as f64 + rng.gen_range(-6.0..6.0)).round().clamp(0.0, 255.0) as u8))
        });
        let name = format!("disk_{k:02}.png");
        img.save(dir.join(&name)).unwrap();
        let mut inside = Vec::new();
        for row in 0..15 {
            for col in 0..20 {
                let corners = [(0.0, 0.0), (16.0, 0.0), (0.0, 16.0), (16.0, 16.0)];
                let all_in = corners.iter().all(|(ox, oy)| {
                    let (dx, dy) = (col as f64 * 16.0 + ox - cx, row as f64 * 16.0 + oy - cy);
                    dx * dx + dy * dy <= r * r
                });
                if all_in {
                    inside.push([col, row]);
                }
            }
        }
        cells.insert(name, inside);
    }
    Labels { name: "red".into(), cells }
}

#[test]
fn train_colors_recovers_the_disk_color() {
    let dir = tempfile::tempdir().unwrap();
    let labels = red_disk_set(dir.path(), 20);
    let labels_file = dir.path().join("labels.json");
    std::fs::write(&labels_file, serde_json::to_string(&labels).unwrap()).unwrap();
    let out = dir.path().join("family.json");
    let o = sim(&[
        "train-colors",
        "--images",
        dir.path().to_str().unwrap(),
        "--labels",
        labels_file.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let n: usize = labels.cells.values().map(Vec::len).sum();
    assert!(stdout.contains(&format!("samples: {n}")), "{stdout}");
    assert!(stdout.contains("sigma eigenvalues"));

    let fam: ColorFamily = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let lab = rgb_to_lab(RED);
    assert!(fam.mu[0] > 40.0, "{:?}", fam.mu);
    assert!((fam.mu[0] - lab[1]).abs() < 2.0 && (fam.mu[1] - lab[2]).abs() < 2.0, "{:?} vs {lab:?}", fam.mu);

    // the simulator accepts it as a balloon family
    let cfg = format!(r#"{{"agent": {{"balloon_family": {}}}}}"#, std::fs::read_to_string(&out).unwrap());
    let cfg = SimConfig::from_json(&cfg).unwrap();
    assert_eq!(cfg.agent.balloon_family.unwrap(), fam);
}

#[test]
fn empty_label_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("family.json");
    for body in ["", r#"{"name": "red", "cells": {}}"#] {
        let labels = dir.path().join("labels.json");
        std::fs::write(&labels, body).unwrap();
        let o = sim(&["train-colors", "--images", dir.path().to_str().unwrap(), "--labels", labels.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "{body:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn unreadable_training_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("family.json");
    let missing = dir.path().join("nope.json");
    let o = sim(&["train-colors", "--images", "/nonexistent", "--labels", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let labels = dir.path().join("labels.json");
    std::fs::write(&labels, r#"{"name": "red", "cells": {"ghost.png": [[1, 1]]}}"#).unwrap();
    let o = sim(&["train-colors", "--images", dir.path().to_str().unwrap(), "--labels", labels.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn one_cell_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, r#"{"experiment": {"pickup": {"n_blimps": [1], "n_balloons": [1], "duration": 20}, "delivery": null}}"#).unwrap();
    p
}

#[test]
fn experiment_writes_one_row_per_seed_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = one_cell_config(dir.path());
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = sim(&["experiment", "--config", cfg.to_str().unwrap(), "--seeds", "3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "seed,n_blimps,n_balloons,attempts,successes,deliveries");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,1,1,"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!dir.path().join("a_delivery.csv").exists());
}

#[test]
fn experiment_writes_delivery_rows_next_to_the_pickup_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": {"pickup": {"n_blimps": [1], "n_balloons": [0], "duration": 5},
            "delivery": {"n_blimps": 2, "n_balloons": 2, "duration": 5}}}"#,
    )
    .unwrap();
    let out = dir.path().join("m.csv");
    let o = sim(&["experiment", "--config", cfg.to_str().unwrap(), "--seeds", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = std::fs::read_to_string(dir.path().join("m_delivery.csv")).unwrap();
    assert_eq!(d.lines().count(), 3);
    assert!(d.lines().nth(1).unwrap().starts_with("1,2,2,"));
}

#[test]
fn bad_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    for body in [
        r#"{"experiment": {"pickup": {"n_blimps": [1]}}, "colour": 1}"#,
        r#"{"experiment": {"pickup": {"n_blimps": [5]}}}"#,
        r#"{"experiment": {"pickup": {"n_balloons": [9]}}}"#,
        r#"{"world": {"arena": [20, 15, "high"]}}"#,
        "not json",
    ] {
        let cfg = dir.path().join("bad.json");
        std::fs::write(&cfg, body).unwrap();
        let o = sim(&["experiment", "--config", cfg.to_str().unwrap(), "--seeds", "1", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}");
    }
    let o = sim(&["experiment", "--config", "/nonexistent.json", "--seeds", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn schema_is_published() {
    let o = sim(&["schema"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["title"], "SimConfig");
    assert!(v["properties"]["experiment"].is_object());
}
