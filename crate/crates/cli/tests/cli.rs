use std::path::Path;
use std::process::{Command, Output};

fn pcshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcshape")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pcshape(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_attack_defend_eval_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.bin");
    let data = ["--classes", "sphere,box", "--train-per-class", "6", "--test-per-class", "4", "--points", "96"];
    let mut train = vec!["--seed", "3", "train", "--epochs", "2", "--out", s(&model)];
    train.extend(data);
    ok(&train);
    assert!(model.exists());

    let cloud = dir.path().join("sphere.xyz");
    let mesh = dir.path().join("sphere.off");
    ok(&["export", "--shape", "sphere", "--points", "96", "--out", s(&cloud), "--mesh-out", s(&mesh)]);
    assert_eq!(std::fs::read_to_string(&cloud).unwrap().lines().count(), 96);

    let adv = dir.path().join("adv.ply");
    let summary = ok(&[
        "attack", "--model", s(&model), "--input", s(&cloud), "--label", "0", "--attack", "gradient_projection",
        "--set", "iterations=3", "--surface", s(&mesh), "--out", s(&adv),
    ]);
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert!(v["hausdorff"].as_f64().unwrap() <= 0.1 + 1e-6, "{summary}");
    assert!(std::fs::read_to_string(&adv).unwrap().starts_with("ply"));

    let defended = dir.path().join("def.xyz");
    ok(&["defend", "--model", s(&model), "--input", s(&cloud), "--defense", "random_removal", "--remove", "16", "--out", s(&defended)]);
    assert_eq!(std::fs::read_to_string(&defended).unwrap().lines().count(), 80);

    let config = dir.path().join("exp.json");
    let json = serde_json::json!({
        "model": model,
        "attacks": [{"kind": "none"}, {"kind": "iter_grad_l2", "iterations": 3}],
        "defenses": [{"kind": "none"}, {"kind": "outlier_removal"}],
        "dataset": {"synthetic": {"classes": ["sphere", "box"], "train_per_class": 6, "test_per_class": 4, "points": 96}},
        "sample_limit": 4
    });
    std::fs::write(&config, json.to_string()).unwrap();
    let out_dir = dir.path().join("out");
    let csv = ok(&["eval", "--config", s(&config), "--output-dir", s(&out_dir)]);
    assert!(csv.starts_with("attack,defense,"));
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(std::fs::read_to_string(out_dir.join("results.csv")).unwrap(), csv);

    let sweep = ok(&["sweep", "--config", s(&config), "--parameter", "epsilon", "--values", "0.5,1"]);
    assert!(sweep.starts_with("parameter,value,attack,"));
    assert_eq!(sweep.lines().count(), 9);

    let bad = pcshape(&["sweep", "--config", s(&config), "--parameter", "gamma", "--values", "1"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("gamma"));
}

#[test]
fn missing_input_is_an_error() {
    let out = pcshape(&["export", "--off", "/nonexistent/mesh.off", "--out", "/tmp/x.xyz"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
