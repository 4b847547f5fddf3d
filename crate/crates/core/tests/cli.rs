use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

fn base_config() -> Value {
    json!({
        "schema": "fairprice/v1",
        "market": {"slices": [
            {"c": 0, "alpha": 0.5, "weight": 0.5,
             "l": {"family": "exponential", "mean": 1}, "h": {"family": "exponential", "mean": 3}},
            {"c": 2, "alpha": 0.5, "weight": 0.5,
             "l": {"family": "exponential", "mean": 1}, "h": {"family": "exponential", "mean": 3}}
        ]},
        "sweep": {"alpha": [0.3, 0.5], "gamma": [2, 4], "gains": [0.4, 1]},
        "oracle_n": 100
    })
}

fn c1_config() -> Value {
    let mut cfg = base_config();
    cfg["market"]["slices"][1]["c"] = json!(0.1);
    cfg
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_fairprice"))
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    status.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    assert_eq!(run("solve", &cfg, &out, &[]), 0);

    let kappa = read_json(&out.join("kappa.json"));
    assert_eq!(kappa[0]["cutoffs"]["region"], "C1");
    assert_eq!(kappa[0]["cutoffs"]["k"].as_array().unwrap().len(), 5);
    assert_eq!(kappa[1]["cutoffs"]["region"], "C3");

    let rules = read_json(&out.join("rule.json"));
    assert_eq!(rules[0]["rule"]["name"], "p_star");
    assert!(rules[0]["nondiscrimination_gap"].as_f64().unwrap() <= 1e-6);
    let duals = read_json(&out.join("duals.json"));
    assert_eq!(duals[0]["certificate"]["regime"], "c1");
    assert_eq!(duals[1]["certificate"]["regime"], "degenerate");

    let welfare = std::fs::read_to_string(out.join("welfare.csv")).unwrap();
    let lines: Vec<&str> = welfare.lines().collect();
    assert_eq!(lines[0], "slice,c,weight,region,profit,cs_l,cs_h,wl_l,wl_h,gains,share");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("total,"));
    assert!(!welfare.contains('\r'));
    assert!(!out.join("error.json").exists());
}

#[test]
fn empty_market_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["market"]["slices"] = json!([]);
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    assert_eq!(run("solve", &path, &out, &[]), 2);
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["exit_code"], 2);
    assert!(err["message"].as_str().unwrap().contains("slices"));
}

#[test]
fn unknown_keys_and_bad_args_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["market"]["slices"][0]["colour"] = json!("red");
    let path = write_config(dir.path(), &cfg);
    assert_eq!(run("solve", &path, &dir.path().join("a"), &[]), 2);

    let path = write_config(dir.path(), &base_config());
    assert_eq!(run("solve", &path, &dir.path().join("b"), &["--oracle-n", "3"]), 2);
    assert_eq!(run("bogus", &path, &dir.path().join("c"), &[]), 2);
}

#[test]
fn tampered_cutoffs_fail_verification_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &c1_config());
    let out = dir.path().join("solved");
    assert_eq!(run("solve", &path, &out, &[]), 0);
    let mut k: Vec<f64> = serde_json::from_value(read_json(&out.join("kappa.json"))[0]["cutoffs"]["k"].clone()).unwrap();

    let mut cfg = c1_config();
    cfg["market"]["slices"][0]["kappa"] = json!(k);
    let path = write_config(dir.path(), &cfg);
    assert_eq!(run("verify", &path, &dir.path().join("honest"), &[]), 0);
    let oracle = std::fs::read_to_string(dir.path().join("honest/oracle.csv")).unwrap();
    assert!(oracle.starts_with("slice,region,n,assignment_value,analytic_value,relative_gap,support_agreement\n"));

    k[0] += 0.01;
    cfg["market"]["slices"][0]["kappa"] = json!(k);
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("tampered");
    assert_eq!(run("verify", &path, &out, &[]), 4);
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["check"], "complementary_slackness");
    assert_eq!(err["slice"], 0);
    assert!(err["witness"]["gap"].as_f64().unwrap() > 1e-6);
    assert!(err["witness"]["v_l"].is_number() && err["witness"]["v_h"].is_number());
}

#[test]
fn cutoffs_for_a_non_c1_slice_are_out_of_scope() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["market"]["slices"][1]["kappa"] = json!([1, 2, 3, 4, 5]);
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    assert_eq!(run("solve", &path, &out, &[]), 2);
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["kind"], "RegionViolation");
    assert_eq!(err["slices"], json!([1]));
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &c1_config());
    for command in ["solve", "sweep", "outcomes", "figures"] {
        let a = dir.path().join(format!("{command}-a"));
        let b = dir.path().join(format!("{command}-b"));
        assert_eq!(run(command, &path, &a, &["--seed", "11"]), 0, "{command}");
        let status = Command::new(env!("CARGO_BIN_EXE_fairprice"))
            .args([command, "--config", path.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "11"])
            .env("FAIRPRICE_THREADS", "1")
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        for entry in walk(&a) {
            let rel = entry.strip_prefix(&a).unwrap();
            assert_eq!(std::fs::read(&entry).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{}", rel.display());
        }
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &c1_config());
    let out = dir.path().join("out");
    assert_eq!(run("sweep", &path, &out, &[]), 0);
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    // 2 slices × 2 α × 2 γ.
    assert_eq!(sweep.lines().count(), 1 + 8);
    let bounds = std::fs::read_to_string(out.join("share_bounds.csv")).unwrap();
    let weak: f64 = bounds.lines().find(|l| l.starts_with("0.4,0.5,")).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((weak - 7.0 / 9.0).abs() < 1e-15);
}

#[test]
fn figures_reproduce_orderings() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = c1_config();
    cfg["sweep"] = json!({"alpha": [0.25, 0.5, 0.75]});
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    assert_eq!(run("figures", &path, &out, &[]), 0);

    let mut reader = csv::Reader::from_path(out.join("figures/profit_share.csv")).unwrap();
    let rows: Vec<(f64, String, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].to_string(), r[4].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 18 * 5);
    for chunk in rows.chunks(5) {
        let share = |name: &str| chunk.iter().find(|r| r.1 == name).unwrap().2;
        assert!(share("p_star") >= 0.95, "m = {}", chunk[0].0);
        assert!(share("uniform") < 0.40);
        for other in ["p_ass", "p_anti_q_star", "p_anti_1", "uniform"] {
            assert!(share("p_star") >= share(other) - 1e-9);
        }
    }

    let mut reader = csv::Reader::from_path(out.join("figures/bbm_triangle.csv")).unwrap();
    let mut vertices: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for r in reader.records() {
        let r = r.unwrap();
        vertices.entry(r[1].to_string()).or_default().push((r[2].parse().unwrap(), r[3].parse().unwrap()));
    }
    for name in ["efficient_extraction", "uniform_price", "uniform_price_all_buy"] {
        let v = &vertices[name];
        assert_eq!(v.len(), 5);
        assert!(v.iter().all(|x| (x.0 - v[0].0).abs() < 1e-9 && (x.1 - v[0].1).abs() < 1e-9), "{name}");
    }
    assert_eq!(vertices["efficient_extraction"][0], (3.25, 0.0));
    assert!(out.join("figures/cs_by_group.csv").exists());
    assert!(out.join("figures/profit_share_bound.csv").exists());
}

#[test]
fn figures_reject_out_of_scope_slices() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    assert_eq!(run("figures", &path, &out, &[]), 2);
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["kind"], "RegionViolation");
    assert_eq!(err["slices"], json!([1]));
}

#[test]
fn outcomes_hold_profit_and_h_surplus() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &c1_config());
    let out = dir.path().join("out");
    assert_eq!(run("outcomes", &path, &out, &[]), 0);
    let mut reader = csv::Reader::from_path(out.join("outcomes.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        reader.records().map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 10);
    for slice in rows.chunks(5) {
        assert_eq!(slice[0][3], 0.0);
        for r in slice {
            assert!((r[4] - slice[4][4]).abs() <= 0.01 * slice[4][4]);
            assert!((r[5] - slice[4][5]).abs() <= 0.01 * slice[4][5]);
        }
    }

    let path = write_config(dir.path(), &base_config());
    assert_eq!(run("outcomes", &path, &dir.path().join("bad"), &[]), 2);
}

#[test]
fn command_in_config_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = c1_config();
    cfg["command"] = json!("sweep");
    let path = write_config(dir.path(), &cfg);
    assert_eq!(run("solve", &path, &dir.path().join("a"), &[]), 2);
    assert_eq!(run("sweep", &path, &dir.path().join("b"), &[]), 0);
}
