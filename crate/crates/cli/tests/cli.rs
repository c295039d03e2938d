use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aidecide"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/table1.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn blocks<'a>(report: &'a Value, kind: &str) -> Vec<&'a Value> {
    report["results"].as_array().unwrap().iter().filter(|b| b["block"] == kind).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn evaluate_reports_table_one() {
    let out = run(&["evaluate", "--input", fixture().to_str().unwrap(), "--l01", "1"]);
    let r = json(&out);
    let ag = &blocks(&r, "agreement")[0];
    assert_eq!(ag["control"]["counts"], serde_json::json!([[510, 195], [89, 149]]));
    assert_eq!(ag["treated"]["counts"], serde_json::json!([[543, 162], [70, 173]]));
    assert!((ag["control"]["agreement"].as_f64().unwrap() - 659.0 / 943.0).abs() < 1e-12);
    let est = blocks(&r, "estimate");
    let mis = est.iter().find(|b| b["metric"] == "misclass_diff").expect("misclass block");
    let risk = est.iter().find(|b| b["metric"] == "risk").unwrap();
    // At l01 = 1 the risk difference is the misclassification difference.
    assert_eq!(mis["beta_hat"], risk["beta_hat"]);
    for key in ["metric", "l01", "beta_hat", "se", "ci_low", "ci_high", "n", "subgroup", "config"] {
        assert!(mis.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["dataset"]["n"], 1891);
}

#[test]
fn prefer_echoes_the_grid() {
    let out = run(&["prefer", "--input", fixture().to_str().unwrap(), "--alpha", "0.05"]);
    let r = json(&out);
    let p = blocks(&r, "preference");
    assert_eq!(p.len(), 3);
    for b in p {
        assert_eq!(b["grid"], "400 log-spaced in [0.01,100]");
        assert_eq!(b["points"].as_array().unwrap().len(), 400);
        assert!(b["runs"].as_array().unwrap().iter().all(|r| r.get("label").is_some() && r.get("l01_min").is_some()));
    }
}

#[test]
fn bounds_blocks_have_the_documented_fields() {
    let r = json(&run(&["bounds", "--input", fixture().to_str().unwrap(), "--l01", "0.5", "--l01", "3"]));
    let b = blocks(&r, "bounds");
    assert_eq!(b.len(), 4);
    for key in ["comparison", "z", "l01", "L", "U", "se_L", "se_U", "im_low", "im_high", "width", "width_formula", "flags"] {
        assert!(b[0].get(key).is_some(), "missing {key}");
    }
    assert!(b.iter().all(|b| b["im_low"].as_f64() <= b["L"].as_f64()));
}

#[test]
fn reports_replay_from_their_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["bounds", "--input", fixture().to_str().unwrap(), "--l01", "0.3", "--seed", "5"]);
    let first = out.stdout.clone();
    let saved = write(dir.path(), "report.json", std::str::from_utf8(&first).unwrap());
    let again = run(&["bounds", "--config", saved.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(first, again.stdout);
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = run(&["oracle-check", "--populations", "30", "--seed", "7"]);
    let b = run(&["oracle-check", "--populations", "30", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["results"][0]["passed"], true);
}

#[test]
fn simulate_then_analyse() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.json");
    let cfg = write(dir.path(), "sim.toml", "[simulate.dgp]\nwith_scores = true\nn_strata = 12\nn = 3000\n");
    let s = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "2"]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let cases = dir.path().join("sim.cases.csv");
    let pop = dir.path().join("sim.population.json");
    assert!(cases.exists() && pop.exists());

    let check = json(&run(&["oracle-check", "--population", pop.to_str().unwrap()]));
    assert_eq!(check["results"][0]["populations"], 1);
    assert_eq!(check["results"][0]["passed"], true);

    let r = json(&run(&["learn-policy", "--input", cases.to_str().unwrap(), "--kind", "follow", "--direction", "decreasing"]));
    let p = blocks(&r, "policy");
    assert_eq!(p.len(), 1);
    assert_eq!(p[0]["kind"], "follow");
    assert_eq!(p[0]["cell_counts"].as_array().unwrap().len(), 72);
}

#[test]
fn subgroups_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("z,d,a,y,x_sex\n");
    for i in 0..400 {
        csv.push_str(&format!("{},{},{},{},{}\n", i % 2, (i / 3) % 2, (i / 5) % 2, (i / 7) % 2, ["f", "m"][(i / 11) % 2]));
    }
    let data = write(dir.path(), "d.csv", &csv);
    let cfg = write(
        dir.path(),
        "c.toml",
        "subgroup_fit = \"refit\"\n[schema]\ncovariates = [{ name = \"sex\", levels = [\"f\", \"m\"] }]\nsubgroups = [{ name = \"women\", predicate = { is = { covariate = \"sex\", level = \"f\" } } }]\n",
    );
    let r = json(&run(&["evaluate", "--input", data.to_str().unwrap(), "--config", cfg.to_str().unwrap()]));
    let sub: Vec<_> = blocks(&r, "estimate").into_iter().filter(|b| b["subgroup"] == "women").collect();
    assert_eq!(sub.len(), 2);
    assert_eq!(sub[0]["config"]["subgroup_fit"], "refit");
    let bad = run(&["evaluate", "--input", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--subgroup", "men"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("z,d,a\n0,0,0\n1,0,0\n", 3),
        ("z,d,a,y,extra\n0,0,0,0,1\n1,0,0,0,1\n", 2),
        ("z,d,a,y\n0,0,0,2\n1,0,0,0\n", 3),
        ("z,d,a,y\n1,0,0,0\n1,0,0,1\n", 3),
    ];
    for (i, (text, code)) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("{i}.csv"), text);
        let out = run(&["evaluate", "--input", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(*code), "case {i}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let f = fixture();
    assert_eq!(run(&["evaluate", "--input", f.to_str().unwrap(), "--alpha", "0.7"]).status.code(), Some(2));
    assert_eq!(run(&["evaluate"]).status.code(), Some(2));
    assert_eq!(run(&["evaluate", "--input", "/nonexistent.csv"]).status.code(), Some(3));
    let cfg = write(dir.path(), "bad.toml", "alpah = 0.1\n");
    assert_eq!(run(&["evaluate", "--input", f.to_str().unwrap(), "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    // Logistic fit with a single iteration cannot converge.
    let cfg = write(dir.path(), "nc.toml", "[nuisance]\npropensity = { mode = \"estimated\" }\nmodel = { kind = \"logistic\", ridge = 1e-6, max_iter = 1 }\n");
    let sim = dir.path().join("s.json");
    assert!(run(&["simulate", "--out", sim.to_str().unwrap()]).status.success());
    let data = dir.path().join("s.cases.csv");
    let out = run(&["evaluate", "--input", data.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn timings_are_opt_in() {
    let f = fixture();
    let plain = json(&run(&["evaluate", "--input", f.to_str().unwrap()]));
    assert!(plain.get("timings").is_none());
    let timed = json(&run(&["evaluate", "--input", f.to_str().unwrap(), "--timings"]));
    assert!(timed["timings"]["nuisance"].as_f64().is_some());
}

#[test]
fn text_rendering_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("r.txt");
    let f = fixture();
    assert!(run(&["evaluate", "--input", f.to_str().unwrap(), "--text", text.to_str().unwrap()]).status.success());
    let s = std::fs::read_to_string(text).unwrap();
    assert!(s.contains("difference 0.0564"), "{s}");
}
