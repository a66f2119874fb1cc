use std::path::Path;
use std::process::{Command, Output};

use pairdesign::MatchSet;
use pairdesign_cli::io;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pairdesign"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

#[test]
fn design_pm_sorted_pairs_adjacent_values() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.csv", "id,age\na,30\nb,10\nc,40\nd,20\n");
    let out = run(&["design", "--input", "s.csv", "--method", "pm", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let matches = std::fs::read_to_string(dir.path().join("o/matches.csv")).unwrap();
    assert_eq!(matches, "pair,id_1,id_2,distance\n1,b,d,10\n2,a,c,10\n");
    let ids: Vec<String> = ["a", "b", "c", "d"].map(String::from).to_vec();
    let alloc = std::fs::read(dir.path().join("o/allocation.csv")).unwrap();
    let w = io::read_allocation(alloc.as_slice(), &ids).unwrap();
    // pairs (b,d) and (a,c) each get one treated subject
    assert_eq!(w.signs()[1] + w.signs()[3], 0);
    assert_eq!(w.signs()[0] + w.signs()[2], 0);
}

#[test]
fn design_is_reproducible_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let body: String = std::iter::once("id,x1,x2\n".to_string())
        .chain((0..20).map(|i| format!("s{i},{},{}\n", (i * 7 % 11) as f64 * 0.3, (i * 5 % 13) as f64)))
        .collect();
    write(dir.path(), "s.csv", &body);
    let mut outputs = Vec::new();
    for (seed, out) in [("5", "a"), ("5", "b"), ("6", "c")] {
        let o = run(&["--seed", seed, "design", "--input", "s.csv", "--method", "bcrd", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(dir.path().join(out).join("allocation.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0], outputs[2]);
}

#[test]
fn design_mahalanobis_pairs_for_several_covariates() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.csv", "id,x1,x2\na,0,0\nb,10,10\nc,0.1,0.2\nd,10.2,9.9\ne,5,-5\nf,5.1,-5.2\n");
    let out = run(&["design", "--input", "s.csv", "--method", "pm", "--format", "json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let pairs: Vec<(String, String)> = v["matches"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["id_1"].as_str().unwrap().to_string(), p["id_2"].as_str().unwrap().to_string()))
        .collect();
    let expect = [("a", "c"), ("b", "d"), ("e", "f")].map(|(x, y)| (x.to_string(), y.to_string()));
    assert_eq!(pairs, expect);
}

#[test]
fn design_block_eight_blocks_of_eight() {
    let dir = tempfile::tempdir().unwrap();
    let body: String = std::iter::once("id,x1\n".to_string())
        .chain((0..64).map(|i| format!("s{i},{}\n", (i * 37 % 64) as f64)))
        .collect();
    write(dir.path(), "s.csv", &body);
    let out = run(&["design", "--input", "s.csv", "--method", "block", "--blocks", "8", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let ids: Vec<String> = (0..64).map(|i| format!("s{i}")).collect();
    let blocks = std::fs::read(dir.path().join("o/blocks.csv")).unwrap();
    let p = io::read_blocks(blocks.as_slice(), &ids).unwrap();
    assert_eq!(p.sizes(), vec![8; 8]);
}

#[test]
fn design_rejects_bad_csv_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.csv", "id,x1\na,1\nb,x\nc,3\nd,4\n");
    write(dir.path(), "odd.csv", "id,x1\na,1\nb,2\nc,3\nd,4\ne,5\n");
    let out = run(&["design", "--input", "bad.csv", "--method", "pm"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
    let out = run(&["design", "--input", "odd.csv", "--method", "bcrd"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains('5'), "{}", stderr(&out));
}

#[test]
fn evaluate_reports_and_gap() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "half.csv", "id,p_t,p_c\na,0.5,0.5\nb,0.5,0.5\nc,0.5,0.5\nd,0.5,0.5\n");
    let out = run(&["evaluate", "--input", "half.csv", "--design", "bcrd,pm,block:2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    for d in v["designs"].as_array().unwrap() {
        assert_eq!(d["total"].as_f64().unwrap(), 0.25);
    }

    // corner v = (0, 0, 0, 2)
    write(dir.path(), "corner.csv", "id,p_t,p_c\na,0,0\nb,0,0\nc,0,0\nd,1,1\n");
    let out = run(&["evaluate", "--input", "corner.csv", "--design", "pm"], dir.path());
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["designs"][0]["quadratic_form"].as_f64().unwrap(), 4.0);

    // a matching that pairs the extremes is worse than complete randomization
    write(dir.path(), "lin.csv", "id,p_t,p_c\na,0.1,0.1\nb,0.3,0.3\nc,0.6,0.6\nd,0.9,0.9\n");
    write(dir.path(), "m.csv", "pair,id_1,id_2,distance\n1,a,d,0\n2,b,c,0\n");
    let out = run(&["evaluate", "--input", "lin.csv", "--matches", "m.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let m = &v["matches"];
    assert!(m["bcrd_beats_pm"].as_bool().unwrap());
    assert!(m["gap_bcrd_minus_pm"].as_f64().unwrap() < 0.0);
    assert!(m["r_squared"].as_f64().unwrap() < m["bcrd_expected_r_squared"].as_f64().unwrap());
    let designs = v["designs"].as_array().unwrap();
    let total = |name: &str| designs.iter().find(|d| d["design"] == name).unwrap()["total"].as_f64().unwrap();
    let gap = total("bcrd") - total("matches");
    assert!((gap - m["gap_bcrd_minus_pm"].as_f64().unwrap()).abs() < 1e-15);
}

#[test]
fn evaluate_constant_v_gives_equal_totals() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.csv", "id,p_t,p_c\na,0.7,0.3\nb,0.2,0.8\nc,0.4,0.6\nd,0.9,0.1\ne,0.5,0.5\nf,0.0,1.0\n");
    let out = run(&["evaluate", "--input", "c.csv", "--design", "bcrd,pm,block:3,random_pm"], dir.path());
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let totals: Vec<f64> = v["designs"].as_array().unwrap().iter().map(|d| d["total"].as_f64().unwrap()).collect();
    assert!(totals.iter().all(|t| (t - totals[0]).abs() < 1e-15), "{totals:?}");
}

#[test]
fn evaluate_rejects_out_of_range_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "p.csv", "id,p_t,p_c\na,0.5,0.5\nb,0.5,-0.1\nc,0.5,0.5\nd,0.5,0.5\n");
    let out = run(&["evaluate", "--input", "p.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

const SIM: &str = "n_subjects = [32]\nd = 1\nbeta0 = 4.0\nbeta = [2.0]\nbeta_t = 1.0\n\
                   designs = [\"bcrd\", \"block:8\", \"pm\"]\n";

#[test]
fn simulate_is_deterministic_and_long_format() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", &format!("{SIM}n_sim = 2000\nestimators = [\"risk_difference\", \"lor\"]\n"));
    let a = run(&["--seed", "9", "simulate", "--config", "sim.toml"], dir.path());
    let b = run(&["--seed", "9", "simulate", "--config", "sim.toml"], dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("design,estimator,n,d,mean_estimate,mse,mc_se,excluded"));
    assert_eq!(lines.count(), 9);
    let c = run(&["--seed", "10", "simulate", "--config", "sim.toml"], dir.path());
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_single_replicate_has_infinite_se() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", &format!("{SIM}n_sim = 1\n"));
    let out = run(&["simulate", "--config", "sim.toml", "--format", "json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    for row in v["rows"].as_array().unwrap() {
        assert!(row["mc_se"].is_null(), "{row}");
        assert_eq!(row["replicates"], 1);
    }
    let csv = run(&["simulate", "--config", "sim.toml"], dir.path());
    assert!(stdout(&csv).lines().nth(1).unwrap().contains(",inf,"));
}

#[test]
fn simulate_names_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", &format!("{SIM}n_simulations = 10\n"));
    let out = run(&["simulate", "--config", "sim.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n_simulations"), "{}", stderr(&out));
}

#[test]
fn simulate_bootstrap_from_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("id,x1,x2,y\n");
    for i in 0..60 {
        let x1 = (i % 10) as f64 / 3.0 - 1.5;
        let x2 = ((i * 7) % 13) as f64 / 4.0 - 1.5;
        let y = u8::from((i * 31 % 17) as f64 / 17.0 < 1.0 / (1.0 + (-(0.2 + x1)).exp()));
        body.push_str(&format!("s{i},{x1},{x2},{y}\n"));
    }
    write(dir.path(), "trial.csv", &body);
    write(
        dir.path(),
        "boot.toml",
        "data = \"trial.csv\"\nn_subjects = [40, 60]\nbeta_t = 1.0\ndesigns = [\"bcrd\", \"pm\"]\n\
         estimators = [\"logistic\"]\nn_sim = 300\n",
    );
    let out = run(&["simulate", "--config", "boot.toml", "--format", "json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["model"]["beta"].as_array().unwrap().len(), 2);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["estimator"] == "logistic_beta_t" && r["d"] == 2));

    write(dir.path(), "big.toml", "data = \"trial.csv\"\nn_subjects = [80]\nbeta_t = 1.0\ndesigns = [\"pm\"]\n");
    let out = run(&["simulate", "--config", "big.toml"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn verify_selected_check_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--only", "sorted_pairs", "--n", "8", "--out", "r"], dir.path());
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 1, "{text}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);

    let out = run(&["verify", "--only", "sigma", "--n", "4", "--inject-fault", "wrong-sigma"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
    assert!(stdout(&out).contains("witness"));

    let out = run(&["verify", "--only", "nonsense"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn emitted_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.csv", "id,x1,x2\np1,0.5,3\np2,1.5,1\np3,-2,0\np4,0.25,2\np5,4,-1\np6,1,1\n");
    let out = run(&["design", "--input", "s.csv", "--method", "pm", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let ids: Vec<String> = (1..=6).map(|i| format!("p{i}")).collect();
    let bytes = std::fs::read(dir.path().join("o/matches.csv")).unwrap();
    let (m, dist): (MatchSet, Vec<f64>) = io::read_matches(bytes.as_slice(), &ids).unwrap();
    let mut again = Vec::new();
    io::write_matches(&mut again, &ids, &m, &dist).unwrap();
    assert_eq!(again, bytes);
    let bytes = std::fs::read(dir.path().join("o/allocation.csv")).unwrap();
    let w = io::read_allocation(bytes.as_slice(), &ids).unwrap();
    let mut again = Vec::new();
    io::write_allocation(&mut again, &ids, &w).unwrap();
    assert_eq!(again, bytes);
}
