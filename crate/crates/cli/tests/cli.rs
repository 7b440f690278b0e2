use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tfsr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfsr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = tfsr(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err_json(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = tfsr(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let v = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    (out.status.code().unwrap(), v)
}

#[test]
fn generation_and_solve_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let g = ok_json(d, &["gen-matrix", "--m", "24", "--n", "48", "--dist", "gaussian", "--seed", "1", "--out", "A.mat"]);
    assert_eq!(g["m"], 24);
    assert!(d.join("A.mat").exists() && d.join("A.mat.json").exists());
    let header = std::fs::read(d.join("A.mat")).unwrap();
    assert!(header.starts_with(b"tfsr-matrix v1 24 48\n"));

    ok_json(d, &["gen-dict", "--n", "48", "--d", "96", "--seed", "2", "--out", "D.json"]);
    let r = ok_json(
        d,
        &[
            "solve", "--operator", "A.mat", "--dict", "D.json", "--sparsity", "2", "--snr", "40", "--seed", "3",
            "--save-instance", "inst", "--alg", "ista", "--fidelity", "tf", "--lambda", "0.01", "--x-out", "x.mat",
            "--trace",
        ],
    );
    assert_eq!(r["algorithm"], "ista");
    assert_eq!(r["fidelity"], "tf");
    assert!(r["rsnr_db"].as_f64().is_some());
    assert!(r["objective_trace"].as_array().unwrap().len() >= 2);
    assert!(d.join("x.mat").exists());

    // Re-solving the saved instance reproduces the RSNR.
    let again = ok_json(
        d,
        &[
            "solve", "--operator", "A.mat", "--dict", "D.json", "--instance", "inst", "--alg", "ista", "--fidelity",
            "tf", "--lambda", "0.01",
        ],
    );
    assert_eq!(again["rsnr_db"], r["rsnr_db"]);

    let y = ok_json(
        d,
        &[
            "solve", "--operator", "A.mat", "--dict", "D.json", "--y", "inst/y.mat", "--alg", "loris", "--fidelity",
            "rtf", "--lambda", "0.01", "--out", "res.json",
        ],
    );
    assert!(y["rsnr_db"].is_null());
    assert!(d.join("res.json").exists());
}

#[test]
fn bench_is_byte_identical_across_thread_caps() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("small.cfg"),
        "n = 48\nm = 24\nd = 96\nsparsity_pcts = 2, 4\nsnr_dbs = 30\nalgorithms = ista, nesta\n\
         fidelities = ls, tf\nn_trials = 3\nmaster_seed = 5\nlambda = 0.01\nmax_iters = 100\n",
    )
    .unwrap();
    let mut csvs = Vec::new();
    for t in ["1", "2", "3"] {
        let out = Command::new(env!("CARGO_BIN_EXE_tfsr"))
            .current_dir(d)
            .env("TFSR_THREADS", t)
            .args(["bench", "--config", "small.cfg", "--output-dir", &format!("run{t}")])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["cells"], 8);
        csvs.push(std::fs::read(d.join(format!("run{t}/results.csv"))).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);

    let merged = ok_json(d, &["report", "run1/results.csv", "run2/results.csv", "--out", "merged.csv"]);
    assert_eq!(merged["rows"], 16);
}

#[test]
fn report_refuses_mixed_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let header = "method,fidelity,sparsity_pct,snr_db,mean_rsnr_db,std_rsnr_db,lambda,n_trials,config_hash,status\n";
    std::fs::write(d.join("a.csv"), format!("{header}ISTA,ls,1,30,20,1,0.01,3,aaaa,ok\n")).unwrap();
    std::fs::write(d.join("b.csv"), format!("{header}ISTA,ls,1,30,20,1,0.01,3,bbbb,ok\n")).unwrap();
    let (code, v) = err_json(d, &["report", "a.csv", "b.csv", "--out", "m.csv"]);
    assert_eq!(code, 1);
    assert_eq!(v["error"], "hash_mismatch");
}

#[test]
fn ric_bounds_and_whiteness_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok_json(d, &["gen-matrix", "--m", "6", "--n", "12", "--seed", "4", "--out", "A.mat"]);
    ok_json(d, &["gen-dict", "--n", "12", "--d", "16", "--seed", "1", "--out", "D.json"]);

    let r = ok_json(d, &["ric", "--operator", "A.mat", "--s", "2"]);
    assert_eq!(r["evaluated"], 66);
    let rb = ok_json(d, &["ric", "--operator", "A.mat", "--s", "2", "--norm", "bnorm", "--method", "monte-carlo", "--trials", "200"]);
    assert_eq!(rb["norm_kind"], "bnorm");
    let rd = ok_json(d, &["ric", "--operator", "A.mat", "--dict", "D.json", "--s", "2"]);
    assert_eq!(rd["dictionary_adapted"], true);

    let c = ok_json(d, &["bounds", "constants", "--set-size", "6", "--delta-hat", "0.56", "--c1", "0.75", "--c2", "0.234"]);
    assert!((c["eps_coeff"].as_f64().unwrap() - 16.97).abs() < 0.02);
    let o = ok_json(d, &["bounds", "optimize", "--set-size", "3", "--delta-hat", "0.56"]);
    assert_eq!(o["valid"], false);
    assert!(o["eps_coeff"].is_null());

    std::fs::write(d.join("base.csv"), "delta,c0,c1\n0.1,5.0,7.0\n").unwrap();
    let cv = ok_json(
        d,
        &[
            "bounds", "curves", "--compression", "0.1", "--grid", "0.2,0.1,0.3", "--m-over-s", "10", "--baseline",
            "base.csv", "--out", "curve.csv",
        ],
    );
    assert_eq!(cv["rows"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(d.join("curve.csv")).unwrap();
    assert!(csv.starts_with("delta,delta_hat,c0_tf,c1_tf,valid,c0_baseline,c1_baseline\n0.1,"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",5,7"));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(d.join("curve.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["c1_conversion"], "c1_tf = 2 * eta_coeff");

    let l = ok_json(d, &["bounds", "lemma", "--operator", "A.mat"]);
    assert_eq!(l["spec_norm_exceeds_one"], true);
    assert_eq!(l["status"], "certified");

    let w = ok_json(d, &["whiteness", "--operator", "A.mat", "--source", "isotropic", "--trials", "400"]);
    assert!(w["offdiag_ratio_b"].as_f64().unwrap() < w["offdiag_ratio_raw"].as_f64().unwrap());
    assert!(w["warning"].is_null());
}

#[test]
fn failures_emit_error_json() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (code, v) = err_json(d, &["gen-matrix", "--m", "5", "--n", "10", "--bogus", "--out", "x"]);
    assert_eq!(code, 2);
    assert_eq!(v["error"], "usage");

    let (_, v) = err_json(d, &["solve", "--operator", "missing.mat", "--alg", "ista", "--fidelity", "tf", "--lambda", "0.1", "--sparsity", "1"]);
    assert_eq!(v["error"], "io");
    assert!(v["message"].as_str().unwrap().contains("missing.mat"));

    std::fs::write(d.join("bad.cfg"), "n = 64\nwhat is this\n").unwrap();
    let (_, v) = err_json(d, &["bench", "--config", "bad.cfg"]);
    assert_eq!(v["error"], "config");

    let (_, v) = err_json(d, &["gen-matrix", "--m", "10", "--n", "5", "--out", "A.mat"]);
    assert_eq!(v["error"], "shape");

    let (_, v) = err_json(d, &["gen-matrix", "--m", "2", "--n", "5", "--dist", "cauchy", "--out", "A.mat"]);
    assert_eq!(v["error"], "usage");
}
