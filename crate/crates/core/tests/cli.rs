use std::path::Path;
use std::process::{Command, Output};

fn antfis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antfis"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = antfis(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &[&str] = &["--iters", "8", "--rules", "4", "--archive", "8"];

fn train_args<'a>(threads: &'a str, out: &'a str) -> Vec<&'a str> {
    let mut a = vec!["train", "--data", "d.csv", "--stage", "3", "--ants", "6", "--seed", "5"];
    a.extend_from_slice(SMALL);
    a.extend_from_slice(&["--threads", threads, "--out", out]);
    a
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let msg = ok(d, &["gen-data", "--n", "300", "--seed", "3", "--out", "d.csv"]);
    assert!(msg.contains("300 rows"));
    let csv = std::fs::read_to_string(d.join("d.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert!(csv.starts_with("x,y,z,pressure,air_superficial_velocity,air_volume_fraction\n"));

    let line = ok(d, &train_args("1", "m1.txt"));
    assert!(line.starts_with("train_R=") && line.contains(" test_R="), "{line}");
    ok(d, &train_args("3", "m3.txt"));
    let m1 = std::fs::read(d.join("m1.txt")).unwrap();
    assert_eq!(m1, std::fs::read(d.join("m3.txt")).unwrap());

    let all = ok(d, &["eval", "--model", "m1.txt", "--data", "d.csv"]);
    assert!(all.trim_end().ends_with("n=300"), "{all}");
    let test = ok(
        d,
        &["eval", "--model", "m1.txt", "--data", "d.csv", "--partition", "test"],
    );
    assert!(test.trim_end().ends_with("n=90"), "{test}");
    let train_r = line.split_whitespace().next().unwrap().trim_start_matches("train_R=");
    let train_eval = ok(
        d,
        &["eval", "--model", "m1.txt", "--data", "d.csv", "--partition", "train"],
    );
    assert!(
        train_eval.starts_with(&format!("R={train_r} ")),
        "{train_eval} vs {line}"
    );

    std::fs::write(d.join("pts.csv"), "x,y,z\n0,0,1.5\n0.1,0.05,0.2\n").unwrap();
    ok(
        d,
        &[
            "predict", "--model", "m1.txt", "--points", "pts.csv", "--out", "pred.csv",
        ],
    );
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines[0], "x,y,z,prediction");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let y: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&y));
    }

    ok(
        d,
        &["report", "--model", "m1.txt", "--data", "d.csv", "--out-prefix", "r"],
    );
    let tr = std::fs::read_to_string(d.join("r_scatter_train.csv")).unwrap();
    let te = std::fs::read_to_string(d.join("r_scatter_test.csv")).unwrap();
    let conv = std::fs::read_to_string(d.join("r_convergence.csv")).unwrap();
    assert!(tr.starts_with("target,prediction\n"));
    assert_eq!(tr.lines().count(), 211);
    assert_eq!(te.lines().count(), 91);
    assert!(conv.starts_with("iteration,best_rmse\n"));
    let best: Vec<f64> = conv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(best.len(), 8);
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn sweep_file_is_thread_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--n", "200", "--seed", "4", "--out", "d.csv"]);
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out = format!("s{threads}.csv");
        let mut a = vec![
            "sweep",
            "--data",
            "d.csv",
            "--stages",
            "1-2",
            "--ants",
            "4,6",
            "--threads",
            threads,
        ];
        a.extend_from_slice(SMALL);
        a.extend_from_slice(&["--out", &out]);
        let stdout = ok(d, &a);
        assert_eq!(stdout.lines().count(), 4);
        files.push(std::fs::read(d.join(&out)).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    assert!(text.starts_with("stage,n_ants,train_r,test_r,train_rmse,test_rmse\n1,4,"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn gen_data_config_and_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("field.cfg"), "# taller column\nheight=3.0\nnoise_sd=0.05\n").unwrap();
    ok(
        d,
        &[
            "gen-data",
            "--n",
            "50",
            "--config",
            "field.cfg",
            "--noise-sd",
            "0",
            "--out",
            "a.csv",
        ],
    );
    ok(
        d,
        &[
            "gen-data",
            "--n",
            "50",
            "--config",
            "field.cfg",
            "--noise-sd",
            "0",
            "--out",
            "b.csv",
        ],
    );
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.csv")).unwrap());
    let zmax = a
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(zmax > 2.6 && zmax <= 3.0);

    std::fs::write(d.join("bad.cfg"), "colour=blue\n").unwrap();
    let out = antfis(d, &["gen-data", "--config", "bad.cfg", "--out", "c.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.starts_with("error: synthfield:") && err.lines().count() == 1,
        "{err}"
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(antfis(d, &["train", "--nope"]).status.code(), Some(1));
    assert_eq!(
        antfis(d, &["eval", "--model", "missing.txt", "--data", "x.csv"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(d.join("bad.csv"), "a,b\n1,2\n").unwrap();
    let out = antfis(d, &["train", "--data", "bad.csv", "--out", "m.txt"]);
    assert_eq!(out.status.code(), Some(2));

    ok(d, &["gen-data", "--n", "40", "--out", "d.csv"]);
    let out = antfis(d, &["train", "--data", "d.csv", "--p", "1.5", "--out", "m.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let out = antfis(d, &["train", "--data", "d.csv", "--ants", "0", "--out", "m.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("m.txt").exists());

    let mut a = train_args("1", "m.txt");
    a[2] = "d.csv";
    ok(d, &a);
    std::fs::write(d.join("pts.csv"), "x,y\n0,0\n").unwrap();
    let out = antfis(
        d,
        &["predict", "--model", "m.txt", "--points", "pts.csv", "--out", "p.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("x,y,z"));
}
