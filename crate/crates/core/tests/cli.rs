use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use capsys::corpus;
use serde_json::Value;

const BXB1: &str = r#"{"type":"lagrangian_product","p_vertices":[[1,1],[1,-1],[-1,1],[-1,-1]],"q_vertices":[[1,0],[0,1],[-1,0],[0,-1]]}"#;

fn capsys(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capsys"))
        .args(args)
        .env_remove("CAPSYS_SEED")
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest(dir: &Path) -> Value {
    read_json(&dir.join("manifest.json"))
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in [
        None,
        Some("capacity"),
        Some("systole"),
        Some("index"),
        Some("zoll"),
        Some("john"),
        Some("check"),
        Some("demo"),
    ] {
        let mut args: Vec<&str> = sub.into_iter().collect();
        args.push("--help");
        let out = capsys(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let o = out_dir.to_str().unwrap();
    assert_eq!(capsys(&["capacity", "--bogus"]).status.code(), Some(2));
    assert_eq!(capsys(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(capsys(&["capacity", "--out", o]).status.code(), Some(2));
    assert_eq!(
        capsys(&[
            "capacity",
            "--ellipsoid",
            "1,1",
            "--polydisc",
            "1,2",
            "--out",
            o
        ])
        .status
        .code(),
        Some(2)
    );
    let zoll = capsys(&["zoll", "--polydisc", "1,2", "--out", o]);
    assert_eq!(zoll.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&zoll.stderr).contains("--polydisc"));
    assert_eq!(
        capsys(&["capacity", "--ellipsoid", "1,1", "--modes", "0", "--out", o])
            .status
            .code(),
        Some(2)
    );
    assert!(!out_dir.join("manifest.json").exists());
}

#[test]
fn malformed_body_reports_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let body = tmp.path().join("bad.json");
    fs::write(
        &body,
        "{\n  \"type\": \"ellipsoid\",\n  \"a\": [1, 1,]\n}\n",
    )
    .unwrap();
    let out = capsys(&[
        "capacity",
        "--body",
        body.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3 column"), "{err}");
    let unknown = tmp.path().join("unknown.json");
    fs::write(&unknown, r#"{"type":"sphere","r":1}"#).unwrap();
    let out = capsys(&[
        "index",
        "--body",
        unknown.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn index_of_ball_and_polydisc() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(
        capsys(&["index", "--ellipsoid", "1,1", "--out", a.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let v = read_json(&a.join("index.json"));
    assert_eq!(v["index"], 2);
    assert_eq!(v["generalized_zoll"], true);
    assert_eq!(v["bounds"]["general"], 32);
    let b = tmp.path().join("b");
    assert_eq!(
        capsys(&["index", "--polydisc", "1,2", "--out", b.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let v = read_json(&b.join("index.json"));
    assert_eq!(v["index"], 1);
    assert_eq!(v["generalized_zoll"], false);
    let c = tmp.path().join("c");
    let body = tmp.path().join("bxb1.json");
    fs::write(&body, BXB1).unwrap();
    assert_eq!(
        capsys(&[
            "index",
            "--body",
            body.to_str().unwrap(),
            "--out",
            c.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    let v = read_json(&c.join("index.json"));
    assert!(v["index"].is_null());
    assert_eq!(v["index_bound"], 8);
}

#[test]
fn capacity_closed_form_and_numeric() {
    let tmp = tempfile::tempdir().unwrap();
    let body = tmp.path().join("ball4.json");
    fs::write(&body, r#"{"type":"ellipsoid","a":[1,1]}"#).unwrap();
    let a = tmp.path().join("a");
    assert_eq!(
        capsys(&[
            "capacity",
            "--body",
            body.to_str().unwrap(),
            "--out",
            a.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    let v = read_json(&a.join("capacity.json"));
    assert_eq!(v["values"][0].as_f64(), Some(1.0));
    assert_eq!(v["provenance"][0], "closed_form");
    let b = tmp.path().join("b");
    let out = capsys(&[
        "capacity",
        "--body",
        body.to_str().unwrap(),
        "--numeric",
        "--modes",
        "8",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&b.join("capacity.json"));
    assert!((v["values"][0].as_f64().unwrap() - 1.0).abs() < 1e-2);
    let s = read_json(&b.join("systole.json"));
    assert!((s["T"].as_f64().unwrap() - 1.0).abs() < 1e-2);
    assert_eq!(s["loop_csv"], "systole.csv");
    let csv = fs::read_to_string(b.join("systole.csv")).unwrap();
    assert!(csv.starts_with("t,x1,y1,x2,y2\n"));
    assert_eq!(csv.lines().count(), 1 + 64);
    let svg = fs::read_to_string(b.join("systole.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("(x2, y2)"));
}

#[test]
fn manifest_lists_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(
        capsys(&[
            "systole",
            "--ellipsoid",
            "1,2",
            "--modes",
            "6",
            "--starts",
            "3",
            "--seed",
            "5",
            "--out",
            o
        ])
        .status
        .code(),
        Some(0)
    );
    let m = manifest(&out);
    assert_eq!(m["command"], "systole");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["modes"], 6);
    let mut listed: Vec<String> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    listed.push("manifest.json".into());
    listed.sort();
    let mut present: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    present.sort();
    assert_eq!(listed, present);
    let systoles = read_json(&out.join("systoles.json"));
    assert_eq!(systoles.as_array().unwrap().len(), 3);
}

#[test]
fn seed_sources_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>, dir: &str| {
        let out = tmp.path().join(dir);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_capsys"));
        cmd.args([
            "index",
            "--ellipsoid",
            "1,1",
            "--out",
            out.to_str().unwrap(),
        ])
        .args(extra);
        match env {
            Some(s) => cmd.env("CAPSYS_SEED", s),
            None => cmd.env_remove("CAPSYS_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        manifest(&out)["seed"].as_u64().unwrap()
    };
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 7}"#).unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(run(&[], None, "a"), 0);
    assert_eq!(run(&[], Some("3"), "b"), 3);
    assert_eq!(run(&["--config", c], Some("3"), "c"), 7);
    assert_eq!(run(&["--config", c, "--seed", "9"], Some("3"), "d"), 9);
}

#[test]
fn zoll_on_e12_is_not_generalized_zoll() {
    let tmp = tempfile::tempdir().unwrap();
    let body = tmp.path().join("e12.json");
    fs::write(&body, r#"{"type":"ellipsoid","a":[1,2]}"#).unwrap();
    let out = tmp.path().join("out");
    let o = capsys(&[
        "zoll",
        "--body",
        body.to_str().unwrap(),
        "--modes",
        "8",
        "--starts",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = read_json(&out.join("zoll.json"));
    assert_eq!(v["generalized_zoll"], false);
    assert_eq!(v["clusters"].as_array().unwrap().len(), 1);
    assert!(v["coverage"].as_f64().unwrap() <= 0.2);
    assert_eq!(v["clusters"][0]["loop_csv"], "cluster_000.csv");
    assert!(out.join("cluster_000.csv").exists() && out.join("clusters.svg").exists());
}

#[test]
fn john_and_check() {
    let tmp = tempfile::tempdir().unwrap();
    let body = tmp.path().join("bxb1.json");
    fs::write(&body, BXB1).unwrap();
    let b = body.to_str().unwrap();
    let j = tmp.path().join("j");
    assert_eq!(
        capsys(&["john", "--body", b, "--out", j.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let v = read_json(&j.join("john.json"));
    assert!(v["c1_bound"].as_f64().unwrap() >= 3.92);
    assert_eq!(v["sandwich"]["passed"], true);
    assert_eq!(v["index_bound"], 8);
    assert_eq!(v["a_normal_form"].as_array().unwrap().len(), 2);

    let w = tmp.path().join("w");
    let demo = capsys(&["demo", "bxb1-w11", "--out", w.to_str().unwrap()]);
    assert_eq!(demo.status.code(), Some(0));
    let table = String::from_utf8_lossy(&demo.stdout);
    assert_eq!(table.matches("PASS").count(), 3, "{table}");
    assert_eq!(read_json(&w.join("bxb1_w11.json"))["all_passed"], true);
    let svg = fs::read_to_string(w.join("gamma_overlay.svg")).unwrap();
    assert!(svg.contains("gamma_4"));

    let c = tmp.path().join("c");
    let gamma = w.join("gamma.csv");
    let ok = capsys(&[
        "check",
        "--body",
        b,
        "--loop",
        gamma.to_str().unwrap(),
        "--tol",
        "1e-9",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    let v = read_json(&c.join("check.json"));
    assert!((v["T"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert_eq!(v["passed"], true);

    let off_grid = tmp.path().join("gamma_off.csv");
    let mut buf = Vec::new();
    corpus::bxb1_gamma_loop()
        .sample(1000, corpus::GENERIC_OFFSET)
        .unwrap()
        .write_csv(&mut buf)
        .unwrap();
    fs::write(&off_grid, buf).unwrap();
    let check = |window: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = capsys(&[
            "check",
            "--body",
            b,
            "--loop",
            off_grid.to_str().unwrap(),
            "--tol",
            "1e-9",
            "--action",
            "4",
            "--window",
            window,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(out.join("manifest.json").exists());
        o.status.code()
    };
    assert_eq!(check("2", "c2"), Some(0));
    assert_eq!(check("0", "c0"), Some(3));
}

#[test]
fn identical_artifacts_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for t in ["1", "3"] {
        let out = tmp.path().join(t);
        let o = capsys(&[
            "systole",
            "--ellipsoid",
            "1,2",
            "--modes",
            "6",
            "--starts",
            "5",
            "--threads",
            t,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        texts.push((
            fs::read(out.join("systoles.json")).unwrap(),
            fs::read(out.join("loop_004.csv")).unwrap(),
            fs::read(out.join("systole.svg")).unwrap(),
        ));
    }
    assert!(texts[0] == texts[1]);
}
