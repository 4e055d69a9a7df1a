use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_permahom");

const SMALL: &str = "\
shape.kind = sphere
shape.radius = 0.25
cell.n = 4
domain.Lx = 0.5
domain.epsilon = 0.25
domain.a_eps = 0.125 0.0625
domain.n_c = 4
darcy.gx = 8
unfold.trials = 3
";

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("PERMAHOM_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn config_errors_exit_with_2() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "bad.cfg", "shape.kind = sphere\nshape.colour = red\n");
    let o = run(&["cell", "--config", "bad.cfg", "--out", "out"], t.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("shape.colour"));

    write(t.path(), "tile.cfg", "shape.kind = sphere\nshape.radius = 0.25\ndomain.Lx = 1\ndomain.epsilon = 0.3\ndomain.a_eps = 0.125\n");
    let o = run(&["pipeline", "--config", "tile.cfg", "--out", "out"], t.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("domain.epsilon"));

    let o = run(&["cell", "--config", "missing.cfg", "--out", "out"], t.path());
    assert_eq!(code(&o), 2);
    let o = run(&["cell", "--out", "out"], t.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn non_convergence_exits_with_3_and_marks_the_stage() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "c.cfg",
        "shape.kind = sphere\nshape.radius = 0.25\ncell.n = 8\nsolver.max_outer = 1\nsolver.tol_mom = 1e-14\npipeline.stages = cell, k\n",
    );
    let o = run(&["pipeline", "--config", "c.cfg", "--out", "out"], t.path());
    assert_eq!(code(&o), 3);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(t.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["failed_stage"], "cell");
    assert!(!t.path().join("out/k/K.csv").exists());
}

#[test]
fn cell_and_k_only() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "c.cfg", "shape.kind = sphere\nshape.radius = 0.25\ncell.n = 8\npipeline.stages = cell, k\n");
    let o = run(&["pipeline", "--config", "c.cfg", "--out", "out", "--threads", "1"], t.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = t.path().join("out");
    assert!(out.join("k/K.csv").exists());
    assert!(!out.join("darcy").exists() && !out.join("dns").exists());
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let files = m["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "k/K.csv"));
    assert!(files.iter().all(|f| f["sha256"].as_str().unwrap().len() == 64));
}

#[test]
fn stages_rerun_from_upstream_files_reproduce_outputs() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "s.cfg", SMALL);
    let o = run(&["pipeline", "--config", "s.cfg", "--out", "out"], t.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = t.path().join("out");
    let report = fs::read_to_string(out.join("compare/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let before = tree(&out);

    for dir in ["k", "darcy", "compare", "verify-unfold"] {
        fs::remove_dir_all(out.join(dir)).unwrap();
    }
    for stage in ["k", "darcy", "compare", "verify-unfold"] {
        let o = run(&[stage, "--config", "s.cfg", "--out", "out"], t.path());
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(tree(&out), before);

    // Downstream stage without its inputs.
    let o = run(&["compare", "--config", "s.cfg", "--out", "fresh"], t.path());
    assert_ne!(code(&o), 0);

    // Standalone comparison; a doctored run fails the scaling audit.
    let o = run(&["compare", "--dns", "out/dns", "--darcy", "out/darcy", "--out", "r/report.csv"], t.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(t.path().join("r/report.csv")).unwrap(),
        fs::read(out.join("compare/report.csv")).unwrap()
    );
    let summary = out.join("dns/run_1/summary.csv");
    let text = fs::read_to_string(&summary).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "ratio_u").unwrap();
    let mut row: Vec<String> = lines[1].split(',').map(String::from).collect();
    row[col] = (row[col].parse::<f64>().unwrap() * 10.0).to_string();
    lines[1] = row.join(",");
    fs::write(&summary, lines.join("\n") + "\n").unwrap();
    let o = run(&["compare", "--dns", "out/dns", "--darcy", "out/darcy", "--out", "r/report.csv"], t.path());
    assert_eq!(code(&o), 4);
}
