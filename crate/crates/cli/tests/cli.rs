use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn screenhist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_screenhist"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = screenhist(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_fixture(dir: &Path) {
    fs::write(
        dir.join("screens.csv"),
        "id,age,result\n1,40,0\n1,45,0\n2,40,0\n2,45,1\n3,40,0\n3,45,0\n",
    )
    .unwrap();
    fs::write(dir.join("endpoints.csv"), "id,t_pc,censor_age\n1,46.5,46.5\n2,45,45\n3,46,\n").unwrap();
}

#[test]
fn three_person_fit_emits_finite_draws() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = dir.path().join("fit");
    ok(&[
        "fit",
        "--screens", p(&dir.path().join("screens.csv")),
        "--endpoints", p(&dir.path().join("endpoints.csv")),
        "--chains", "2", "--iters", "300", "--warmup", "100", "--seed", "3",
        "--export-latents",
        "--out", p(&out),
    ]);
    let draws = fs::read_to_string(out.join("draws.csv")).unwrap();
    let rows: Vec<&str> = draws.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 200 * 4);
    assert!(rows.iter().all(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap().is_finite()));
    let latents = fs::read_to_string(out.join("latents.csv")).unwrap();
    assert_eq!(latents.lines().count(), 1 + 2 * 200 * 3);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn same_seed_same_draws() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--n", "200", "--seed", "5", "--out", p(dir.path())]);
    let fit = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "fit",
            "--screens", p(&dir.path().join("screens.csv")),
            "--endpoints", p(&dir.path().join("endpoints.csv")),
            "--chains", "2", "--iters", "400", "--warmup", "200", "--seed", "9",
            "--out", p(&out),
        ]);
        fs::read(out.join("draws.csv")).unwrap()
    };
    assert_eq!(fit("a"), fit("b"));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--n", "300", "--seed", "2", "--out", p(d)]);
    for f in ["screens.csv", "endpoints.csv", "truth.csv", "cohort.json", "manifest.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(d.join("truth.csv")).unwrap().lines().count(), 301);

    let fit = d.join("fit");
    ok(&[
        "fit",
        "--screens", p(&d.join("screens.csv")),
        "--endpoints", p(&d.join("endpoints.csv")),
        "--chains", "2", "--iters", "600", "--warmup", "300", "--thin", "3",
        "--out", p(&fit),
    ]);

    let diag = d.join("diag");
    ok(&["diagnose", "--fit", p(&fit.join("fit.json")), "--split", "--out", p(&diag)]);
    let summary = fs::read_to_string(diag.join("summary.csv")).unwrap();
    assert!(summary.starts_with("quantity,mean,median,sd,q025,q975,psrf,ess"));
    assert!(summary.contains("mean_sojourn"));
    assert_eq!(fs::read_to_string(diag.join("acceptance.csv")).unwrap().lines().count(), 1 + 2 * 4);

    fs::write(d.join("life.csv"), "age,hazard\n40,0.005\n60,0.01\n80,0.06\n100,0.3\n").unwrap();
    let od = d.join("od");
    ok(&[
        "overdx",
        "--fit", p(&fit.join("fit.json")),
        "--life-table", p(&d.join("life.csv")),
        "--program-ages", "50:74:2",
        "--sims", "500",
        "--out", p(&od),
    ]);
    let rows = fs::read_to_string(od.join("overdx_draws.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 100);
    let s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(od.join("overdx_summary.json")).unwrap()).unwrap();
    let total = s["total"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&total));

    let cmp = d.join("cmp");
    ok(&[
        "compare",
        "--screens", p(&d.join("screens.csv")),
        "--endpoints", p(&d.join("endpoints.csv")),
        "--alpha-h", "1,2", "--alpha-prog", "2",
        "--chains", "1", "--iters", "400", "--warmup", "200", "--thin", "4",
        "--j-inner", "16",
        "--out", p(&cmp),
    ]);
    let grid = fs::read_to_string(cmp.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert_eq!(fs::read_to_string(cmp.join("pairwise.csv")).unwrap().lines().count(), 2);
    assert!(cmp.join("contributions_ah1_ap2.csv").exists());
    assert!(cmp.join("sojourn_ah2_ap2.csv").exists());
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[simulate]\nn = 40\nseed = 4\n").unwrap();
    ok(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("a"))]);
    ok(&["simulate", "--config", p(&cfg), "--n", "25", "--out", p(&dir.path().join("b"))]);
    let n = |sub: &str| fs::read_to_string(dir.path().join(sub).join("endpoints.csv")).unwrap().lines().count() - 1;
    assert_eq!((n("a"), n("b")), (40, 25));
}

#[test]
fn bad_input_gives_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    fs::write(dir.path().join("screens.csv"), "id,age,result\n1,40,0\n7,45,0\n").unwrap();
    let out = screenhist(&[
        "fit",
        "--screens", p(&dir.path().join("screens.csv")),
        "--endpoints", p(&dir.path().join("endpoints.csv")),
        "--out", p(&dir.path().join("fit")),
    ]);
    assert!(!out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["status"], "error");
    assert!(report["message"].as_str().unwrap().contains("line 3"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[sampler]\nwarmup = 10\niterations = 5\n").unwrap();
    let out = screenhist(&["simulate", "--config", p(&cfg), "--out", p(dir.path())]);
    assert!(!out.status.success());
}
