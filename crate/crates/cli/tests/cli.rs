use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn ctxf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ctxf(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Tiny dataset and index shared by the tests: 3 splices, 20 distractors.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        ok(&[
            "synth", "--out", s(&data), "--count", "3", "--hosts", "3", "--distractors", "20",
            "--size", "160", "--distractor-size", "96", "--seed", "4",
        ]);
        let out = ok(&[
            "index", "build", s(&data.join("gallery.jsonl")), "--out", s(&root.join("gallery.kdf")), "--seed", "4",
        ]);
        assert!(out.starts_with("indexed 23 images"), "{out}");
        Fixture { _dir: dir, root }
    })
}

fn run(out: &Path, seed: &str) -> Output {
    let f = fixture();
    ctxf(&[
        "run",
        s(&f.root.join("data/splices.jsonl")),
        "--index",
        s(&f.root.join("gallery.kdf")),
        "--out",
        s(out),
        "--methods",
        "irpsnr,ssim",
        "--seed",
        seed,
    ])
}

#[test]
fn run_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "42");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "method,probes_ok,probes_total,positives,negatives,auc");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("irpsnr,3,3,") && rows[2].starts_with("ssim,3,3,"), "{csv}");
    let reports = std::fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 3);
    for line in reports.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["status"], "ok");
        assert_eq!(v["transform"].as_array().unwrap().len(), 9);
        for rel in v["heatmaps"].as_object().unwrap().values() {
            assert!(dir.path().join(rel.as_str().unwrap()).exists());
        }
    }

    let roc = ok(&["eval", "roc", s(&dir.path().join("reports.jsonl"))]);
    assert_eq!(roc.lines().count(), 2);
    let curve = std::fs::read_to_string(dir.path().join("roc_irpsnr.csv")).unwrap();
    assert!(curve.starts_with("threshold,fpr,tpr\n"));
    assert!(curve.lines().last().unwrap().starts_with("auc,"));
}

#[test]
fn same_seed_gives_identical_summary() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run(a.path(), "42").status.success());
    assert!(run(b.path(), "42").status.success());
    assert_eq!(
        std::fs::read(a.path().join("summary.csv")).unwrap(),
        std::fs::read(b.path().join("summary.csv")).unwrap()
    );
}

#[test]
fn empty_manifest_succeeds_with_warning() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("empty.jsonl");
    std::fs::write(&manifest, "").unwrap();
    let out = ctxf(&[
        "run",
        s(&manifest),
        "--index",
        s(&f.root.join("gallery.kdf")),
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty manifest"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("summary.csv")).unwrap(),
        "method,probes_ok,probes_total,positives,negatives,auc\n"
    );
}

#[test]
fn all_probes_failing_exits_nonzero() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("broken.jsonl");
    std::fs::write(
        &manifest,
        r#"{"probe":"missing.png","mask":"missing_mask.png","host_id":0,"donor_id":1,"seed":0}"#,
    )
    .unwrap();
    let out = ctxf(&[
        "run",
        s(&manifest),
        "--index",
        s(&f.root.join("gallery.kdf")),
        "--out",
        s(dir.path()),
    ]);
    assert!(!out.status.success());
    let report = std::fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
    assert!(report.contains(r#""status":"failed""#), "{report}");
}

#[test]
fn missing_index_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxf(&[
        "run",
        s(&fixture().root.join("data/splices.jsonl")),
        "--index",
        s(&dir.path().join("nope.kdf")),
        "--out",
        s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
}

#[test]
fn query_ranks_the_host_first() {
    let f = fixture();
    let splices = std::fs::read_to_string(f.root.join("data/splices.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(splices.lines().next().unwrap()).unwrap();
    let out = ok(&[
        "index",
        "query",
        s(&f.root.join("data").join(rec["probe"].as_str().unwrap())),
        "--index",
        s(&f.root.join("gallery.kdf")),
        "-n",
        "5",
    ]);
    let first: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(first["image_id"], rec["host_id"]);
}

#[test]
fn compare_and_perturb_write_images() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let gallery = std::fs::read_to_string(f.root.join("data/gallery.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(gallery.lines().next().unwrap()).unwrap();
    let img = f.root.join("data").join(rec["path"].as_str().unwrap());

    let rotated = dir.path().join("rot.png");
    ok(&["perturb", "rotate", s(&img), s(&rotated), "--max-deg", "5", "--seed", "1"]);
    let noisy = dir.path().join("noisy.png");
    ok(&["perturb", "poisson", s(&img), s(&noisy), "--seed", "1"]);
    let a = std::fs::read(&noisy).unwrap();
    ok(&["perturb", "poisson", s(&img), s(&noisy), "--seed", "1"]);
    assert_eq!(a, std::fs::read(&noisy).unwrap());
    assert!(!ctxf(&["perturb", "hsv", s(&img), s(&noisy), "--delta", "1.5"]).status.success());

    let hm = dir.path().join("self.png");
    let line = ok(&["compare", s(&img), s(&img), "--method", "ssim", "--out", s(&hm)]);
    assert!(line.trim_end().ends_with(",0.5"), "{line}");
    assert!(hm.exists() && hm.with_extension("thm").exists());

    let out = ctxf(&["compare", s(&img), s(&img), "--method", "nope", "--out", s(&hm)]);
    assert!(!out.status.success());
}

#[test]
fn config_file_is_read_and_validated() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[pipeline]\nrfn_floor = 0.5\n").unwrap();
    let out = ctxf(&[
        "run",
        s(&f.root.join("data/splices.jsonl")),
        "--config",
        s(&bad),
        "--index",
        s(&f.root.join("gallery.kdf")),
        "--out",
        s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rfn_floor"));

    let good = dir.path().join("good.toml");
    std::fs::write(
        &good,
        format!(
            "seed = 42\n[pipeline]\nmethods = [\"irpsnr\"]\nindex = {:?}\noutput = {:?}\n",
            s(&f.root.join("gallery.kdf")),
            s(dir.path())
        ),
    )
    .unwrap();
    let stdout = ok(&["run", s(&f.root.join("data/splices.jsonl")), "--config", s(&good)]);
    assert!(stdout.lines().nth(1).unwrap().starts_with("irpsnr,3,3,"));
}
