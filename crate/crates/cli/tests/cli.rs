use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unetcast"))
        .args(args)
        .output()
        .expect("spawn unetcast")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic data set: 8 x 16 grid, 10 years from 1942-01.
fn synth(dir: &Path, seed: u64) -> PathBuf {
    let out = dir.join(format!("data{seed}"));
    let seed = seed.to_string();
    ok(&["synth", "--lat", "8", "--lon", "16", "--years", "10", "--seed", &seed, "--out", s(&out)]);
    out
}

/// Header fields and values of a series file, parsed by hand.
fn read_series(path: &Path) -> (usize, usize, Vec<f32>) {
    let b = std::fs::read(path).unwrap();
    let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap()) as usize;
    assert_eq!(&b[..4], b"CGT1");
    let (n_time, cells) = (u32_at(4), u32_at(8) * u32_at(12));
    let values = b[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect::<Vec<_>>();
    assert_eq!(values.len(), n_time * cells);
    (n_time, cells, values)
}

#[test]
fn synth_is_deterministic_and_validates_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let flags = ["--lat", "24", "--lon", "48", "--years", "80", "--seed", "7"];
    for out in [&a, &b] {
        let mut args = vec!["synth"];
        args.extend(flags);
        args.extend(["--out", s(out)]);
        ok(&args);
    }
    for f in ["temperature.cgt", "elevation.cgt", "africa.cgt", "europe.cgt", "asia.cgt", "north_america.cgt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (n_time, cells, _) = read_series(&a.join("temperature.cgt"));
    assert_eq!((n_time, cells), (960, 24 * 48));
    let m = json(a.join("run_manifest.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["synthetic"]["n_lat"], 24);

    assert_eq!(code(&["synth", "--lat", "25", "--out", s(&dir.path().join("bad"))]), 2);
    assert_eq!(code(&["synth", "--lat", "abc", "--out", "x"]), 2);
}

#[test]
fn train_records_defaults_and_reproduces_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);
    let temp = data.join("temperature.cgt");
    let elev = data.join("elevation.cgt");
    let before = std::fs::read(&temp).unwrap();
    let train = |out: &Path| {
        ok(&[
            "train", "--data", s(&temp), "--case", "y3m2", "--arch", "unetpp", "--elevation", s(&elev),
            "--width", "2", "--out", s(out),
        ])
    };
    let (r1, r2) = (dir.path().join("run1"), dir.path().join("run2"));
    train(&r1);
    train(&r2);
    assert_eq!(std::fs::read(&temp).unwrap(), before);

    let ckpt = json(r1.join("manifest.json"));
    assert_eq!(ckpt["config"]["in_channels"], 17);
    let run = json(r1.join("run_manifest.json"));
    let t = &run["config"]["training"];
    assert_eq!(t["learning_rate"], 1e-5);
    assert_eq!(t["weight_decay"], 1e-3);
    assert_eq!(t["batch_size"], 16);
    assert_eq!(t["epochs"], 40);
    assert_eq!(run["config"]["val_range"], serde_json::json!({"first": "1947-01", "last": "1951-12"}));
    assert_eq!(run["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(run["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    for entry in ckpt["tensors"].as_array().unwrap() {
        let f = entry["file"].as_str().unwrap();
        assert_eq!(std::fs::read(r1.join(f)).unwrap(), std::fs::read(r2.join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        std::fs::read(r1.join("history.json")).unwrap(),
        std::fs::read(r2.join("history.json")).unwrap()
    );

    // fine-tuning keeps the case, and refuses another one
    let ft = dir.path().join("ft");
    let ft_args = |case: &str, out: &Path| -> Vec<String> {
        let mut v: Vec<String> = ["finetune", "--checkpoint", s(&r1), "--data", s(&temp), "--elevation", s(&elev)]
            .map(String::from)
            .to_vec();
        v.extend(["--epochs", "1", "--case", case, "--out", s(out)].map(String::from));
        v
    };
    let args = ft_args("y3m2", &ft);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let parent = json(ft.join("manifest.json"))["provenance"]["parent"].clone();
    assert!(parent.as_str().unwrap().contains("run1"));
    let args = ft_args("y1m1", &dir.path().join("ft2"));
    assert_eq!(code(&args.iter().map(String::as_str).collect::<Vec<_>>()), 2);
}

#[test]
fn persistence_baseline_matches_a_brute_force_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 2);
    let temp = data.join("temperature.cgt");
    let out = dir.path().join("bl");
    ok(&["baseline", "persistence", "--truth", s(&temp), "--range", "1950-01:1951-12", "--out", s(&out)]);
    let report = json(out.join("persistence.json"));

    let (_, cells, v) = read_series(&temp);
    // 1950-01 is month 96 of a series starting 1942-01
    let mut sum = 0.0f64;
    for t in 96..120 {
        for c in 0..cells {
            sum += (v[t * cells + c] as f64 - v[(t - 1) * cells + c] as f64).abs();
        }
    }
    let oracle = sum / (24 * cells) as f64;
    let got = report["overall_mae"].as_f64().unwrap();
    assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    assert!(report["anomaly_bins"].is_object());
    assert_eq!(report["metadata"]["climatology_base_range"]["first"], "1950-01");

    // first month has no predecessor
    assert_eq!(
        code(&["baseline", "persistence", "--truth", s(&temp), "--range", "1942-01:1942-12", "--out", s(&out)]),
        3
    );
}

#[test]
fn evaluate_rank_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 3);
    let temp = data.join("temperature.cgt");
    let elev = data.join("elevation.cgt");
    let run1 = dir.path().join("run1");
    ok(&[
        "train", "--data", s(&temp), "--case", "seq-6", "--arch", "unet", "--elevation", s(&elev), "--width", "2",
        "--epochs", "2", "--lr", "1e-3", "--out", s(&run1),
    ]);
    let ev = dir.path().join("ev");
    let masks: Vec<PathBuf> = ["africa", "north_america", "europe", "asia"]
        .iter()
        .map(|m| data.join(format!("{m}.cgt")))
        .collect();
    let mut args = vec![
        "evaluate", "--checkpoint", s(&run1), "--truth", s(&temp), "--elevation", s(&elev), "--range",
        "1950-01:1951-12", "--out", s(&ev), "--mask",
    ];
    args.extend(masks.iter().map(|m| s(m)));
    ok(&args);
    let report = json(ev.join("report.json"));
    let rs = report["per_region_season_mae"].as_object().unwrap();
    assert_eq!(rs.len(), 4);
    assert!(rs.values().all(|v| v.as_object().unwrap().len() == 4));
    assert_eq!(report["metadata"]["case_id"], "seq-6");
    assert!(report["baselines"]["persistence"].is_object());
    assert!(ev.join("report.csv").exists() && ev.join("prediction.cgt").exists());

    // 14 reports: the same cells shifted per case
    let cases = [
        "seq-6", "seq-12", "seq-24", "seq-36", "y1m1", "y1m2", "y2m1", "y2m2", "y3m1", "y3m2", "y4m1", "y4m2",
        "seq-18", "seq-30",
    ];
    let mut paths = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let mut r = report.clone();
        r["metadata"]["case_id"] = Value::from(*c);
        for seasons in r["per_region_season_mae"].as_object_mut().unwrap().values_mut() {
            for v in seasons.as_object_mut().unwrap().values_mut() {
                *v = Value::from(v.as_f64().unwrap() + 0.01 * ((i * 5) % 14) as f64);
            }
        }
        let p = dir.path().join(format!("r{i}.json"));
        std::fs::write(&p, r.to_string()).unwrap();
        paths.push(p);
    }
    let rk = dir.path().join("rank");
    let mut args = vec!["rank", "--out", s(&rk), "--reports"];
    args.extend(paths.iter().map(|p| s(p)));
    let printed = String::from_utf8(ok(&args).stdout).unwrap();
    assert_eq!(printed.lines().count(), 14);
    let table = json(rk.join("rank.json"));
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 14);
    for col in table["columns"].as_array().unwrap() {
        let mut ranks: Vec<u64> = rows.iter().map(|r| r["ranks"][col.as_str().unwrap()].as_u64().unwrap()).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, (1..=14).collect::<Vec<_>>());
    }
    let mut args = vec!["rank", "--out", s(&rk), "--reports"];
    args.extend(paths[..13].iter().map(|p| s(p)));
    assert_eq!(code(&args), 3);

    let pgm = dir.path().join("mae.pgm");
    ok(&["heatmap", "--report", s(&ev.join("report.json")), "--out", s(&pgm)]);
    let bytes = std::fs::read(&pgm).unwrap();
    let header = b"P5 16 8 255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 128);
    let elev_pgm = dir.path().join("elev.pgm");
    ok(&["heatmap", "--cgt", s(&elev), "--min", "0", "--max", "3", "--out", s(&elev_pgm)]);
    assert!(std::fs::read_to_string(dir.path().join("elev.pgm.txt")).unwrap().starts_with("min 0\nmax 3\n"));
}

#[test]
fn exit_codes_distinguish_usage_data_and_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["train", "--case", "y1m1"]), 2);
    assert_eq!(code(&["train", "--data", "x.cgt", "--case", "y9m9", "--out", "o"]), 2);
    assert_eq!(code(&["train", "--data", s(&dir.path().join("none.cgt")), "--case", "y1m1", "--out", "o"]), 3);
    let junk = dir.path().join("junk.cgt");
    std::fs::write(&junk, b"not a grid file at all, definitely").unwrap();
    assert_eq!(code(&["baseline", "persistence", "--truth", s(&junk), "--range", "2000-01:2000-02", "--out", "o"]), 3);
    assert!(run(&["--help"]).status.success());
}
