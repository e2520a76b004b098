use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use linefit_core::eval::Annotation;
use linefit_core::heatmap::write_hvah;
use linefit_core::raster::{rasterize, RasterConfig};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_linefit-hva"));
    cmd.env_remove("LINEFIT_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 1024x2048 source image, so the network frame is a 0.5x resize.
const ANNOTATION: &str = r#"{
  "image": "hand_made",
  "width": 1024,
  "height": 2048,
  "segments": [
    [[520.0, 700.0], [420.0, 300.0]],
    [[400.0, 1700.0], [500.0, 760.0]],
    [[560.0, 1720.0], [700.0, 800.0]]
  ]
}"#;

fn write_annotation(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("hand.json");
    fs::write(&path, ANNOTATION).unwrap();
    path
}

/// Header plus an all-zero payload, written byte by byte.
fn zero_hvah(path: &Path) {
    let mut bytes = b"HVAH\x01".to_vec();
    for v in [128u32, 256, 3, 4] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.resize(bytes.len() + 128 * 256 * 3 * 4, 0);
    fs::write(path, bytes).unwrap();
}

fn gt_alpha_beta() -> (f64, f64) {
    let dir = |a: [f64; 2], b: [f64; 2]| (b[1] - a[1]).atan2(b[0] - a[0]);
    let undirected = |t1: f64, t2: f64| {
        let mut d = (t1 - t2).abs() % std::f64::consts::PI;
        if d > std::f64::consts::FRAC_PI_2 {
            d = std::f64::consts::PI - d;
        }
        d.to_degrees()
    };
    let t0 = dir([520.0, 700.0], [420.0, 300.0]);
    let t1 = dir([400.0, 1700.0], [500.0, 760.0]);
    let t2 = dir([560.0, 1720.0], [700.0, 800.0]);
    (undirected(t0, t1), undirected(t1, t2))
}

#[test]
fn rasterize_then_fit_recovers_angles() {
    let tmp = TempDir::new().unwrap();
    let ann = write_annotation(tmp.path());
    let label = tmp.path().join("hand.hvah");
    let out = run(&["rasterize", p(&ann), "--out", p(&label)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(fs::metadata(&label).unwrap().len(), 21 + 128 * 256 * 3 * 4);

    let report = stdout_json(&run(&["fit", p(&label), "--annotation", p(&ann)]));
    let (alpha, beta) = gt_alpha_beta();
    let gt = &report["ground_truth"];
    assert!((gt["alpha"].as_f64().unwrap() - alpha).abs() < 1e-9);
    assert!((gt["beta"].as_f64().unwrap() - beta).abs() < 1e-9);
    assert!(gt["err_alpha"].as_f64().unwrap() < 0.5, "{report}");
    assert!(gt["err_beta"].as_f64().unwrap() < 0.5, "{report}");
    assert_eq!(report["channels"].as_array().unwrap().len(), 3);
    // 20.1 deg lies below the 21 deg moderate bound.
    assert!((20.0..21.0).contains(&alpha));
    assert_eq!(report["hva_class"], "mild");
}

#[test]
fn rasterize_to_pgm() {
    let tmp = TempDir::new().unwrap();
    let ann = write_annotation(tmp.path());
    let pgm = tmp.path().join("c0.pgm");
    let out = run(&["rasterize", p(&ann), "--pgm-channel", "0", "--out", p(&pgm)]);
    assert!(out.status.success());
    let bytes = fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n128 256\n255\n"));
    assert_eq!(bytes.len(), b"P5\n128 256\n255\n".len() + 128 * 256);
}

#[test]
fn empty_heatmap_is_a_fit_failure() {
    let tmp = TempDir::new().unwrap();
    let h = tmp.path().join("zero.hvah");
    zero_hvah(&h);
    let out = run(&["fit", p(&h)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too few points, channel 0"));
}

#[test]
fn format_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.hvah");
    fs::write(&bad, b"NOPE\x01").unwrap();
    let out = run(&["fit", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.hvah"));

    assert_eq!(
        run(&["fit", p(&tmp.path().join("missing.hvah"))])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["fit", p(&bad), "--rho", "tukey"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["fit", p(&bad), "--threshold", "1.5"]).status.code(),
        Some(2)
    );
}

#[test]
fn welsch_beats_l2_on_blob() {
    let tmp = TempDir::new().unwrap();
    let a = Annotation::from_json(ANNOTATION).unwrap();
    let clean = rasterize(&a.network_segments().unwrap(), &RasterConfig::default()).unwrap();
    // Dense blob on the phalanx channel, well off its extended axis.
    let h = linefit_core::heatmap::Heatmap::from_values(
        clean.width(),
        clean.height(),
        clean.channels(),
        clean.scale(),
        clean
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (ch, rc) = (i / (128 * 256), i % (128 * 256));
                let (row, col) = ((rc / 128) as i64, (rc % 128) as i64);
                let inside = (row - 230).pow(2) + (col - 20).pow(2) <= 16;
                if ch == 0 && inside {
                    0.9
                } else {
                    v
                }
            })
            .collect(),
    )
    .unwrap();
    let path = tmp.path().join("blob.hvah");
    write_hvah(&h, fs::File::create(&path).unwrap()).unwrap();
    let ann = write_annotation(tmp.path());

    let err = |rho: &str| {
        let r = stdout_json(&run(&[
            "fit",
            p(&path),
            "--annotation",
            p(&ann),
            "--rho",
            rho,
        ]));
        (
            r["alpha"].as_f64().unwrap(),
            r["ground_truth"]["err_alpha"].as_f64().unwrap(),
        )
    };
    let (alpha_w, err_w) = err("welsch");
    let (alpha_l, err_l) = err("l2");
    assert_ne!(alpha_w, alpha_l);
    assert!(err_w < err_l, "welsch {err_w}, l2 {err_l}");
    assert!(err_w < 1.0);
}

#[test]
fn simulate_and_eval_65_images() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let sim = stdout_json(&run(&[
        "simulate",
        "--count",
        "65",
        "--seed",
        "11",
        "--out",
        p(&data),
    ]));
    assert_eq!(sim["count"], 65);
    assert_eq!(fs::read_dir(&data).unwrap().count(), 130);

    let rep = tmp.path().join("report");
    let summary = stdout_json(&run(&["eval", p(&data), "--out", p(&rep)]));
    assert_eq!(summary["n"], 65);
    assert_eq!(summary["failures"], 0);
    assert_eq!(summary["acc"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(rep.join("rows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 66);
    assert!(
        csv.starts_with("image_id,pred_alpha,pred_beta,gt_alpha,gt_beta,err_alpha,err_beta,failed")
    );
    let on_disk: Value =
        serde_json::from_str(&fs::read_to_string(rep.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, summary);
}

#[test]
fn width_sweep_reports_four_columns() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert!(run(&["simulate", "--count", "12", "--out", p(&data)])
        .status
        .success());
    let rep = tmp.path().join("sweep");
    let grid = stdout_json(&run(&[
        "eval",
        p(&data),
        "--sweep-widths",
        "1,2,4,8",
        "--jitter-sigma",
        "2",
        "--out",
        p(&rep),
    ]));
    let cols = grid.as_array().unwrap();
    assert_eq!(cols.len(), 4);
    let widths: Vec<u64> = cols
        .iter()
        .map(|c| c["line_width"].as_u64().unwrap())
        .collect();
    assert_eq!(widths, [1, 2, 4, 8]);
    for c in cols {
        assert_eq!(c["summary"]["n"], 12);
    }
    for d in [1, 2, 4, 8] {
        assert!(rep.join(format!("rows_d{d}.csv")).exists());
    }
}

#[test]
fn eval_rejects_empty_and_unpaired_dirs() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["eval", p(&empty)]).status.code(), Some(2));

    let odd = tmp.path().join("odd");
    fs::create_dir(&odd).unwrap();
    fs::write(odd.join("lonely.json"), ANNOTATION).unwrap();
    zero_hvah(&odd.join("orphan.hvah"));
    let out = run(&["eval", p(&odd)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("lonely.json") && err.contains("orphan.hvah"),
        "{err}"
    );
}

#[test]
fn overlay_draws_three_colored_lines() {
    let tmp = TempDir::new().unwrap();
    let ann = write_annotation(tmp.path());
    let label = tmp.path().join("hand.hvah");
    assert!(run(&["rasterize", p(&ann), "--out", p(&label)])
        .status
        .success());
    let svg_path = tmp.path().join("o.svg");
    assert!(run(&["overlay", p(&label), "--out", p(&svg_path)])
        .status
        .success());
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.contains(r#"width="512" height="1024""#));
    let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<line")).collect();
    assert_eq!(lines.len(), 3);
    for (line, color) in lines.iter().zip(["red", "green", "blue"]) {
        assert!(line.contains(&format!(r#"stroke="{color}""#)), "{line}");
    }
    assert!(svg.contains("<circle"));
    assert!(svg.contains("alpha") && svg.contains("beta"));
}

#[test]
fn overlay_omits_degenerate_channel() {
    let tmp = TempDir::new().unwrap();
    let a = Annotation::from_json(ANNOTATION).unwrap();
    let segs = a.network_segments().unwrap();
    let h = rasterize(&segs, &RasterConfig::default()).unwrap();
    let mut values = h.values().to_vec();
    values[2 * 128 * 256..].fill(0.0);
    let h = linefit_core::heatmap::Heatmap::from_values(128, 256, 3, 4, values).unwrap();
    let path = tmp.path().join("two.hvah");
    write_hvah(&h, fs::File::create(&path).unwrap()).unwrap();

    let svg_path = tmp.path().join("o.svg");
    let out = run(&["overlay", p(&path), "--out", p(&svg_path)]);
    assert!(out.status.success());
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.lines().filter(|l| l.starts_with("<line")).count(), 2);
    assert!(svg.contains("<!-- warning: channel 2: too few points"));
    assert!(!svg.contains(r#"stroke="blue""#));
}

#[test]
fn keypoints_table() {
    let rows = stdout_json(&run(&["keypoints", "--trials", "200", "--k", "2,4"]));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["k"], 2);
    assert_eq!(rows[2]["k"], Value::Null);
    assert!(rows[2]["mean"].as_f64().unwrap() < rows[0]["mean"].as_f64().unwrap());
    assert_eq!(run(&["keypoints", "--k", "1"]).status.code(), Some(2));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_identical() {
    let tmp = TempDir::new().unwrap();
    let corrupt = [
        "--drop-rate",
        "0.3",
        "--jitter-sigma",
        "2",
        "--blob-count",
        "2",
        "--noise-sigma",
        "0.1",
    ];
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let data = tmp.path().join(format!("data{i}"));
        let mut args = vec!["simulate", "--count", "8", "--seed", "5", "--out", p(&data)];
        args.extend(corrupt);
        let out = bin()
            .args(&args)
            .env("LINEFIT_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        let rep = tmp.path().join(format!("rep{i}"));
        let eval = bin()
            .args(["eval", p(&data), "--out", p(&rep)])
            .env("LINEFIT_THREADS", threads)
            .output()
            .unwrap();
        assert!(eval.status.success());
        let kp = bin()
            .args(["keypoints", "--trials", "100", "--seed", "9"])
            .env("LINEFIT_THREADS", threads)
            .output()
            .unwrap();
        outputs.push((dir_bytes(&data), dir_bytes(&rep), eval.stdout, kp.stdout));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = bin()
        .args(["keypoints", "--trials", "5"])
        .env("LINEFIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
