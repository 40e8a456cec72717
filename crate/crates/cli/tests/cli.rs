use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hybridkit::bench::load_suite;
use hybridkit::{image_io, scale_pyramid, EncodedFormat, Image, Planar, PyramidSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridkit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hybridkit")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_random(dir: &Path, name: &str, w: usize, h: usize, c: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = Image::from_fn(w, h, c, |_, _, _| rng.random::<f64>()).unwrap();
    let path = dir.join(name);
    let fmt = EncodedFormat::from_path(&path).unwrap();
    std::fs::write(&path, image_io::save(&img, fmt).unwrap()).unwrap();
    path
}

fn write_flat(dir: &Path, name: &str, v: f64) -> PathBuf {
    let path = dir.join(name);
    let img = Image::filled(24, 20, 3, v).unwrap();
    std::fs::write(&path, image_io::save(&img, EncodedFormat::Png).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn blur_keeps_dimensions() {
    let dir = TempDir::new().unwrap();
    let input = write_random(dir.path(), "in.png", 40, 30, 3, 1);
    let out = dir.path().join("out.png");
    let o = run(&["blur", s(&input), "-o", s(&out), "--sigma", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(image_io::load_path(&out).unwrap().dims(), (40, 30, 3));
}

#[test]
fn ppm_output_by_extension() {
    let dir = TempDir::new().unwrap();
    let input = write_random(dir.path(), "in.ppm", 20, 16, 3, 2);
    let out = dir.path().join("out.ppm");
    let o = run(&[
        "blur",
        s(&input),
        "-o",
        s(&out),
        "--sigma",
        "2",
        "--boundary",
        "reflect",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read(&out)
        .unwrap()
        .starts_with(b"P6\n20 16\n255\n"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let input = write_random(dir.path(), "in.png", 16, 16, 3, 3);
    let out = dir.path().join("out.png");

    let o = run(&["blur", s(&input), "-o", s(&out), "--sigma", "0"]);
    assert_eq!(o.status.code(), Some(2));

    let missing = dir.path().join("missing.png");
    let o = run(&["blur", s(&missing), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));

    let o = run(&["highpass", s(&input), "-o", s(&out), "--mode", "sharpen"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&[
        "hybrid",
        s(&input),
        s(&input),
        "-o",
        s(&out),
        "--weight",
        "1.2",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["blur", s(&input), "-o", s(&dir.path().join("out.gif"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn runtime_errors_exit_1_without_partial_output() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"\x89PNG\r\n\x1a\nnot really").unwrap();
    let out = dir.path().join("out.png");
    let o = run(&["blur", s(&bad), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    // 29-tap kernel on an 8x8 image
    let small = write_random(dir.path(), "small.png", 8, 8, 3, 4);
    let o = run(&["blur", s(&small), "-o", s(&out), "--sigma", "7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("too large"));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn highpass_of_constant_is_mid_gray() {
    let dir = TempDir::new().unwrap();
    let flat = write_flat(dir.path(), "flat.png", 0.7);
    for mode in ["subtract", "log"] {
        let out = dir.path().join(format!("{mode}.ppm"));
        let o = run(&[
            "highpass",
            s(&flat),
            "-o",
            s(&out),
            "--sigma",
            "3",
            "--mode",
            mode,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let bytes = std::fs::read(&out).unwrap();
        let header = b"P6\n24 20\n255\n".len();
        assert!(
            bytes[header..].iter().all(|&b| b.abs_diff(128) <= 1),
            "{mode}"
        );
        if mode == "subtract" {
            assert!(bytes[header..].iter().all(|&b| b == 128));
        }
    }
}

#[test]
fn hybrid_weight_one_equals_blur() {
    let dir = TempDir::new().unwrap();
    let a = write_random(dir.path(), "a.png", 48, 40, 3, 5);
    let b = write_random(dir.path(), "b.png", 48, 40, 3, 6);
    let (blur, hyb) = (dir.path().join("blur.png"), dir.path().join("hyb.png"));
    assert!(run(&["blur", s(&a), "-o", s(&blur), "--sigma", "4"])
        .status
        .success());
    let o = run(&[
        "hybrid",
        s(&a),
        s(&b),
        "-o",
        s(&hyb),
        "--sigma-low",
        "4",
        "--weight",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(blur).unwrap(), std::fs::read(hyb).unwrap());
}

#[test]
fn hybrid_defaults_match_explicit_flags() {
    let dir = TempDir::new().unwrap();
    let a = write_random(dir.path(), "a.png", 40, 40, 3, 7);
    let b = write_random(dir.path(), "b.png", 40, 40, 3, 8);
    let (d, e) = (dir.path().join("d.png"), dir.path().join("e.png"));
    assert!(run(&["hybrid", s(&a), s(&b), "-o", s(&d)]).status.success());
    let o = run(&[
        "hybrid",
        s(&a),
        s(&b),
        "-o",
        s(&e),
        "--sigma-low",
        "7",
        "--sigma-high",
        "7",
        "--weight",
        "0.5",
        "--mode",
        "subtract",
        "--boundary",
        "replicate",
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(d).unwrap(), std::fs::read(e).unwrap());
}

#[test]
fn hybrid_pyramid_strip_layout() {
    let dir = TempDir::new().unwrap();
    let a = write_random(dir.path(), "a.png", 64, 48, 3, 9);
    let b = write_random(dir.path(), "b.png", 70, 50, 3, 10);
    let out = dir.path().join("p.png");
    let o = run(&[
        "hybrid",
        s(&a),
        s(&b),
        "-o",
        s(&out),
        "--sigma-low",
        "3",
        "--sigma-high",
        "2",
        "--pyramid-levels",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let strip = image_io::load_path(&out).unwrap();
    // 64 + 32 + 16 plus two 8 px gaps
    assert_eq!(strip.dims(), (64 + 8 + 32 + 8 + 16, 48, 3));
    let expected = scale_pyramid(
        &Image::filled(64, 48, 3, 0.0).unwrap(),
        &PyramidSpec {
            levels: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(strip.width(), expected.strip.width());
    // top-left of the gap is white
    assert_eq!(strip.get(64, 0, 0), 1.0);
}

#[test]
fn bench_and_plot_synthetic() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("b.json");
    let svg = dir.path().join("b.svg");
    let o = run(&[
        "bench",
        "--synthetic",
        "--sigmas",
        "1,2",
        "--kinds",
        "lowpass,highpass-log",
        "--strategies",
        "separable",
        "--repetitions",
        "1",
        "--out",
        s(&json),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let suite = load_suite(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(suite.records.len(), 3 * 2 * 2);
    assert!(suite.machine_note.contains("execution=serial"));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["records"][0]["image_id"], "synthetic_64x64");

    let o = run(&["plot", s(&json), "-o", s(&svg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<circle").count(), suite.records.len());
    // idempotent
    let svg2 = dir.path().join("c.svg");
    assert!(run(&["plot", s(&json), "-o", s(&svg2)]).status.success());
    assert_eq!(text, std::fs::read_to_string(svg2).unwrap());
}

#[test]
fn bench_corpus_dir() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    let json = dir.path().join("b.json");

    let o = run(&["bench", "--corpus", s(&corpus), "--out", s(&json)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&corpus)));
    assert!(!json.exists());

    write_random(&corpus, "b.png", 20, 20, 3, 11);
    write_random(&corpus, "a.pgm", 16, 12, 1, 12);
    std::fs::write(corpus.join("notes.txt"), "ignored").unwrap();
    let o = run(&[
        "bench",
        "--corpus",
        s(&corpus),
        "--sigmas",
        "1,7",
        "--kinds",
        "lowpass",
        "--repetitions",
        "1",
        "--out",
        s(&json),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let suite = load_suite(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(suite.records.len(), 2 * 2 * 2);
    assert_eq!(suite.records[0].image_id, "a.pgm");
    assert_eq!(suite.records[0].channels, 1);
    // sigma 7 does not fit 16x12
    assert!(suite
        .records
        .iter()
        .filter(|r| r.sigma == 7.0 && r.image_id == "a.pgm")
        .all(|r| r.is_skipped()));
}

#[test]
fn plot_rejects_bad_json() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("b.json");
    std::fs::write(&json, r#"{"machine_note":"m","records":[]}"#).unwrap();
    let o = run(&["plot", s(&json), "-o", s(&dir.path().join("x.svg"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["plot", s(&dir.path().join("nope.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kernel_dump() {
    let o = run(&["kernel-dump", "--kind", "binomial3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .take(3)
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    let expected = [[1., 2., 1.], [2., 4., 2.], [1., 2., 1.]];
    for (r, e) in rows.iter().zip(expected) {
        assert_eq!(r.iter().map(|v| v * 16.0).collect::<Vec<_>>(), e);
    }

    let o = run(&["kernel-dump", "--kind", "gaussian", "--sigma", "2"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    assert!(lines[..9].iter().all(|l| l.split(' ').count() == 9));
    let sum: f64 = lines[9].strip_prefix("sum ").unwrap().parse().unwrap();
    assert!((sum - 1.0).abs() < 1e-9);

    let o = run(&["kernel-dump", "--kind", "log", "--sigma", "1"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let sum: f64 = text
        .lines()
        .last()
        .unwrap()
        .strip_prefix("sum ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(sum.abs() < 1e-9);
}

#[test]
fn serve_rejects_missing_ui_dir() {
    let o = run(&["serve", "--port", "0", "--ui-dir", "/definitely/not/here"]);
    assert_eq!(o.status.code(), Some(2));
}
