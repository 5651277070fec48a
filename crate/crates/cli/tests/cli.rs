use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use irnet_core::data::{read_patch_cache, save_png16, save_png8};
use irnet_core::model::write_checkpoint;
use irnet_core::{IrnetModel, ModelConfig, Shape, Tensor};

fn irnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irnet"))
        .args(args)
        .output()
        .expect("spawn irnet")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn image(h: usize, w: usize, phase: usize) -> Tensor {
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        ((y * 5 + x * 3 + c * 17 + phase) % 64) as f32 / 63.0
    })
}

/// `sdr/` and `hdr/` directories with one pair per stem.
fn pair_dirs(root: &Path, stems: &[&str], size: usize) -> (PathBuf, PathBuf) {
    let (sdr, hdr) = (root.join("sdr"), root.join("hdr"));
    std::fs::create_dir_all(&sdr).unwrap();
    std::fs::create_dir_all(&hdr).unwrap();
    for (i, stem) in stems.iter().enumerate() {
        let img = image(size, size, i);
        save_png8(&img, &sdr.join(format!("{stem}.png"))).unwrap();
        save_png16(&img.map(|v| v * v), &hdr.join(format!("{stem}.png"))).unwrap();
    }
    (sdr, hdr)
}

#[test]
fn audit_prints_published_counts() {
    let out = irnet(&["audit"]);
    assert_eq!(code(&out), 0);
    assert!(
        stdout(&out).contains("134731 (134.73K)"),
        "{}",
        stdout(&out)
    );

    let out = irnet(&["audit", "--mode", "sritm", "--channels", "96"]);
    assert!(stdout(&out).contains("1046730 (1046.73K)"));

    let out = irnet(&["audit", "--height", "2160", "--width", "3840"]);
    assert!(stdout(&out).contains("macs: "));
    assert!(stdout(&out).contains("flops: "));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&irnet(&["audit", "--no-such-flag"])), 1);
    assert_eq!(code(&irnet(&[])), 1);
    assert_eq!(code(&irnet(&["audit", "--height", "4"])), 1);
    assert_eq!(code(&irnet(&["--threads", "0", "audit"])), 1);
    assert_eq!(code(&irnet(&["--help"])), 0);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "chanels = 48\n").unwrap();
    assert_eq!(code(&irnet(&["audit", "--config", s(&cfg)])), 2);
    assert_eq!(code(&irnet(&["audit", "--mode", "hdrnet"])), 2);
    assert_eq!(code(&irnet(&["audit", "--channels", "8"])), 2);

    std::fs::write(&cfg, "channels = 96\nmode = sritm\n").unwrap();
    let out = irnet(&["audit", "--config", s(&cfg)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("1046730"));
    let out = irnet(&["audit", "--config", s(&cfg), "--channels", "64"]);
    assert!(stdout(&out).contains("468192"));
}

#[test]
fn prepare_rejects_unpaired_and_crops_30_patches() {
    let dir = tempfile::tempdir().unwrap();
    let (sdr, hdr) = pair_dirs(dir.path(), &["a"], 512);
    let manifest = dir.path().join("m.tsv");
    let cache = dir.path().join("patches");
    let out = irnet(&[
        "prepare",
        "--sdr-dir",
        s(&sdr),
        "--hdr-dir",
        s(&hdr),
        "--out-manifest",
        s(&manifest),
        "--patches-out",
        s(&cache),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let patches = read_patch_cache(&cache).unwrap();
    assert_eq!(patches.len(), 30);
    assert!(patches
        .iter()
        .all(|p| p.hdr.shape() == Shape::new(1, 3, 256, 256)));

    save_png8(&image(8, 8, 0), &sdr.join("lonely.png")).unwrap();
    let out = irnet(&[
        "prepare",
        "--sdr-dir",
        s(&sdr),
        "--hdr-dir",
        s(&hdr),
        "--out-manifest",
        s(&manifest),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lonely"));
}

#[test]
fn zero_epoch_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let (sdr, hdr) = pair_dirs(dir.path(), &["a", "b"], 32);
    let manifest = dir.path().join("m.tsv");
    let run = dir.path().join("run");
    let prep = irnet(&[
        "prepare",
        "--sdr-dir",
        s(&sdr),
        "--hdr-dir",
        s(&hdr),
        "--out-manifest",
        s(&manifest),
    ]);
    assert_eq!(code(&prep), 0);
    let out = irnet(&[
        "train",
        "--manifest",
        s(&manifest),
        "--out",
        s(&run),
        "--epochs",
        "0",
        "--seed",
        "9",
        "--patch-size",
        "16",
        "--patches-per-image",
        "2",
        "--blocks",
        "1",
        "--channels",
        "16",
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let init = IrnetModel::build(ModelConfig::itm().with_blocks(1).with_channels(16), 9).unwrap();
    let mut want = Vec::new();
    write_checkpoint(&mut want, &init).unwrap();
    assert_eq!(std::fs::read(run.join("last.ckpt")).unwrap(), want);
    assert_eq!(std::fs::read(run.join("best.ckpt")).unwrap(), want);
}

#[test]
fn infer_sritm_scales_by_four_and_checks_bit_depth() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let model =
        IrnetModel::build(ModelConfig::sritm().with_blocks(1).with_channels(16), 2).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model).unwrap();
    std::fs::write(&ckpt, bytes).unwrap();

    let input = dir.path().join("in.png");
    let output = dir.path().join("out.png");
    save_png8(&image(64, 64, 0), &input).unwrap();
    let out = irnet(&[
        "infer",
        "--ckpt",
        s(&ckpt),
        "--input",
        s(&input),
        "--output",
        s(&output),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let y = irnet_core::data::load_png16(&output).unwrap();
    assert_eq!(y.shape(), Shape::new(1, 3, 256, 256));

    let tiled = dir.path().join("tiled.png");
    let out = irnet(&[
        "infer",
        "--ckpt",
        s(&ckpt),
        "--input",
        s(&input),
        "--output",
        s(&tiled),
        "--tile",
        "40",
        "--overlap",
        "8",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        irnet_core::data::load_png16(&tiled).unwrap().shape(),
        y.shape()
    );

    let deep = dir.path().join("deep.png");
    save_png16(&image(8, 8, 0), &deep).unwrap();
    let out = irnet(&[
        "infer",
        "--ckpt",
        s(&ckpt),
        "--input",
        s(&deep),
        "--output",
        s(&output),
    ]);
    assert_eq!(code(&out), 4);
    let missing = dir.path().join("missing.ckpt");
    let out = irnet(&[
        "infer",
        "--ckpt",
        s(&missing),
        "--input",
        s(&input),
        "--output",
        s(&output),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn eval_reports_partial_failure_with_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let (sdr, hdr) = pair_dirs(dir.path(), &["a", "b"], 24);
    let ckpt = dir.path().join("m.ckpt");
    let model = IrnetModel::build(ModelConfig::itm().with_blocks(1).with_channels(16), 2).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model).unwrap();
    std::fs::write(&ckpt, bytes).unwrap();

    let manifest = dir.path().join("m.tsv");
    let report = dir.path().join("r.csv");
    let prep = irnet(&[
        "prepare",
        "--sdr-dir",
        s(&sdr),
        "--hdr-dir",
        s(&hdr),
        "--out-manifest",
        s(&manifest),
    ]);
    assert_eq!(code(&prep), 0);
    let args = [
        "eval",
        "--ckpt",
        s(&ckpt),
        "--manifest",
        s(&manifest),
        "--report",
        s(&report),
    ];
    assert_eq!(code(&irnet(&args)), 0);
    let csv = std::fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 4);

    // Replace one HDR target with an 8-bit file.
    save_png8(&image(24, 24, 1), &hdr.join("b.png")).unwrap();
    let out = irnet(&args);
    assert_eq!(code(&out), 5);
    let csv = std::fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("\na,"));
}

#[test]
fn analyze_writes_luminance_and_profile_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (sdr, hdr) = pair_dirs(dir.path(), &["a", "b", "c"], 16);
    let manifest = dir.path().join("m.tsv");
    let prep = irnet(&[
        "prepare",
        "--sdr-dir",
        s(&sdr),
        "--hdr-dir",
        s(&hdr),
        "--out-manifest",
        s(&manifest),
    ]);
    assert_eq!(code(&prep), 0);
    let lum = dir.path().join("lum.csv");
    let out = irnet(&["analyze", "--manifest", s(&manifest), "--out", s(&lum)]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(std::fs::read_to_string(&lum).unwrap().lines().count(), 4);

    let prof = dir.path().join("prof.csv");
    let a = sdr.join("a.png");
    let b = hdr.join("a.png");
    let out = irnet(&[
        "analyze",
        "--profile",
        s(&a),
        s(&b),
        "3",
        "2",
        "10",
        "--out",
        s(&prof),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = std::fs::read_to_string(&prof).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.starts_with("x,a,b,ratio\n2,"));
    let out = irnet(&[
        "analyze",
        "--profile",
        s(&a),
        s(&b),
        "3",
        "2",
        "99",
        "--out",
        s(&prof),
    ]);
    assert_eq!(code(&out), 2);
}
