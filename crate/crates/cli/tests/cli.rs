use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthprior")).current_dir(dir).args(["--threads", "1"]).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["--help"])), 0);
    assert_eq!(code(&run(d, &["frobnicate"])), 2);
    assert_eq!(code(&run(d, &["train", "gmm", "--k", "0", "--synthetic", "100", "--out", "m.bin"])), 2);
    assert_eq!(code(&run(d, &["train", "gmm", "--k", "2,4", "--synthetic", "100", "--out", "m.bin"])), 2);
    let missing = run(d, &["eval", "loglik", "--model", "nope.bin", "--synthetic", "10"]);
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.bin"));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "[train.gmm]\nk = 2\nbogus = 1\n").unwrap();
    let out = run(dir.path(), &["--config", "run.cfg", "train", "gmm", "--synthetic", "100", "--out", "m.bin"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.cfg:3"));
}

#[test]
fn config_values_apply_unless_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.cfg"), "[train.gmm]\nk = 2\nmax_iters = 3\n").unwrap();
    let out = run(d, &["--config", "run.cfg", "train", "gmm", "--synthetic", "600", "--k", "1,2", "--out", "g{k}.bin"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("g1.bin").exists() && d.join("g2.bin").exists());
}

#[test]
fn identity_baseline_sits_at_the_noise_floor() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["eval", "denoise", "--identity", "--sigma", "15", "--synthetic", "2000"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let psnr: f64 = row.split('\t').nth(3).unwrap().parse().unwrap();
    // 20 log10(255 / 15)
    assert!((psnr - 24.61).abs() < 0.1, "{row}");
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_depthprior"))
        .current_dir(dir.path())
        .env("DEPTHPRIOR_THREADS", "0")
        .args(["eval", "denoise", "--identity", "--synthetic", "10"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn train_then_sample_and_restore() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let out = run(d, args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    ok(&["synth", "--out", "ds", "--scenes", "2", "--frames", "1", "--width", "64", "--height", "64"]);
    ok(&["train", "hmm", "--k", "2", "--k-intensity", "2", "--data", "ds", "--max-iters", "5", "--out", "h.bin"]);
    ok(&["train", "tune", "--model", "dl2int", "--data", "ds", "--lambdas", "10", "--epsilons", "0.01", "--sigmas", "0.1", "--out", "d.bin"]);
    ok(&["sample", "--model", "h.bin", "--n", "4", "--out", "s.png"]);
    let psnr = ok(&[
        "restore", "--disparity", "ds/scene_00/degraded/0000.png", "--mask", "ds/scene_00/mask/0000.png", "--intensity",
        "ds/scene_00/intensity/0000.png", "--hmm", "h.bin", "--dl2int", "d.bin", "--sigma", "5", "--truth",
        "ds/scene_00/disparity/0000.png", "--out", "r.png",
    ]);
    assert!(psnr.starts_with("psnr_db\t"));
    assert!(d.join("r.png").exists() && d.join("r.png.meta.json").exists());
    let unconditional = run(d, &["sample", "--model", "d.bin", "--n", "4", "--out", "t.png"]);
    assert_eq!(code(&unconditional), 2);
}
