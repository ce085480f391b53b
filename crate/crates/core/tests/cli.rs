use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kspace_recon::io::{Checkpoint, Container, RunConfig};
use kspace_recon::nn::{NetConfig, RdUnet};
use kspace_recon::simulate::shepp_logan;
use kspace_recon::train::normalize;
use sha2::{Digest, Sha256};

fn ksr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksr")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ksr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sha256_hex(path: &Path) -> String {
    Sha256::digest(std::fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn exit_codes() {
    assert_eq!(ksr(&["--help"]).status.code(), Some(0));
    assert_eq!(ksr(&["phantom"]).status.code(), Some(1));
    assert_eq!(ksr(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ksr(&["recon", "--method", "fft", "--input", "x", "--out", "y"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ksr");
    let out = ksr(&["undersample", "--input", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ksr"));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nlearning_rate = 1.0\n").unwrap();
    assert_eq!(ksr(&["train", "--config", s(&cfg), "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(ksr(&["phantom", "--size", "4", "--out", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn phantom_files_are_deterministic_and_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, none) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("none"));
    ok(&["phantom", "--size", "32", "--count", "5", "--seed", "7", "--out", s(&a)]);
    ok(&["phantom", "--size", "32", "--count", "5", "--seed", "7", "--out", s(&b)]);
    ok(&["phantom", "--size", "32", "--count", "0", "--seed", "7", "--out", s(&none)]);
    assert!(files(&none).is_empty());
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 5);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let sums: Vec<String> = fa.iter().map(|p| sha256_hex(p)).collect();
    assert_eq!(sums, PHANTOM_SHA256);
}

const PHANTOM_SHA256: [&str; 5] = [
    "3aca7e94b61a943edcd05cf0ab22f5cc92bb12021fb9d544d78bf4b19ca9095b",
    "1c83bea85a634ee76b98769e437a78ec20133740f823ac36aab35761ee906822",
    "b90b03dc8d2071618948c1fd40a5b94acb1f2b64e556bd62c1a129e7e30f11a3",
    "d554d57c032c1f0714d2706cf72bae6fed6863d755d63511266e13ef77ce0953",
    "da2217c2de2f6d0bab904e506ca18a527a3a5e5611de08abb5ae6036c98d7a5a",
];

fn write_image(path: &Path, img: &kspace_recon::RealImage) {
    let mut c = Container::new();
    c.insert_image("image", img).unwrap();
    c.save(path).unwrap();
}

#[test]
fn undersample_examples() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sl.ksr");
    let truth = shepp_logan(64, 64).unwrap();
    write_image(&input, &truth);

    let full = dir.path().join("full");
    ok(&["undersample", "--input", s(&input), "--accel", "1", "--acs", "0", "--coils", "4", "--out", s(&full)]);
    let c = Container::load(&full.join("sl.ksr")).unwrap();
    assert!(max_abs_diff(&c.image("zero_filled").unwrap().data, &truth.data) < 1e-6);
    assert!(max_abs_diff(&c.image("truth").unwrap().data, &truth.data) < 1e-6);

    let big = dir.path().join("big.ksr");
    write_image(&big, &shepp_logan(320, 320).unwrap());
    let under = dir.path().join("under");
    ok(&["undersample", "--input", s(&big), "--accel", "4", "--acs", "16", "--coils", "1", "--out", s(&under)]);
    let m = Container::load(&under.join("big.ksr")).unwrap().mask("mask").unwrap();
    assert_eq!(m.kept(), 92);

    let out = ksr(&["undersample", "--input", s(&input), "--accel", "0", "--out", s(&under)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn external_kspace_volumes_are_ingested() {
    use kspace_recon::io::TensorData;
    use kspace_recon::simulate::{forward_acquire, make_sensitivities};

    let dir = tempfile::tempdir().unwrap();
    let sens = make_sensitivities(4, 32, 32).unwrap();
    let mut data = Vec::new();
    for scale in [1.0, 0.5] {
        let img = shepp_logan(32, 32).unwrap();
        let img = kspace_recon::RealImage { data: img.data.iter().map(|v| v * scale).collect(), ..img };
        data.extend(forward_acquire(&img, &sens).unwrap().data);
    }
    let mut c = Container::new();
    let narrowed = data.iter().map(|z| num_complex::Complex32::new(z.re as f32, z.im as f32)).collect();
    c.insert("kspace", &[2, 4, 32, 32], TensorData::C64(narrowed)).unwrap();
    let vol = dir.path().join("scan.ksr");
    c.save(&vol).unwrap();

    let cases = dir.path().join("cases");
    ok(&["undersample", "--input", s(&vol), "--accel", "2", "--acs", "8", "--out", s(&cases)]);
    let names: Vec<String> = files(&cases).iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["scan_s000.ksr", "scan_s001.ksr"]);

    let recon = dir.path().join("recon");
    ok(&["recon", "--method", "zf", "--input", s(&vol), "--out", s(&recon)]);
    let img = Container::load(&recon.join("scan_s001.ksr")).unwrap().image("image").unwrap();
    let want = shepp_logan(32, 32).unwrap();
    let want: Vec<f64> = want.data.iter().map(|v| v * 0.5).collect();
    assert!(max_abs_diff(&img.data, &want) < 1e-6);
}

fn prepare_cases(root: &Path, size: usize, count: usize, seed: u64) -> PathBuf {
    let ph = root.join(format!("ph{seed}"));
    let cases = root.join(format!("cases{seed}"));
    ok(&["phantom", "--size", &size.to_string(), "--count", &count.to_string(), "--seed", &seed.to_string(), "--out", s(&ph)]);
    ok(&["undersample", "--input", s(&ph), "--accel", "4", "--acs", "16", "--coils", "8", "--out", s(&cases)]);
    cases
}

fn zero_checkpoint(path: &Path, seed: u64) {
    let mut net = RdUnet::<f64>::new(NetConfig { depth: 1, base_channels: 4, ..Default::default() }, seed).unwrap();
    net.zero_parameters();
    Checkpoint { model: net.into(), seed }.save(path).unwrap();
}

#[test]
fn recon_examples() {
    let dir = tempfile::tempdir().unwrap();
    let cases = prepare_cases(dir.path(), 64, 2, 3);

    let zf_out = ok(&["recon", "--method", "zf", "--input", s(&cases), "--out", s(&dir.path().join("zf"))]);
    let grappa_out = ok(&["recon", "--method", "grappa", "--input", s(&cases), "--out", s(&dir.path().join("g"))]);
    let mses = |text: &str| -> Vec<f64> {
        text.lines().map(|l| l.rsplit_once("mse=").unwrap().1.parse().unwrap()).collect()
    };
    let (zf, g) = (mses(&zf_out), mses(&grappa_out));
    assert_eq!(zf.len(), 2);
    assert!(zf.iter().zip(&g).all(|(z, g)| g < z), "{zf:?} vs {g:?}");

    let ck = dir.path().join("zero.ksr");
    zero_checkpoint(&ck, 1);
    let net_dir = dir.path().join("net");
    ok(&["recon", "--method", "net", "--checkpoint", s(&ck), "--input", s(&cases), "--out", s(&net_dir)]);
    for case in files(&cases) {
        let name = case.file_name().unwrap();
        let zf_img = Container::load(&case).unwrap().image("zero_filled").unwrap();
        let out = Container::load(&net_dir.join(name)).unwrap().image("image").unwrap();
        assert_eq!(out, normalize(&zf_img));
    }

    let out = ksr(&["recon", "--method", "net", "--input", s(&cases), "--out", s(&net_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

fn small_config(dir: &Path, train: &Path, test: Option<&Path>, extra: &str) -> PathBuf {
    let mut text = format!(
        "[net]\ndepth = 1\nbase_channels = 4\n\n[train]\nseed = 5\n{extra}\n[data]\ntrain = {:?}\n",
        s(train)
    );
    if let Some(t) = test {
        text.push_str(&format!("test = {:?}\n", s(t)));
    }
    let path = dir.join(format!("cfg{}.toml", text.len()));
    std::fs::write(&path, text).unwrap();
    RunConfig::load(&path).unwrap();
    path
}

#[test]
fn train_examples() {
    let dir = tempfile::tempdir().unwrap();
    let cases = prepare_cases(dir.path(), 32, 2, 11);

    let zero_cfg = small_config(dir.path(), &cases, None, "epochs = 0\n");
    let zero_out = dir.path().join("t0");
    ok(&["train", "--config", s(&zero_cfg), "--out", s(&zero_out)]);
    let names: Vec<String> = files(&zero_out).iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["checkpoint_0000.ksr", "loss_history.txt", "model.ksr", "step_losses.txt"]);

    let cfg = small_config(dir.path(), &cases, None, "epochs = 2\naugment = false\n");
    let (a, b) = (dir.path().join("ta"), dir.path().join("tb"));
    ok(&["train", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["train", "--config", s(&cfg), "--out", s(&b)]);
    for name in ["loss_history.txt", "step_losses.txt", "model.ksr", "checkpoint_0002.ksr"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = dir.path().join("tc");
    ok(&["train", "--config", s(&cfg), "--seed", "6", "--out", s(&c)]);
    assert_ne!(std::fs::read(a.join("step_losses.txt")).unwrap(), std::fs::read(c.join("step_losses.txt")).unwrap());
    assert_eq!(Checkpoint::load(&c.join("model.ksr")).unwrap().seed, 6);
}

#[test]
fn single_sample_overfit_halves_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let cases = prepare_cases(dir.path(), 32, 1, 12);
    let cfg = small_config(dir.path(), &cases, None, "epochs = 40\nbatch_size = 1\naugment = false\n");
    let out = dir.path().join("t");
    ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    let steps: Vec<f64> =
        std::fs::read_to_string(out.join("step_losses.txt")).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(steps.len(), 40);
    assert!(steps[39] < 0.5 * steps[0], "{} -> {}", steps[0], steps[39]);
}

#[test]
fn eval_examples() {
    let dir = tempfile::tempdir().unwrap();
    let train = prepare_cases(dir.path(), 32, 1, 13);
    let test = prepare_cases(dir.path(), 32, 2, 14);
    let cfg = small_config(dir.path(), &train, Some(&test), "");
    let (z1, z2) = (dir.path().join("z1.ksr"), dir.path().join("z2.ksr"));
    zero_checkpoint(&z1, 1);
    zero_checkpoint(&z2, 2);
    let report = dir.path().join("out/report.txt");
    let table = ok(&[
        "eval", "--config", s(&cfg), "--model", &format!("plain={}", s(&z1)), "--model", &format!("plain={}", s(&z2)),
        "--out", s(&report),
    ]);
    assert!(table.contains("zero_fill") && table.contains("grappa") && table.contains("plain"));
    let parsed = kspace_recon::metrics::EvalReport::from_key_value(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let (zf, plain) = (parsed.get("zero_fill").unwrap(), parsed.get("plain").unwrap());
    assert_eq!(plain.n_trials, 2);
    assert_eq!(plain.mse_std, 0.0);
    assert!((plain.mse_mean - zf.mse_mean).abs() < 1e-12);
    assert!(parsed.get("grappa").unwrap().mse_mean < zf.mse_mean);

    let report2 = dir.path().join("out/report2.txt");
    ok(&["eval", "--config", s(&cfg), "--model", &format!("plain={}", s(&z1)), "--model", &format!("plain={}", s(&z2)), "--out", s(&report2)]);
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&report2).unwrap());

    // a second label without a seed-2 checkpoint
    let out = ksr(&[
        "eval", "--config", s(&cfg), "--model", &format!("a={}", s(&z1)), "--model", &format!("b={}", s(&z2)),
        "--out", s(&report2),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no model"));
}

#[test]
fn png_export_examples() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.ksr");
    write_image(&flat, &kspace_recon::RealImage::from_vec(4, 4, vec![2.5; 16]).unwrap());
    let png_path = dir.path().join("flat.png");
    ok(&["export-png", "--input", s(&flat), "--out", s(&png_path)]);
    assert!(decode(&png_path).iter().all(|&v| v == 0));

    let sl = dir.path().join("sl.ksr");
    write_image(&sl, &shepp_logan(32, 32).unwrap());
    let diff = dir.path().join("diff.png");
    ok(&["export-png", "--input", s(&sl), "--diff", s(&sl), "--diff-entry", "image", "--out", s(&diff)]);
    assert!(decode(&diff).iter().all(|&v| v == 128));

    let fixture = dir.path().join("sl.png");
    ok(&["export-png", "--input", s(&sl), "--out", s(&fixture)]);
    assert_eq!(decode(&fixture).len(), 32 * 32);
    assert_eq!(sha256_hex(&fixture), SHEPP_LOGAN_PNG_SHA256);
}

const SHEPP_LOGAN_PNG_SHA256: &str = "ac281e47dd80e6a6ffa3094d119f857e1c6489b13d6693b9ce3e810370a7c15a";

fn decode(path: &Path) -> Vec<u8> {
    let file = std::fs::File::open(path).unwrap();
    let mut reader = png::Decoder::new(std::io::BufReader::new(file)).read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    buf
}
