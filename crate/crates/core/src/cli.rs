//! Command implementations behind the `ksr` tool.
//!
//! Each `cmd_*` function is usable directly from Rust; [`Cli`] and [`run`]
//! add argument parsing and console output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fourier::RealImage;
use crate::grappa::{grappa_recon, GrappaSettings};
use crate::io::{diff_to_gray8, to_gray8, write_png, Checkpoint, Container, RunConfig};
use crate::metrics::{evaluate_methods, mse, EvalReport, Method, TestCase};
use crate::nn::{Model, RdUnet};
use crate::real::Real;
use crate::simulate::{
    forward_acquire, make_sensitivities, random_phantom, zero_filled_recon, CoilKSpace, SamplingMask,
};
use crate::train::{augment_pairs, normalize, train_loop_with, Precision, SamplePair, TrainHistory};

pub const EXT: &str = "ksr";

/// Container files in a directory (sorted by name), or the path itself.
pub fn list_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        if !path.exists() {
            return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
        }
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == EXT) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into())
}

/// Write `count` random phantoms as `phantom_NNNN.ksr` (entry `image`).
pub fn cmd_phantom(size: usize, count: usize, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    if size < 8 {
        return Err(Error::TooSmall { ny: size, nx: size, min: 8 });
    }
    create_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::with_capacity(count);
    for i in 0..count {
        let mut c = Container::new();
        c.insert_image("image", &random_phantom(size, size, &mut rng)?)?;
        let path = out.join(format!("phantom_{i:04}.{EXT}"));
        c.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Fields of an undersampled case file.
pub mod entries {
    pub const KSPACE: &str = "kspace";
    pub const MASK: &str = "mask";
    pub const ZERO_FILLED: &str = "zero_filled";
    pub const TRUTH: &str = "truth";
    pub const IMAGE: &str = "image";
}

fn write_case(path: &Path, case: &TestCase) -> Result<()> {
    let mut c = Container::new();
    c.insert_kspace(entries::KSPACE, &case.kspace)?;
    c.insert_mask(entries::MASK, &case.mask)?;
    c.insert_image(entries::ZERO_FILLED, &case.zero_filled()?)?;
    c.insert_image(entries::TRUTH, &case.truth)?;
    c.save(path)
}

/// Read an undersampled case written by [`cmd_undersample`].
pub fn read_case(path: &Path) -> Result<TestCase> {
    let c = Container::load(path)?;
    Ok(TestCase { truth: c.image(entries::TRUTH)?, kspace: c.kspace(entries::KSPACE)?, mask: c.mask(entries::MASK)? })
}

/// Turn ground-truth images (entry `image`, simulated with `coils` coils)
/// or fully sampled k-space volumes (entry `kspace`, dims
/// `(slices, coils, ny, nx)`) into undersampled case files.
pub fn cmd_undersample(input: &Path, accel: usize, acs: usize, coils: usize, out: &Path) -> Result<Vec<PathBuf>> {
    let files = list_inputs(input)?;
    create_dir(out)?;
    let mut written = Vec::new();
    for file in files {
        let c = Container::load(&file)?;
        let name = stem(&file);
        if c.contains(entries::IMAGE) {
            let img = c.image(entries::IMAGE)?;
            let mask = SamplingMask::build(img.ny, accel, acs)?;
            let full = forward_acquire(&img, &make_sensitivities(coils, img.ny, img.nx)?)?;
            let path = out.join(format!("{name}.{EXT}"));
            write_case(&path, &TestCase::from_full(&full, &mask)?)?;
            written.push(path);
        } else if c.contains(entries::KSPACE) && !c.contains(entries::MASK) {
            for (s, full) in c.kspace_volume(entries::KSPACE)?.iter().enumerate() {
                let mask = SamplingMask::build(full.ny, accel, acs)?;
                let path = out.join(format!("{name}_s{s:03}.{EXT}"));
                write_case(&path, &TestCase::from_full(full, &mask)?)?;
                written.push(path);
            }
        } else {
            return Err(Error::Format {
                path: Some(file),
                reason: "expected an `image` entry or a fully sampled `kspace` volume".into(),
            });
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReconMethod {
    /// Zero-filled inverse transform.
    Zf,
    Grappa,
    /// Trained network applied to the normalized zero-filled image.
    Net,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOutput {
    pub path: PathBuf,
    /// MSE against the normalized truth, when the case carries one.
    pub mse: Option<f64>,
}

/// Per case, the k-space to reconstruct and its mask. Files without a
/// mask are treated as fully sampled external volumes.
struct ReconInput {
    name: String,
    kspace: CoilKSpace,
    mask: SamplingMask,
    truth: Option<RealImage>,
}

fn recon_inputs(file: &Path) -> Result<Vec<ReconInput>> {
    let c = Container::load(file)?;
    let name = stem(file);
    if c.contains(entries::MASK) {
        let truth = if c.contains(entries::TRUTH) { Some(c.image(entries::TRUTH)?) } else { None };
        return Ok(vec![ReconInput { name, kspace: c.kspace(entries::KSPACE)?, mask: c.mask(entries::MASK)?, truth }]);
    }
    let slices = c.kspace_volume(entries::KSPACE)?;
    let many = slices.len() > 1;
    slices
        .into_iter()
        .enumerate()
        .map(|(s, k)| {
            let mask = SamplingMask::build(k.ny, 1, 0)?;
            let name = if many { format!("{name}_s{s:03}") } else { name.clone() };
            Ok(ReconInput { name, kspace: k, mask, truth: None })
        })
        .collect()
}

/// Reconstruct every case under `input`, writing `<name>.ksr` (entry
/// `image`) into `out`.
pub fn cmd_recon(method: ReconMethod, input: &Path, checkpoint: Option<&Path>, out: &Path) -> Result<Vec<ReconOutput>> {
    let model = match (method, checkpoint) {
        (ReconMethod::Net, Some(p)) => Some(Checkpoint::load(p)?.model),
        (ReconMethod::Net, None) => return Err(Error::MissingModel("--method net needs --checkpoint".into())),
        (_, Some(_)) => return Err(Error::Config("--checkpoint only applies to --method net".into())),
        _ => None,
    };
    let files = list_inputs(input)?;
    create_dir(out)?;
    let mut results = Vec::new();
    for file in files {
        for ReconInput { name, kspace: ksp, mask, truth } in recon_inputs(&file)? {
            let image = match (&model, method) {
                (Some(m), _) => m.infer_image(&normalize(&zero_filled_recon(&ksp)?))?,
                (None, ReconMethod::Grappa) => grappa_recon(&ksp, &mask, &GrappaSettings::default())?,
                (None, _) => zero_filled_recon(&ksp)?,
            };
            let mse = match &truth {
                Some(t) => Some(mse(&normalize(t), &normalize(&image))?),
                None => None,
            };
            let mut c = Container::new();
            c.insert_image(entries::IMAGE, &image)?;
            let path = out.join(format!("{name}.{EXT}"));
            c.save(&path)?;
            results.push(ReconOutput { path, mse });
        }
    }
    Ok(results)
}

fn load_pairs(path: &Path) -> Result<Vec<SamplePair>> {
    let files = list_inputs(path)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no .{EXT} cases under {}", path.display())));
    }
    files
        .iter()
        .map(|f| {
            let c = Container::load(f)?;
            SamplePair::from_images(&c.image(entries::ZERO_FILLED)?, &c.image(entries::TRUTH)?)
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn train_at<T: Real>(pairs: &[SamplePair], config: &RunConfig, out: &Path) -> Result<TrainHistory>
where
    Model: From<RdUnet<T>>,
{
    let cfg = config.train_config()?;
    let mut net = RdUnet::<T>::new(config.net_config(), cfg.seed)?;
    let seed = cfg.seed;
    let mut save = |epoch: usize, net: &RdUnet<T>| -> Result<()> {
        let ck = Checkpoint { model: net.clone().into(), seed };
        ck.save(&out.join(format!("checkpoint_{epoch:04}.{EXT}")))?;
        ck.save(&out.join(format!("model.{EXT}")))
    };
    train_loop_with(pairs, &mut net, &cfg, &mut save)
}

/// Train on `data.train`, writing `checkpoint_NNNN.ksr`, `model.ksr`,
/// `loss_history.txt` (per epoch) and `step_losses.txt` into `out`.
pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<TrainHistory> {
    config.validate()?;
    let cfg = config.train_config()?;
    let data = config.data.train.as_deref().ok_or_else(|| Error::Config("data.train is not set".into()))?;
    let mut pairs = load_pairs(data)?;
    if cfg.augment {
        pairs = augment_pairs(&pairs)?;
    }
    create_dir(out)?;
    let history = match cfg.precision {
        Precision::F32 => train_at::<f32>(&pairs, config, out)?,
        Precision::F64 => train_at::<f64>(&pairs, config, out)?,
    };
    let mut text = String::from("# epoch lr loss mse fourier_l1\n");
    for r in &history.epochs {
        let _ = writeln!(text, "{} {:?} {:?} {:?} {:?}", r.epoch, r.lr, r.loss.total, r.loss.l2_term, r.loss.fourier_term);
    }
    write_text(&out.join("loss_history.txt"), &text)?;
    let steps: String = history.steps.iter().map(|l| format!("{l:?}\n")).collect();
    write_text(&out.join("step_losses.txt"), &steps)?;
    Ok(history)
}

/// Compare zero-filling, GRAPPA and every labelled checkpoint on
/// `data.test`. Checkpoints sharing a label are trials with different
/// seeds; every label must cover the union of seeds. The key-value report
/// is written to `out`.
pub fn cmd_eval(config: &RunConfig, models: &[(String, PathBuf)], out: &Path) -> Result<EvalReport> {
    config.validate()?;
    let data = config.data.test.as_deref().ok_or_else(|| Error::Config("data.test is not set".into()))?;
    let cases = list_inputs(data)?.iter().map(|f| read_case(f)).collect::<Result<Vec<_>>>()?;
    let mut methods = vec![
        ("zero_fill".to_string(), Method::ZeroFill),
        ("grappa".to_string(), Method::Grappa(GrappaSettings::default())),
    ];
    let mut labels: Vec<String> = Vec::new();
    let mut by_label: BTreeMap<String, BTreeMap<u64, Model>> = BTreeMap::new();
    let mut seeds = Vec::new();
    for (label, path) in models {
        let ck = Checkpoint::load(path)?;
        if !labels.contains(label) {
            labels.push(label.clone());
        }
        seeds.push(ck.seed);
        if by_label.entry(label.clone()).or_default().insert(ck.seed, ck.model).is_some() {
            return Err(Error::Config(format!("{label} has two checkpoints with seed {}", ck.seed)));
        }
    }
    seeds.sort_unstable();
    seeds.dedup();
    for label in labels {
        let m = by_label.remove(&label).expect("label recorded");
        methods.push((label, Method::Network(m)));
    }
    let report = evaluate_methods(&cases, &methods, &seeds)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(out, &report.to_key_value())?;
    Ok(report)
}

/// Write an entry as a min-max scaled PNG, or with `diff` the signed
/// difference `input - diff` around mid-gray.
pub fn cmd_export_png(input: &Path, entry: &str, diff: Option<(&Path, &str)>, out: &Path) -> Result<()> {
    let img = Container::load(input)?.image(entry)?;
    let gray = match diff {
        Some((path, name)) => diff_to_gray8(&img, &Container::load(path)?.image(name)?)?,
        None => to_gray8(&img),
    };
    write_png(out, img.nx, img.ny, &gray)
}

#[derive(Debug, Parser)]
#[command(name = "ksr", version, about = "Accelerated MRI reconstruction toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate random head phantoms.
    Phantom {
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate multi-coil acquisition and retrospective undersampling.
    Undersample(UndersampleArgs),
    /// Reconstruct undersampled cases.
    Recon {
        #[arg(long, value_enum)]
        method: ReconMethod,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the network described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compare reconstruction methods on the configured test set.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// `LABEL=CHECKPOINT`; repeat a label for several seeds.
        #[arg(long = "model", value_parser = parse_model)]
        models: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export an image entry as an 8-bit PNG.
    ExportPng {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "image")]
        entry: String,
        /// Subtract this file's image and show the signed difference.
        #[arg(long)]
        diff: Option<PathBuf>,
        #[arg(long, default_value = "truth")]
        diff_entry: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct UndersampleArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Supplies defaults for --accel, --acs and --coils.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub accel: Option<usize>,
    #[arg(long)]
    pub acs: Option<usize>,
    #[arg(long)]
    pub coils: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_model(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected LABEL=PATH, got {s:?}")),
    }
}

fn output_dir(flag: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| config.data.output.clone())
        .ok_or_else(|| Error::Config("give --out or set data.output".into()))
}

/// Execute a parsed command, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom { size, count, seed, out } => {
            let files = cmd_phantom(size, count, seed, &out)?;
            println!("wrote {} phantom(s) to {}", files.len(), out.display());
        }
        Command::Undersample(a) => {
            let mask = match &a.config {
                Some(p) => RunConfig::load(p)?.mask,
                None => Default::default(),
            };
            let files = cmd_undersample(
                &a.input,
                a.accel.unwrap_or(mask.accel),
                a.acs.unwrap_or(mask.acs),
                a.coils.unwrap_or(mask.coils),
                &a.out,
            )?;
            println!("wrote {} case(s) to {}", files.len(), a.out.display());
        }
        Command::Recon { method, input, checkpoint, out } => {
            for r in cmd_recon(method, &input, checkpoint.as_deref(), &out)? {
                match r.mse {
                    Some(m) => println!("{} mse={m:.6}", r.path.display()),
                    None => println!("{}", r.path.display()),
                }
            }
        }
        Command::Train { config, out, alpha, seed, epochs } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(a) = alpha {
                cfg.train.alpha = a;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let out = output_dir(out, &cfg)?;
            let h = cmd_train(&cfg, &out)?;
            if let (Some(first), Some(last)) = (h.steps.first(), h.steps.last()) {
                println!("{} steps, loss {first:.6} -> {last:.6}", h.steps.len());
            }
            println!("checkpoints in {}", out.display());
        }
        Command::Eval { config, models, out } => {
            let report = cmd_eval(&RunConfig::load(&config)?, &models, &out)?;
            print!("{}", report.to_table());
        }
        Command::ExportPng { input, entry, diff, diff_entry, out } => {
            cmd_export_png(&input, &entry, diff.as_deref().map(|d| (d, diff_entry.as_str())), &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
