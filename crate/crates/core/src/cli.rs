//! Command-line front end. [`dispatch`] parses arguments, resolves the
//! configuration and runs one subcommand; it never panics on bad input.
//!
//! Configuration precedence, lowest first: built-in defaults, `--config`
//! file, `DIFFLLE_SEED`, `--set KEY=VALUE` overrides, `--seed`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::data_io::{
    checkpoint, list_images, load_dir, load_image, load_niqe_model, load_pairs, save_image, save_network,
    save_niqe_model, Config, DatasetLayout, PairedSet, SyntheticBenchmark,
};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport, MetricRow};
use crate::nnet::NetKind;
use crate::pipeline::{self, CalibrationConfig};
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;
use crate::{Image, Network};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "difflle", version, about = "Diffusion-guided low-light image enhancement")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random draw; overrides the file and DIFFLLE_SEED.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Configuration override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for per-image work; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic benchmark (trainA, trainB, test, test_ood).
    GenData {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the noise predictor on trainA and trainB.
    TrainDenoiser {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Unpaired pretraining of the enhancer and its critics.
    TrainUem {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Fine-tune an enhancer on diffusion pseudo-references of trainA.
    Distill {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        enhancer: PathBuf,
        #[arg(long, value_name = "PATH")]
        denoiser: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Enhance images; output files keep their input names.
    Enhance {
        #[arg(long, value_name = "PATH")]
        enhancer: PathBuf,
        /// Calibrate inputs with the curve and a diffusion round trip first.
        #[arg(long, requires = "denoiser")]
        ddc: bool,
        #[arg(long, value_name = "PATH")]
        denoiser: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Image files or directories of images.
        #[arg(required = true, value_name = "INPUT")]
        inputs: Vec<PathBuf>,
    },
    /// Score a directory of images; prints a table, or with --out writes metrics.csv and metrics.txt.
    #[command(group(ArgGroup::new("metric").args(["reference", "original", "niqe_model", "disc"]).multiple(true).required(true)))]
    Evaluate {
        /// Images to score.
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        /// Ground truth with matching file names (PSNR, SSIM).
        #[arg(long, value_name = "DIR")]
        reference: Option<PathBuf>,
        /// Unenhanced inputs with matching file names (LOE).
        #[arg(long, value_name = "DIR")]
        original: Option<PathBuf>,
        /// Model from `niqe-fit` (NIQE).
        #[arg(long, value_name = "PATH")]
        niqe_model: Option<PathBuf>,
        /// Discriminator checkpoint (CDS).
        #[arg(long, value_name = "PATH")]
        disc: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Fit a NIQE model to pristine images; writes niqe.ck.
    NiqeFit {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(required = true, value_name = "INPUT")]
        inputs: Vec<PathBuf>,
    },
    /// Cross discriminator score of a set of images.
    Cds {
        #[arg(long, value_name = "PATH")]
        disc: PathBuf,
        /// Also score the calibrated images.
        #[arg(long, requires = "denoiser")]
        ddc: bool,
        #[arg(long, value_name = "PATH")]
        denoiser: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(required = true, value_name = "INPUT")]
        inputs: Vec<PathBuf>,
    },
    /// PSNR/SSIM against the number of round-trip steps; omega 0 is plain enhancement.
    AblateOmega {
        #[arg(long, value_name = "PATH")]
        enhancer: PathBuf,
        #[arg(long, value_name = "PATH")]
        denoiser: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,3,5,8", value_name = "LIST")]
        omegas: Vec<usize>,
        /// Evaluate the in-domain test split instead of test_ood.
        #[arg(long)]
        in_domain: bool,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Compare pretraining only, with distillation, and with calibration too.
    AblateSettings {
        /// Enhancer from `train-uem`.
        #[arg(long, value_name = "PATH")]
        uem: PathBuf,
        /// Enhancer from `distill`.
        #[arg(long, value_name = "PATH")]
        distilled: PathBuf,
        #[arg(long, value_name = "PATH")]
        denoiser: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn dispatch(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cfg = match resolve_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.common.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| run(cli.command, &cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn resolve_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => crate::data_io::parse_config(p)?,
        None => Config::default(),
    };
    cfg.apply_env()?;
    for kv in &common.set {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: Command, cfg: &Config) -> Result<()> {
    match cmd {
        Command::GenData { out } => gen_data(cfg, &out),
        Command::TrainDenoiser { data, out } => train_denoiser(cfg, &data, &out),
        Command::TrainUem { data, out } => train_uem(cfg, &data, &out),
        Command::Distill { data, enhancer, denoiser, out } => distill(cfg, &data, &enhancer, &denoiser, &out),
        Command::Enhance { enhancer, ddc, denoiser, out, inputs } => {
            enhance(cfg, &enhancer, denoiser.as_deref().filter(|_| ddc), &out, &inputs)
        }
        Command::Evaluate { images, reference, original, niqe_model, disc, out } => evaluate(
            &images,
            reference.as_deref(),
            original.as_deref(),
            niqe_model.as_deref(),
            disc.as_deref(),
            out.as_deref(),
        ),
        Command::NiqeFit { out, inputs } => niqe_fit(cfg, &out, &inputs),
        Command::Cds { disc, ddc, denoiser, out, inputs } => {
            cds(cfg, &disc, denoiser.as_deref().filter(|_| ddc), out.as_deref(), &inputs)
        }
        Command::AblateOmega { enhancer, denoiser, data, omegas, in_domain, out } => {
            ablate_omega(cfg, &enhancer, &denoiser, &data, &omegas, in_domain, &out)
        }
        Command::AblateSettings { uem, distilled, denoiser, data, out } => {
            ablate_settings(cfg, &uem, &distilled, &denoiser, &data, &out)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_net(path: &Path, kind: NetKind) -> Result<Network> {
    let net: Network = checkpoint::load_network(path, None)?;
    if net.kind() != kind {
        return Err(Error::Checkpoint(format!("{}: expected a {kind}, found a {}", path.display(), net.kind())));
    }
    Ok(net)
}

/// Expands files and directories into `(file name, path)` pairs, rejecting
/// duplicate names since outputs are named after inputs.
fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<(String, PathBuf)>> {
    let mut out: Vec<(String, PathBuf)> = Vec::new();
    for p in inputs {
        if p.is_dir() {
            for n in list_images(p)? {
                out.push((n.clone(), p.join(n)));
            }
        } else {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| Error::Dataset(format!("{} is not a file", p.display())))?;
            out.push((name, p.clone()));
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("no input images".into()));
    }
    let mut names: Vec<&str> = out.iter().map(|(n, _)| n.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Dataset(format!("two inputs are named `{}`", w[0])));
    }
    Ok(out)
}

fn load_inputs(inputs: &[PathBuf]) -> Result<(Vec<String>, Vec<Image>)> {
    let files = collect_inputs(inputs)?;
    let images = files.par_iter().map(|(_, p)| load_image(p)).collect::<Result<Vec<Image>>>()?;
    Ok((files.into_iter().map(|(n, _)| n).collect(), images))
}

fn log_epoch(stage: &str, epoch: usize, total: usize, detail: &str) {
    eprintln!("{stage}: epoch {}/{total} {detail}", epoch + 1);
}

fn gen_data(cfg: &Config, out: &Path) -> Result<()> {
    let mut rng = SeededRng::new(cfg.seed);
    let bench: SyntheticBenchmark<f32> = SyntheticBenchmark::generate(&cfg.data, &mut rng)?;
    bench.write(&DatasetLayout::new(out))?;
    eprintln!(
        "wrote {} + {} training and {} + {} test images to {}",
        bench.train_low.len(),
        bench.train_normal.len(),
        bench.test.names.len(),
        bench.ood.names.len(),
        out.display()
    );
    Ok(())
}

fn train_denoiser(cfg: &Config, data: &Path, out: &Path) -> Result<()> {
    let layout = DatasetLayout::new(data);
    let mut clean = load_dir::<f32>(layout.train_low())?.images;
    clean.extend(load_dir::<f32>(layout.train_normal())?.images);
    let sched = cfg.schedule.training(cfg.denoiser_max_t)?;
    let mut rng = SeededRng::new(cfg.seed);
    let (net, history) = pipeline::train_denoiser(&clean, cfg.denoiser_arch(), &sched, &cfg.denoiser, &mut rng)?;
    let mut log = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        log_epoch("denoiser", i, history.len(), &format!("loss {l:.5}"));
        let _ = writeln!(log, "{},{l:.6}", i + 1);
    }
    create_dir(out)?;
    save_network(&net, out.join("denoiser.ck"))?;
    write_text(&out.join("denoiser_log.csv"), &log)
}

fn train_uem(cfg: &Config, data: &Path, out: &Path) -> Result<()> {
    let layout = DatasetLayout::new(data);
    let low = load_dir::<f32>(layout.train_low())?.images;
    let normal = load_dir::<f32>(layout.train_normal())?.images;
    let mut rng = SeededRng::new(cfg.seed);
    let (m, history) =
        pipeline::train_uem(&low, &normal, cfg.enhancer_arch(), cfg.discriminator_arch(), &cfg.uem, &mut rng)?;
    let mut log = String::from("epoch,adversarial,cycle,discriminator\n");
    for (i, e) in history.iter().enumerate() {
        log_epoch(
            "uem",
            i,
            history.len(),
            &format!("adv {:.4} cyc {:.4} disc {:.4}", e.adversarial, e.cycle, e.discriminator),
        );
        let _ = writeln!(log, "{},{:.6},{:.6},{:.6}", i + 1, e.adversarial, e.cycle, e.discriminator);
    }
    create_dir(out)?;
    save_network(&m.g, out.join("enhancer.ck"))?;
    save_network(&m.f, out.join("inverse.ck"))?;
    save_network(&m.d_a, out.join("disc_low.ck"))?;
    save_network(&m.d_b, out.join("disc_normal.ck"))?;
    write_text(&out.join("uem_log.csv"), &log)
}

fn distill(cfg: &Config, data: &Path, enhancer: &Path, denoiser: &Path, out: &Path) -> Result<()> {
    let low = load_dir::<f32>(DatasetLayout::new(data).train_low())?.images;
    let phi = load_net(enhancer, NetKind::Enhancer)?;
    let den = load_net(denoiser, NetKind::Denoiser)?;
    let sched = cfg.schedule.build(cfg.ddc.eta)?;
    let mut rng = SeededRng::new(cfg.seed);
    let (tuned, report) = pipeline::ftd_finetune(&phi, &low, &cfg.ftd, &cfg.ddc, &den, &sched, &mut rng)?;
    let mut log = String::from("epoch,distill_loss\n");
    for (i, l) in report.epoch_loss.iter().enumerate() {
        log_epoch("distill", i, cfg.ftd.epochs, &format!("loss {l:.6}"));
        let _ = writeln!(log, "{},{l:.6}", i + 1);
    }
    if report.stopped_early {
        eprintln!("distill: stopped early after {} epochs", report.epoch_loss.len());
    }
    create_dir(out)?;
    save_network(&tuned, out.join("enhancer.ck"))?;
    write_text(&out.join("distill_log.csv"), &log)
}

/// Shared state for calibrated inference.
struct Calibrator {
    denoiser: Network,
    sched: NoiseSchedule,
    cfg: CalibrationConfig,
    seed: u64,
}

impl Calibrator {
    fn load(cfg: &Config, denoiser: &Path) -> Result<Self> {
        Ok(Self {
            denoiser: load_net(denoiser, NetKind::Denoiser)?,
            sched: cfg.schedule.build(cfg.ddc.eta)?,
            cfg: cfg.ddc,
            seed: cfg.seed,
        })
    }

    /// Each image draws from its own child stream so results do not depend
    /// on the worker count.
    fn rng(&self, index: usize) -> SeededRng {
        SeededRng::new(self.seed).child(index as u64)
    }

    fn calibrate(&self, y: &Image, index: usize) -> Result<Image> {
        pipeline::calibrate_input(y, &self.cfg, &self.denoiser, &self.sched, &mut self.rng(index))
    }

    fn enhance(&self, y: &Image, phi: &Network, index: usize) -> Result<Image> {
        pipeline::enhance_out_of_domain(y, phi, &self.cfg, &self.denoiser, &self.sched, &mut self.rng(index))
    }
}

fn enhance_all(images: &[Image], phi: &Network, calib: Option<&Calibrator>) -> Result<Vec<Image>> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, y)| match calib {
            Some(c) => c.enhance(y, phi, i),
            None => pipeline::enhance_in_domain(y, phi),
        })
        .collect()
}

fn enhance(cfg: &Config, enhancer: &Path, denoiser: Option<&Path>, out: &Path, inputs: &[PathBuf]) -> Result<()> {
    let phi = load_net(enhancer, NetKind::Enhancer)?;
    let calib = denoiser.map(|d| Calibrator::load(cfg, d)).transpose()?;
    let (names, images) = load_inputs(inputs)?;
    let enhanced = enhance_all(&images, &phi, calib.as_ref())?;
    create_dir(out)?;
    for (n, img) in names.iter().zip(&enhanced) {
        save_image(img, out.join(n))?;
    }
    eprintln!("enhanced {} images into {}", names.len(), out.display());
    Ok(())
}

fn load_matching(dir: &Path, names: &[String]) -> Result<Vec<Image>> {
    names.par_iter().map(|n| load_image(dir.join(n))).collect()
}

fn evaluate(
    images: &Path,
    reference: Option<&Path>,
    original: Option<&Path>,
    niqe_model: Option<&Path>,
    disc: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let set = load_dir::<f32>(images)?;
    let refs = reference.map(|d| load_matching(d, &set.names)).transpose()?;
    let origs = original.map(|d| load_matching(d, &set.names)).transpose()?;
    let niqe = niqe_model.map(load_niqe_model).transpose()?;
    let disc = disc.map(|p| load_net(p, NetKind::Discriminator)).transpose()?;
    let rows = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let img = &set.images[i];
            let mut v = [None; 5];
            if let Some(r) = &refs {
                v[0] = Some(metrics::psnr(img, &r[i])?);
                v[1] = Some(metrics::ssim(img, &r[i])?);
            }
            if let Some(m) = &niqe {
                v[2] = Some(metrics::niqe_score(img, m)?);
            }
            if let Some(o) = &origs {
                v[3] = Some(metrics::loe(img, &o[i])?);
            }
            if let Some(d) = &disc {
                v[4] = Some(metrics::cds_image(img, d)?);
            }
            Ok(MetricRow { name: set.names[i].clone(), values: v })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = MetricReport { rows };
    let text = report.to_text();
    match out {
        Some(out) => {
            create_dir(out)?;
            write_text(&out.join("metrics.csv"), &report.to_csv())?;
            write_text(&out.join("metrics.txt"), &text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn niqe_fit(cfg: &Config, out: &Path, inputs: &[PathBuf]) -> Result<()> {
    let (_, images) = load_inputs(inputs)?;
    let model = metrics::fit_niqe_model(&images, &cfg.niqe)?;
    create_dir(out)?;
    save_niqe_model(&model, out.join("niqe.ck"))?;
    eprintln!("fitted NIQE model on {} patches from {} images", model.patches, images.len());
    Ok(())
}

fn cds(cfg: &Config, disc: &Path, denoiser: Option<&Path>, out: Option<&Path>, inputs: &[PathBuf]) -> Result<()> {
    let d = load_net(disc, NetKind::Discriminator)?;
    let (_, images) = load_inputs(inputs)?;
    let mut table = Table::new(&["input", "cds"]);
    table.push(vec!["raw".into(), format!("{:.4}", metrics::cds(&images, &d)?)]);
    if let Some(den) = denoiser {
        let calib = Calibrator::load(cfg, den)?;
        let calibrated =
            images.par_iter().enumerate().map(|(i, y)| calib.calibrate(y, i)).collect::<Result<Vec<_>>>()?;
        table.push(vec!["calibrated".into(), format!("{:.4}", metrics::cds(&calibrated, &d)?)]);
    }
    table.emit(out, "cds")
}

fn load_split(data: &Path, in_domain: bool) -> Result<PairedSet<f32>> {
    let layout = DatasetLayout::new(data);
    if in_domain {
        load_pairs(layout.test_low(), layout.test_ref())
    } else {
        load_pairs(layout.ood_low(), layout.ood_ref())
    }
}

fn mean_scores(pred: &[Image], refs: &[Image]) -> Result<(f64, f64)> {
    let per = pred
        .par_iter()
        .zip(refs)
        .map(|(p, r)| Ok((metrics::psnr(p, r)?, metrics::ssim(p, r)?)))
        .collect::<Result<Vec<_>>>()?;
    let n = per.len() as f64;
    Ok((per.iter().map(|s| s.0).sum::<f64>() / n, per.iter().map(|s| s.1).sum::<f64>() / n))
}

fn ablate_omega(
    cfg: &Config,
    enhancer: &Path,
    denoiser: &Path,
    data: &Path,
    omegas: &[usize],
    in_domain: bool,
    out: &Path,
) -> Result<()> {
    let phi = load_net(enhancer, NetKind::Enhancer)?;
    let set = load_split(data, in_domain)?;
    let mut calib = Calibrator::load(cfg, denoiser)?;
    let mut table = Table::new(&["omega", "psnr", "ssim"]);
    for &omega in omegas {
        let enhanced = if omega == 0 {
            enhance_all(&set.low, &phi, None)?
        } else {
            calib.cfg.omega = omega;
            enhance_all(&set.low, &phi, Some(&calib))?
        };
        let (p, s) = mean_scores(&enhanced, &set.reference)?;
        eprintln!("omega {omega}: psnr {p:.4} ssim {s:.4}");
        table.push(vec![omega.to_string(), format!("{p:.4}"), format!("{s:.4}")]);
    }
    create_dir(out)?;
    table.emit(Some(out), "omega_ablation")
}

fn ablate_settings(cfg: &Config, uem: &Path, distilled: &Path, denoiser: &Path, data: &Path, out: &Path) -> Result<()> {
    let base = load_net(uem, NetKind::Enhancer)?;
    let tuned = load_net(distilled, NetKind::Enhancer)?;
    let calib = Calibrator::load(cfg, denoiser)?;
    let mut table = Table::new(&["setting", "split", "psnr", "ssim", "loe"]);
    for (split, in_domain) in [("test", true), ("test_ood", false)] {
        let set = load_split(data, in_domain)?;
        let mut settings: Vec<(&str, &Network, Option<&Calibrator>)> =
            vec![("uem", &base, None), ("uem+ftd", &tuned, None)];
        if !in_domain {
            settings.push(("uem+ftd+ddc", &tuned, Some(&calib)));
        }
        for (name, phi, c) in settings {
            let enhanced = enhance_all(&set.low, phi, c)?;
            let (p, s) = mean_scores(&enhanced, &set.reference)?;
            let loe = enhanced.par_iter().zip(&set.low).map(|(e, y)| metrics::loe(e, y)).collect::<Result<Vec<_>>>()?;
            let loe = loe.iter().sum::<f64>() / loe.len() as f64;
            table.push(vec![name.into(), split.into(), format!("{p:.4}"), format!("{s:.4}"), format!("{loe:.4}")]);
        }
    }
    create_dir(out)?;
    table.emit(Some(out), "settings_ablation")
}

/// Small string table written as CSV and as aligned text.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn to_csv(&self) -> String {
        std::iter::once(&self.header).chain(&self.rows).map(|r| r.join(",") + "\n").collect()
    }

    fn to_text(&self) -> String {
        let all: Vec<&Vec<String>> = std::iter::once(&self.header).chain(&self.rows).collect();
        let widths: Vec<usize> =
            (0..self.header.len()).map(|j| all.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
        let mut s = String::new();
        for r in all {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, &w)| format!("{c:>w$}")).collect();
            s.push_str(&cells.join("  "));
            s.push('\n');
        }
        s
    }

    /// Prints the text form and, with a directory, writes `<stem>.csv` and `<stem>.txt` into it.
    fn emit(&self, dir: Option<&Path>, stem: &str) -> Result<()> {
        let text = self.to_text();
        print!("{text}");
        if let Some(dir) = dir {
            create_dir(dir)?;
            write_text(&dir.join(format!("{stem}.csv")), &self.to_csv())?;
            write_text(&dir.join(format!("{stem}.txt")), &text)?;
        }
        Ok(())
    }
}
