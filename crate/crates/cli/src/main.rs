use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use log::info;

use ggmm_epll::discrepancy::build_lut;
use ggmm_epll::epll::{epll_denoise_report, DenoiseConfig, PATCH_EDGE};
use ggmm_epll::io;
use ggmm_epll::metrics::{self, MetricsReport};
use ggmm_epll::mixture::{em_fit, EmConfig};
use ggmm_epll::{par, DiscrepancyLut, GgmmModel, ImageBuffer, Mode};

/// EPLL denoising with generalized Gaussian mixture patch priors.
#[derive(Parser)]
#[command(name = "ggmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recompute the discrepancy lookup tables (slow: ~10⁴ quadrature fits).
    BuildLuts {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a mixture with EM on a directory of PGMs or a PATCH1 file.
    Train {
        #[arg(long)]
        patches: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value = "ggmm")]
        mode: Mode,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Warm start from this model.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Keep at most this many (shuffled) patches.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        model: PathBuf,
        /// Lookup tables; the bundled tables are used when omitted.
        #[arg(long)]
        luts: Option<PathBuf>,
        #[arg(long, default_value_t = 0.03)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        exact_discrepancy: bool,
        #[arg(long)]
        exact_shrinkage: bool,
        /// Clean reference; prints PSNR/SSIM and stage timings.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
    },
    /// Per-image average log-likelihood of non-overlapping patches, as CSV.
    Loglik {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
    },
    /// Draw patches from a model: a PGM contact sheet plus a PATCH1 file
    /// next to it.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Exact vs approximate paths on one image, as CSV. `--in` is the clean
    /// image; noise of level `--sigma` is added with `--seed`.
    Bench {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        luts: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_luts(path: Option<&Path>) -> Result<DiscrepancyLut> {
    match path {
        Some(p) => Ok(DiscrepancyLut::load(p)?),
        None => Ok(DiscrepancyLut::bundled().clone()),
    }
}

fn load_model(path: &Path) -> Result<GgmmModel> {
    Ok(io::load_model(path)?)
}

fn contact_sheet(patches: &nalgebra::DMatrix<f64>, edge: usize) -> Result<ImageBuffer> {
    let n = patches.ncols();
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols).max(1);
    let cell = edge + 1;
    let mut img = ImageBuffer::filled(cols * cell + 1, rows * cell + 1, 255.0);
    let w = img.width();
    for (i, z) in patches.column_iter().enumerate() {
        let (lo, hi) = (z.min(), z.max());
        let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
        let (x0, y0) = ((i % cols) * cell + 1, (i / cols) * cell + 1);
        for dy in 0..edge {
            for dx in 0..edge {
                img.data_mut()[(y0 + dy) * w + x0 + dx] = (z[dy * edge + dx] - lo) * scale;
            }
        }
    }
    Ok(img)
}

fn run(cli: Cli) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::BuildLuts { out: path } => {
            let t = Instant::now();
            let lut = build_lut()?;
            lut.save(&path)?;
            info!("wrote {} in {:.1?}", path.display(), t.elapsed());
        }
        Command::Train {
            patches,
            k,
            mode,
            iters,
            seed,
            init,
            limit,
            out: path,
        } => {
            let z = io::load_training_patches(&patches, PATCH_EDGE, seed, limit)?;
            info!("training {mode} with K = {k} on {} patches", z.ncols());
            let mut cfg = EmConfig::new(k, mode, iters, seed);
            cfg.init = init.as_deref().map(load_model).transpose()?;
            let fit = em_fit(&z, &cfg)?;
            io::save_model(&fit.model, &path)?;
            writeln!(
                out,
                "final mean log-likelihood {:.6}{}",
                fit.loglik.last().copied().unwrap_or(f64::NAN),
                if fit.stopped_early { " (stopped early)" } else { "" }
            )?;
        }
        Command::Denoise {
            input,
            out: path,
            sigma,
            model,
            luts,
            fraction,
            seed,
            exact_discrepancy,
            exact_shrinkage,
            reference,
        } => {
            let v = ImageBuffer::load_pgm(&input)?;
            let model = load_model(&model)?;
            let lut = load_luts(luts.as_deref())?;
            let mut cfg = DenoiseConfig::new(sigma);
            cfg.patch_fraction = fraction;
            cfg.seed = seed;
            cfg.use_exact_discrepancy = exact_discrepancy;
            cfg.use_exact_shrinkage = exact_shrinkage;
            let report = epll_denoise_report(&v, &model, &lut, &cfg)?;
            report.image.save_pgm(&path)?;
            if let Some(r) = reference {
                let clean = ImageBuffer::load_pgm(&r)?;
                let m = MetricsReport::compare(&report.image, &clean, report.timings)?;
                writeln!(
                    out,
                    "psnr {:.4} dB, ssim {:.4}, discrepancy {:.3} s, shrinkage {:.3} s, patch ops {:.3} s",
                    m.psnr, m.ssim, m.timings.discrepancy, m.timings.shrinkage, m.timings.patch_ops
                )?;
            }
        }
        Command::Loglik { model, images } => {
            let model = load_model(&model)?;
            let files = io::pgm_files(&images)?;
            if files.is_empty() {
                bail!("no .pgm files in {}", images.display());
            }
            writeln!(out, "image,mean_loglik")?;
            for f in files {
                let img = ImageBuffer::load_pgm(&f)?;
                let ll = io::image_log_likelihood(&img, &model, PATCH_EDGE)?;
                let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                writeln!(out, "{name},{ll:.6}")?;
            }
        }
        Command::Sample { model, n, seed, out: path } => {
            let model = load_model(&model)?;
            let edge = (model.patch_size() as f64).sqrt().round() as usize;
            if edge * edge != model.patch_size() {
                bail!("model patch size {} is not a square", model.patch_size());
            }
            let z = model.sample(n, seed);
            contact_sheet(&z, edge)?.save_pgm(&path)?;
            let raw = path.with_extension("patches");
            io::save_patches(&z, &raw)?;
            writeln!(out, "wrote {} and {}", path.display(), raw.display())?;
        }
        Command::Metrics { a, b } => {
            let (a, b) = (ImageBuffer::load_pgm(&a)?, ImageBuffer::load_pgm(&b)?);
            writeln!(out, "psnr,ssim")?;
            writeln!(out, "{:.6},{:.6}", metrics::psnr(&a, &b)?, metrics::ssim(&a, &b)?)?;
        }
        Command::Bench {
            input,
            sigma,
            model,
            luts,
            seed,
        } => {
            let clean = ImageBuffer::load_pgm(&input)?;
            let noisy = clean.with_noise(sigma, seed);
            let model = load_model(&model)?;
            let lut = load_luts(luts.as_deref())?;
            writeln!(out, "variant,discrepancy_s,shrinkage_s,patch_ops_s,total_s,psnr_db,ssim")?;
            for (name, exact_d, exact_s) in [
                ("exact", true, true),
                ("approx_discrepancy", false, true),
                ("approx_both", false, false),
            ] {
                let mut cfg = DenoiseConfig::new(sigma);
                cfg.seed = seed;
                cfg.use_exact_discrepancy = exact_d;
                cfg.use_exact_shrinkage = exact_s;
                let r = epll_denoise_report(&noisy, &model, &lut, &cfg)?;
                let t = r.timings;
                writeln!(
                    out,
                    "{name},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4}",
                    t.discrepancy,
                    t.shrinkage,
                    t.patch_ops,
                    t.total(),
                    metrics::psnr(&r.image, &clean)?,
                    metrics::ssim(&r.image, &clean)?
                )?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let threads = match std::env::var("GGMM_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) => n,
            Err(_) => {
                eprintln!("error: GGMM_THREADS must be a non-negative integer, got {s:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => 0,
    };
    par::configure_threads(threads);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
