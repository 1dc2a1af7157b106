#![allow(dead_code)]

use std::path::PathBuf;

use ggmm_epll::epll::{stage_subsets, PatchGrid};
use ggmm_epll::io::patches_from_dir;
use ggmm_epll::mixture::{em_fit, EmConfig};
use ggmm_epll::{DenoiseConfig, GgmmModel, ImageBuffer, Mode};
use nalgebra::{DMatrix, DVector};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn test_images() -> Vec<(String, ImageBuffer)> {
    ggmm_epll::io::pgm_files(data_dir().join("test"))
        .unwrap()
        .into_iter()
        .map(|f| {
            let name = f.file_stem().unwrap().to_string_lossy().into_owned();
            (name, ImageBuffer::load_pgm(&f).unwrap())
        })
        .collect()
}

pub fn camera() -> ImageBuffer {
    ImageBuffer::load_pgm(data_dir().join("test/camera.pgm")).unwrap()
}

/// Mixture trained on the bundled training images.
pub fn train(mode: Mode, k: usize, n: usize, iters: usize, seed: u64) -> GgmmModel {
    let z = patches_from_dir(data_dir().join("train"), 8, seed, Some(n)).unwrap();
    em_fit(&z, &EmConfig::new(k, mode, iters, seed)).unwrap().model
}

/// Small model for pipeline tests.
pub fn small_model(mode: Mode) -> GgmmModel {
    train(mode, 5, 20_000, 8, 3)
}

// Gaussian EPLL written directly from covariances: Cholesky-based MAP
// selection, matrix Wiener filter, then the closed-form image update. Uses
// the pipeline's patch subsets so that results are comparable.
pub fn gaussian_epll(v: &ImageBuffer, model: &GgmmModel, cfg: &DenoiseConfig) -> ImageBuffer {
    let e = cfg.patch_edge;
    let p = e * e;
    let (w, h) = (v.width(), v.height());
    let cols = w - e + 1;
    let grid = PatchGrid::new(w, h, e).unwrap();
    let covs: Vec<DMatrix<f64>> = model
        .components()
        .iter()
        .map(|c| {
            let d = DVector::from_iterator(p, c.scales().iter().map(|s| s * s));
            c.basis() * DMatrix::from_diagonal(&d) * c.basis().transpose()
        })
        .collect();
    let mut u = v.data().to_vec();
    for (&beta, subset) in cfg.beta_schedule.iter().zip(stage_subsets(&grid, cfg)) {
        let noise = 1.0 / beta;
        let filters: Vec<_> = covs
            .iter()
            .map(|s| {
                let chol = (s + DMatrix::identity(p, p) * noise).cholesky().unwrap();
                let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                (chol, logdet)
            })
            .collect();
        let mut acc = vec![0.0; w * h];
        let mut cnt = vec![0.0; w * h];
        for &i in &subset {
            let (x0, y0) = (i % cols, i / cols);
            let mut z = DVector::from_fn(p, |j, _| u[(y0 + j / e) * w + x0 + j % e]);
            let mean = z.mean();
            z.add_scalar_mut(-mean);
            let mut best = (f64::INFINITY, 0);
            for (k, (chol, logdet)) in filters.iter().enumerate() {
                let cost = -model.component(k).weight().ln()
                    + 0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.dot(&chol.solve(&z)));
                if cost < best.0 {
                    best = (cost, k);
                }
            }
            let k = best.1;
            let est = &covs[k] * filters[k].0.solve(&z);
            for j in 0..p {
                let at = (y0 + j / e) * w + x0 + j % e;
                acc[at] += est[j] + mean;
                cnt[at] += 1.0;
            }
        }
        let c = beta * cfg.sigma * cfg.sigma / p as f64;
        for j in 0..w * h {
            u[j] = (v.data()[j] + c * acc[j]) / (1.0 + c * cnt[j]);
        }
    }
    ImageBuffer::new(w, h, u.into_iter().map(|x| x.clamp(0.0, 255.0)).collect()).unwrap()
}
