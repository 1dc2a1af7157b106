//! Expected patch log-likelihood denoising by half-quadratic splitting.
//!
//! Each stage draws a fresh random subset of overlapping 8×8 patches from the
//! current estimate, picks for every patch the mixture component with the
//! highest posterior under noise variance 1/β, shrinks the patch in that
//! component's basis and blends the patch estimates back with the noisy
//! observation.

use std::ops::AddAssign;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::discrepancy::{discrepancy_oracle, AsymptoticParams, DiscrepancyLut};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mixture::GgmmModel;
use crate::par;
use crate::shrinkage::ShrinkContext;

pub const PATCH_EDGE: usize = 8;
pub const DEFAULT_FRACTION: f64 = 0.03;
pub const DEFAULT_BETA: [f64; 5] = [1.0, 4.0, 8.0, 16.0, 32.0];

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    /// Noise standard deviation assumed by the data term.
    pub sigma: f64,
    pub beta_schedule: Vec<f64>,
    pub patch_edge: usize,
    pub patch_fraction: f64,
    pub seed: u64,
    /// Classify patches with the quadrature discrepancy instead of the
    /// lookup-table approximation.
    pub use_exact_discrepancy: bool,
    /// Shrink with the root-finding solution instead of the closed forms.
    pub use_exact_shrinkage: bool,
}

impl DenoiseConfig {
    /// β = (1, 4, 8, 16, 32)/σ², 8×8 patches, 3% of patches per stage.
    pub fn new(sigma: f64) -> Self {
        DenoiseConfig {
            sigma,
            beta_schedule: DEFAULT_BETA.iter().map(|b| b / (sigma * sigma)).collect(),
            patch_edge: PATCH_EDGE,
            patch_fraction: DEFAULT_FRACTION,
            seed: 0,
            use_exact_discrepancy: false,
            use_exact_shrinkage: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.beta_schedule.is_empty()
            || self.beta_schedule.iter().any(|b| !(*b > 0.0 && b.is_finite()))
            || self.beta_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidParameter(
                "beta schedule must be positive and strictly increasing".into(),
            ));
        }
        if !(self.patch_fraction > 0.0 && self.patch_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "patch fraction must lie in (0, 1], got {}",
                self.patch_fraction
            )));
        }
        if self.patch_edge == 0 {
            return Err(Error::InvalidParameter("patch edge must be positive".into()));
        }
        Ok(())
    }
}

/// Wall-clock seconds spent in each part of the pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    /// Extraction, projections, reconstruction and aggregation.
    pub patch_ops: f64,
    /// Component selection.
    pub discrepancy: f64,
    pub shrinkage: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.patch_ops + self.discrepancy + self.shrinkage
    }
}

impl AddAssign for StageTimings {
    fn add_assign(&mut self, o: StageTimings) {
        self.patch_ops += o.patch_ops;
        self.discrepancy += o.discrepancy;
        self.shrinkage += o.shrinkage;
    }
}

#[derive(Debug, Clone)]
pub struct DenoiseReport {
    /// Final estimate, clipped to [0, 255].
    pub image: ImageBuffer,
    pub timings: StageTimings,
    /// Half-quadratic objective after each stage, with the selected components.
    pub energies: Vec<f64>,
    /// Fraction of pixels covered by at least one patch, per stage.
    pub coverage: Vec<f64>,
}

/// Stride-1 positions of `edge`×`edge` windows fully inside an image, indexed
/// row-major by their top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
    pub edge: usize,
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, edge: usize) -> Result<Self> {
        if width < edge || height < edge || edge == 0 {
            return Err(Error::ImageTooSmall { width, height, edge });
        }
        Ok(PatchGrid { width, height, edge })
    }

    pub fn for_image(img: &ImageBuffer, edge: usize) -> Result<Self> {
        PatchGrid::new(img.width(), img.height(), edge)
    }

    pub fn columns(&self) -> usize {
        self.width - self.edge + 1
    }

    pub fn count(&self) -> usize {
        self.columns() * (self.height - self.edge + 1)
    }

    /// Top-left corner of patch `index`.
    pub fn corner(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.count() {
            return Err(Error::PatchOutOfBounds {
                index,
                count: self.count(),
            });
        }
        Ok((index % self.columns(), index / self.columns()))
    }

    /// Indices of the patches whose corners lie on a `stride` lattice.
    pub fn strided(&self, stride: usize) -> Vec<usize> {
        let stride = stride.max(1);
        let mut out = Vec::new();
        for y in (0..=self.height - self.edge).step_by(stride) {
            for x in (0..=self.width - self.edge).step_by(stride) {
                out.push(y * self.columns() + x);
            }
        }
        out
    }
}

/// Vectorised patches (columns, row-major inside the window) with their
/// means removed, and the means.
pub fn extract_patches(u: &ImageBuffer, indices: &[usize], edge: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let grid = PatchGrid::for_image(u, edge)?;
    let p = edge * edge;
    let mut z = DMatrix::zeros(p, indices.len());
    let mut means = Vec::with_capacity(indices.len());
    let w = u.width();
    let data = u.data();
    for (c, &idx) in indices.iter().enumerate() {
        let (x0, y0) = grid.corner(idx)?;
        let mut col = z.column_mut(c);
        for dy in 0..edge {
            let row = &data[(y0 + dy) * w + x0..(y0 + dy) * w + x0 + edge];
            for (dx, v) in row.iter().enumerate() {
                col[dy * edge + dx] = *v;
            }
        }
        let m = col.mean();
        col.add_scalar_mut(-m);
        means.push(m);
    }
    Ok((z, means))
}

/// Per-pixel blend (v + c Σ patches) / (1 + c · coverage), c = βσ²/P.
/// `estimates` already carry their means. Pixels no patch touches keep v.
pub fn image_update(
    v: &ImageBuffer,
    estimates: &DMatrix<f64>,
    indices: &[usize],
    edge: usize,
    beta: f64,
    sigma: f64,
) -> Result<ImageBuffer> {
    let (out, _) = aggregate(v, estimates, indices, edge, beta, sigma)?;
    Ok(out)
}

fn aggregate(
    v: &ImageBuffer,
    estimates: &DMatrix<f64>,
    indices: &[usize],
    edge: usize,
    beta: f64,
    sigma: f64,
) -> Result<(ImageBuffer, f64)> {
    let grid = PatchGrid::for_image(v, edge)?;
    let p = edge * edge;
    if estimates.nrows() != p || estimates.ncols() != indices.len() {
        return Err(Error::DimensionMismatch {
            expected: p * indices.len(),
            actual: estimates.len(),
        });
    }
    let w = v.width();
    let count = coverage_counts(&grid, indices)?;
    let mut acc = vec![0.0; v.data().len()];
    for (c, &idx) in indices.iter().enumerate() {
        let (x0, y0) = grid.corner(idx)?;
        let col = estimates.column(c);
        for dy in 0..edge {
            let base = (y0 + dy) * w + x0;
            for dx in 0..edge {
                acc[base + dx] += col[dy * edge + dx];
            }
        }
    }
    let c = beta * sigma * sigma / p as f64;
    let data: Vec<f64> = v
        .data()
        .iter()
        .zip(acc.iter().zip(&count))
        .map(|(&vi, (&a, &n))| if n == 0 { vi } else { (vi + c * a) / (1.0 + c * n as f64) })
        .collect();
    let covered = count.iter().filter(|&&n| n > 0).count() as f64 / count.len() as f64;
    Ok((ImageBuffer::new(v.width(), v.height(), data)?, covered))
}

// Discrepancy of one coefficient under one (component, direction) pair.
#[derive(Debug, Clone, Copy)]
enum DimCost {
    // ν = 2: ½[ln 2π + ln(σ² + λ²)] + x² / 2(σ² + λ²)
    Gaussian { half_inv_var: f64 },
    Approx { inv_sigma: f64, params: AsymptoticParams },
    Exact { sigma: f64, lambda: f64, nu: f64 },
}

/// Precomputed selection costs for one noise level: component k scores
/// -ln w_k + Σ_j f(x_j; σ, λ_{k,j}, ν_{k,j}).
pub struct Selector {
    offsets: Vec<f64>,
    costs: Vec<Vec<DimCost>>,
}

impl Selector {
    pub fn new(model: &GgmmModel, sigma: f64, lut: &DiscrepancyLut, exact: bool) -> Self {
        let s2 = sigma * sigma;
        let mut offsets = Vec::with_capacity(model.len());
        let mut costs = Vec::with_capacity(model.len());
        for c in model.components() {
            let mut offset = -c.weight().ln();
            let mut dims = Vec::with_capacity(c.scales().len());
            for (&lambda, &nu) in c.scales().iter().zip(c.shapes()) {
                if exact {
                    dims.push(DimCost::Exact { sigma, lambda, nu });
                } else if nu == 2.0 {
                    let var = s2 + lambda * lambda;
                    offset += 0.5 * ((2.0 * std::f64::consts::PI).ln() + var.ln());
                    dims.push(DimCost::Gaussian {
                        half_inv_var: 0.5 / var,
                    });
                } else {
                    let params = lut.params(lambda / sigma, nu);
                    offset += sigma.ln() + params.gamma0;
                    dims.push(DimCost::Approx {
                        inv_sigma: 1.0 / sigma,
                        params,
                    });
                }
            }
            offsets.push(offset);
            costs.push(dims);
        }
        Selector { offsets, costs }
    }

    /// Negative log posterior (up to a constant) of component k for
    /// coordinates `x` in that component's basis.
    pub fn cost(&self, k: usize, x: &[f64]) -> Result<f64> {
        let mut total = self.offsets[k];
        for (&v, d) in x.iter().zip(&self.costs[k]) {
            total += match *d {
                DimCost::Gaussian { half_inv_var } => v * v * half_inv_var,
                DimCost::Approx { inv_sigma, params } => {
                    let u = v.abs() * inv_sigma;
                    if u == 0.0 {
                        0.0
                    } else {
                        params.log_phi(u).exp()
                    }
                }
                DimCost::Exact { sigma, lambda, nu } => discrepancy_oracle(v, sigma, lambda, nu)?,
            };
        }
        Ok(total)
    }

    /// Index of the cheapest component; ties go to the smallest index.
    pub fn select<F: Fn(usize) -> Vec<f64>>(&self, coords: F) -> Result<usize> {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.offsets.len() {
            let c = self.cost(k, &coords(k))?;
            if c < best.1 {
                best = (k, c);
            }
        }
        Ok(best.0)
    }
}

/// argmin_k -ln w_k + Σ_j f((U_kᵀ z)_j; σ, λ_{k,j}, ν_{k,j}) with the
/// lookup-table discrepancy.
pub fn select_component(z: &[f64], sigma_eff: f64, model: &GgmmModel, lut: &DiscrepancyLut) -> usize {
    let sel = Selector::new(model, sigma_eff, lut, false);
    let zv = DVector::from_column_slice(z);
    sel.select(|k| model.component(k).basis().tr_mul(&zv).as_slice().to_vec())
        .expect("approximate costs cannot fail")
}

fn shrink_contexts(model: &GgmmModel, sigma: f64) -> Result<Vec<Vec<ShrinkContext>>> {
    model
        .components()
        .iter()
        .map(|c| {
            c.scales()
                .iter()
                .zip(c.shapes())
                .map(|(&l, &n)| ShrinkContext::new(sigma, l, n))
                .collect()
        })
        .collect()
}

/// U_k ŝ(U_kᵀ z) with coordinate-wise shrinkage at noise level `sigma_eff`.
pub fn denoise_patch(z: &[f64], k: usize, sigma_eff: f64, model: &GgmmModel) -> Result<Vec<f64>> {
    let c = model.component(k);
    let x = c.basis().tr_mul(&DVector::from_column_slice(z));
    let mut xh = DVector::zeros(x.len());
    for j in 0..x.len() {
        xh[j] = ShrinkContext::new(sigma_eff, c.scales()[j], c.shapes()[j])?.shrink(x[j]);
    }
    Ok((c.basis() * xh).as_slice().to_vec())
}

/// Patches drawn at each β stage: a fresh uniform subset (without
/// replacement) of round(fraction × count) positions per stage, sorted, from
/// one ChaCha8 stream seeded with `cfg.seed`.
pub fn stage_subsets(grid: &PatchGrid, cfg: &DenoiseConfig) -> Vec<Vec<usize>> {
    let total = grid.count();
    let m = ((cfg.patch_fraction * total as f64).round() as usize).clamp(1, total);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    cfg.beta_schedule
        .iter()
        .map(|_| {
            let mut idx = rand::seq::index::sample(&mut rng, total, m).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Number of selected windows covering each pixel (row-major).
pub fn coverage_counts(grid: &PatchGrid, indices: &[usize]) -> Result<Vec<u32>> {
    let mut count = vec![0u32; grid.width * grid.height];
    for &idx in indices {
        let (x0, y0) = grid.corner(idx)?;
        for dy in 0..grid.edge {
            let base = (y0 + dy) * grid.width + x0;
            for c in &mut count[base..base + grid.edge] {
                *c += 1;
            }
        }
    }
    Ok(count)
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Full denoiser; returns the clipped estimate.
pub fn epll_denoise(v: &ImageBuffer, model: &GgmmModel, lut: &DiscrepancyLut, cfg: &DenoiseConfig) -> Result<ImageBuffer> {
    Ok(epll_denoise_report(v, model, lut, cfg)?.image)
}

/// Full denoiser with stage timings, objective values and coverage.
pub fn epll_denoise_report(
    v: &ImageBuffer,
    model: &GgmmModel,
    lut: &DiscrepancyLut,
    cfg: &DenoiseConfig,
) -> Result<DenoiseReport> {
    cfg.validate()?;
    let edge = cfg.patch_edge;
    let p = edge * edge;
    if model.patch_size() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: model.patch_size(),
        });
    }
    let grid = PatchGrid::for_image(v, edge)?;
    let subsets = stage_subsets(&grid, cfg);
    let mut u = v.clone();
    let mut timings = StageTimings::default();
    let mut energies = Vec::with_capacity(cfg.beta_schedule.len());
    let mut coverage = Vec::with_capacity(cfg.beta_schedule.len());
    let k_count = model.len();

    for (&beta, indices) in cfg.beta_schedule.iter().zip(subsets) {
        let sigma_eff = 1.0 / beta.sqrt();
        let m = indices.len();

        let t = Instant::now();
        let (z, means) = extract_patches(&u, &indices, edge)?;
        let proj: Vec<DMatrix<f64>> = par::map_indexed(k_count, |k| model.component(k).basis().tr_mul(&z));
        timings.patch_ops += secs(t);

        let t = Instant::now();
        let selector = Selector::new(model, sigma_eff, lut, cfg.use_exact_discrepancy);
        let chosen = par::try_map_indexed(m, |i| selector.select(|k| proj[k].column(i).as_slice().to_vec()))?;
        timings.discrepancy += secs(t);

        let t = Instant::now();
        let ctx = shrink_contexts(model, sigma_eff)?;
        let exact = cfg.use_exact_shrinkage;
        let mut shrunk = DMatrix::zeros(p, m);
        par::try_for_each_chunk_mut(shrunk.as_mut_slice(), p, |i, out| {
            let k = chosen[i];
            let x = proj[k].column(i);
            for j in 0..p {
                out[j] = if exact {
                    ctx[k][j].shrink_oracle(x[j])?
                } else {
                    ctx[k][j].shrink(x[j])
                };
            }
            Ok::<_, Error>(())
        })?;
        timings.shrinkage += secs(t);

        let t = Instant::now();
        let mut est = DMatrix::zeros(p, m);
        let mut centred = DMatrix::zeros(p, m);
        for i in 0..m {
            let zi = model.component(chosen[i]).basis() * shrunk.column(i);
            centred.set_column(i, &zi);
            est.set_column(i, &zi.add_scalar(means[i]));
        }
        let (next, covered) = aggregate(v, &est, &indices, edge, beta, cfg.sigma)?;
        u = next;
        timings.patch_ops += secs(t);

        coverage.push(covered);
        energies.push(objective(v, &u, &est, &centred, &chosen, &indices, model, beta, cfg.sigma, edge)?);
    }
    Ok(DenoiseReport {
        image: u.clipped(),
        timings,
        energies,
        coverage,
    })
}

// P/2σ² ‖u - v‖² + β/2 Σ ‖P_i u - ẑ_i‖² - Σ log w_k p(ẑ_i | k).
#[allow(clippy::too_many_arguments)]
fn objective(
    v: &ImageBuffer,
    u: &ImageBuffer,
    est: &DMatrix<f64>,
    centred: &DMatrix<f64>,
    chosen: &[usize],
    indices: &[usize],
    model: &GgmmModel,
    beta: f64,
    sigma: f64,
    edge: usize,
) -> Result<f64> {
    let p = (edge * edge) as f64;
    let data: f64 = u.data().iter().zip(v.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    let grid = PatchGrid::for_image(u, edge)?;
    let mut coupling = 0.0;
    let mut prior = 0.0;
    for (i, &idx) in indices.iter().enumerate() {
        let (x0, y0) = grid.corner(idx)?;
        for dy in 0..edge {
            for dx in 0..edge {
                let d = u.get(x0 + dx, y0 + dy) - est[(dy * edge + dx, i)];
                coupling += d * d;
            }
        }
        let c = model.component(chosen[i]);
        prior -= c.weight().ln() + model.component_log_pdf(centred.column(i).as_slice(), chosen[i])?;
    }
    Ok(p / (2.0 * sigma * sigma) * data + 0.5 * beta * coupling + prior)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let g = PatchGrid::new(16, 16, 8).unwrap();
        assert_eq!(g.count(), 81);
        assert_eq!(g.corner(80).unwrap(), (8, 8));
        assert!(g.corner(81).is_err());
        assert!(PatchGrid::new(7, 16, 8).is_err());
        assert_eq!(g.strided(4).len(), 9);
    }

    #[test]
    fn constant_image_patches_are_zero() {
        let img = ImageBuffer::filled(16, 12, 42.0);
        let (z, means) = extract_patches(&img, &[0, 5, 44], 8).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(means.iter().all(|&m| m == 42.0));
    }

    #[test]
    fn extract_then_scatter_round_trips() {
        let img = ImageBuffer::from_fn(20, 13, |x, y| (x * 7 + y * y) as f64);
        let idx = [3, 17, 30];
        let (z, means) = extract_patches(&img, &idx, 8).unwrap();
        let grid = PatchGrid::for_image(&img, 8).unwrap();
        for (c, &i) in idx.iter().enumerate() {
            let (x0, y0) = grid.corner(i).unwrap();
            for dy in 0..8 {
                for dx in 0..8 {
                    let back = z[(dy * 8 + dx, c)] + means[c];
                    assert!((back - img.get(x0 + dx, y0 + dy)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn update_fixed_point_and_half_blend() {
        let v = ImageBuffer::from_fn(12, 12, |x, y| (x + 3 * y) as f64);
        let idx = [0, 7, 20];
        let (z, means) = extract_patches(&v, &idx, 8).unwrap();
        let mut est = z.clone();
        for (c, m) in means.iter().enumerate() {
            est.column_mut(c).add_scalar_mut(*m);
        }
        let u = image_update(&v, &est, &idx, 8, 3.0, 2.0, ).unwrap();
        for (a, b) in u.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // βσ²/P = 1 and a single patch of zeros: covered pixels halve.
        let zero = DMatrix::zeros(64, 1);
        let u = image_update(&v, &zero, &[0], 8, 64.0, 1.0).unwrap();
        assert_eq!(u.get(3, 3), v.get(3, 3) / 2.0);
        assert_eq!(u.get(10, 10), v.get(10, 10));
    }

    #[test]
    fn config_validation() {
        assert!(DenoiseConfig::new(20.0).validate().is_ok());
        let mut c = DenoiseConfig::new(20.0);
        c.beta_schedule = vec![1.0, 1.0];
        assert!(c.validate().is_err());
        c = DenoiseConfig::new(20.0);
        c.patch_fraction = 0.0;
        assert!(c.validate().is_err());
    }
}
