//! Modified EM: E-step responsibilities, covariance eigendecomposition, and
//! the moment step for the shapes.

use log::{info, warn};
use nalgebra::{DMatrix, DMatrixView, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_shape, Component, GgmmModel, Mode};
use crate::error::{Error, Result};
use crate::ggd::mallat_f_inverse;
use crate::par;
use crate::special::log_sum_exp;

const EMPTY_FRACTION: f64 = 1e-8;
const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub k: usize,
    pub mode: Mode,
    pub iters: usize,
    pub seed: u64,
    pub init: Option<GgmmModel>,
    /// Stop after this many consecutive likelihood decreases.
    pub patience: usize,
}

impl EmConfig {
    pub fn new(k: usize, mode: Mode, iters: usize, seed: u64) -> Self {
        EmConfig {
            k,
            mode,
            iters,
            seed,
            init: None,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GgmmModel,
    /// Average log-likelihood of the model entering each iteration, followed
    /// by that of the returned model.
    pub loglik: Vec<f64>,
    pub stopped_early: bool,
}

// Per-component sufficient statistics of one chunk.
struct Stats {
    mass: Vec<f64>,
    second: Vec<DMatrix<f64>>,
    loglik: f64,
}

impl Stats {
    fn combine(mut self, other: Stats) -> Stats {
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
        self.loglik += other.loglik;
        self
    }
}

fn check_centered(patches: &DMatrix<f64>) -> Result<()> {
    if patches.ncols() == 0 {
        return Err(Error::InvalidParameter("no training patches".into()));
    }
    let range = patches.max() - patches.min();
    let worst = (0..patches.ncols())
        .map(|i| patches.column(i).mean().abs())
        .fold(0.0, f64::max);
    if worst > 1e-6 * range.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidParameter(format!(
            "training patches must be centred (largest patch mean {worst:e}, range {range})"
        )));
    }
    Ok(())
}

// Column-normalised responsibilities from a K × c log-joint block, and the
// summed log-likelihood of the block.
fn normalize_block(mut lj: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let mut total = 0.0;
    for mut col in lj.column_iter_mut() {
        let lse = log_sum_exp(col.as_slice());
        total += lse;
        col.apply(|v| *v = (*v - lse).exp());
    }
    (lj, total)
}

/// K × n responsibilities ξ_{k,i} and the average log-likelihood.
pub fn responsibilities(model: &GgmmModel, patches: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    model.check_dim(patches.nrows())?;
    let n = patches.ncols();
    let blocks = par::map_chunks(n, par::REDUCTION_CHUNK, |s, e| {
        normalize_block(model.log_joint(patches.columns(s, e - s)))
    });
    let mut xi = DMatrix::zeros(model.len(), n);
    let mut start = 0;
    let mut sums = Vec::with_capacity(blocks.len());
    for (b, ll) in blocks {
        xi.columns_mut(start, b.ncols()).copy_from(&b);
        start += b.ncols();
        sums.push(ll);
    }
    let total = par::tree_reduce(sums, |a, b| a + b).unwrap_or(0.0);
    Ok((xi, total / n as f64))
}

fn weighted_second_moments(z: DMatrixView<'_, f64>, xi: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    (0..xi.nrows())
        .map(|k| {
            let mut w = z.clone_owned();
            for (mut col, &x) in w.column_iter_mut().zip(xi.row(k).iter()) {
                col *= x;
            }
            w * z.transpose()
        })
        .collect()
}

/// Eigenvectors (columns, descending eigenvalue, largest-magnitude entry made
/// positive) and eigenvalues of ½(C + Cᵀ), raised to at least `floor`.
pub(crate) fn eigen_basis(c: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, Vec<f64>) {
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let p = c.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let floor = floor.max(f64::MIN_POSITIVE);
    let mut basis = DMatrix::zeros(p, p);
    let mut values = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).clone_owned();
        let pivot = v.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
        if pivot < 0.0 {
            v.neg_mut();
        }
        basis.set_column(dst, &v);
        values.push(eig.eigenvalues[src].max(floor));
    }
    (basis, values)
}

// Basis, scales and weight of one component.
type Part = (DMatrix<f64>, Vec<f64>, f64);

// Turns sufficient statistics into components; empty components are
// re-seeded from the largest-norm samples not already used.
fn build_components(stats: &Stats, patches: &DMatrix<f64>, mode: Mode) -> Result<Vec<Part>> {
    let n = patches.ncols() as f64;
    let p = patches.nrows();
    let empty: Vec<usize> = (0..stats.mass.len())
        .filter(|&k| !(stats.mass[k] >= EMPTY_FRACTION * n))
        .collect();
    let mut donors = Vec::new();
    if !empty.is_empty() {
        let mut by_norm: Vec<usize> = (0..patches.ncols()).collect();
        let norms: Vec<f64> = patches.column_iter().map(|c| c.norm_squared()).collect();
        by_norm.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        donors = by_norm;
    }
    let total_second: DMatrix<f64> = stats.second.iter().fold(DMatrix::zeros(p, p), |a, b| a + b);
    let global_var = (total_second.trace() / (n * p as f64)).max(f64::MIN_POSITIVE);
    // One floor for every component, tied to the data rather than to each
    // cluster: centred patches are degenerate along the constant direction,
    // and a per-component floor would reward whichever cluster has the
    // smallest spread there. With a fixed floor each M-step is the exact
    // constrained maximum-likelihood update, so Gaussian EM stays monotone.
    let floor = EIGEN_FLOOR * (&total_second / n).symmetric_eigenvalues().max();
    let mut out = Vec::with_capacity(stats.mass.len());
    let mut next_donor = 0;
    for k in 0..stats.mass.len() {
        if empty.contains(&k) {
            let z = patches.column(donors[next_donor]);
            warn!(
                "component {k} is empty (mass {:e}); respawning from sample {} ({mode})",
                stats.mass[k], donors[next_donor]
            );
            next_donor += 1;
            let cov = z * z.transpose() + DMatrix::identity(p, p) * global_var;
            let (basis, values) = eigen_basis(&cov, floor);
            out.push((basis, values, 1.0 / stats.mass.len() as f64));
        } else {
            let cov = &stats.second[k] / stats.mass[k];
            let (basis, values) = eigen_basis(&cov, floor);
            out.push((basis, values, stats.mass[k] / n));
        }
    }
    Ok(out)
}

fn assemble(mode: Mode, parts: Vec<Part>, shapes: Vec<Vec<f64>>) -> Result<GgmmModel> {
    let components = parts
        .into_iter()
        .zip(shapes)
        .map(|((basis, values, w), nu)| {
            let scales = values.iter().map(|v| v.sqrt()).collect();
            Component::new(w, basis, scales, nu)
        })
        .collect::<Result<Vec<_>>>()?;
    GgmmModel::normalized(mode, components)
}

/// One EM iteration. Returns the updated model and the average
/// log-likelihood of the input model.
pub fn em_step(model: &GgmmModel, patches: &DMatrix<f64>) -> Result<(GgmmModel, f64)> {
    model.check_dim(patches.nrows())?;
    let n = patches.ncols();
    let k = model.len();
    let mode = model.mode();
    let blocks = par::map_chunks(n, par::REDUCTION_CHUNK, |s, e| {
        let z = patches.columns(s, e - s);
        let (xi, loglik) = normalize_block(model.log_joint(z));
        let stats = Stats {
            mass: xi.column_sum().iter().copied().collect(),
            second: weighted_second_moments(z, &xi),
            loglik,
        };
        (xi, stats)
    });
    let (xis, stats): (Vec<_>, Vec<_>) = blocks.into_iter().unzip();
    let stats = par::tree_reduce(stats, Stats::combine).expect("at least one chunk");
    let parts = build_components(&stats, patches, mode)?;

    let shapes = match mode.fixed_shape() {
        Some(nu) => vec![vec![nu; model.patch_size()]; k],
        None => {
            // χ_{k,j}: responsibility-weighted mean |(U_kᵀ z)_j| in the new bases.
            let partial = par::map_chunks(n, par::REDUCTION_CHUNK, |s, e| {
                let xi = &xis[s / par::REDUCTION_CHUNK];
                let z = patches.columns(s, e - s);
                parts
                    .iter()
                    .enumerate()
                    .map(|(kk, (basis, _, _))| {
                        let x = basis.tr_mul(&z).abs();
                        x * xi.row(kk).transpose()
                    })
                    .collect::<Vec<_>>()
            });
            let chi = par::tree_reduce(partial, |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            })
            .expect("at least one chunk");
            parts
                .iter()
                .enumerate()
                .map(|(kk, (_, values, _))| {
                    let mass = stats.mass[kk];
                    values
                        .iter()
                        .enumerate()
                        .map(|(j, &var)| {
                            if !(mass >= EMPTY_FRACTION * n as f64) {
                                return 2.0;
                            }
                            let m1 = chi[kk][j] / mass;
                            clamp_shape(mallat_f_inverse(m1 * m1 / var))
                        })
                        .collect()
                })
                .collect()
        }
    };
    Ok((assemble(mode, parts, shapes)?, stats.loglik / n as f64))
}

/// Random-centre initialisation: k distinct samples act as directions, every
/// sample joins the centre with the largest |cosine|, and each cluster's
/// second moment gives its basis and scales.
pub fn initial_model(patches: &DMatrix<f64>, k: usize, mode: Mode, seed: u64) -> Result<GgmmModel> {
    let n = patches.ncols();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("cannot draw {k} centres from {n} patches")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    let mut centers = DMatrix::zeros(patches.nrows(), k);
    for (c, &i) in picks.iter().enumerate() {
        let z = patches.column(i);
        let norm = z.norm();
        centers.set_column(c, &(z / if norm > 0.0 { norm } else { 1.0 }));
    }
    let blocks = par::map_chunks(n, par::REDUCTION_CHUNK, |s, e| {
        let z = patches.columns(s, e - s);
        let scores = centers.tr_mul(&z);
        let mut xi = DMatrix::zeros(k, e - s);
        for i in 0..e - s {
            let best = (0..k).fold(0, |b, c| if scores[(c, i)].abs() > scores[(b, i)].abs() { c } else { b });
            xi[(best, i)] = 1.0;
        }
        Stats {
            mass: xi.column_sum().iter().copied().collect(),
            second: weighted_second_moments(z, &xi),
            loglik: 0.0,
        }
    });
    let stats = par::tree_reduce(blocks, Stats::combine).expect("at least one chunk");
    let parts = build_components(&stats, patches, mode)?;
    let nu = mode.fixed_shape().unwrap_or(2.0);
    let shapes = vec![vec![nu; patches.nrows()]; k];
    assemble(mode, parts, shapes)
}

fn with_mode(model: GgmmModel, mode: Mode) -> Result<GgmmModel> {
    if model.mode() == mode {
        return Ok(model);
    }
    let components = model
        .components
        .into_iter()
        .map(|c| {
            let shapes = match mode.fixed_shape() {
                Some(nu) => vec![nu; c.shapes.len()],
                None => c.shapes,
            };
            Component::new(c.weight, c.basis, c.scales, shapes)
        })
        .collect::<Result<Vec<_>>>()?;
    GgmmModel::new(mode, components)
}

/// Runs up to `cfg.iters` EM iterations on centred patches (columns).
pub fn em_fit(patches: &DMatrix<f64>, cfg: &EmConfig) -> Result<EmFit> {
    check_centered(patches)?;
    let mut model = match &cfg.init {
        Some(m) => {
            m.check_dim(patches.nrows())?;
            with_mode(m.clone(), cfg.mode)?
        }
        None => initial_model(patches, cfg.k, cfg.mode, cfg.seed)?,
    };
    let mut loglik = Vec::with_capacity(cfg.iters + 1);
    let mut best: Option<(f64, GgmmModel)> = None;
    let mut drops = 0;
    for it in 0..cfg.iters {
        let (next, ll) = em_step(&model, patches)?;
        info!("em {} iteration {}: mean log-likelihood {ll:.6}", cfg.mode, it + 1);
        if let Some(&prev) = loglik.last() {
            drops = if ll < prev { drops + 1 } else { 0 };
        }
        loglik.push(ll);
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, model.clone()));
        }
        if drops >= cfg.patience.max(1) {
            warn!("log-likelihood fell for {drops} consecutive iterations; stopping early");
            let (ll, m) = best.expect("recorded at least one iteration");
            loglik.push(ll);
            return Ok(EmFit {
                model: m,
                loglik,
                stopped_early: true,
            });
        }
        model = next;
    }
    loglik.push(model.log_likelihood(patches)?);
    Ok(EmFit {
        model,
        loglik,
        stopped_early: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_basis_is_sorted_and_orthogonal() {
        let a = DMatrix::from_fn(5, 5, |i, j| ((i + 2 * j) % 7) as f64);
        let c = &a * a.transpose() + DMatrix::identity(5, 5);
        let (u, v) = eigen_basis(&c, 0.0);
        assert!(v.windows(2).all(|w| w[0] >= w[1]));
        assert!((u.tr_mul(&u) - DMatrix::identity(5, 5)).amax() < 1e-12);
        let recon = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v)) * u.transpose();
        assert!((recon - c).norm() < 1e-9);
    }

    #[test]
    fn uncentred_patches_are_rejected() {
        let z = DMatrix::from_element(4, 10, 1.0);
        assert!(em_fit(&z, &EmConfig::new(1, Mode::Gmm, 1, 0)).is_err());
    }

    #[test]
    fn responsibilities_are_normalised() {
        let mut z = DMatrix::from_fn(4, 300, |i, j| ((i * 13 + j * 7) % 11) as f64 - 5.0);
        for mut c in z.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let m = initial_model(&z, 3, Mode::Ggmm, 1).unwrap();
        let (xi, _) = responsibilities(&m, &z).unwrap();
        for col in xi.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-9);
            assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
