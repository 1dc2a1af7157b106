//! Generalized Gaussian mixture model over centred patches.
//!
//! Component k has weight w_k, an orthogonal basis U_k (columns are the
//! principal directions) and, along each direction j, a generalized Gaussian
//! with standard deviation λ_{k,j} and shape ν_{k,j}.

mod em;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use em::{em_fit, em_step, initial_model, responsibilities, EmConfig, EmFit};

use crate::error::{Error, Result};
use crate::ggd::{GgdParams, NU_MAX, NU_MIN};
use crate::par;
use crate::special::log_sum_exp;

/// Which shapes the trainer may learn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Free shapes estimated by the moment step.
    Ggmm,
    /// ν = 2
    Gmm,
    /// ν = 1
    Lmm,
    /// ν = 1/2
    Hlmm,
}

impl Mode {
    pub fn fixed_shape(self) -> Option<f64> {
        match self {
            Mode::Ggmm => None,
            Mode::Gmm => Some(2.0),
            Mode::Lmm => Some(1.0),
            Mode::Hlmm => Some(0.5),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ggmm => "ggmm",
            Mode::Gmm => "gmm",
            Mode::Lmm => "lmm",
            Mode::Hlmm => "hlmm",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ggmm" => Ok(Mode::Ggmm),
            "gmm" => Ok(Mode::Gmm),
            "lmm" => Ok(Mode::Lmm),
            "hlmm" => Ok(Mode::Hlmm),
            _ => Err(Error::InvalidParameter(format!(
                "unknown mode {s:?} (expected ggmm, gmm, lmm or hlmm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    weight: f64,
    basis: DMatrix<f64>,
    scales: Vec<f64>,
    shapes: Vec<f64>,
    ggd: Vec<GgdParams>,
    log_norm: f64,
}

impl Component {
    pub fn new(weight: f64, basis: DMatrix<f64>, scales: Vec<f64>, shapes: Vec<f64>) -> Result<Self> {
        let p = basis.nrows();
        if basis.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: basis.ncols(),
            });
        }
        for len in [scales.len(), shapes.len()] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: len,
                });
            }
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("component weight must be positive, got {weight}")));
        }
        let ggd = scales
            .iter()
            .zip(&shapes)
            .map(|(&l, &n)| GgdParams::new(l, n))
            .collect::<Result<Vec<_>>>()?;
        let log_norm = ggd.iter().map(|g| g.log_pdf(0.0)).sum();
        Ok(Component {
            weight,
            basis,
            scales,
            shapes,
            ggd,
            log_norm,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn shapes(&self) -> &[f64] {
        &self.shapes
    }

    pub fn ggd(&self) -> &[GgdParams] {
        &self.ggd
    }

    /// Σ_j log GGD(x_j) for coordinates already in this component's basis.
    pub fn log_pdf_coords(&self, x: &[f64]) -> f64 {
        let mut acc = self.log_norm;
        for (v, g) in x.iter().zip(&self.ggd) {
            let r = v.abs() / g.lambda_nu();
            acc -= match g.nu() {
                2.0 => r * r,
                1.0 => r,
                n => r.powf(n),
            };
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GgmmModel {
    patch_size: usize,
    mode: Mode,
    components: Vec<Component>,
}

impl GgmmModel {
    /// Checks the invariants: weights sum to one, bases are orthogonal, scales
    /// are positive and shapes lie in [0.3, 2].
    pub fn new(mode: Mode, components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("a mixture needs at least one component".into()))?;
        let p = first.basis.nrows();
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        for (k, c) in components.iter().enumerate() {
            if c.basis.nrows() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: c.basis.nrows(),
                });
            }
            let gram = c.basis.tr_mul(&c.basis) - DMatrix::<f64>::identity(p, p);
            let dev = gram.amax();
            if dev > 1e-8 {
                return Err(Error::InvalidParameter(format!(
                    "basis of component {k} is not orthogonal (max |UᵀU - I| = {dev:e})"
                )));
            }
            if let Some(nu) = mode.fixed_shape() {
                if c.shapes.iter().any(|&s| s != nu) {
                    return Err(Error::InvalidParameter(format!(
                        "{mode} model requires every shape to equal {nu}"
                    )));
                }
            }
        }
        Ok(GgmmModel {
            patch_size: p,
            mode,
            components,
        })
    }

    /// Renormalises the weights before validating.
    pub fn normalized(mode: Mode, mut components: Vec<Component>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= total;
        }
        GgmmModel::new(mode, components)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Component {
        &self.components[k]
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.patch_size {
            return Err(Error::DimensionMismatch {
                expected: self.patch_size,
                actual: len,
            });
        }
        Ok(())
    }

    /// log p(z | k) = Σ_j log GGD((U_kᵀ z)_j; λ_{k,j}, ν_{k,j}).
    pub fn component_log_pdf(&self, z: &[f64], k: usize) -> Result<f64> {
        self.check_dim(z.len())?;
        let c = self.components.get(k).ok_or_else(|| {
            Error::InvalidParameter(format!("component {k} out of range ({} components)", self.len()))
        })?;
        let x = c.basis.tr_mul(&DVector::from_column_slice(z));
        Ok(c.log_pdf_coords(x.as_slice()))
    }

    /// K × n matrix of log w_k + log p(z_i | k) for the columns of `z`.
    pub fn log_joint(&self, z: DMatrixView<'_, f64>) -> DMatrix<f64> {
        let n = z.ncols();
        let mut out = DMatrix::zeros(self.len(), n);
        for (k, c) in self.components.iter().enumerate() {
            let x = c.basis.tr_mul(&z);
            let lw = c.weight.ln();
            for i in 0..n {
                out[(k, i)] = lw + c.log_pdf_coords(x.column(i).as_slice());
            }
        }
        out
    }

    /// Average over columns of log Σ_k w_k p(z_i | k).
    pub fn log_likelihood(&self, patches: &DMatrix<f64>) -> Result<f64> {
        self.check_dim(patches.nrows())?;
        let n = patches.ncols();
        if n == 0 {
            return Err(Error::InvalidParameter("no patches".into()));
        }
        let partial = par::map_chunks(n, par::REDUCTION_CHUNK, |start, end| {
            let lj = self.log_joint(patches.columns(start, end - start));
            (0..lj.ncols())
                .map(|i| log_sum_exp(lj.column(i).as_slice()))
                .sum::<f64>()
        });
        let total = par::tree_reduce(partial, |a, b| a + b).unwrap_or(0.0);
        Ok(total / n as f64)
    }

    /// Draws component k with probability w_k, then z = U_k x with
    /// independent GGD coordinates. Deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(self.components.iter().map(|c| c.weight)).expect("weights are positive");
        let mut out = DMatrix::zeros(self.patch_size, n);
        let mut x = DVector::zeros(self.patch_size);
        for i in 0..n {
            let c = &self.components[pick.sample(&mut rng)];
            for (xj, g) in x.iter_mut().zip(&c.ggd) {
                *xj = g.sample_one(&mut rng);
            }
            out.set_column(i, &(&c.basis * &x));
        }
        out
    }
}

pub fn component_log_pdf(z: &[f64], model: &GgmmModel, k: usize) -> Result<f64> {
    model.component_log_pdf(z, k)
}

pub fn model_log_likelihood(patches: &DMatrix<f64>, model: &GgmmModel) -> Result<f64> {
    model.log_likelihood(patches)
}

pub fn sample_model(model: &GgmmModel, n: usize, seed: u64) -> DMatrix<f64> {
    model.sample(n, seed)
}

/// Clamps an estimated shape into the admissible interval.
pub fn clamp_shape(nu: f64) -> f64 {
    if nu.is_nan() {
        NU_MAX
    } else {
        nu.clamp(NU_MIN, NU_MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn identity_model(p: usize, shapes: f64, mode: Mode) -> GgmmModel {
        let c = Component::new(1.0, DMatrix::identity(p, p), vec![1.0; p], vec![shapes; p]).unwrap();
        GgmmModel::new(mode, vec![c]).unwrap()
    }

    #[test]
    fn standard_normal_at_zero() {
        let m = identity_model(64, 2.0, Mode::Gmm);
        let v = m.component_log_pdf(&[0.0; 64], 0).unwrap();
        assert!((v + 32.0 * (2.0 * PI).ln()).abs() < 1e-12);
        assert!(m.component_log_pdf(&[0.0; 3], 0).is_err());
    }

    #[test]
    fn sign_flips_of_basis_do_not_matter() {
        let p = 6;
        let q = DMatrix::from_fn(p, p, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 9.0 } else { 0.0 })
            .qr()
            .q();
        let scales: Vec<f64> = (0..p).map(|j| 0.5 + j as f64).collect();
        let shapes = vec![0.7; p];
        let a = Component::new(1.0, q.clone(), scales.clone(), shapes.clone()).unwrap();
        let mut flipped = q;
        for j in [1, 4] {
            flipped.column_mut(j).neg_mut();
        }
        let b = Component::new(1.0, flipped, scales, shapes).unwrap();
        let ma = GgmmModel::new(Mode::Ggmm, vec![a]).unwrap();
        let mb = GgmmModel::new(Mode::Ggmm, vec![b]).unwrap();
        let z = [0.3, -1.2, 2.0, 0.0, 0.7, -0.1];
        assert!((ma.component_log_pdf(&z, 0).unwrap() - mb.component_log_pdf(&z, 0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_component_leaves_likelihood_unchanged() {
        let m = identity_model(4, 0.8, Mode::Ggmm);
        let z = m.sample(500, 1);
        let c = m.component(0).clone();
        let half = |c: &Component| Component::new(0.5, c.basis.clone(), c.scales.clone(), c.shapes.clone()).unwrap();
        let split = GgmmModel::new(Mode::Ggmm, vec![half(&c), half(&c)]).unwrap();
        let (a, b) = (m.log_likelihood(&z).unwrap(), split.log_likelihood(&z).unwrap());
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn invariants_are_enforced() {
        let bad_basis = DMatrix::from_element(2, 2, 1.0);
        let c = Component::new(1.0, bad_basis, vec![1.0; 2], vec![2.0; 2]).unwrap();
        assert!(GgmmModel::new(Mode::Gmm, vec![c]).is_err());
        let c = Component::new(0.4, DMatrix::identity(2, 2), vec![1.0; 2], vec![2.0; 2]).unwrap();
        assert!(GgmmModel::new(Mode::Gmm, vec![c.clone()]).is_err());
        assert!(GgmmModel::normalized(Mode::Gmm, vec![c.clone()]).is_ok());
        assert!(GgmmModel::normalized(Mode::Lmm, vec![c]).is_err());
        assert!(Component::new(1.0, DMatrix::identity(2, 2), vec![1.0; 2], vec![2.5; 2]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_scaled() {
        let c = Component::new(1.0, DMatrix::identity(3, 3), vec![0.5, 2.0, 7.0], vec![0.5, 1.0, 2.0]).unwrap();
        let m = GgmmModel::new(Mode::Ggmm, vec![c]).unwrap();
        let z = m.sample(100_000, 11);
        assert_eq!(z, m.sample(100_000, 11));
        for (j, want) in [0.5, 2.0, 7.0].iter().enumerate() {
            let sd = (z.row(j).iter().map(|v| v * v).sum::<f64>() / 1e5).sqrt();
            assert!((sd / want - 1.0).abs() < 0.02, "dim {j}: {sd}");
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::Ggmm, Mode::Gmm, Mode::Lmm, Mode::Hlmm] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("gauss".parse::<Mode>().is_err());
    }
}
