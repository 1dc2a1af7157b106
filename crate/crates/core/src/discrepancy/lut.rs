//! Lookup tables of the approximation constants over (ν, λ) at unit noise.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use log::info;

use super::{compute_asymptotics, AsymptoticParams};
use crate::error::{Error, Result};
use crate::ggd::{NU_MAX, NU_MIN};
use crate::par;

pub const LUT_SIZE: usize = 100;
pub const LUT_LAMBDA_MIN: f64 = 1e-3;
pub const LUT_LAMBDA_MAX: f64 = 1e3;

const MAGIC: &str = "GGLUT1";
const NU_HEADER: &str = "nu 100 0.3 2.0 linear";
const LAMBDA_HEADER: &str = "lambda 100 1e-3 1e3 log";
const BLOCKS: [&str; 4] = ["gamma0", "beta1", "beta2", "h"];

static BUNDLED_TEXT: &str = include_str!("../../data/discrepancy.gglut");

/// Four 100 × 100 tables (row = ν index, column = λ index).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyLut {
    pub nu_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub gamma0: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn nu_grid() -> Vec<f64> {
    let step = (NU_MAX - NU_MIN) / (LUT_SIZE - 1) as f64;
    (0..LUT_SIZE)
        .map(|i| if i == LUT_SIZE - 1 { NU_MAX } else { NU_MIN + step * i as f64 })
        .collect()
}

pub fn lambda_grid() -> Vec<f64> {
    let (lo, hi) = (LUT_LAMBDA_MIN.log10(), LUT_LAMBDA_MAX.log10());
    let step = (hi - lo) / (LUT_SIZE - 1) as f64;
    (0..LUT_SIZE)
        .map(|j| match j {
            0 => LUT_LAMBDA_MIN,
            _ if j == LUT_SIZE - 1 => LUT_LAMBDA_MAX,
            _ => 10f64.powf(lo + step * j as f64),
        })
        .collect()
}

/// Runs the quadrature fit at all 10⁴ grid nodes. Nodes are independent, so
/// the result does not depend on scheduling.
pub fn build_lut() -> Result<DiscrepancyLut> {
    let nus = nu_grid();
    let lambdas = lambda_grid();
    let total = LUT_SIZE * LUT_SIZE;
    let done = AtomicUsize::new(0);
    let nodes = par::try_map_indexed(total, |idx| {
        let (nu, lambda) = (nus[idx / LUT_SIZE], lambdas[idx % LUT_SIZE]);
        let asym = compute_asymptotics(lambda, nu).map_err(|e| Error::LutNode {
            nu,
            lambda,
            source: Box::new(e),
        })?;
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n.is_multiple_of(500) || n == total {
            info!("discrepancy tables: {n}/{total} nodes");
        }
        Ok(asym)
    })?;
    Ok(DiscrepancyLut {
        nu_grid: nus,
        lambda_grid: lambdas,
        gamma0: nodes.iter().map(|a| a.gamma0).collect(),
        beta1: nodes.iter().map(|a| a.beta1).collect(),
        beta2: nodes.iter().map(|a| a.beta2).collect(),
        h: nodes.iter().map(|a| a.h).collect(),
    })
}

// Cell index and weight of `v` in a uniform grid [lo, hi] with n nodes,
// clamped to the grid.
fn locate(v: f64, lo: f64, hi: f64, n: usize) -> (usize, f64) {
    let pos = ((v - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
    let i = (pos.floor() as usize).min(n - 2);
    (i, pos - i as f64)
}

impl DiscrepancyLut {
    /// The committed tables shipped with the crate.
    pub fn bundled() -> &'static DiscrepancyLut {
        static LUT: OnceLock<DiscrepancyLut> = OnceLock::new();
        LUT.get_or_init(|| {
            DiscrepancyLut::read(BUNDLED_TEXT.as_bytes()).expect("bundled lookup table is well formed")
        })
    }

    /// Constants at (λ/σ, ν) by bilinear interpolation in (ν, ln λ); values
    /// outside the grid clamp to its boundary.
    pub fn params(&self, lambda: f64, nu: f64) -> AsymptoticParams {
        let (i, wi) = locate(nu, NU_MIN, NU_MAX, LUT_SIZE);
        let (j, wj) = locate(lambda.ln(), LUT_LAMBDA_MIN.ln(), LUT_LAMBDA_MAX.ln(), LUT_SIZE);
        let k = i * LUT_SIZE + j;
        let bilinear = |t: &[f64]| {
            let top = t[k] + wj * (t[k + 1] - t[k]);
            let bottom = t[k + LUT_SIZE] + wj * (t[k + LUT_SIZE + 1] - t[k + LUT_SIZE]);
            top + wi * (bottom - top)
        };
        AsymptoticParams {
            gamma0: bilinear(&self.gamma0),
            alpha1: 2.0,
            beta1: bilinear(&self.beta1),
            alpha2: nu.clamp(NU_MIN, NU_MAX),
            beta2: bilinear(&self.beta2),
            h: bilinear(&self.h),
        }
    }

    /// Constants stored at grid node (i, j).
    pub fn node(&self, i: usize, j: usize) -> AsymptoticParams {
        let k = i * LUT_SIZE + j;
        AsymptoticParams {
            gamma0: self.gamma0[k],
            alpha1: 2.0,
            beta1: self.beta1[k],
            alpha2: self.nu_grid[i],
            beta2: self.beta2[k],
            h: self.h[k],
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut out = String::with_capacity(4 * LUT_SIZE * LUT_SIZE * 25);
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "{NU_HEADER}").unwrap();
        writeln!(out, "{LAMBDA_HEADER}").unwrap();
        for (name, table) in BLOCKS.iter().zip(self.tables()) {
            writeln!(out, "{name}").unwrap();
            for row in table.chunks(LUT_SIZE) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        w.write_all(out.as_bytes())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: String| Error::format("lookup table", m);
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(bad(format!("reading {what}: {e}"))),
                None => Err(bad(format!("unexpected end of file before {what}"))),
            }
        };
        for expect in [MAGIC, NU_HEADER, LAMBDA_HEADER] {
            let line = next("header")?;
            if line.trim_end() != expect {
                return Err(bad(format!("expected {expect:?}, found {line:?}")));
            }
        }
        let mut tables = Vec::with_capacity(BLOCKS.len());
        for name in BLOCKS {
            let line = next(name)?;
            if line.trim() != name {
                return Err(bad(format!("expected block {name:?}, found {line:?}")));
            }
            let mut table = Vec::with_capacity(LUT_SIZE * LUT_SIZE);
            for row in 0..LUT_SIZE {
                let line = next(name)?;
                let before = table.len();
                for tok in line.split_whitespace() {
                    table.push(
                        tok.parse::<f64>()
                            .map_err(|e| bad(format!("{name} row {row}: {tok:?}: {e}")))?,
                    );
                }
                if table.len() - before != LUT_SIZE {
                    return Err(bad(format!(
                        "{name} row {row} has {} values, expected {LUT_SIZE}",
                        table.len() - before
                    )));
                }
            }
            tables.push(table);
        }
        let h = tables.pop().unwrap();
        let beta2 = tables.pop().unwrap();
        let beta1 = tables.pop().unwrap();
        let gamma0 = tables.pop().unwrap();
        if let Some(v) = h.iter().find(|v| !(**v > 0.0)) {
            return Err(bad(format!("non-positive softplus sharpness {v}")));
        }
        Ok(DiscrepancyLut {
            nu_grid: nu_grid(),
            lambda_grid: lambda_grid(),
            gamma0,
            beta1,
            beta2,
            h,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        DiscrepancyLut::read(std::io::BufReader::new(file))
    }

    fn tables(&self) -> [&[f64]; 4] {
        [&self.gamma0, &self.beta1, &self.beta2, &self.h]
    }
}
