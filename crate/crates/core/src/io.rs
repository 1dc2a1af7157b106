//! Text formats for models and patch sets, and patch ingestion from images.
//!
//! Floats are written with 17 significant digits so every value round-trips
//! bit for bit.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::epll::{extract_patches, PatchGrid};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mixture::{Component, GgmmModel, Mode};

const MODEL_MAGIC: &str = "GGMM1";
const PATCH_MAGIC: &str = "PATCH1";

/// Stride between training patches taken from an image directory.
pub const TRAIN_STRIDE: usize = 4;

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    kind: &'static str,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R, kind: &'static str) -> Self {
        Lines {
            inner: r.lines(),
            kind,
            line: 0,
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::format(self.kind, format!("line {}: {msg}", self.line))
    }

    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(self.err(e)),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.next()?;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| self.err(format!("{t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }
}

pub fn write_model<W: Write>(model: &GgmmModel, mut w: W) -> std::io::Result<()> {
    let p = model.patch_size();
    writeln!(w, "{MODEL_MAGIC}")?;
    writeln!(w, "{} {} {}", model.len(), p, model.mode())?;
    for c in model.components() {
        writeln!(w, "{:.16e}", c.weight())?;
        for r in 0..p {
            writeln!(w, "{}", join(c.basis().row(r).iter().copied()))?;
        }
        writeln!(w, "{}", join(c.scales().iter().copied()))?;
        writeln!(w, "{}", join(c.shapes().iter().copied()))?;
    }
    w.flush()
}

pub fn read_model<R: BufRead>(r: R) -> Result<GgmmModel> {
    let mut lines = Lines::new(r, "model");
    if lines.next()?.trim_end() != MODEL_MAGIC {
        return Err(lines.err("missing GGMM1 magic"));
    }
    let header = lines.next()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(lines.err("header must be \"K P mode\""));
    }
    let k: usize = parts[0].parse().map_err(|e| lines.err(format!("K: {e}")))?;
    let p: usize = parts[1].parse().map_err(|e| lines.err(format!("P: {e}")))?;
    let mode: Mode = parts[2].parse()?;
    if k == 0 || p == 0 {
        return Err(lines.err("K and P must be positive"));
    }
    let mut comps = Vec::with_capacity(k);
    for _ in 0..k {
        let weight = lines.floats(1)?[0];
        let mut basis = DMatrix::zeros(p, p);
        for r in 0..p {
            for (c, v) in lines.floats(p)?.into_iter().enumerate() {
                basis[(r, c)] = v;
            }
        }
        let scales = lines.floats(p)?;
        let shapes = lines.floats(p)?;
        comps.push(Component::new(weight, basis, scales, shapes)?);
    }
    GgmmModel::new(mode, comps)
}

pub fn save_model(model: &GgmmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GgmmModel> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(f))
}

/// One patch per line after the "P n" header.
pub fn write_patches<W: Write>(patches: &DMatrix<f64>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{PATCH_MAGIC}")?;
    writeln!(w, "{} {}", patches.nrows(), patches.ncols())?;
    for c in patches.column_iter() {
        writeln!(w, "{}", join(c.iter().copied()))?;
    }
    w.flush()
}

/// Accepts any whitespace layout of the n·P values.
pub fn read_patches<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut lines = Lines::new(r, "patch");
    if lines.next()?.trim_end() != PATCH_MAGIC {
        return Err(lines.err("missing PATCH1 magic"));
    }
    let header = lines.next()?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| lines.err(format!("{t:?}: {e}"))))
        .collect::<Result<_>>()?;
    let [p, n] = dims[..] else {
        return Err(lines.err("header must be \"P n\""));
    };
    let mut values = Vec::with_capacity(p * n);
    while values.len() < p * n {
        let line = match lines.next() {
            Ok(l) => l,
            Err(_) => return Err(lines.err(format!("expected {} values, found {}", p * n, values.len()))),
        };
        for t in line.split_whitespace() {
            values.push(t.parse::<f64>().map_err(|e| lines.err(format!("{t:?}: {e}")))?);
        }
    }
    if values.len() != p * n {
        return Err(lines.err(format!("expected {} values, found {}", p * n, values.len())));
    }
    Ok(DMatrix::from_vec(p, n, values))
}

pub fn save_patches(patches: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_patches(patches, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_patches(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_patches(std::io::BufReader::new(f))
}

/// `.pgm` files in `dir`, sorted by name.
pub fn pgm_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Centred patches on a `stride` lattice.
pub fn image_patches(img: &ImageBuffer, edge: usize, stride: usize) -> Result<DMatrix<f64>> {
    let grid = PatchGrid::for_image(img, edge)?;
    Ok(extract_patches(img, &grid.strided(stride), edge)?.0)
}

/// Training set from a directory of PGMs: stride-4 centred patches of every
/// image, shuffled by `seed`, keeping at most `limit`.
pub fn patches_from_dir(dir: impl AsRef<Path>, edge: usize, seed: u64, limit: Option<usize>) -> Result<DMatrix<f64>> {
    let files = pgm_files(&dir)?;
    if files.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no .pgm files in {}",
            dir.as_ref().display()
        )));
    }
    let mut columns = Vec::new();
    for f in &files {
        let z = image_patches(&ImageBuffer::load_pgm(f)?, edge, TRAIN_STRIDE)?;
        columns.extend(z.column_iter().map(|c| c.into_owned()));
    }
    columns.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if let Some(l) = limit {
        columns.truncate(l);
    }
    Ok(DMatrix::from_columns(&columns))
}

/// Patches from either a directory of PGMs or a PATCH1 file.
pub fn load_training_patches(path: impl AsRef<Path>, edge: usize, seed: u64, limit: Option<usize>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    if path.is_dir() {
        patches_from_dir(path, edge, seed, limit)
    } else {
        let mut z = load_patches(path)?;
        if z.nrows() != edge * edge {
            return Err(Error::DimensionMismatch {
                expected: edge * edge,
                actual: z.nrows(),
            });
        }
        if let Some(l) = limit.filter(|&l| l < z.ncols()) {
            z = z.columns(0, l).into_owned();
        }
        Ok(z)
    }
}

/// Average log-likelihood per non-overlapping centred patch.
pub fn image_log_likelihood(img: &ImageBuffer, model: &GgmmModel, edge: usize) -> Result<f64> {
    let z = image_patches(img, edge, edge)?;
    Ok(model.log_likelihood(&z)? / z.ncols() as f64)
}
