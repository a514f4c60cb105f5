//! Synthetic paired datasets and the `DABT` tensor file.
//!
//! Every generator is a pure function of its arguments and seed. Each task has
//! either a closed-form optimal predictor (Gaussian pairs) or an exact or
//! well-conditioned inverse (two moons, box blur), which is what makes
//! oracle-based checks possible.

use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{check_dim, Error, Result};
use crate::rng::Stream;

pub const DATASET_MAGIC: &[u8; 4] = b"DABT";
pub const DATASET_VERSION: u32 = 1;

/// Source-domain ground truth `x0` and its conditioning input `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub x0: Vec<f64>,
    pub y: Vec<f64>,
}

impl PairedSample {
    pub fn new(x0: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_dim("paired sample", x0.len(), y.len())?;
        if x0.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Config("paired sample has non-finite entries".into()));
        }
        Ok(Self { x0, y })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub samples: Vec<PairedSample>,
    pub dim: usize,
    pub name: String,
    pub generator_seed: u64,
}

impl PairedDataset {
    pub fn new(samples: Vec<PairedSample>, name: impl Into<String>, generator_seed: u64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Config("dataset needs at least one sample".into()))?;
        let dim = first.dim();
        for s in &samples {
            check_dim("dataset sample", dim, s.dim())?;
        }
        Ok(Self {
            samples,
            dim,
            name: name.into(),
            generator_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples and the rest, keeping order.
    pub fn split(&self, n: usize) -> Result<(PairedDataset, PairedDataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::Config(format!(
                "cannot split {} samples at {n}",
                self.len()
            )));
        }
        let head = PairedDataset::new(self.samples[..n].to_vec(), self.name.clone(), self.generator_seed)?;
        let tail = PairedDataset::new(self.samples[n..].to_vec(), self.name.clone(), self.generator_seed)?;
        Ok((head, tail))
    }
}

/// `x0 ~ N(mean, sd² I)` and `y = x0 + offset`.
pub fn gen_gaussian_pairs(
    n: usize,
    dim: usize,
    mean: f64,
    sd: f64,
    offset: f64,
    seed: u64,
) -> Result<PairedDataset> {
    if !(sd > 0.0) {
        return Err(Error::Config("gaussian pairs need sd > 0".into()));
    }
    if dim == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    let mut rng = Stream::named(seed, "data/gaussian");
    let samples = (0..n)
        .map(|_| {
            let x0: Vec<f64> = (0..dim).map(|_| mean + sd * rng.normal()).collect();
            let y = x0.iter().map(|v| v + offset).collect();
            PairedSample { x0, y }
        })
        .collect();
    PairedDataset::new(samples, "gaussian", seed)
}

/// Factor of the deterministic two-moons pairing `y = MOONS_SCALE · x0`.
///
/// A power of two, so the inverse `x0 = y / MOONS_SCALE` is exact.
pub const MOONS_SCALE: f64 = 0.5;

/// Two interleaved half circles, paired with a contraction toward the origin.
///
/// The upper arc is the unit circle around `(0, 0)`; the lower arc is the unit
/// circle around `(1, 0.5)`, traversed below its centre.
pub fn gen_twomoons_pairs(n: usize, noise_std: f64, seed: u64) -> Result<PairedDataset> {
    if noise_std < 0.0 {
        return Err(Error::Config("noise_std must be non-negative".into()));
    }
    let mut rng = Stream::named(seed, "data/twomoons");
    let samples = (0..n)
        .map(|i| {
            let theta = std::f64::consts::PI * rng.uniform();
            let (mut a, mut b) = if i % 2 == 0 {
                (theta.cos(), theta.sin())
            } else {
                (1.0 - theta.cos(), 0.5 - theta.sin())
            };
            if noise_std > 0.0 {
                a += noise_std * rng.normal();
                b += noise_std * rng.normal();
            }
            let x0 = vec![a, b];
            let y = x0.iter().map(|v| MOONS_SCALE * v).collect();
            PairedSample { x0, y }
        })
        .collect();
    PairedDataset::new(samples, "twomoons", seed)
}

/// Box blur of a row-major `side × side` image with replicated edges.
pub fn box_blur(image: &[f64], side: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return image.to_vec();
    }
    let r = radius as isize;
    let last = side as isize - 1;
    let norm = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side as isize {
        for j in 0..side as isize {
            let mut acc = 0.0;
            for di in -r..=r {
                let row = (i + di).clamp(0, last) as usize;
                for dj in -r..=r {
                    let col = (j + dj).clamp(0, last) as usize;
                    acc += image[row * side + col];
                }
            }
            out.push(acc / norm);
        }
    }
    out
}

/// Random piecewise-constant patch: a background level plus 2–4 rectangles.
fn piecewise_patch(side: usize, rng: &mut Stream) -> Vec<f64> {
    let mut img = vec![rng.uniform(); side * side];
    let rects = rng.int_inclusive(2, 4);
    for _ in 0..rects {
        let r0 = rng.int_inclusive(0, side - 1);
        let r1 = rng.int_inclusive(r0, side - 1);
        let c0 = rng.int_inclusive(0, side - 1);
        let c1 = rng.int_inclusive(c0, side - 1);
        let v = rng.uniform();
        for r in r0..=r1 {
            for c in c0..=c1 {
                img[r * side + c] = v;
            }
        }
    }
    img
}

/// Sharp piecewise-constant patches `x0` paired with their box blur `y`.
pub fn gen_blur_pairs(n: usize, side: usize, blur_radius: usize, seed: u64) -> Result<PairedDataset> {
    if !(4..=32).contains(&side) {
        return Err(Error::Config(format!("side {side} outside [4, 32]")));
    }
    let mut rng = Stream::named(seed, "data/blur");
    let samples = (0..n)
        .map(|_| {
            let x0 = piecewise_patch(side, &mut rng);
            let y = box_blur(&x0, side, blur_radius);
            PairedSample { x0, y }
        })
        .collect();
    PairedDataset::new(samples, "blur", seed)
}

pub fn encode_dataset(ds: &PairedDataset) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(ds.len() as u32);
    w.u32(ds.dim as u32);
    for s in &ds.samples {
        w.f64s(&s.x0);
        w.f64s(&s.y);
    }
    w.finish()
}

/// Parses a `DABT` buffer; `name` labels the resulting dataset.
pub fn decode_dataset(bytes: &[u8], name: &str) -> Result<PairedDataset> {
    let mut r = Reader::new(bytes, "dataset");
    r.magic(DATASET_MAGIC)?;
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if count == 0 || dim == 0 {
        return Err(r.error(format!("empty dataset ({count} × {dim})")));
    }
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let x0 = r.f64s(dim)?;
        let y = r.f64s(dim)?;
        samples.push(PairedSample { x0, y });
    }
    r.expect_end()?;
    PairedDataset::new(samples, name, 0)
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &PairedDataset) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_dataset(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<PairedDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    decode_dataset(&bytes, name)
}
