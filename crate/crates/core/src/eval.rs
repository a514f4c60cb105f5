//! Faithfulness and consistency metrics, and the CSV rows built from them.

use std::collections::BTreeMap;

use crate::error::{check_dim, Error, Result};

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

pub const CSV_HEADER: &str = "sampler,steps,trial,psnr_db,ssim,std,mean_gap,cov_gap";

/// `10 log10(peak² / MSE)`; `+∞` when the inputs are identical.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    check_dim("psnr", a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Config("psnr of empty vectors".into()));
    }
    if !(peak > 0.0) {
        return Err(Error::Config("psnr peak must be positive".into()));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR clamped to [`PSNR_CAP_DB`] for reporting.
pub fn psnr_capped(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    Ok(psnr(a, b, peak)?.min(PSNR_CAP_DB))
}

fn gaussian_window(n: usize) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..n)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w = Vec::with_capacity(n * n);
    for gi in &g {
        for gj in &g {
            w.push(gi * gj);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Mean single-scale SSIM over all valid Gaussian windows.
///
/// The 11×11 window (σ = 1.5) shrinks to the image size when `side < 11`.
pub fn ssim(a: &[f64], b: &[f64], side: usize, peak: f64) -> Result<f64> {
    if side < 4 {
        return Err(Error::Config(format!("ssim needs side >= 4, got {side}")));
    }
    check_dim("ssim a", side * side, a.len())?;
    check_dim("ssim b", side * side, b.len())?;
    let n = SSIM_WINDOW.min(side);
    let w = gaussian_window(n);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let stat = |p: &[f64], q: &[f64], i0: usize, j0: usize| {
        let mut s = 0.0;
        for di in 0..n {
            for dj in 0..n {
                let k = (i0 + di) * side + j0 + dj;
                s += w[di * n + dj] * p[k] * q[k];
            }
        }
        s
    };
    let mean = |p: &[f64], i0: usize, j0: usize| {
        let mut s = 0.0;
        for di in 0..n {
            for dj in 0..n {
                s += w[di * n + dj] * p[(i0 + di) * side + j0 + dj];
            }
        }
        s
    };
    let positions = side - n + 1;
    let mut total = 0.0;
    for i0 in 0..positions {
        for j0 in 0..positions {
            let ma = mean(a, i0, j0);
            let mb = mean(b, i0, j0);
            let va = stat(a, a, i0, j0) - ma * ma;
            let vb = stat(b, b, i0, j0) - mb * mb;
            let cab = stat(a, b, i0, j0) - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cab + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (positions * positions) as f64)
}

/// Bessel-corrected per-element standard deviation across trials, averaged
/// over elements.
pub fn trial_std(outputs: &[Vec<f64>]) -> Result<f64> {
    if outputs.len() < 2 {
        return Err(Error::Config(format!(
            "trial std needs at least 2 outputs, got {}",
            outputs.len()
        )));
    }
    let d = outputs[0].len();
    for o in outputs {
        check_dim("trial std", d, o.len())?;
    }
    if d == 0 {
        return Ok(0.0);
    }
    let n = outputs.len() as f64;
    let mut acc = 0.0;
    for i in 0..d {
        // shifted by the first trial so identical trials give exactly zero
        let base = outputs[0][i];
        let mean = base + outputs.iter().map(|o| o[i] - base).sum::<f64>() / n;
        let var = outputs.iter().map(|o| (o[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        acc += var.sqrt();
    }
    Ok(acc / d as f64)
}

fn moments(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("moment distance of an empty set".into()))?;
    let d = first.len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        check_dim("moment distance", d, s.len())?;
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = vec![0.0; d * d];
    let denom = if samples.len() > 1 { n - 1.0 } else { 1.0 };
    for s in samples {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += di * (s[j] - mean[j]);
            }
        }
    }
    for c in &mut cov {
        *c /= denom;
    }
    Ok((mean, cov))
}

/// Euclidean distance between empirical means and Frobenius distance between
/// empirical covariances.
pub fn moment_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(f64, f64)> {
    let (ma, ca) = moments(a)?;
    let (mb, cb) = moments(b)?;
    check_dim("moment distance", ma.len(), mb.len())?;
    let mean_gap = ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let cov_gap = ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    Ok((mean_gap, cov_gap))
}

/// Formats like C's `%g` with six significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // the decimal exponent after rounding to six significant digits
    let sci = format!("{v:.5e}");
    let (mantissa, e) = sci.split_once('e').unwrap();
    let exp: i32 = e.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One CSV row of an experiment table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub sampler: String,
    pub steps: usize,
    pub trial: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub std: f64,
    pub mean_gap: f64,
    pub cov_gap: f64,
    pub extra: BTreeMap<String, f64>,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.sampler,
            self.steps,
            self.trial,
            fmt_sig(self.psnr_db.min(PSNR_CAP_DB)),
            fmt_sig(self.ssim),
            fmt_sig(self.std),
            fmt_sig(self.mean_gap),
            fmt_sig(self.cov_gap)
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return Err(Error::Config(format!("expected 8 CSV fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad number {s:?} in CSV row")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad integer {s:?} in CSV row")))
        };
        Ok(Self {
            sampler: f[0].to_string(),
            steps: int(f[1])?,
            trial: int(f[2])?,
            psnr_db: num(f[3])?,
            ssim: num(f[4])?,
            std: num(f[5])?,
            mean_gap: num(f[6])?,
            cov_gap: num(f[7])?,
            extra: BTreeMap::new(),
        })
    }
}

/// Rows sorted by `(sampler, steps, trial)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.sampler.as_str(), a.steps, a.trial).cmp(&(b.sampler.as_str(), b.steps, b.trial))
        });
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv_line());
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::Config(format!("unexpected CSV header {other:?}")));
            }
        }
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(MetricsRow::from_csv_line)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}

/// Scores one `(sampler, steps)` cell. `outputs[trial][input]` are the
/// estimates; `ground_truth[input]` the targets.
///
/// PSNR and SSIM are averaged over inputs, `std` is the across-trial spread
/// averaged over inputs (NaN with a single trial) and shared by every row of
/// the cell, and the moment gaps compare the set of estimates with the set of
/// targets.
pub fn rows_for_cell(
    sampler: &str,
    steps: usize,
    outputs: &[Vec<Vec<f64>>],
    ground_truth: &[Vec<f64>],
    side: Option<usize>,
    peak: f64,
) -> Result<Vec<MetricsRow>> {
    let n = ground_truth.len();
    if n == 0 {
        return Err(Error::Config("no inputs to score".into()));
    }
    for o in outputs {
        check_dim("outputs per trial", n, o.len())?;
    }
    let std = if outputs.len() >= 2 {
        let mut acc = 0.0;
        for i in 0..n {
            let across: Vec<Vec<f64>> = outputs.iter().map(|o| o[i].clone()).collect();
            acc += trial_std(&across)?;
        }
        acc / n as f64
    } else {
        f64::NAN
    };
    outputs
        .iter()
        .enumerate()
        .map(|(trial, outs)| {
            let mut p = 0.0;
            let mut q = 0.0;
            for (o, g) in outs.iter().zip(ground_truth) {
                p += psnr_capped(o, g, peak)?;
                if let Some(side) = side {
                    q += ssim(o, g, side, peak)?;
                }
            }
            let (mean_gap, cov_gap) = moment_distance(outs, ground_truth)?;
            Ok(MetricsRow {
                sampler: sampler.to_string(),
                steps,
                trial,
                psnr_db: p / n as f64,
                ssim: if side.is_some() { q / n as f64 } else { f64::NAN },
                std,
                mean_gap,
                cov_gap,
                extra: BTreeMap::new(),
            })
        })
        .collect()
}
