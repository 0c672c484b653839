//! PSNR and SSIM on `[T × 3 × H × W]` frame sequences in `[0, 1]`.

use dmt::pipeline::FrameSequence;
use serde::Serialize;

use crate::error::CliError;

/// Luma weights for RGB → gray.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L`.
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

/// PSNR of one frame. `None` when the frames are identical (infinite).
pub fn psnr_frame(a: &[f64], b: &[f64], peak: f64) -> Option<f64> {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    (mse > 0.0).then(|| 10.0 * (peak * peak / mse).log10())
}

fn check_same(a: &FrameSequence, b: &FrameSequence) -> Result<(), CliError> {
    if a.tensor().shape() != b.tensor().shape() {
        return Err(CliError::Data(format!(
            "frame shapes differ: {:?} vs {:?}",
            a.tensor().shape(),
            b.tensor().shape()
        )));
    }
    Ok(())
}

/// Per-frame PSNR in dB; `None` marks an infinite value.
pub fn psnr(a: &FrameSequence, b: &FrameSequence, peak: f64) -> Result<Vec<Option<f64>>, CliError> {
    check_same(a, b)?;
    Ok((0..a.frames())
        .map(|t| psnr_frame(a.frame_data(t), b.frame_data(t), peak))
        .collect())
}

pub fn to_gray(rgb: &[f64], plane: usize) -> Vec<f64> {
    (0..plane)
        .map(|i| LUMA[0] * rgb[i] + LUMA[1] * rgb[plane + i] + LUMA[2] * rgb[2 * plane + i])
        .collect()
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" Gaussian filter of an `h × w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            rows[y * ow + ox] = g
                .iter()
                .enumerate()
                .map(|(j, gj)| gj * x[y * w + ox + j])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = g
                .iter()
                .enumerate()
                .map(|(i, gi)| gi * rows[(oy + i) * ow + ox])
                .sum();
        }
    }
    out
}

/// Mean local SSIM of two gray `h × w` planes.
pub fn ssim_gray(a: &[f64], b: &[f64], h: usize, w: usize, p: SsimParams) -> Result<f64, CliError> {
    if h < p.window || w < p.window {
        return Err(CliError::Data(format!(
            "{h}x{w} frame is smaller than the {}x{} SSIM window",
            p.window, p.window
        )));
    }
    let g = gaussian_kernel(p.window, p.sigma);
    let c1 = (p.k1 * p.peak).powi(2);
    let c2 = (p.k2 * p.peak).powi(2);
    let prod = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(a, h, w, &g);
    let mu_b = filter_valid(b, h, w, &g);
    let aa = filter_valid(&prod(a, a), h, w, &g);
    let bb = filter_valid(&prod(b, b), h, w, &g);
    let ab = filter_valid(&prod(a, b), h, w, &g);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Per-frame SSIM on luma.
pub fn ssim(a: &FrameSequence, b: &FrameSequence, p: SsimParams) -> Result<Vec<f64>, CliError> {
    check_same(a, b)?;
    let (h, w) = (a.height(), a.width());
    (0..a.frames())
        .map(|t| {
            ssim_gray(
                &to_gray(a.frame_data(t), h * w),
                &to_gray(b.frame_data(t), h * w),
                h,
                w,
                p,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FrameMetrics {
    pub name: String,
    /// `null` when infinite.
    pub psnr: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    /// Mean of per-frame PSNR; `null` (and the flag set) if any frame is
    /// infinite.
    pub mean_psnr: Option<f64>,
    pub mean_psnr_infinite: bool,
    pub mean_ssim: f64,
    /// Share of hole pixels over all frames, if masks were given.
    pub hole_ratio: Option<f64>,
}

impl MetricReport {
    pub fn new(
        names: &[String],
        pred: &FrameSequence,
        truth: &FrameSequence,
        hole_ratio: Option<f64>,
    ) -> Result<Self, CliError> {
        let p = psnr(pred, truth, 1.0)?;
        let s = ssim(pred, truth, SsimParams::default())?;
        let frames: Vec<FrameMetrics> = names
            .iter()
            .zip(p.iter().zip(&s))
            .map(|(name, (&psnr, &ssim))| FrameMetrics {
                name: name.clone(),
                psnr,
                psnr_infinite: psnr.is_none(),
                ssim,
            })
            .collect();
        let infinite = p.iter().any(Option::is_none);
        let n = frames.len() as f64;
        Ok(Self {
            mean_psnr: (!infinite).then(|| p.iter().flatten().sum::<f64>() / n),
            mean_psnr_infinite: infinite,
            mean_ssim: s.iter().sum::<f64>() / n,
            frames,
            hole_ratio,
        })
    }

    pub const CSV_HEADER: &'static str = "frame,psnr_db,ssim";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        let fmt = |v: Option<f64>| v.map_or("inf".to_string(), |v| v.to_string());
        for f in &self.frames {
            out.push_str(&format!("{},{},{}\n", f.name, fmt(f.psnr), f.ssim));
        }
        out.push_str(&format!(
            "mean,{},{}\n",
            fmt(self.mean_psnr),
            self.mean_ssim
        ));
        out
    }
}
