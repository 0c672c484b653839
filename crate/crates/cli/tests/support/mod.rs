#![allow(dead_code)]

use dmt::pipeline::FrameSequence;

/// PSNR straight from its definition, `10·log10(peak² / MSE)`.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    10.0 * (peak * peak / mse).log10()
}

/// Mean SSIM with an explicit 2-D Gaussian window (11×11, σ = 1.5) slid
/// over every fully contained position. Weights are normalized once over
/// the whole window.
pub fn ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let (k, sigma, c1, c2) = (11usize, 1.5f64, 0.01f64.powi(2), 0.03f64.powi(2));
    let c = (k as f64 - 1.0) / 2.0;
    let mut wts = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            wts[i * k + j] = (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let s: f64 = wts.iter().sum();
    wts.iter_mut().for_each(|v| *v /= s);
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - k {
        for x0 in 0..=w - k {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (y0 + i) * w + x0 + j;
                    ma += wts[i * k + j] * a[p];
                    mb += wts[i * k + j] * b[p];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (y0 + i) * w + x0 + j;
                    let g = wts[i * k + j];
                    va += g * (a[p] - ma).powi(2);
                    vb += g * (b[p] - mb).powi(2);
                    cov += g * (a[p] - ma) * (b[p] - mb);
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

pub fn gray(f: &FrameSequence, t: usize) -> Vec<f64> {
    let plane = f.height() * f.width();
    let d = f.frame_data(t);
    (0..plane)
        .map(|i| 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i])
        .collect()
}

pub fn constant(t: usize, h: usize, w: usize, v: f64) -> FrameSequence {
    FrameSequence::new(t, h, w, vec![v; t * 3 * h * w]).unwrap()
}

pub fn textured(t: usize, h: usize, w: usize, seed: u64) -> FrameSequence {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let data = (0..t * 3 * h * w)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    FrameSequence::new(t, h, w, data).unwrap()
}
