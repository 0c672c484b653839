//! Reference implementations written as plain loops over `f64` slices.
//! They share no code with the library's tensor operators.

#![allow(dead_code)]

use dmt::dmt::{DmtConfig, DmtLayerParams};
use dmt::masking::MaskMap;
use dmt::numerics::{finite_diff_check, GradCheckOptions, ParamSet, SlidingWindowSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `erf` from the all-positive series
/// `erf(x) = 2/√π · e^{−x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1))`.
pub fn erf(x: f64) -> f64 {
    if x.abs() > 6.0 {
        return x.signum();
    }
    let mut term = x;
    let mut sum = x;
    for n in 1..400 {
        term *= 2.0 * x * x / (2 * n + 1) as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// `[m×k]·[k×n]`, row-major.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i * k + l] * b[l * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// Direct cross-correlation of one `[ci×h×w]` image with `[co×ci×k×k]`
/// weights.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    ci: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    co: usize,
    k: usize,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = bias.map_or(0.0, |b| b[o]);
                for c in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                s += weight[((o * ci + c) * k + ky) * k + kx]
                                    * x[(c * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = s;
            }
        }
    }
    (out, oh, ow)
}

/// Per-channel `K×K` same-padded cross-correlation.
pub fn depthwise(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    k: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let mut s = bias.map_or(0.0, |b| b[ch]);
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = y as isize + ky as isize - r;
                        let ix = xx as isize + kx as isize - r;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            s += weight[(ch * k + ky) * k + kx]
                                * x[(ch * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(ch * h + y) * w + xx] = s;
            }
        }
    }
    out
}

/// Binary dilation by a `(2r+1)²` square, clipped to the frame.
pub fn dilate(m: &MaskMap, r: usize) -> MaskMap {
    let (h, w) = m.dims();
    let r = r as isize;
    MaskMap::from_fn(h, w, |y, x| {
        let (y, x) = (y as isize, x as isize);
        (y - r..=y + r).any(|yy| {
            (x - r..=x + r).any(|xx| {
                yy >= 0
                    && xx >= 0
                    && yy < h as isize
                    && xx < w as isize
                    && m.get(yy as usize, xx as usize)
            })
        })
    })
}

/// Mask activation transcribed loop by loop: pad, visit every window
/// top-left `(i, j)` in `0..=H+2p−k` with step `s`, add ones over windows
/// that see a valid pixel, clamp, un-pad.
pub fn algorithm1(m: &MaskMap, k: usize, s: usize, p: usize) -> MaskMap {
    let (h, w) = m.dims();
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut padded = vec![vec![0.0f64; pw]; ph];
    for y in 0..h {
        for x in 0..w {
            padded[y + p][x + p] = if m.get(y, x) { 1.0 } else { 0.0 };
        }
    }
    let mut acc = vec![vec![0.0f64; pw]; ph];
    let mut i = 0;
    while i + k <= ph {
        let mut j = 0;
        while j + k <= pw {
            let mut total = 0.0;
            for a in 0..k {
                for b in 0..k {
                    total += padded[i + a][j + b];
                }
            }
            let v = if total > 0.0 { 1.0 } else { 0.0 };
            for a in 0..k {
                for b in 0..k {
                    acc[i + a][j + b] += v;
                }
            }
            j += s;
        }
        i += s;
    }
    MaskMap::from_fn(h, w, |y, x| acc[y + p][x + p].clamp(0.0, 1.0) > 0.0)
}

/// Chebyshev distance from the farthest invalid cell to the nearest valid
/// one. `None` if no cell is valid.
pub fn hole_radius(m: &MaskMap) -> Option<usize> {
    let (h, w) = m.dims();
    let valid: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| m.get(y, x))
        .collect();
    if valid.is_empty() {
        return None;
    }
    let mut rho = 0;
    for y in 0..h {
        for x in 0..w {
            if !m.get(y, x) {
                let d = valid
                    .iter()
                    .map(|&(vy, vx)| vy.abs_diff(y).max(vx.abs_diff(x)))
                    .min()
                    .unwrap();
                rho = rho.max(d);
            }
        }
    }
    Some(rho)
}

fn layer_norm_rows(
    z: &[f64],
    n: usize,
    d: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        let row = &z[i * d..(i + 1) * d];
        let mu = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        for j in 0..d {
            out[i * d + j] = (row[j] - mu) / (var + eps).sqrt() * gamma[j] + beta[j];
        }
    }
    out
}

fn pointwise(x: &[f64], c: usize, plane: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c * plane];
    for o in 0..c {
        for i in 0..plane {
            let mut s = bias[o];
            for ci in 0..c {
                s += weight[o * c + ci] * x[ci * plane + i];
            }
            out[o * plane + i] = s;
        }
    }
    out
}

/// One layer without token selection or mask bookkeeping, on a
/// `[T×d×H×W]` grid.
pub fn dense_layer(
    grid: &[f64],
    t: usize,
    h: usize,
    w: usize,
    p: &DmtLayerParams,
    cfg: &DmtConfig,
) -> Vec<f64> {
    let d = cfg.dim;
    let plane = h * w;
    let n = t * plane;
    // grid → tokens, frame-major then raster
    let mut z = vec![0.0; n * d];
    for f in 0..t {
        for c in 0..d {
            for i in 0..plane {
                z[(f * plane + i) * d + c] = grid[(f * d + c) * plane + i];
            }
        }
    }

    // attention
    let x = layer_norm_rows(&z, n, d, p.ln1_gamma.data(), p.ln1_beta.data(), cfg.ln_eps);
    let q = matmul(&x, p.w_q.data(), n, d, d);
    let kk = matmul(&x, p.w_k.data(), n, d, d);
    let v = matmul(&x, p.w_v.data(), n, d, d);
    let dh = d / cfg.heads;
    let mut merged = vec![0.0; n * d];
    for head in 0..cfg.heads {
        let off = head * dh;
        for i in 0..n {
            let mut scores: Vec<f64> = (0..n)
                .map(|j| {
                    (0..dh)
                        .map(|e| q[i * d + off + e] * kk[j * d + off + e])
                        .sum::<f64>()
                        / (dh as f64).sqrt()
                })
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            scores.iter_mut().for_each(|s| *s = (*s - mx).exp());
            let total: f64 = scores.iter().sum();
            for e in 0..dh {
                merged[i * d + off + e] =
                    (0..n).map(|j| scores[j] / total * v[j * d + off + e]).sum();
            }
        }
    }
    let attn = matmul(&merged, p.w_o.data(), n, d, d);
    let z1: Vec<f64> = attn.iter().zip(&z).map(|(a, b)| a + b).collect();

    // soft-split FFN
    let y = layer_norm_rows(&z1, n, d, p.ln2_gamma.data(), p.ln2_beta.data(), cfg.ln_eps);
    let spec = cfg.warp;
    let (k, s, pad) = (spec.kernel, spec.stride, spec.padding);
    let oh = (h + 2 * pad - k) / s + 1;
    let ow = (w + 2 * pad - k) / s + 1;
    let width = d * k * k;
    let hidden = cfg.ffn_hidden;
    let mut acc = vec![0.0; n * d];
    let mut count = vec![0.0; plane];
    let cell = |yy: usize, xx: usize| -> Option<usize> {
        let (iy, ix) = (yy as isize - pad as isize, xx as isize - pad as isize);
        (iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w)
            .then(|| iy as usize * w + ix as usize)
    };
    for wy in 0..oh {
        for wx in 0..ow {
            for ky in 0..k {
                for kx in 0..k {
                    if let Some(c) = cell(wy * s + ky, wx * s + kx) {
                        count[c] += 1.0;
                    }
                }
            }
        }
    }
    for f in 0..t {
        for wy in 0..oh {
            for wx in 0..ow {
                let mut col = vec![0.0; width];
                for c in 0..d {
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some(cc) = cell(wy * s + ky, wx * s + kx) {
                                col[(c * k + ky) * k + kx] = y[(f * plane + cc) * d + c];
                            }
                        }
                    }
                }
                let mut hid = matmul(&col, p.ffn_w1.data(), 1, width, hidden);
                for (j, v) in hid.iter_mut().enumerate() {
                    *v = gelu(*v + p.ffn_b1.data()[j]);
                }
                let out = matmul(&hid, p.ffn_w2.data(), 1, hidden, width);
                for c in 0..d {
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some(cc) = cell(wy * s + ky, wx * s + kx) {
                                let r = (c * k + ky) * k + kx;
                                acc[(f * plane + cc) * d + c] += out[r] + p.ffn_b2.data()[r];
                            }
                        }
                    }
                }
            }
        }
    }
    let mut z2 = vec![0.0; n * d];
    for i in 0..n {
        let cnt = count[i % plane];
        for c in 0..d {
            let mixed = if cnt > 0.0 { acc[i * d + c] / cnt } else { 0.0 };
            z2[i * d + c] = mixed + z1[i * d + c];
        }
    }

    // back to the grid
    let mut g = vec![0.0; t * d * plane];
    for f in 0..t {
        for c in 0..d {
            for i in 0..plane {
                g[(f * d + c) * plane + i] = z2[(f * plane + i) * d + c];
            }
        }
    }
    if !cfg.use_rfc {
        return g;
    }

    // contextualizer with skip
    let mut out = vec![0.0; t * d * plane];
    for f in 0..t {
        let frame = &g[f * d * plane..(f + 1) * d * plane];
        let a = pointwise(frame, d, plane, p.rfc_a_w.data(), p.rfc_a_b.data());
        let b = pointwise(frame, d, plane, p.rfc_b_w.data(), p.rfc_b_b.data());
        let b = depthwise(
            &b,
            d,
            h,
            w,
            p.rfc_dw_w.data(),
            cfg.rfc_kernel,
            Some(p.rfc_dw_b.data()),
        );
        let b = pointwise(&b, d, plane, p.rfc_pw_w.data(), p.rfc_pw_b.data());
        for i in 0..d * plane {
            out[f * d * plane + i] = gelu(a[i]) + b[i] + frame[i];
        }
    }
    out
}

/// Tiny configuration for exhaustive and gradient tests.
pub fn tiny_config(dim: usize, heads: usize) -> DmtConfig {
    DmtConfig {
        layers: 1,
        dim,
        heads,
        ffn_hidden: 2 * dim,
        rfc_kernel: 3,
        warp: SlidingWindowSpec::new(3, 1, 1).unwrap(),
        ..DmtConfig::default()
    }
}

/// Layer weights with non-trivial norms and biases.
pub fn random_layer(cfg: &DmtConfig, seed: u64) -> DmtLayerParams {
    let mut r = rng(seed);
    let mut p = DmtLayerParams::init(cfg, &mut r);
    let jitter = |t: &Tensor, r: &mut ChaCha8Rng, center: f64| {
        let data = t
            .data()
            .iter()
            .map(|_| center + r.random_range(-0.2..0.2))
            .collect();
        Tensor::new(t.shape(), data).unwrap()
    };
    p.ln1_gamma = jitter(&p.ln1_gamma, &mut r, 1.0);
    p.ln1_beta = jitter(&p.ln1_beta, &mut r, 0.0);
    p.ln2_gamma = jitter(&p.ln2_gamma, &mut r, 1.0);
    p.ln2_beta = jitter(&p.ln2_beta, &mut r, 0.0);
    p.ffn_b1 = jitter(&p.ffn_b1, &mut r, 0.0);
    p.ffn_b2 = jitter(&p.ffn_b2, &mut r, 0.0);
    p.rfc_a_b = jitter(&p.rfc_a_b, &mut r, 0.0);
    p.rfc_b_b = jitter(&p.rfc_b_b, &mut r, 0.0);
    p.rfc_dw_b = jitter(&p.rfc_dw_b, &mut r, 0.0);
    p.rfc_pw_b = jitter(&p.rfc_pw_b, &mut r, 0.0);
    p
}

fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data).unwrap()
}

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let n = shape.iter().product();
    t(shape, uniform(&mut rng(seed), n, -1.0, 1.0))
}

/// Finite-difference check of `f` over the named inputs.
fn gradcheck(inputs: &[(&str, Tensor)], f: impl Fn(&ParamSet) -> dmt::Result<Tensor>) -> f64 {
    let mut set = ParamSet::new();
    for (name, v) in inputs {
        set.insert(*name, v.clone()).unwrap();
    }
    let report = finite_diff_check(f, &set, &GradCheckOptions::default()).unwrap();
    assert!(report.checked > 0);
    report.max_rel_error
}

/// Reduces any tensor to a scalar with fixed random weights so every
/// output element gets a distinct upstream gradient.
fn probe(out: &Tensor, seed: u64) -> dmt::Result<Tensor> {
    out.mul(&random(out.shape(), seed))?.sum()
}

/// Finite-difference relative error of every differentiable primitive on
/// small random inputs.
pub fn primitive_gradchecks() -> Vec<(&'static str, f64)> {
    let x = random(&[3, 4], 10);
    let y = random(&[3, 4], 11);
    let g = |s: &ParamSet, n: &str| s.get(n).unwrap().clone();
    type Case = (
        &'static str,
        Vec<(&'static str, Tensor)>,
        Box<dyn Fn(&ParamSet) -> dmt::Result<Tensor>>,
    );
    let cases: Vec<Case> = vec![
        (
            "add",
            vec![("x", x.clone()), ("y", y.clone())],
            Box::new(move |s| probe(&g(s, "x").add(&g(s, "y"))?, 1)),
        ),
        (
            "sub",
            vec![("x", x.clone()), ("y", y.clone())],
            Box::new(move |s| probe(&g(s, "x").sub(&g(s, "y"))?, 1)),
        ),
        (
            "mul",
            vec![("x", x.clone()), ("y", y.clone())],
            Box::new(move |s| probe(&g(s, "x").mul(&g(s, "y"))?, 1)),
        ),
        (
            "scale",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").scale(-1.7)?, 1)),
        ),
        (
            "add_scalar",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").add_scalar(0.3)?, 1)),
        ),
        (
            "relu",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").relu()?, 1)),
        ),
        (
            "gelu",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").gelu()?, 1)),
        ),
        (
            "sigmoid",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").sigmoid()?, 1)),
        ),
        (
            "abs",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").abs()?, 1)),
        ),
        (
            "square",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").square()?, 1)),
        ),
        (
            "sum",
            vec![("x", x.clone())],
            Box::new(move |s| g(s, "x").square()?.sum()),
        ),
        (
            "mean",
            vec![("x", x.clone())],
            Box::new(move |s| g(s, "x").square()?.mean()),
        ),
        (
            "add_bias",
            vec![("x", x.clone()), ("b", random(&[4], 12))],
            Box::new(move |s| probe(&g(s, "x").add_bias(&g(s, "b"))?, 1)),
        ),
        (
            "t",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").t()?, 1)),
        ),
        (
            "permute",
            vec![("x", random(&[2, 3, 4], 13))],
            Box::new(move |s| probe(&g(s, "x").permute(&[2, 0, 1])?, 1)),
        ),
        (
            "reshape",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").reshape(&[2, 6])?, 1)),
        ),
        (
            "index_select",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").index_select(&[2, 0, 2])?, 1)),
        ),
        (
            "scatter_rows",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").scatter_rows(&[4, 0, 2], 5)?, 1)),
        ),
        (
            "narrow",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").narrow(1, 1, 2)?, 1)),
        ),
        (
            "concat",
            vec![("x", x.clone()), ("y", random(&[3, 2], 14))],
            Box::new(move |s| probe(&Tensor::concat(&[g(s, "x"), g(s, "y")], 1)?, 1)),
        ),
        (
            "matmul",
            vec![("x", x.clone()), ("w", random(&[4, 5], 15))],
            Box::new(move |s| probe(&g(s, "x").matmul(&g(s, "w"))?, 1)),
        ),
        (
            "softmax",
            vec![("x", x.clone())],
            Box::new(move |s| probe(&g(s, "x").softmax(1)?, 1)),
        ),
        (
            "layer_norm",
            vec![
                ("x", x.clone()),
                ("g", random(&[4], 16)),
                ("b", random(&[4], 17)),
            ],
            Box::new(move |s| probe(&g(s, "x").layer_norm(&g(s, "g"), &g(s, "b"), 1e-5)?, 1)),
        ),
        (
            "unfold",
            vec![("x", random(&[2, 4, 5], 18))],
            Box::new(move |s| {
                probe(
                    &g(s, "x").unfold(SlidingWindowSpec::new(3, 2, 1).unwrap())?,
                    1,
                )
            }),
        ),
        (
            "fold",
            vec![("x", random(&[18, 6], 19))],
            Box::new(move |s| {
                probe(
                    &g(s, "x").fold(SlidingWindowSpec::new(3, 2, 1).unwrap(), 4, 5)?,
                    1,
                )
            }),
        ),
        (
            "conv2d",
            vec![
                ("x", random(&[2, 2, 5, 5], 20)),
                ("w", random(&[3, 2, 3, 3], 21)),
                ("b", random(&[3], 22)),
            ],
            Box::new(move |s| {
                probe(
                    &g(s, "x").conv2d(
                        &g(s, "w"),
                        Some(&g(s, "b")),
                        SlidingWindowSpec::new(3, 2, 1).unwrap(),
                    )?,
                    1,
                )
            }),
        ),
        (
            "conv2d_pointwise",
            vec![
                ("x", random(&[2, 3, 3], 23)),
                ("w", random(&[4, 2, 1, 1], 24)),
                ("b", random(&[4], 25)),
            ],
            Box::new(move |s| {
                probe(
                    &g(s, "x").conv2d(
                        &g(s, "w"),
                        Some(&g(s, "b")),
                        SlidingWindowSpec::new(1, 1, 0).unwrap(),
                    )?,
                    1,
                )
            }),
        ),
        (
            "depthwise_conv2d",
            vec![
                ("x", random(&[2, 2, 4, 5], 26)),
                ("w", random(&[2, 1, 5, 5], 27)),
                ("b", random(&[2], 28)),
            ],
            Box::new(move |s| {
                probe(
                    &g(s, "x").depthwise_conv2d(
                        &g(s, "w"),
                        Some(&g(s, "b")),
                        SlidingWindowSpec::same(5).unwrap(),
                    )?,
                    1,
                )
            }),
        ),
        (
            "upsample_nearest2x",
            vec![("x", random(&[2, 2, 3], 29))],
            Box::new(move |s| probe(&g(s, "x").upsample_nearest2x()?, 1)),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, inputs, f)| (name, gradcheck(&inputs, f)))
        .collect()
}
