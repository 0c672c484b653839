//! Sliding-window operators: unfold/fold, convolutions, nearest upsampling.
//!
//! Spatial operators accept a single image `[C×H×W]` or a batch
//! `[B×C×H×W]`. Convolutions follow the cross-correlation convention.
//! Window positions are enumerated rows-outer, cols-inner.

use super::linalg::{gemm, ROW, TRANS};
use super::tensor::Tensor;
use super::window::SlidingWindowSpec;
use crate::error::{Error, Result};

/// Raw unfold of one `c × h × w` image into a `[c·k² × N]` column matrix.
pub fn unfold_raw(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    spec: SlidingWindowSpec,
) -> Result<Vec<f64>> {
    let (oh, ow) = spec.output_dims(h, w)?;
    let k = spec.kernel;
    let n = oh * ow;
    let mut cols = vec![0.0; c * k * k * n];
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ki) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kj) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    Ok(cols)
}

/// Raw fold: overlap-adds a `[c·k² × N]` column matrix into a padded
/// `c × h × w` canvas and drops the padding. Adjoint of [`unfold_raw`].
pub fn fold_raw(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    spec: SlidingWindowSpec,
) -> Result<Vec<f64>> {
    let (oh, ow) = spec.output_dims(h, w)?;
    let k = spec.kernel;
    let n = oh * ow;
    if cols.len() != c * k * k * n {
        return Err(Error::shape(
            "fold",
            format!(
                "{} values for {} rows x {} windows",
                cols.len(),
                c * k * k,
                n
            ),
        ));
    }
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ki) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kj) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            out[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Number of windows covering each pixel of an `h × w` plane.
pub fn overlap_counts(h: usize, w: usize, spec: SlidingWindowSpec) -> Result<Vec<f64>> {
    let (oh, ow) = spec.output_dims(h, w)?;
    let k = spec.kernel;
    fold_raw(&vec![1.0; k * k * oh * ow], 1, h, w, spec)
}

/// Splits a rank-3 or rank-4 shape into `(batch, c, h, w, batched)`.
fn image_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize, bool)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w, false)),
        [b, c, h, w] => Ok((b, c, h, w, true)),
        _ => Err(Error::shape(
            op,
            format!("expected [C,H,W] or [B,C,H,W], got {:?}", shape),
        )),
    }
}

fn with_batch(batched: bool, b: usize, rest: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(4);
    if batched {
        s.push(b);
    }
    s.extend_from_slice(rest);
    s
}

fn is_pointwise(spec: SlidingWindowSpec) -> bool {
    spec.kernel == 1 && spec.stride == 1 && spec.padding == 0
}

impl Tensor {
    /// `[C×H×W] → [C·k² × N]`; batched input gives `[B × C·k² × N]`.
    pub fn unfold(&self, spec: SlidingWindowSpec) -> Result<Tensor> {
        let (b, c, h, w, batched) = image_dims("unfold", self.shape())?;
        let (oh, ow) = spec.output_dims(h, w)?;
        let k = spec.kernel;
        let plane = c * h * w;
        let mut data = Vec::with_capacity(b * c * k * k * oh * ow);
        for bi in 0..b {
            data.extend(unfold_raw(
                &self.data()[bi * plane..(bi + 1) * plane],
                c,
                h,
                w,
                spec,
            )?);
        }
        let shape = with_batch(batched, b, &[c * k * k, oh * ow]);
        Tensor::from_op("unfold", shape, data, &[self], move |g| {
            let per = c * k * k * oh * ow;
            let mut gx = Vec::with_capacity(b * plane);
            for bi in 0..b {
                gx.extend(
                    fold_raw(&g[bi * per..(bi + 1) * per], c, h, w, spec).expect("fold dims"),
                );
            }
            vec![Some(gx)]
        })
    }

    /// `[C·k² × N] → [C × out_h × out_w]` by overlap-add (batched input
    /// accepted). Adjoint of [`Tensor::unfold`].
    pub fn fold(&self, spec: SlidingWindowSpec, out_h: usize, out_w: usize) -> Result<Tensor> {
        let (b, rows, n, batched) = match *self.shape() {
            [r, n] => (1, r, n, false),
            [b, r, n] => (b, r, n, true),
            ref s => {
                return Err(Error::shape(
                    "fold",
                    format!("expected rank 2 or 3, got {:?}", s),
                ))
            }
        };
        let k2 = spec.kernel * spec.kernel;
        let (oh, ow) = spec.output_dims(out_h, out_w)?;
        if rows % k2 != 0 || n != oh * ow {
            return Err(Error::shape(
                "fold",
                format!(
                    "columns {:?} do not match {} windows of {}x{} on {}x{}",
                    self.shape(),
                    oh * ow,
                    spec.kernel,
                    spec.kernel,
                    out_h,
                    out_w
                ),
            ));
        }
        let c = rows / k2;
        let per = rows * n;
        let mut data = Vec::with_capacity(b * c * out_h * out_w);
        for bi in 0..b {
            data.extend(fold_raw(
                &self.data()[bi * per..(bi + 1) * per],
                c,
                out_h,
                out_w,
                spec,
            )?);
        }
        let shape = with_batch(batched, b, &[c, out_h, out_w]);
        let plane = c * out_h * out_w;
        Tensor::from_op("fold", shape, data, &[self], move |g| {
            let mut gx = Vec::with_capacity(b * per);
            for bi in 0..b {
                gx.extend(
                    unfold_raw(&g[bi * plane..(bi + 1) * plane], c, out_h, out_w, spec)
                        .expect("unfold dims"),
                );
            }
            vec![Some(gx)]
        })
    }

    /// 2-D cross-correlation. `weight` is `[C_out × C_in × k × k]`, `bias`
    /// is `[C_out]`.
    pub fn conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        spec: SlidingWindowSpec,
    ) -> Result<Tensor> {
        let (b, c_in, h, w, batched) = image_dims("conv2d", self.shape())?;
        let (c_out, k) = match *weight.shape() {
            [co, ci, kh, kw] if ci == c_in && kh == kw && kh == spec.kernel => (co, kh),
            ref s => {
                return Err(Error::shape(
                    "conv2d",
                    format!("weight {:?} for {} input channels and {}", s, c_in, spec),
                ))
            }
        };
        if let Some(bias) = bias {
            if bias.shape() != [c_out] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias {:?} for {} outputs", bias.shape(), c_out),
                ));
            }
        }
        let (oh, ow) = spec.output_dims(h, w)?;
        let n = oh * ow;
        let ck = c_in * k * k;
        let plane = c_in * h * w;
        let pointwise = is_pointwise(spec);
        let mut cols_all: Vec<Vec<f64>> = Vec::with_capacity(if pointwise { 0 } else { b });
        let mut out = vec![0.0; b * c_out * n];
        for bi in 0..b {
            let xs = &self.data()[bi * plane..(bi + 1) * plane];
            let dst = &mut out[bi * c_out * n..(bi + 1) * c_out * n];
            if let Some(bias) = bias {
                for (co, bv) in bias.data().iter().enumerate() {
                    dst[co * n..(co + 1) * n].iter_mut().for_each(|v| *v = *bv);
                }
            }
            if pointwise {
                gemm(c_out, ck, n, weight.data(), ROW(ck), xs, ROW(n), 1.0, dst);
            } else {
                let cols = unfold_raw(xs, c_in, h, w, spec)?;
                gemm(
                    c_out,
                    ck,
                    n,
                    weight.data(),
                    ROW(ck),
                    &cols,
                    ROW(n),
                    1.0,
                    dst,
                );
                cols_all.push(cols);
            }
        }
        let shape = with_batch(batched, b, &[c_out, oh, ow]);
        let (x, wt) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        let mut parents = vec![self, weight];
        if let Some(bias) = bias {
            parents.push(bias);
        }
        Tensor::from_op("conv2d", shape, out, &parents, move |g| {
            let mut gw = wt.requires_grad().then(|| vec![0.0; c_out * ck]);
            let mut gx = x.requires_grad().then(|| Vec::with_capacity(b * plane));
            let mut gb = has_bias.then(|| vec![0.0; c_out]);
            for bi in 0..b {
                let gs = &g[bi * c_out * n..(bi + 1) * c_out * n];
                let cols: &[f64] = if pointwise {
                    &x.data()[bi * plane..(bi + 1) * plane]
                } else {
                    &cols_all[bi]
                };
                if let Some(gw) = gw.as_mut() {
                    gemm(c_out, n, ck, gs, ROW(n), cols, TRANS(n), 1.0, gw);
                }
                if let Some(gx) = gx.as_mut() {
                    let mut gcols = vec![0.0; ck * n];
                    gemm(
                        ck,
                        c_out,
                        n,
                        wt.data(),
                        TRANS(ck),
                        gs,
                        ROW(n),
                        0.0,
                        &mut gcols,
                    );
                    if pointwise {
                        gx.extend(gcols);
                    } else {
                        gx.extend(fold_raw(&gcols, c_in, h, w, spec).expect("fold dims"));
                    }
                }
                if let Some(gb) = gb.as_mut() {
                    for co in 0..c_out {
                        gb[co] += gs[co * n..(co + 1) * n].iter().sum::<f64>();
                    }
                }
            }
            let mut grads = vec![gx, gw];
            if has_bias {
                grads.push(gb);
            }
            grads
        })
    }

    /// Per-channel convolution with an odd `K×K` kernel, stride 1 and
    /// padding `(K−1)/2`. `weight` is `[C × 1 × K × K]`.
    pub fn depthwise_conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        spec: SlidingWindowSpec,
    ) -> Result<Tensor> {
        let (b, c, h, w, batched) = image_dims("depthwise_conv2d", self.shape())?;
        let kk = spec.kernel;
        if kk % 2 == 0 {
            return Err(Error::Window(format!("depthwise kernel {kk} must be odd")));
        }
        if spec.stride != 1 || spec.padding != (kk - 1) / 2 {
            return Err(Error::Window(format!(
                "depthwise conv needs stride 1 and padding {}, got {}",
                (kk - 1) / 2,
                spec
            )));
        }
        if weight.shape() != [c, 1, kk, kk] {
            return Err(Error::shape(
                "depthwise_conv2d",
                format!(
                    "weight {:?} for {} channels, kernel {}",
                    weight.shape(),
                    c,
                    kk
                ),
            ));
        }
        if let Some(bias) = bias {
            if bias.shape() != [c] {
                return Err(Error::shape(
                    "depthwise_conv2d",
                    format!("bias {:?}", bias.shape()),
                ));
            }
        }
        let r = (kk - 1) / 2;
        let hw = h * w;
        // (output row range, input row offset) for each kernel row
        let span = move |k: usize, len: usize| -> (usize, usize) {
            // output o reads input o + k - r
            let lo = r.saturating_sub(k).min(len);
            let hi = (len + r).saturating_sub(k).min(len);
            (lo, hi.max(lo))
        };
        let x = self.data();
        let wd = weight.data();
        let mut out = vec![0.0; b * c * hw];
        for bc in 0..b * c {
            let ch = bc % c;
            let src = &x[bc * hw..(bc + 1) * hw];
            let dst = &mut out[bc * hw..(bc + 1) * hw];
            if let Some(bias) = bias {
                dst.iter_mut().for_each(|v| *v = bias.data()[ch]);
            }
            for ki in 0..kk {
                let (ylo, yhi) = span(ki, h);
                for kj in 0..kk {
                    let wv = wd[(ch * kk + ki) * kk + kj];
                    if wv == 0.0 {
                        continue;
                    }
                    let (xlo, xhi) = span(kj, w);
                    if xlo == xhi {
                        continue;
                    }
                    for oy in ylo..yhi {
                        let iy = oy + ki - r;
                        let drow = &mut dst[oy * w + xlo..oy * w + xhi];
                        let srow = &src[iy * w + xlo + kj - r..iy * w + xhi + kj - r];
                        drow.iter_mut().zip(srow).for_each(|(d, s)| *d += wv * s);
                    }
                }
            }
        }
        let shape = with_batch(batched, b, &[c, h, w]);
        let (xc, wc) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        let mut parents = vec![self, weight];
        if let Some(bias) = bias {
            parents.push(bias);
        }
        Tensor::from_op("depthwise_conv2d", shape, out, &parents, move |g| {
            let x = xc.data();
            let wd = wc.data();
            let mut gx = xc.requires_grad().then(|| vec![0.0; x.len()]);
            let mut gw = wc.requires_grad().then(|| vec![0.0; wd.len()]);
            let mut gb = has_bias.then(|| vec![0.0; c]);
            for bc in 0..b * c {
                let ch = bc % c;
                let gs = &g[bc * hw..(bc + 1) * hw];
                let src = &x[bc * hw..(bc + 1) * hw];
                if let Some(gb) = gb.as_mut() {
                    gb[ch] += gs.iter().sum::<f64>();
                }
                for ki in 0..kk {
                    let (ylo, yhi) = span(ki, h);
                    for kj in 0..kk {
                        let (xlo, xhi) = span(kj, w);
                        if xlo == xhi {
                            continue;
                        }
                        let widx = (ch * kk + ki) * kk + kj;
                        let wv = wd[widx];
                        let mut acc = 0.0;
                        for oy in ylo..yhi {
                            let iy = oy + ki - r;
                            let grow = &gs[oy * w + xlo..oy * w + xhi];
                            let off = iy * w + xlo + kj - r;
                            if gw.is_some() {
                                acc += grow
                                    .iter()
                                    .zip(&src[off..off + grow.len()])
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            }
                            if let Some(gx) = gx.as_mut() {
                                gx[bc * hw + off..bc * hw + off + grow.len()]
                                    .iter_mut()
                                    .zip(grow)
                                    .for_each(|(d, s)| *d += wv * s);
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[widx] += acc;
                        }
                    }
                }
            }
            let mut grads = vec![gx, gw];
            if has_bias {
                grads.push(gb);
            }
            grads
        })
    }

    /// Nearest-neighbour ×2 spatial upsampling.
    pub fn upsample_nearest2x(&self) -> Result<Tensor> {
        let (b, c, h, w, batched) = image_dims("upsample_nearest2x", self.shape())?;
        let (h2, w2) = (2 * h, 2 * w);
        let x = self.data();
        let mut out = vec![0.0; b * c * h2 * w2];
        for p in 0..b * c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    out[(p * h2 + y) * w2 + xx] = x[(p * h + y / 2) * w + xx / 2];
                }
            }
        }
        let shape = with_batch(batched, b, &[c, h2, w2]);
        Tensor::from_op("upsample_nearest2x", shape, out, &[self], move |g| {
            let mut gx = vec![0.0; b * c * h * w];
            for p in 0..b * c {
                for y in 0..h2 {
                    for xx in 0..w2 {
                        gx[(p * h + y / 2) * w + xx / 2] += g[(p * h2 + y) * w2 + xx];
                    }
                }
            }
            vec![Some(gx)]
        })
    }
}
