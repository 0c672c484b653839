//! Matrix products, softmax and layer normalization.

use std::cell::Cell;

use super::ops::strides;
use super::tensor::Tensor;
use crate::error::{Error, Result};

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

/// Multiply-accumulates performed by [`Tensor::matmul`] on this thread
/// since the last reset. Convolution kernels are not counted.
pub fn mac_count() -> u64 {
    MACS.with(|c| c.get())
}

pub fn reset_mac_count() {
    MACS.with(|c| c.set(0));
}

/// Runs `f` and returns its result with the number of counted MACs.
pub fn count_macs<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = mac_count();
    let out = f();
    (out, mac_count() - before)
}

/// `c = a·b + beta·c` for row-major operands addressed through strides, so
/// transposed views cost nothing.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: extents are checked by the callers; strides describe views
    // lying inside `a`, `b` and `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) const ROW: fn(usize) -> (isize, isize) = |cols| (cols as isize, 1);
pub(crate) const TRANS: fn(usize) -> (isize, isize) = |cols| (1, cols as isize);

impl Tensor {
    /// `[M×K]·[K×N] → [M×N]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = match self.shape() {
            [m, k] => (*m, *k),
            s => return Err(Error::shape("matmul", format!("lhs {:?} is not rank 2", s))),
        };
        let n = match other.shape() {
            [k2, n] if *k2 == k => *n,
            s => {
                return Err(Error::shape(
                    "matmul",
                    format!("{:?} x {:?}", self.shape(), s),
                ))
            }
        };
        MACS.with(|c| c.set(c.get() + (m * k * n) as u64));
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.data(),
            ROW(k),
            other.data(),
            ROW(n),
            0.0,
            &mut out,
        );
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op("matmul", vec![m, n], out, &[self, other], move |g| {
            let ga = a.requires_grad().then(|| {
                // dA = G·Bᵀ
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g, ROW(n), b.data(), TRANS(n), 0.0, &mut ga);
                ga
            });
            let gb = b.requires_grad().then(|| {
                // dB = Aᵀ·G
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, a.data(), TRANS(k), g, ROW(n), 0.0, &mut gb);
                gb
            });
            vec![ga, gb]
        })
    }

    /// Max-stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(
                "softmax",
                format!("axis {} for {:?}", axis, shape),
            ));
        }
        let len = shape[axis];
        let stride = strides(&shape)[axis];
        let outer: usize = shape[..axis].iter().product();
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..stride {
                let base = o * len * stride + i;
                let idx = |j: usize| base + j * stride;
                let max = (0..len)
                    .map(|j| x[idx(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (x[idx(j)] - max).exp();
                    y[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    y[idx(j)] /= total;
                }
            }
        }
        let yc = y.clone();
        Tensor::from_op("softmax", shape, y, &[self], move |g| {
            let mut gx = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * len * stride + i;
                    let dot: f64 = (0..len)
                        .map(|j| g[base + j * stride] * yc[base + j * stride])
                        .sum();
                    for j in 0..len {
                        let p = base + j * stride;
                        gx[p] = yc[p] * (g[p] - dot);
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let d = *self
            .shape()
            .last()
            .ok_or_else(|| Error::shape("layer_norm", "scalar input"))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "gamma {:?} / beta {:?} for width {}",
                    gamma.shape(),
                    beta.shape(),
                    d
                ),
            ));
        }
        let x = self.data();
        let rows = if d == 0 { 0 } else { x.len() / d };
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        let (gm, bt) = (gamma.data(), beta.data());
        let mut y = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                y[r * d + j] = h * gm[j] + bt[j];
            }
        }
        let gamma_c = gamma.clone();
        let tracked = (
            self.requires_grad(),
            gamma.requires_grad(),
            beta.requires_grad(),
        );
        Tensor::from_op(
            "layer_norm",
            self.shape().to_vec(),
            y,
            &[self, gamma, beta],
            move |g| {
                let gm = gamma_c.data();
                let gx = tracked.0.then(|| {
                    let mut gx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let gh: Vec<f64> = (0..d).map(|j| g[r * d + j] * gm[j]).collect();
                        let xh = &xhat[r * d..(r + 1) * d];
                        let mean_gh = gh.iter().sum::<f64>() / d as f64;
                        let mean_ghx =
                            gh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            gx[r * d + j] = inv_std[r] * (gh[j] - mean_gh - xh[j] * mean_ghx);
                        }
                    }
                    gx
                });
                let ggamma = tracked.1.then(|| {
                    let mut acc = vec![0.0; d];
                    for r in 0..rows {
                        for j in 0..d {
                            acc[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                    acc
                });
                let gbeta = tracked.2.then(|| {
                    let mut acc = vec![0.0; d];
                    for r in 0..rows {
                        for j in 0..d {
                            acc[j] += g[r * d + j];
                        }
                    }
                    acc
                });
                vec![gx, ggamma, gbeta]
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_hand_cases() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[1.0, 1.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[3.0, 7.0]);

        let eye = t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let m = t(&[3, 2], &[1.0, -2.0, 3.5, 0.25, 9.0, 7.0]);
        assert_eq!(eye.matmul(&m).unwrap().data(), m.data());
        assert!(m.matmul(&m).is_err());
    }

    #[test]
    fn matmul_counts_macs() {
        let a = Tensor::zeros(&[4, 5]);
        let b = Tensor::zeros(&[5, 6]);
        let (_, macs) = count_macs(|| a.matmul(&b).unwrap());
        assert_eq!(macs, 120);
    }

    #[test]
    fn softmax_cases() {
        let y = Tensor::zeros(&[4]).softmax(0).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.25).abs() < 1e-15));
        let y = t(&[2], &[1000.0, 0.0]).softmax(0).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12 && y.data()[1].abs() < 1e-12);
        let y = t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0])
            .softmax(0)
            .unwrap();
        for c in 0..3 {
            assert!((y.data()[c] + y.data()[3 + c] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_cases() {
        let ones = Tensor::full(&[2], 1.0);
        let zeros = Tensor::zeros(&[2]);
        let y = t(&[2], &[1.0, 3.0])
            .layer_norm(&ones, &zeros, 1e-5)
            .unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-5 && (y.data()[1] - 1.0).abs() < 1e-5);

        let ones = Tensor::full(&[3], 1.0);
        let zeros = Tensor::zeros(&[3]);
        let y = t(&[3], &[4.0, 4.0, 4.0])
            .layer_norm(&ones, &zeros, 1e-5)
            .unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
        assert!(t(&[3], &[1.0, 2.0, 3.0])
            .layer_norm(&Tensor::zeros(&[2]), &zeros, 1e-5)
            .is_err());
    }
}
