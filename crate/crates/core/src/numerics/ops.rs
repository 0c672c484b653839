//! Elementwise, reduction and layout operators.

use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn unary(
    op: &'static str,
    x: &Tensor,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Result<Tensor> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    let xc = x.clone();
    Tensor::from_op(op, x.shape().to_vec(), data, &[x], move |g| {
        vec![Some(
            xc.data()
                .iter()
                .zip(g)
                .map(|(&v, &gi)| gi * df(v))
                .collect(),
        )]
    })
}

/// Standard normal CDF via the error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2))
}

pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

fn gelu_grad_scalar(x: f64) -> f64 {
    normal_cdf(x) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::from_op("add", self.shape().to_vec(), data, &[self, other], |g| {
            vec![Some(g.to_vec()), Some(g.to_vec())]
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::from_op("sub", self.shape().to_vec(), data, &[self, other], |g| {
            vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]
        })
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a * b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "mul",
            self.shape().to_vec(),
            data,
            &[self, other],
            move |g| {
                let ga = a
                    .requires_grad()
                    .then(|| g.iter().zip(b.data()).map(|(g, b)| g * b).collect());
                let gb = b
                    .requires_grad()
                    .then(|| g.iter().zip(a.data()).map(|(g, a)| g * a).collect());
                vec![ga, gb]
            },
        )
    }

    pub fn scale(&self, s: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v * s).collect();
        Tensor::from_op("scale", self.shape().to_vec(), data, &[self], move |g| {
            vec![Some(g.iter().map(|v| v * s).collect())]
        })
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v + s).collect();
        Tensor::from_op("add_scalar", self.shape().to_vec(), data, &[self], |g| {
            vec![Some(g.to_vec())]
        })
    }

    pub fn relu(&self) -> Result<Tensor> {
        unary(
            "relu",
            self,
            |v| v.max(0.0),
            |v| if v > 0.0 { 1.0 } else { 0.0 },
        )
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&self) -> Result<Tensor> {
        unary("gelu", self, gelu_scalar, gelu_grad_scalar)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let y = data.clone();
        Tensor::from_op("sigmoid", self.shape().to_vec(), data, &[self], move |g| {
            vec![Some(
                g.iter().zip(&y).map(|(g, y)| g * y * (1.0 - y)).collect(),
            )]
        })
    }

    pub fn abs(&self) -> Result<Tensor> {
        unary("abs", self, f64::abs, |v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn square(&self) -> Result<Tensor> {
        unary("square", self, |v| v * v, |v| 2.0 * v)
    }

    pub fn sum(&self) -> Result<Tensor> {
        let n = self.numel();
        let total = self.data().iter().sum();
        Tensor::from_op("sum", vec![], vec![total], &[self], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    /// Adds `bias[j]` along the last axis.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let n = *self.shape().last().unwrap_or(&0);
        if bias.shape() != [n] {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} for input {:?}", bias.shape(), self.shape()),
            ));
        }
        let b = bias.data();
        let data = self
            .data()
            .chunks(n.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(x, b)| x + b))
            .collect();
        Tensor::from_op(
            "add_bias",
            self.shape().to_vec(),
            data,
            &[self, bias],
            move |g| {
                let mut gb = vec![0.0; n];
                for row in g.chunks(n.max(1)) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                vec![Some(g.to_vec()), Some(gb)]
            },
        )
    }

    /// Matrix transpose of a rank-2 tensor.
    pub fn t(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape(
                "t",
                format!("rank-2 input needed, got {:?}", self.shape()),
            ));
        }
        self.permute(&[1, 0])
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank
            || axes
                .iter()
                .any(|&a| a >= rank || std::mem::replace(&mut seen[a], true))
        {
            return Err(Error::shape(
                "permute",
                format!("axes {:?} for rank {}", axes, rank),
            ));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let in_strides = strides(&in_shape);
        let perm_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        // src[i] = input offset of output element i
        let n = numel(&out_shape);
        let mut src = Vec::with_capacity(n);
        let mut idx = vec![0usize; rank];
        for _ in 0..n {
            src.push(
                idx.iter()
                    .zip(&perm_strides)
                    .map(|(i, s)| i * s)
                    .sum::<usize>(),
            );
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        let x = self.data();
        let data = src.iter().map(|&s| x[s]).collect();
        Tensor::from_op("permute", out_shape, data, &[self], move |g| {
            let mut gx = vec![0.0; g.len()];
            for (gi, &s) in g.iter().zip(&src) {
                gx[s] = *gi;
            }
            vec![Some(gx)]
        })
    }

    /// Gathers rows (slices along axis 0) in the given order.
    pub fn index_select(&self, rows: &[usize]) -> Result<Tensor> {
        let (n, row) = split_first(self.shape());
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::shape(
                "index_select",
                format!("row {} of {}", bad, n),
            ));
        }
        let x = self.data();
        let mut data = Vec::with_capacity(rows.len() * row);
        for &r in rows {
            data.extend_from_slice(&x[r * row..(r + 1) * row]);
        }
        let mut shape = self.shape().to_vec();
        if shape.is_empty() {
            return Err(Error::shape("index_select", "scalar input"));
        }
        shape[0] = rows.len();
        let rows = rows.to_vec();
        Tensor::from_op("index_select", shape, data, &[self], move |g| {
            let mut gx = vec![0.0; n * row];
            for (k, &r) in rows.iter().enumerate() {
                gx[r * row..(r + 1) * row]
                    .iter_mut()
                    .zip(&g[k * row..(k + 1) * row])
                    .for_each(|(a, b)| *a += b);
            }
            vec![Some(gx)]
        })
    }

    /// Inverse of [`Tensor::index_select`]: places row `k` at `rows[k]` of a
    /// zero tensor with `n_rows` rows. Duplicate targets accumulate.
    pub fn scatter_rows(&self, rows: &[usize], n_rows: usize) -> Result<Tensor> {
        let (n, row) = split_first(self.shape());
        if n != rows.len() || rows.iter().any(|&r| r >= n_rows) {
            return Err(Error::shape(
                "scatter_rows",
                format!("{} rows into {} targets of {}", n, rows.len(), n_rows),
            ));
        }
        let x = self.data();
        let mut data = vec![0.0; n_rows * row];
        for (k, &r) in rows.iter().enumerate() {
            data[r * row..(r + 1) * row]
                .iter_mut()
                .zip(&x[k * row..(k + 1) * row])
                .for_each(|(a, b)| *a += b);
        }
        let mut shape = self.shape().to_vec();
        shape[0] = n_rows;
        let rows = rows.to_vec();
        Tensor::from_op("scatter_rows", shape, data, &[self], move |g| {
            let mut gx = Vec::with_capacity(rows.len() * row);
            for &r in &rows {
                gx.extend_from_slice(&g[r * row..(r + 1) * row]);
            }
            vec![Some(gx)]
        })
    }

    /// Slice `start..start+len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "narrow",
                format!(
                    "axis {} range {}..{} of {:?}",
                    axis,
                    start,
                    start + len,
                    shape
                ),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis];
        let x = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let total = self.numel();
        Tensor::from_op("narrow", out_shape, data, &[self], move |g| {
            let mut gx = vec![0.0; total];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gx[base..base + len * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        })
    }

    /// Joins tensors along `axis`; all other axes must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let shape = first.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(
                "concat",
                format!("axis {} for {:?}", axis, shape),
            ));
        }
        for p in parts {
            let s = p.shape();
            let ok = s.len() == shape.len()
                && s.iter()
                    .zip(&shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", format!("{:?} vs {:?}", s, shape)));
            }
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total_len: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total_len * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                data.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = total_len;
        let refs: Vec<&Tensor> = parts.iter().collect();
        let tracked: Vec<bool> = parts.iter().map(|p| p.requires_grad()).collect();
        Tensor::from_op("concat", out_shape, data, &refs, move |g| {
            let mut grads: Vec<Vec<f64>> = lens
                .iter()
                .map(|&l| Vec::with_capacity(outer * l * inner))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &l) in grads.iter_mut().zip(&lens) {
                    gp.extend_from_slice(&g[off..off + l * inner]);
                    off += l * inner;
                }
            }
            grads
                .into_iter()
                .zip(&tracked)
                .map(|(gp, &t)| t.then_some(gp))
                .collect()
        })
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn split_first(shape: &[usize]) -> (usize, usize) {
    match shape.split_first() {
        Some((&n, rest)) => (n, rest.iter().product()),
        None => (1, 1),
    }
}
