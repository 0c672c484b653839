//! Central finite-difference verification of [`Tensor::backward`].

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Perturbation `h` of `(f(θ+h) − f(θ−h)) / 2h`.
    pub step: f64,
    /// Errors are measured relative to `max(|analytic|, |numeric|, floor)`.
    pub floor: f64,
    /// A coordinate is treated as sitting on a kink when
    /// `|f(θ+h) − 2f(θ) + f(θ−h)| > kink_tol · max(1, |f(θ)|)`; it is then
    /// left out of the maximum.
    pub kink_tol: f64,
    /// Check at most this many evenly spaced coordinates per tensor.
    pub max_coords_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-3,
            kink_tol: 1e-9,
            max_coords_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub excluded: usize,
}

/// Compares `backward()` of `f(params)` against central differences,
/// coordinate by coordinate.
pub fn finite_diff_check<F>(
    f: F,
    params: &ParamSet,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<Tensor>,
{
    let tracked = params.tracked();
    let loss = f(&tracked)?;
    loss.backward()?;

    let base = params.frozen();
    let f0 = f(&base)?.item()?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        excluded: 0,
    };

    for (name, t) in tracked.iter() {
        let n = t.numel();
        let analytic = t.grad().unwrap_or_else(|| vec![0.0; n]);
        let stride = match opts.max_coords_per_tensor {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let original = t.to_vec();
        for idx in (0..n).step_by(stride) {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = original.clone();
                data[idx] += delta;
                let mut p = base.clone();
                p.replace(name, Tensor::new(t.shape(), data)?)?;
                f(&p.frozen())?.item()
            };
            let fp = eval(opts.step)?;
            let fm = eval(-opts.step)?;
            if (fp - 2.0 * f0 + fm).abs() > opts.kink_tol * f0.abs().max(1.0) {
                report.excluded += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * opts.step);
            let a = analytic[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.to_string(), idx));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, shape: &[usize], data: Vec<f64>) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::new(shape, data).unwrap()).unwrap();
        p
    }

    #[test]
    fn quadratic_is_near_exact() {
        let p = single("w", &[3], vec![0.3, -1.2, 2.0]);
        let r = finite_diff_check(
            |p| p.get("w")?.square()?.sum(),
            &p,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn relu_kink_is_excluded() {
        let p = single("w", &[2], vec![0.0, 1.5]);
        let r = finite_diff_check(
            |p| p.get("w")?.relu()?.sum(),
            &p,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.excluded, 1);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_error < 1e-9);
    }

    #[test]
    fn detects_wrong_gradient() {
        // abs() at a non-kink point but with a deliberately broken loss that
        // mixes a tracked and a detached path: the detached path has no grad.
        let p = single("w", &[1], vec![2.0]);
        let r = finite_diff_check(
            |p| {
                let w = p.get("w")?;
                w.mul(&w.detach())?.sum()
            },
            &p,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_error > 0.4);
    }
}
