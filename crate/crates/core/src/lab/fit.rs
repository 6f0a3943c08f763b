use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Least-squares fits of `log N(h)` against `log(1/h)` and `log log(1/h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    /// Root-mean-square residual of the two-predictor fit in `log N`.
    pub residual: f64,
    /// Exponent of the fit with `β` fixed to 0.
    pub pure_alpha: f64,
    pub pure_c: f64,
    pub pure_residual: f64,
    /// Whether the pure power law fits at least as well (within `1e-12`).
    pub pure_preferred: bool,
}

fn lstsq(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::DegenerateDesign(format!(
            "condition {:.3e}",
            smax / smin
        )));
    }
    let coef = svd
        .solve(y, 0.0)
        .map_err(|e| Error::DegenerateDesign(e.into()))?;
    let r = design * &coef - y;
    Ok((coef, (r.norm_squared() / y.len() as f64).sqrt()))
}

/// Fits `log N = α log(1/h) + β log log(1/h) + c` and the pure power law.
///
/// Needs at least four distinct `h ∈ (0, 1)` with positive finite norms.
pub fn fit_scaling(rows: &[(f64, f64)]) -> Result<ScalingFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .copied()
        .filter(|&(h, n)| h > 0.0 && h < 1.0 && n > 0.0 && n.is_finite())
        .collect();
    let mut hs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
    if hs.len() < 4 {
        return Err(Error::DegenerateDesign(format!(
            "need 4 distinct h with positive norms, got {}",
            hs.len()
        )));
    }
    let m = pts.len();
    let y = DVector::from_iterator(m, pts.iter().map(|p| p.1.ln()));
    let two = DMatrix::from_fn(m, 3, |i, j| {
        let l = (1.0 / pts[i].0).ln();
        match j {
            0 => l,
            1 => l.ln(),
            _ => 1.0,
        }
    });
    let one = DMatrix::from_fn(
        m,
        2,
        |i, j| if j == 0 { (1.0 / pts[i].0).ln() } else { 1.0 },
    );
    let (c2, r2) = lstsq(&two, &y)?;
    let (c1, r1) = lstsq(&one, &y)?;
    Ok(ScalingFit {
        alpha: c2[0],
        beta: c2[1],
        c: c2[2],
        residual: r2,
        pure_alpha: c1[0],
        pure_c: c1[1],
        pure_residual: r1,
        pure_preferred: r1 <= r2 + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HS: [f64; 7] = [0.04, 0.028, 0.02, 0.014, 0.01, 0.007, 0.005];

    fn rows(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        HS.iter().map(|&h| (h, f(h))).collect()
    }

    #[test]
    fn inverse_h() {
        let fit = fit_scaling(&rows(|h| 2.0 / h)).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-9);
        assert!(fit.beta.abs() < 1e-9);
        assert!((fit.c - 2f64.ln()).abs() < 1e-9);
        assert!(fit.residual < 1e-12);
        assert!((fit.pure_alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_over_h() {
        let fit = fit_scaling(&rows(|h| (1.0 / h).ln() / h)).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-9);
        assert!((fit.beta - 1.0).abs() < 1e-9);
        assert!(fit.residual < 1e-12);
        assert!(!fit.pure_preferred);
    }

    #[test]
    fn inverse_square() {
        let fit = fit_scaling(&rows(|h| h.powi(-2))).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-9);
        assert!(fit.beta.abs() < 1e-9);
    }

    #[test]
    fn too_few_distinct_h() {
        let r = [
            (0.1, 1.0),
            (0.1, 2.0),
            (0.05, 3.0),
            (0.02, 4.0),
            (0.02, 5.0),
        ];
        assert!(matches!(fit_scaling(&r), Err(Error::DegenerateDesign(_))));
    }
}
