use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{dot, hermitian_eigen, norm, orthonormalize, ZERO};
use crate::{Error, Result, C64};

/// A square linear map given by its action and the action of its adjoint.
pub trait LinearMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Relative change of the singular value estimate at convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: 1e-6,
            max_iter: 500,
            block: 4,
            seed: 0x5eed,
        }
    }
}

impl PowerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 1e-8 && self.tol <= 1e-3) || self.max_iter == 0 || self.block == 0 {
            return Err(Error::InvalidParams(format!(
                "power iteration needs tol in [1e-8, 1e-3], max_iter ≥ 1, block ≥ 1; got tol={}, max_iter={}, block={}",
                self.tol, self.max_iter, self.block
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖M^H M x - θ x‖ / θ` for the leading Ritz pair.
    pub ritz_residual: f64,
}

impl NormEstimate {
    pub fn zero() -> Self {
        NormEstimate {
            norm: 0.0,
            iterations: 1,
            converged: true,
            ritz_residual: 0.0,
        }
    }
}

/// Largest singular value by block subspace iteration on `M^H M` with
/// Rayleigh–Ritz extraction.
///
/// Converged means the estimate changed by at most `tol` (relative) and the
/// Ritz residual is at most `√tol`. Without convergence the best estimate is
/// returned with `converged = false`.
pub fn power_norm(map: &dyn LinearMap, opts: &PowerOptions) -> NormEstimate {
    let n = map.dim();
    if n == 0 {
        return NormEstimate::zero();
    }
    let k = opts.block.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut xs: Vec<Vec<C64>> = (0..k)
        .map(|_| {
            (0..n)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    orthonormalize(&mut xs);
    let mut prev = 0.0;
    let mut best = NormEstimate {
        norm: 0.0,
        iterations: 0,
        converged: false,
        ritz_residual: f64::INFINITY,
    };
    for it in 1..=opts.max_iter {
        let zs: Vec<Vec<C64>> = xs.iter().map(|x| map.apply(x)).collect();
        let gram = DMatrix::from_fn(k, k, |i, j| dot(&zs[i], &zs[j]));
        let (vals, vecs) = hermitian_eigen(&gram);
        let theta = vals[k - 1].max(0.0);
        if theta == 0.0 {
            return NormEstimate {
                norm: 0.0,
                iterations: it,
                converged: true,
                ritz_residual: 0.0,
            };
        }
        let ys: Vec<Vec<C64>> = zs.iter().map(|z| map.apply_adjoint(z)).collect();
        // Ritz vectors, leading first.
        let combine = |basis: &[Vec<C64>], c: usize| -> Vec<C64> {
            let mut v = vec![ZERO; n];
            for (i, b) in basis.iter().enumerate() {
                let w = vecs[(i, c)];
                if w != ZERO {
                    for (vj, bj) in v.iter_mut().zip(b) {
                        *vj += w * bj;
                    }
                }
            }
            v
        };
        let x1 = combine(&xs, k - 1);
        let y1 = combine(&ys, k - 1);
        let r: Vec<C64> = y1.iter().zip(&x1).map(|(y, x)| y - x * theta).collect();
        let ritz_residual = norm(&r) / theta;
        let est = theta.sqrt();
        best = NormEstimate {
            norm: est,
            iterations: it,
            converged: false,
            ritz_residual,
        };
        if (est - prev).abs() <= opts.tol * est && ritz_residual <= opts.tol.sqrt() {
            best.converged = true;
            return best;
        }
        prev = est;
        let mut next: Vec<Vec<C64>> = (0..k).rev().map(|c| combine(&ys, c)).collect();
        let rank = orthonormalize(&mut next);
        if rank < k {
            // Refill collapsed directions so the block keeps its size.
            for v in next.iter_mut().filter(|v| norm(v) == 0.0) {
                *v = (0..n)
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
            }
            orthonormalize(&mut next);
        }
        xs = next;
    }
    best
}

/// Dense matrix viewed as a [`LinearMap`].
#[derive(Debug, Clone)]
pub struct DenseMap(pub DMatrix<C64>);

impl LinearMap for DenseMap {
    fn dim(&self) -> usize {
        self.0.ncols()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (&self.0 * nalgebra::DVector::from_column_slice(x))
            .as_slice()
            .to_vec()
    }

    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        (self.0.adjoint() * nalgebra::DVector::from_column_slice(y))
            .as_slice()
            .to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_spectral_norm;

    #[test]
    fn diagonal_map() {
        let d = [3.0, -0.5, 7.0, 2.0, 6.9];
        let m = DMatrix::from_fn(5, 5, |i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO });
        let est = power_norm(
            &DenseMap(m),
            &PowerOptions {
                tol: 1e-8,
                ..Default::default()
            },
        );
        assert!(est.converged);
        assert!((est.norm - 7.0).abs() < 1e-7);
    }

    #[test]
    fn zero_map_stops_immediately() {
        let est = power_norm(&DenseMap(DMatrix::zeros(6, 6)), &PowerOptions::default());
        assert_eq!(est.norm, 0.0);
        assert_eq!(est.iterations, 1);
        assert!(est.converged);
    }

    #[test]
    fn random_dense_against_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let m = DMatrix::from_fn(40, 40, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let exact = dense_spectral_norm(&m);
            let est = power_norm(
                &DenseMap(m),
                &PowerOptions {
                    tol: 1e-8,
                    max_iter: 5000,
                    ..Default::default()
                },
            );
            assert!(est.converged);
            assert!(
                (est.norm - exact).abs() <= 1e-6 * exact,
                "{} vs {}",
                est.norm,
                exact
            );
        }
    }

    #[test]
    fn options_are_checked() {
        assert!(PowerOptions {
            tol: 1e-2,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PowerOptions::default().validate().is_ok());
    }
}
