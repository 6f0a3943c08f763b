use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};

use super::{quantize_symbol, Factor, Grid1D, Symbol};
use crate::geometry::{effective_potential, Potential, Profile};
use crate::linalg::{dot, hermitian_eigen, norm, orthonormalize, ZERO};
use crate::smooth::Window;
use crate::{Error, Result, C64};

/// A σ-dependent absorbing barrier `w(s, σ) = χ(s) g(σ)` near `s = 0`.
///
/// The operator used is the positive part of the Weyl quantization of `w`
/// compressed to the nodes `|s| ≤ s_cut`, stored as a low-rank factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    pub s_window: Window,
    pub sigma_window: Window,
    pub s_cut: f64,
    /// Well location of the double well the barrier is designed for.
    pub s0: f64,
    pub band_tol: f64,
    /// Eigenvalues below `drop_tol` (relative to the largest) are discarded.
    pub drop_tol: f64,
    pub seed: u64,
}

impl BarrierSpec {
    /// Barrier for a double well with minima at `±s0`: equal to 1 on
    /// `{|s| ≤ 0.15 s0, -1.15 ≤ σ ≤ 0}`, negligible for `σ ≥ 0.8` and
    /// supported in `|s| < 0.3 s0`.
    pub fn for_double_well(s0: f64) -> Self {
        BarrierSpec {
            s_window: Window::radial(0.15 * s0, 0.3 * s0),
            sigma_window: Window::erf(-1.15, 0.0, 0.8, 0.8, 1e-8),
            s_cut: 0.4 * s0,
            s0,
            band_tol: 1e-12,
            drop_tol: 1e-10,
            seed: 0x5eed_ba11,
        }
    }

    pub fn symbol(&self) -> Symbol {
        Symbol::separable(
            Factor::Window(self.s_window),
            Factor::Window(self.sigma_window),
        )
    }

    pub fn eval(&self, s: f64, sigma: f64) -> f64 {
        self.s_window.eval(s) * self.sigma_window.eval(sigma)
    }

    /// Checks the three support clauses by sampling.
    pub fn audit(&self, profile: &Profile, potential: &Potential, energy: f64) -> BarrierAudit {
        let samples = 2001;
        let top = (energy - potential.value(0.0)).max(0.0).sqrt();
        let min_incoming = (0..samples)
            .map(|i| self.eval(0.0, -top * i as f64 / (samples - 1) as f64))
            .fold(f64::INFINITY, f64::min);
        let radius = self
            .s_window
            .support()
            .map_or(f64::INFINITY, |(lo, hi)| lo.abs().max(hi.abs()));
        let support_inside =
            radius < 0.5 * self.s0 && self.s_cut < 0.5 * self.s0 && self.s_cut >= radius;
        // The heteroclinic trajectories from -s0 to +s0 are the upper branch
        // of the separatrix level set through the hyperbolic orbits.
        let a0 = profile.a(self.s0);
        let mu = ((energy - potential.value(-self.s0)).max(0.0)).sqrt() * a0;
        let mut max_corridor = 0.0f64;
        let mut corridor_samples = 0;
        for i in 1..samples {
            let s = -self.s0 + 2.0 * self.s0 * i as f64 / samples as f64;
            let k = energy - effective_potential(profile, potential, mu, s);
            if k <= 0.0 {
                continue;
            }
            corridor_samples += 1;
            max_corridor = max_corridor.max(self.eval(s, k.sqrt()));
        }
        BarrierAudit {
            min_incoming,
            covers_incoming: min_incoming >= 1.0 - 1e-6,
            support_radius: radius,
            support_inside,
            max_corridor,
            corridor_clear: max_corridor <= 1e-7 && corridor_samples > 0,
            corridor_samples,
        }
    }
}

/// Result of [`BarrierSpec::audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierAudit {
    /// `min w` over `{s = 0, σ ≤ 0}` on the shell.
    pub min_incoming: f64,
    pub covers_incoming: bool,
    pub support_radius: f64,
    pub support_inside: bool,
    /// `max w` along the heteroclinic corridor.
    pub max_corridor: f64,
    pub corridor_clear: bool,
    pub corridor_samples: usize,
}

impl BarrierAudit {
    pub fn passed(&self) -> bool {
        self.covers_incoming && self.support_inside && self.corridor_clear
    }
}

/// `W = Ũ Ũ^H ≥ 0` acting on the node block `offset .. offset + rows`.
#[derive(Debug, Clone)]
pub struct LowRankBarrier {
    pub n: usize,
    pub h: f64,
    pub offset: usize,
    /// `Ũ`, `rows × rank`.
    pub factor: DMatrix<C64>,
    /// Kept eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Magnitude of the most negative eigenvalue of the compressed Weyl
    /// matrix, i.e. what was discarded to make `W` nonnegative.
    pub slack: f64,
}

impl LowRankBarrier {
    pub fn build(spec: &BarrierSpec, h: f64, grid: &Grid1D) -> Result<LowRankBarrier> {
        let q = quantize_symbol(&spec.symbol(), h, grid, spec.band_tol)?;
        let cut = grid.index_range(-spec.s_cut, spec.s_cut);
        let m = cut.len();
        if m == 0 {
            return Err(Error::GridTooCoarse(
                "barrier block contains no nodes".into(),
            ));
        }
        let apply = |cols: &[Vec<C64>]| -> Vec<Vec<C64>> {
            let b = cols.len();
            let mut x = vec![ZERO; m * b];
            for (c, v) in cols.iter().enumerate() {
                for i in 0..m {
                    x[i * b + c] = v[i];
                }
            }
            let y = q.apply_block(cut.clone(), &x, b);
            (0..b)
                .map(|c| (0..m).map(|i| y[i * b + c]).collect())
                .collect()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
        let block = 24usize;
        let mut basis: Vec<Vec<C64>> = Vec::new();
        let mut scale = 0.0f64;
        while basis.len() < m {
            let b = block.min(m - basis.len());
            let omega: Vec<Vec<C64>> = (0..b)
                .map(|_| {
                    (0..m)
                        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                        .collect()
                })
                .collect();
            let mut y = apply(&omega);
            for v in y.iter_mut() {
                for _ in 0..2 {
                    for qv in &basis {
                        let c = dot(qv, v);
                        for (vi, qi) in v.iter_mut().zip(qv) {
                            *vi -= c * qi;
                        }
                    }
                }
            }
            let largest = y.iter().map(|v| norm(v)).fold(0.0, f64::max);
            if scale == 0.0 {
                scale = largest;
                if scale == 0.0 {
                    break;
                }
            }
            if largest <= 0.1 * spec.drop_tol * scale {
                break;
            }
            let kept = orthonormalize(&mut y);
            basis.extend(y.into_iter().filter(|v| norm(v) > 0.5).take(kept));
        }
        let r = basis.len();
        let mq = apply(&basis);
        let bmat = DMatrix::from_fn(r, r, |i, j| dot(&basis[i], &mq[j]));
        let (vals, vecs) = hermitian_eigen(&bmat);
        let top = vals.iter().copied().fold(0.0, f64::max);
        let slack = (-vals.first().copied().unwrap_or(0.0)).max(0.0);
        let keep: Vec<usize> = (0..r)
            .rev()
            .filter(|&i| vals[i] > spec.drop_tol * top)
            .collect();
        let mut factor = DMatrix::<C64>::zeros(m, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let sq = vals[i].sqrt();
            for (k, qv) in basis.iter().enumerate() {
                let coef = vecs[(k, i)] * sq;
                if coef == ZERO {
                    continue;
                }
                for row in 0..m {
                    factor[(row, c)] += qv[row] * coef;
                }
            }
        }
        Ok(LowRankBarrier {
            n: grid.n,
            h,
            offset: cut.start,
            factor,
            eigenvalues: keep.iter().map(|&i| vals[i]).collect(),
            slack,
        })
    }

    pub fn rows(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn dense_block(&self) -> DMatrix<C64> {
        &self.factor * self.factor.adjoint()
    }

    /// `y += coef · W x` for full-grid vectors.
    pub fn apply_add(&self, x: &[C64], y: &mut [C64], coef: C64) {
        self.apply_add_at(x, y, coef, self.offset);
    }

    /// `y += coef · W x` where the barrier block starts at index `off` of
    /// `x` and `y`.
    pub fn apply_add_at(&self, x: &[C64], y: &mut [C64], coef: C64, off: usize) {
        let u = &self.factor;
        for k in 0..u.ncols() {
            let col = u.column(k);
            let mut c = ZERO;
            for (i, v) in col.iter().enumerate() {
                c += v.conj() * x[off + i];
            }
            let c = c * coef;
            for (i, v) in col.iter().enumerate() {
                y[off + i] += v * c;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_profile, ProfileKind};
    use crate::linalg::sub;
    use crate::quantize::{build_mode_operator, Absorber};

    fn well() -> Profile {
        make_profile(ProfileKind::DoubleWell, &[2.0, 1.0, 2.0], 8.0).unwrap()
    }

    #[test]
    fn clauses_hold_for_default_barrier() {
        let spec = BarrierSpec::for_double_well(2.0);
        let audit = spec.audit(&well(), &Potential::Zero, 1.0);
        assert!(audit.covers_incoming, "{audit:?}");
        assert!(audit.support_inside, "{audit:?}");
        assert!(audit.corridor_clear, "{audit:?}");
    }

    #[test]
    fn clause_violation_is_reported() {
        let mut spec = BarrierSpec::for_double_well(2.0);
        spec.sigma_window = Window::erf(-1.15, 0.5, 0.8, 0.8, 1e-8);
        assert!(!spec.audit(&well(), &Potential::Zero, 1.0).corridor_clear);
        let mut spec = BarrierSpec::for_double_well(2.0);
        spec.s_window = Window::radial(0.5, 1.2);
        assert!(!spec.audit(&well(), &Potential::Zero, 1.0).support_inside);
    }

    #[test]
    fn low_rank_matches_dense_positive_part() {
        let h = 0.05;
        let grid = Grid1D::for_h(8.0, h, 8.0);
        let spec = BarrierSpec::for_double_well(2.0);
        let w = LowRankBarrier::build(&spec, h, &grid).unwrap();
        let q = quantize_symbol(&spec.symbol(), h, &grid, spec.band_tol).unwrap();
        let cut = grid.index_range(-spec.s_cut, spec.s_cut);
        let dense = q.dense_block(cut);
        let (vals, vecs) = hermitian_eigen(&dense);
        let mut pos = DMatrix::<C64>::zeros(dense.nrows(), dense.ncols());
        for (i, &v) in vals.iter().enumerate() {
            if v > 0.0 {
                let c = vecs.column(i);
                pos += c * c.adjoint() * C64::new(v, 0.0);
            }
        }
        let err = (w.dense_block() - &pos).norm();
        assert!(err < 1e-8, "err={err} rank={}", w.rank());
        assert!((w.slack + vals[0].min(0.0)).abs() < 1e-9);
        assert!(w.eigenvalues.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn barrier_is_nonnegative_and_solves_agree() {
        let h = 0.1;
        let grid = Grid1D::for_h(8.0, h, 8.0);
        let spec = BarrierSpec::for_double_well(2.0);
        let w = alloc::sync::Arc::new(LowRankBarrier::build(&spec, h, &grid).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v: Vec<C64> = (0..grid.n)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let mut y = vec![ZERO; grid.n];
            w.apply_add(&v, &mut y, C64::new(0.0, -1.0));
            // im⟨-iWv, v⟩ = -⟨Wv, v⟩
            assert!(dot(&v, &y).im <= 1e-8 * dot(&v, &v).re);
        }
        let op = build_mode_operator(
            &well(),
            &Potential::Zero,
            h,
            12,
            ZERO,
            grid,
            Some(Absorber::standard(8.0)),
            Some(w.clone()),
        )
        .unwrap();
        let dense = op.to_dense();
        let s = op.factor().unwrap();
        let b: Vec<C64> = (0..grid.n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0))
            .collect();
        let (x, res) = s.solve_checked(&b, false);
        assert!(res < 1e-10);
        let r = sub(
            &(&dense * nalgebra::DVector::from_vec(x.clone()))
                .as_slice()
                .to_vec(),
            &b,
        );
        assert!(norm(&r) / norm(&b) < 1e-10);
        let (y, res) = s.solve_checked(&b, true);
        assert!(res < 1e-10);
        let r = sub(
            &(dense.adjoint() * nalgebra::DVector::from_vec(y))
                .as_slice()
                .to_vec(),
            &b,
        );
        assert!(norm(&r) / norm(&b) < 1e-10);
    }
}
