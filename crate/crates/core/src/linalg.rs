//! Complex vector kernels, banded LU with partial pivoting, and small dense
//! helpers.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result, C64};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `⟨x, y⟩ = Σ conj(x_i) y_i`.
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    let mut acc = ZERO;
    for (a, b) in x.iter().zip(y) {
        acc += a.conj() * b;
    }
    acc
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `y += a x`.
pub fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(a: C64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

pub fn sub(x: &[C64], y: &[C64]) -> Vec<C64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// Orthonormalizes `vs` in place by modified Gram–Schmidt with one
/// reorthogonalization pass. Vectors that collapse below `1e-13` relative
/// norm are replaced by zeros; the count of surviving vectors is returned.
pub fn orthonormalize(vs: &mut [Vec<C64>]) -> usize {
    let mut rank = 0;
    for k in 0..vs.len() {
        let before = norm(&vs[k]);
        for _pass in 0..2 {
            for j in 0..k {
                let (head, tail) = vs.split_at_mut(k);
                let q = &head[j];
                let c = dot(q, &tail[0]);
                axpy(-c, q, &mut tail[0]);
            }
        }
        let nk = norm(&vs[k]);
        if nk > 1e-13 * before.max(f64::MIN_POSITIVE) && nk > 0.0 {
            scale(C64::new(1.0 / nk, 0.0), &mut vs[k]);
            rank += 1;
        } else {
            vs[k].iter_mut().for_each(|z| *z = ZERO);
        }
    }
    rank
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals, stored by
/// rows: row `i` holds columns `i - kl ..= i + ku`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![ZERO; n * (kl + ku + 1)],
        }
    }

    /// Diagonal matrix.
    pub fn diagonal(d: &[C64]) -> Self {
        let mut m = BandMatrix::zeros(d.len(), 0, 0);
        for (i, v) in d.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    #[inline]
    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku && i < self.n && j < self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + (j + self.kl - i)]
        } else {
            ZERO
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside the band");
        let w = self.width();
        self.data[i * w + (j + self.kl - i)] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let w = self.width();
        self.data[i * w + (j + self.kl - i)] += v;
    }

    /// Column range of row `i`.
    #[inline]
    pub fn row_cols(&self, i: usize) -> core::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        let w = self.width();
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = ZERO;
            for j in self.row_cols(i) {
                acc += row[j + self.kl - i] * x[j];
            }
            y[i] = acc;
        }
    }

    /// `A^H x`.
    pub fn matvec_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let w = self.width();
        let mut y = vec![ZERO; self.n];
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            let xi = x[i];
            for j in self.row_cols(i) {
                y[j] += row[j + self.kl - i].conj() * xi;
            }
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Triplets `(i, j, value)` of the stored nonzeros.
    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in self.row_cols(i) {
                let v = self.get(i, j);
                if v != ZERO {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// `A^H`, as a band matrix with swapped bandwidths.
    pub fn adjoint(&self) -> BandMatrix {
        let mut m = BandMatrix::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_cols(i) {
                m.set(j, i, self.get(i, j).conj());
            }
        }
        m
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::new(self, 32.0)
    }
}

/// LU factorization with partial pivoting of a [`BandMatrix`].
///
/// Row `i` of the working array holds columns `i - kl ..= i + ku + kl`; the
/// extra `kl` columns absorb fill-in from row interchanges.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    a: Vec<C64>,
    piv: Vec<usize>,
    /// Smallest pivot modulus relative to the largest matrix entry.
    pub min_pivot_ratio: f64,
}

impl BandLu {
    /// Factors `m`; pivots with `|u_kk| ≤ pivot_factor · ε · max|a_ij|` are
    /// reported as singular.
    pub fn new(m: &BandMatrix, pivot_factor: f64) -> Result<BandLu> {
        let (n, kl, ku) = (m.n, m.kl, m.ku);
        let w = 2 * kl + ku + 1;
        let mut a = vec![ZERO; n * w];
        for i in 0..n {
            for j in m.row_cols(i) {
                a[i * w + (j + kl - i)] = m.get(i, j);
            }
        }
        let scale = m.max_abs();
        let tol = pivot_factor * f64::EPSILON * scale;
        let mut piv = vec![0usize; n];
        let mut min_ratio = f64::INFINITY;
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a[idx(k, k)].norm();
            for i in k + 1..=last_row {
                let v = a[idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if scale > 0.0 {
                min_ratio = min_ratio.min(best / scale);
            }
            if !(best > tol) || scale == 0.0 {
                return Err(Error::SingularToTolerance {
                    index: k,
                    pivot: best,
                });
            }
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    a.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = a[idx(k, k)];
            let inv = ONE / pivot;
            for i in k + 1..=last_row {
                let l = a[idx(i, k)] * inv;
                a[idx(i, k)] = l;
                if l == ZERO {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = a[idx(k, j)];
                    a[idx(i, j)] -= l * u;
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            w,
            a,
            piv,
            min_pivot_ratio: min_ratio,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.a[i * self.w + (j + self.kl - i)]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != ZERO {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.at(k, j) * b[j];
            }
            b[k] = acc / self.at(k, k);
        }
    }

    /// Solves `A^H y = c` in place.
    pub fn solve_adjoint_in_place(&self, c: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let mut acc = c[k];
            for j in k.saturating_sub(kl + ku)..k {
                acc -= self.at(j, k).conj() * c[j];
            }
            c[k] = acc / self.at(k, k).conj();
        }
        for k in (0..n).rev() {
            let mut acc = c[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                acc -= self.at(i, k).conj() * c[i];
            }
            c[k] = acc;
            let p = self.piv[k];
            if p != k {
                c.swap(k, p);
            }
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_adjoint(&self, c: &[C64]) -> Vec<C64> {
        let mut y = c.to_vec();
        self.solve_adjoint_in_place(&mut y);
        y
    }
}

/// Relative residual `‖A x - b‖ / ‖b‖`.
pub fn relative_residual(a: &BandMatrix, x: &[C64], b: &[C64]) -> f64 {
    let r = sub(&a.matvec(x), b);
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// Largest singular value of a dense matrix (test oracle and small-problem
/// reference).
pub fn dense_spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Eigen-decomposition of a small Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let n = h.nrows();
    let e = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, order.len(), |r, c| e.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Solves a small dense complex system by LU; `None` when singular.
pub fn dense_solve(m: &DMatrix<C64>, b: &DVector<C64>) -> Option<DVector<C64>> {
    m.clone().lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in m.row_cols(i) {
                m.set(
                    i,
                    j,
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                );
            }
            // keep triangular cases well conditioned
            m.add(i, i, C64::new(if i % 2 == 0 { 3.0 } else { -3.0 }, 0.0));
        }
        m
    }

    fn random_vec(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn diagonal_solve() {
        let d: Vec<C64> = (1..=5)
            .map(|k| C64::new(k as f64, -0.5 * k as f64))
            .collect();
        let lu = BandMatrix::diagonal(&d).factor().unwrap();
        for k in 0..5 {
            let mut e = vec![ZERO; 5];
            e[k] = ONE;
            let x = lu.solve(&e);
            assert!((x[k] - ONE / d[k]).norm() < 1e-15);
            assert!(x.iter().enumerate().all(|(i, v)| i == k || *v == ZERO));
        }
    }

    #[test]
    fn random_banded_residuals() {
        for (seed, (kl, ku)) in [
            (1, (1, 1)),
            (2, (3, 2)),
            (3, (0, 4)),
            (4, (5, 0)),
            (5, (7, 7)),
        ] {
            let m = random_band(200, kl, ku, seed);
            let lu = m.factor().unwrap();
            let b = random_vec(200, seed + 100);
            let x = lu.solve(&b);
            assert!(relative_residual(&m, &x, &b) < 1e-10);
            let y = lu.solve_adjoint(&b);
            let r = sub(&m.matvec_adjoint(&y), &b);
            assert!(norm(&r) / norm(&b) < 1e-10);
            let dense = m.to_dense();
            let xd = dense_solve(&dense, &DVector::from_vec(b.clone())).unwrap();
            let err: f64 = x
                .iter()
                .zip(xd.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err / norm(&x) < 1e-9);
        }
    }

    #[test]
    fn pivoting_needed() {
        // zero diagonal forces interchanges at every step
        let n = 12;
        let mut m = BandMatrix::zeros(n, 2, 2);
        for i in 0..n {
            for j in m.row_cols(i) {
                if i != j {
                    m.set(
                        i,
                        j,
                        C64::new(
                            1.0 + (i * 7 + j * 3) as f64 % 5.0,
                            (i + 2 * j) as f64 % 3.0 - 1.0,
                        ),
                    );
                }
            }
        }
        let lu = m.factor().unwrap();
        let b = random_vec(n, 77);
        let x = lu.solve(&b);
        assert!(relative_residual(&m, &x, &b) < 1e-11);
        let y = lu.solve_adjoint(&b);
        assert!(norm(&sub(&m.matvec_adjoint(&y), &b)) / norm(&b) < 1e-11);
    }

    #[test]
    fn adjoint_matches_dense() {
        let m = random_band(40, 2, 3, 9);
        let a = m.adjoint().to_dense();
        assert!((a - m.to_dense().adjoint()).norm() < 1e-15);
    }

    #[test]
    fn singular_detected() {
        let mut m = BandMatrix::zeros(3, 1, 1);
        let c = C64::new(2.0, 0.0);
        for i in 0..3 {
            if i > 0 {
                m.set(i, i - 1, -c);
            }
            if i < 2 {
                m.set(i, i + 1, -c);
            }
        }
        assert!(matches!(m.factor(), Err(Error::SingularToTolerance { .. })));
    }

    #[test]
    fn gram_schmidt() {
        let mut vs: Vec<Vec<C64>> = (0..4).map(|k| random_vec(30, k)).collect();
        vs.push(vs[0].clone());
        let r = orthonormalize(&mut vs);
        assert_eq!(r, 4);
        for i in 0..4 {
            for j in 0..4 {
                let d = dot(&vs[i], &vs[j]);
                let want = if i == j { ONE } else { ZERO };
                assert!((d - want).norm() < 1e-13);
            }
        }
        assert_eq!(norm(&vs[4]), 0.0);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(6, 6, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let h = &a + a.adjoint();
        let (vals, vecs) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            6,
            vals.iter().map(|&v| C64::new(v, 0.0)),
        ));
        assert!((&vecs * d * vecs.adjoint() - h).norm() < 1e-12);
    }
}
