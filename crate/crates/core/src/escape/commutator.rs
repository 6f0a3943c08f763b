use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{trace_branches, EscapeFunction, EscapeValue};
use crate::dynamics::Stability;
use crate::smooth::psi;
use crate::{Error, Result};

type Gauge = Arc<dyn Fn(f64, f64, &EscapeValue) -> f64 + Send + Sync>;

/// Two open sets `U₋ = {g₋ < 0}` and `U₊ = {g₊ < 0}`.
///
/// `U₋` should contain `Γ₊ ∩ supp q` and `closure(U₊)` should miss
/// `Γ₊ ∩ supp q`.
#[derive(Clone)]
pub struct Partition {
    pub g_minus: Gauge,
    pub g_plus: Gauge,
}

impl core::fmt::Debug for Partition {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("Partition")
    }
}

impl Partition {
    pub fn new(
        g_minus: impl Fn(f64, f64, &EscapeValue) -> f64 + Send + Sync + 'static,
        g_plus: impl Fn(f64, f64, &EscapeValue) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Partition {
            g_minus: Arc::new(g_minus),
            g_plus: Arc::new(g_plus),
        }
    }

    /// `U₋`: the inner part of `U` together with the tube cores, where `H_p q ≤ 0`.
    /// `U₊`: the outer shell of `U` away from the tube cores.
    pub fn standard(ef: &EscapeFunction) -> Self {
        let u = ef.regions.u;
        Partition::new(
            move |s, p, v| (u.gauge(s, p) - 0.9).min(0.72 - v.phi_sum),
            move |s, p, v| {
                let g = u.gauge(s, p);
                (g - 1.05).max(0.85 - g).max(v.phi_sum - 0.8)
            },
        )
    }
}

/// `H_p(q²) = -b² + e` sampled on a grid, with `e` supported in `U₊`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorDecomposition {
    pub s: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Row-major in `s`, then `σ`.
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    pub hpq2: Vec<f64>,
    /// `sup |H_p(q²) + b² - e|`.
    pub residual: f64,
}

/// Splits `H_p(q²)` with the partition of unity `φ₋² + φ₊² = 1`,
/// `φ±² = w± / (w₊ + w₋)`, `w± = ψ(-g±)`, on an `n × n` grid over the `U`
/// box widened by 10%.
pub fn commutator_decomposition(
    ef: &EscapeFunction,
    partition: &Partition,
    n: usize,
) -> Result<CommutatorDecomposition> {
    if n < 2 {
        return Err(Error::InvalidParams(
            "grid needs at least 2 points per side".into(),
        ));
    }
    let branches = if !ef.branches.is_empty() {
        ef.branches.clone()
    } else if ef.orbit.stability == Stability::Hyperbolic {
        trace_branches(&ef.flow(), &ef.orbit, &ef.regions.u, &ef.opts)?
    } else {
        Vec::new()
    };
    for x in branches.iter().flatten() {
        let v = ef.eval(x.s, x.sigma);
        if v.q != 0.0 && (partition.g_plus)(x.s, x.sigma, &v) <= 0.0 {
            return Err(Error::Precondition(format!(
                "closure(U+) meets Γ₊ at ({:.5}, {:.5})",
                x.s, x.sigma
            )));
        }
        if v.q != 0.0 && (partition.g_minus)(x.s, x.sigma, &v) >= 0.0 {
            return Err(Error::Precondition(format!(
                "U- misses Γ₊ ∩ supp q at ({:.5}, {:.5})",
                x.s, x.sigma
            )));
        }
    }

    let u = ef.regions.u;
    let pad_s = 0.1 * (u.s.1 - u.s.0);
    let pad_p = 0.1 * (u.sigma.1 - u.sigma.0);
    let lin = |a: f64, b: f64| -> Vec<f64> {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let s = lin(u.s.0 - pad_s, u.s.1 + pad_s);
    let sigma = lin(u.sigma.0 - pad_p, u.sigma.1 + pad_p);
    let mut b = Vec::with_capacity(n * n);
    let mut e = Vec::with_capacity(n * n);
    let mut hpq2 = Vec::with_capacity(n * n);
    let mut residual: f64 = 0.0;
    for &x in &s {
        for &y in &sigma {
            let v = ef.eval(x, y);
            let d = 2.0 * v.q * v.hpq;
            let wm = psi(-(partition.g_minus)(x, y, &v));
            let wp = psi(-(partition.g_plus)(x, y, &v));
            let (bv, ev) = if wm + wp > 0.0 {
                let (pm2, pp2) = (wm / (wm + wp), wp / (wm + wp));
                (pm2.sqrt() * (-d).max(0.0).sqrt(), pp2 * d)
            } else if v.q != 0.0 || d != 0.0 {
                return Err(Error::PartitionInfeasible(format!(
                    "U- ∪ U+ misses supp q at ({x:.5}, {y:.5})"
                )));
            } else {
                (0.0, 0.0)
            };
            residual = residual.max((d + bv * bv - ev).abs());
            b.push(bv);
            e.push(ev);
            hpq2.push(d);
        }
    }
    Ok(CommutatorDecomposition {
        s,
        sigma,
        b,
        e,
        hpq2,
        residual,
    })
}
