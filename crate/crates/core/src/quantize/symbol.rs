use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::ops::Range;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use super::Grid1D;
use crate::linalg::ZERO;
use crate::smooth::{Edge, Window};
use crate::{Error, Result, C64};

pub type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;
pub type SymbolFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A real function of one variable with known support.
#[derive(Clone)]
pub enum Factor {
    One,
    Window(Window),
    /// `support = None` means unbounded support; `resolution` is the length
    /// scale on which `f` varies.
    Custom {
        f: Arc<ScalarFn>,
        support: Option<(f64, f64)>,
        resolution: f64,
    },
}

impl fmt::Debug for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::One => write!(f, "One"),
            Factor::Window(w) => write!(f, "Window({w:?})"),
            Factor::Custom {
                support,
                resolution,
                ..
            } => {
                write!(
                    f,
                    "Custom {{ support: {support:?}, resolution: {resolution} }}"
                )
            }
        }
    }
}

impl Factor {
    pub fn custom(f: Arc<ScalarFn>, support: Option<(f64, f64)>, resolution: f64) -> Self {
        Factor::Custom {
            f,
            support,
            resolution,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Factor::One => 1.0,
            Factor::Window(w) => w.eval(x),
            Factor::Custom { f, support, .. } => match support {
                Some((lo, hi)) if x < *lo || x > *hi => 0.0,
                _ => f(x),
            },
        }
    }

    /// Interval outside of which the factor vanishes; `None` if unbounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Factor::One => None,
            Factor::Window(w) => w.support(),
            Factor::Custom { support, .. } => *support,
        }
    }

    /// Integration window: the support, widened for erf edges so that the
    /// neglected tail is far below the edge tail.
    fn quadrature_support(&self) -> Option<(f64, f64)> {
        match self {
            Factor::Window(w) if matches!(w.edge, Edge::Erf { .. }) && !w.complement => {
                let (lo, hi) = w.support()?;
                Some((lo - w.ramp_lo, hi + w.ramp_hi))
            }
            _ => self.support(),
        }
    }

    fn resolution(&self) -> f64 {
        match self {
            Factor::One => f64::INFINITY,
            Factor::Window(w) => {
                let mut r = (w.hi - w.lo).abs().max(1e-3);
                for ramp in [w.ramp_lo, w.ramp_hi] {
                    if ramp > 0.0 {
                        r = r.min(ramp);
                    }
                }
                r / 64.0
            }
            Factor::Custom { resolution, .. } => *resolution / 16.0,
        }
    }

    /// `sup |f|`, sampled for custom factors.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Factor::One => 1.0,
            Factor::Window(_) => 1.0,
            Factor::Custom { f, support, .. } => {
                let (lo, hi) = support.unwrap_or((-10.0, 10.0));
                (0..=4096)
                    .map(|i| f(lo + (hi - lo) * i as f64 / 4096.0).abs())
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// A real phase-space symbol `a(s, σ)`.
#[derive(Clone, Debug)]
pub enum Symbol {
    /// `f(s) g(σ)`.
    Separable { s: Factor, sigma: Factor },
    General {
        f: GeneralFn,
        s_support: Option<(f64, f64)>,
        sigma_support: Option<(f64, f64)>,
        resolution: f64,
    },
}

/// Wrapper giving general symbol callables a `Debug` impl.
#[derive(Clone)]
pub struct GeneralFn(pub Arc<SymbolFn>);

impl fmt::Debug for GeneralFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GeneralFn")
    }
}

impl Symbol {
    pub fn spatial(f: Factor) -> Self {
        Symbol::Separable {
            s: f,
            sigma: Factor::One,
        }
    }

    pub fn separable(s: Factor, sigma: Factor) -> Self {
        Symbol::Separable { s, sigma }
    }

    pub fn general(
        f: Arc<SymbolFn>,
        s_support: Option<(f64, f64)>,
        sigma_support: Option<(f64, f64)>,
        resolution: f64,
    ) -> Self {
        Symbol::General {
            f: GeneralFn(f),
            s_support,
            sigma_support,
            resolution,
        }
    }

    pub fn eval(&self, s: f64, sigma: f64) -> f64 {
        match self {
            Symbol::Separable { s: fs, sigma: fg } => fs.eval(s) * fg.eval(sigma),
            Symbol::General {
                f,
                s_support,
                sigma_support,
                ..
            } => {
                let outside = |sup: &Option<(f64, f64)>, x: f64| matches!(sup, Some((lo, hi)) if x < *lo || x > *hi);
                if outside(s_support, s) || outside(sigma_support, sigma) {
                    0.0
                } else {
                    (f.0)(s, sigma)
                }
            }
        }
    }

    pub fn s_support(&self) -> Option<(f64, f64)> {
        match self {
            Symbol::Separable { s, .. } => s.support(),
            Symbol::General { s_support, .. } => *s_support,
        }
    }

    pub fn is_spatial(&self) -> bool {
        matches!(
            self,
            Symbol::Separable {
                sigma: Factor::One,
                ..
            }
        )
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Diagonal(Vec<f64>),
    /// `M_jk = f_mid[j+k] ĝ(j-k)`, `ĝ(-d) = conj ĝ(d)`.
    Separable {
        f_mid: Vec<f64>,
        ghat: Vec<C64>,
    },
    /// Rows `rows`, columns `j - D ..= j + D`.
    Banded {
        data: Vec<C64>,
    },
}

/// Band-truncated Weyl quantization of a real symbol on a grid.
///
/// The matrix is Hermitian by construction.
#[derive(Debug, Clone)]
pub struct QuantizedSymbol {
    pub n: usize,
    pub h: f64,
    pub band_tol: f64,
    /// Half bandwidth `D` kept after truncation.
    pub half_band: usize,
    /// Largest dropped kernel modulus relative to the largest kept one.
    pub truncation: f64,
    rows: Range<usize>,
    repr: Repr,
}

impl QuantizedSymbol {
    pub fn is_diagonal(&self) -> bool {
        matches!(self.repr, Repr::Diagonal(_))
    }

    /// Rows (equivalently columns) that can be nonzero.
    pub fn rows(&self) -> Range<usize> {
        self.rows.clone()
    }

    pub fn diagonal(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Diagonal(d) => Some(d),
            _ => None,
        }
    }

    #[inline]
    pub fn entry(&self, j: usize, k: usize) -> C64 {
        let d = j as isize - k as isize;
        if d.unsigned_abs() > self.half_band || !self.rows.contains(&j) || !self.rows.contains(&k) {
            return ZERO;
        }
        match &self.repr {
            Repr::Diagonal(v) => {
                if j == k {
                    C64::new(v[j], 0.0)
                } else {
                    ZERO
                }
            }
            Repr::Separable { f_mid, ghat } => {
                let g = if d >= 0 {
                    ghat[d as usize]
                } else {
                    ghat[(-d) as usize].conj()
                };
                g * f_mid[j + k]
            }
            Repr::Banded { data } => {
                let w = 2 * self.half_band + 1;
                data[(j - self.rows.start) * w + (k + self.half_band - j)]
            }
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        self.apply_into(x, &mut y);
        y
    }

    /// `y = M x`; entries of `y` outside [`rows`](Self::rows) are zeroed.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        let dd = self.half_band;
        let r = self.rows.clone();
        match &self.repr {
            Repr::Diagonal(v) => {
                for j in r {
                    y[j] = x[j] * v[j];
                }
            }
            Repr::Separable { f_mid, ghat } => {
                for j in r.clone() {
                    let k0 = j.saturating_sub(dd).max(r.start);
                    let k1 = (j + dd + 1).min(r.end);
                    let mut acc = ZERO;
                    for k in k0..k1 {
                        let fm = f_mid[j + k];
                        if fm == 0.0 {
                            continue;
                        }
                        let g = if j >= k {
                            ghat[j - k]
                        } else {
                            ghat[k - j].conj()
                        };
                        acc += g * x[k] * fm;
                    }
                    y[j] = acc;
                }
            }
            Repr::Banded { data } => {
                let w = 2 * dd + 1;
                for j in r.clone() {
                    let row = &data[(j - r.start) * w..(j - r.start + 1) * w];
                    let k0 = j.saturating_sub(dd).max(r.start);
                    let k1 = (j + dd + 1).min(r.end);
                    let mut acc = ZERO;
                    for k in k0..k1 {
                        acc += row[k + dd - j] * x[k];
                    }
                    y[j] = acc;
                }
            }
        }
    }

    /// `Y = M_rr X` for the compression of `M` to `range × range`, with `X`
    /// stored row-major as `range.len() × b`.
    pub fn apply_block(&self, range: Range<usize>, x: &[C64], b: usize) -> Vec<C64> {
        let m = range.len();
        let o = range.start;
        let mut y = vec![ZERO; m * b];
        for j in range.clone() {
            if !self.rows.contains(&j) {
                continue;
            }
            let k0 = j
                .saturating_sub(self.half_band)
                .max(range.start)
                .max(self.rows.start);
            let k1 = (j + self.half_band + 1).min(range.end).min(self.rows.end);
            let yrow = (j - o) * b;
            for k in k0..k1 {
                let c = self.entry(j, k);
                if c == ZERO {
                    continue;
                }
                let xrow = &x[(k - o) * b..(k - o + 1) * b];
                for (yi, xi) in y[yrow..yrow + b].iter_mut().zip(xrow) {
                    *yi += c * xi;
                }
            }
        }
        y
    }

    /// `M^H x`, equal to `M x` for the Hermitian matrices built here.
    pub fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.apply(x)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |j, k| self.entry(j, k))
    }

    /// Dense block on `range × range`.
    pub fn dense_block(&self, range: Range<usize>) -> DMatrix<C64> {
        let o = range.start;
        let m = range.len();
        DMatrix::from_fn(m, m, |j, k| self.entry(j + o, k + o))
    }

    /// Same quantization with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> QuantizedSymbol {
        let mut q = self.clone();
        match &mut q.repr {
            Repr::Diagonal(v) => v.iter_mut().for_each(|x| *x *= c),
            Repr::Separable { f_mid, .. } => f_mid.iter_mut().for_each(|x| *x *= c),
            Repr::Banded { data } => data.iter_mut().for_each(|x| *x *= c),
        }
        q
    }
}

/// Trapezoid nodes and weights covering `[lo, hi]` with step at most `step`.
fn trapezoid(lo: f64, hi: f64, step: f64) -> (Vec<f64>, Vec<f64>) {
    let nq = (((hi - lo) / step).ceil() as usize).max(2) + 1;
    let dx = (hi - lo) / (nq - 1) as f64;
    let xs: Vec<f64> = (0..nq).map(|i| lo + i as f64 * dx).collect();
    let mut ws = vec![dx; nq];
    ws[0] *= 0.5;
    ws[nq - 1] *= 0.5;
    (xs, ws)
}

/// `Σ_q c_q e^{i σ_q θ}` with a rotation recurrence re-anchored every 128
/// nodes.
fn phase_sum(sig: &[f64], coef: &[f64], theta: f64) -> C64 {
    let mut acc = ZERO;
    let mut q = 0;
    while q < sig.len() {
        let end = (q + 128).min(sig.len());
        let mut z = C64::from_polar(1.0, sig[q] * theta);
        let rot = if end - q > 1 {
            C64::from_polar(1.0, (sig[q + 1] - sig[q]) * theta)
        } else {
            ZERO
        };
        for c in &coef[q..end] {
            acc += z * *c;
            z *= rot;
        }
        q = end;
    }
    acc
}

/// Kernel table `ĝ(d) = Δs/(2πh) ∫ e^{iσ dΔs/h} g(σ) dσ`, `d = 0..=dmax`.
fn fourier_table(g: &Factor, window: (f64, f64), h: f64, ds: f64, dmax: usize) -> Vec<C64> {
    let wave = 2.0 * PI * h / (8.0 * (dmax.max(1) as f64) * ds);
    let (sig, w) = trapezoid(window.0, window.1, g.resolution().min(wave));
    let coef: Vec<f64> = sig.iter().zip(&w).map(|(s, wq)| g.eval(*s) * wq).collect();
    let scale = ds / (2.0 * PI * h);
    (0..=dmax)
        .map(|d| phase_sum(&sig, &coef, d as f64 * ds / h) * scale)
        .collect()
}

/// Smallest `D` such that all of `tab[D+1..]` is below `tol · max`, or `None`
/// when the tail of the table is not yet below tolerance.
fn cut_band(tab: &[f64], tol: f64, guard: usize) -> Option<(usize, f64)> {
    let max = tab.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Some((0, 0.0));
    }
    let last = tab.iter().rposition(|&v| v > tol * max).unwrap_or(0);
    if last + guard < tab.len() {
        let dropped = tab[last + 1..].iter().copied().fold(0.0, f64::max) / max;
        Some((last, dropped))
    } else {
        None
    }
}

/// Weyl quantization `K_jk = Δs/(2πh) ∫ e^{iσ(s_j - s_k)/h} a((s_j+s_k)/2, σ) dσ`
/// truncated to the band where the kernel exceeds `band_tol` times its
/// maximum.
pub fn quantize_symbol(
    symbol: &Symbol,
    h: f64,
    grid: &Grid1D,
    band_tol: f64,
) -> Result<QuantizedSymbol> {
    if !(band_tol > 0.0 && band_tol <= 1e-6) {
        return Err(Error::InvalidParams(format!(
            "band_tol must lie in (0, 1e-6], got {band_tol}"
        )));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParams(format!(
            "h must lie in (0, 1), got {h}"
        )));
    }
    let n = grid.n;
    let ds = grid.spacing();
    let half = |t: usize| -grid.half_width + 0.5 * t as f64 * ds;
    match symbol {
        Symbol::Separable {
            s: fs,
            sigma: Factor::One,
        } => {
            let v: Vec<f64> = (0..n).map(|j| fs.eval(grid.node(j))).collect();
            let rows = nonzero_range(&v);
            Ok(QuantizedSymbol {
                n,
                h,
                band_tol,
                half_band: 0,
                truncation: 0.0,
                rows,
                repr: Repr::Diagonal(v),
            })
        }
        Symbol::Separable { s: fs, sigma: fg } => {
            let window = fg
                .quadrature_support()
                .ok_or_else(|| Error::UnsupportedSymbol("σ-factor has unbounded support".into()))?;
            let mut dmax = 32usize;
            let (ghat, half_band, truncation) = loop {
                let cap = (2 * dmax).min(n - 1);
                let tab = fourier_table(fg, window, h, ds, cap);
                let mags: Vec<f64> = tab.iter().map(|z| z.norm()).collect();
                match cut_band(&mags, band_tol, 16) {
                    Some((d, dropped)) => break (tab[..=d].to_vec(), d, dropped),
                    None if cap == n - 1 => break (tab, n - 1, 0.0),
                    None => dmax *= 2,
                }
            };
            let f_mid: Vec<f64> = (0..2 * n - 1).map(|t| fs.eval(half(t))).collect();
            let rows = match nonzero_span(&f_mid) {
                Some((t0, t1)) => {
                    (t0.saturating_sub(half_band) / 2)..((t1 + half_band) / 2 + 1).min(n)
                }
                None => 0..0,
            };
            Ok(QuantizedSymbol {
                n,
                h,
                band_tol,
                half_band,
                truncation,
                rows,
                repr: Repr::Separable { f_mid, ghat },
            })
        }
        Symbol::General {
            s_support,
            sigma_support,
            resolution,
            ..
        } => {
            let window = sigma_support
                .ok_or_else(|| Error::UnsupportedSymbol("symbol has unbounded σ-support".into()))?;
            let eval = |s: f64, sig: f64| symbol.eval(s, sig);
            let (slo, shi) = s_support.unwrap_or((-grid.half_width, grid.half_width));
            let t_range = {
                let lo = ((2.0 * (slo + grid.half_width) / ds).floor().max(0.0)) as usize;
                let hi = ((2.0 * (shi + grid.half_width) / ds).ceil() as usize).min(2 * n - 2);
                lo..hi + 1
            };
            let res = (*resolution / 16.0).min((window.1 - window.0) / 64.0);
            let kernel_at = |t: usize, d: usize, sig: &[f64], w: &[f64]| -> C64 {
                let coef: Vec<f64> = sig
                    .iter()
                    .zip(w)
                    .map(|(s, wq)| eval(half(t), *s) * wq)
                    .collect();
                phase_sum(sig, &coef, d as f64 * ds / h) * (ds / (2.0 * PI * h))
            };
            // band from probe midpoints
            let probes: Vec<usize> = (0..17)
                .map(|i| t_range.start + i * (t_range.len().max(1) - 1) / 16)
                .collect();
            let mut dmax = 32usize;
            let (half_band, truncation) = loop {
                let cap = (2 * dmax).min(n - 1);
                let (sig, w) = trapezoid(
                    window.0,
                    window.1,
                    res.min(2.0 * PI * h / (8.0 * cap as f64 * ds)),
                );
                let mut mags = vec![0.0f64; cap + 1];
                for &t in &probes {
                    for (d, m) in mags.iter_mut().enumerate() {
                        if (t + d) % 2 == 0 {
                            *m = m.max(kernel_at(t, d, &sig, &w).norm());
                        }
                    }
                }
                match cut_band(&mags, band_tol, 16) {
                    Some((d, dropped)) => break (d.max(1), dropped),
                    None if cap == n - 1 => break (n - 1, 0.0),
                    None => dmax *= 2,
                }
            };
            let (sig, w) = trapezoid(
                window.0,
                window.1,
                res.min(2.0 * PI * h / (8.0 * half_band as f64 * ds)),
            );
            let j0 = t_range.start.saturating_sub(half_band) / 2;
            let j1 = ((t_range.end + half_band) / 2 + 1).min(n);
            let rows = j0..j1;
            let width = 2 * half_band + 1;
            let mut data = vec![ZERO; rows.len() * width];
            for j in rows.clone() {
                for k in j.saturating_sub(half_band).max(j0)..=j {
                    let t = j + k;
                    if !t_range.contains(&t) {
                        continue;
                    }
                    let v = kernel_at(t, j - k, &sig, &w);
                    data[(j - j0) * width + (k + half_band - j)] = v;
                    if k != j {
                        data[(k - j0) * width + (j + half_band - k)] = v.conj();
                    }
                }
            }
            Ok(QuantizedSymbol {
                n,
                h,
                band_tol,
                half_band,
                truncation,
                rows,
                repr: Repr::Banded { data },
            })
        }
    }
}

fn nonzero_span(v: &[f64]) -> Option<(usize, usize)> {
    let a = v.iter().position(|x| *x != 0.0)?;
    let b = v.iter().rposition(|x| *x != 0.0)?;
    Some((a, b))
}

fn nonzero_range(v: &[f64]) -> Range<usize> {
    match nonzero_span(v) {
        Some((a, b)) => a..b + 1,
        None => 0..0,
    }
}

/// A mode-diagonal cutoff `b(hm) · Op_h^w(a)`.
#[derive(Debug, Clone)]
pub struct CutoffSpec {
    pub symbol: Symbol,
    pub mode: Factor,
}

impl CutoffSpec {
    pub fn spatial(f: Factor) -> Self {
        CutoffSpec {
            symbol: Symbol::spatial(f),
            mode: Factor::One,
        }
    }

    pub fn new(symbol: Symbol, mode: Factor) -> Self {
        CutoffSpec { symbol, mode }
    }
}

/// A [`CutoffSpec`] quantized at one `h`.
#[derive(Debug, Clone)]
pub struct CutoffOperator {
    pub h: f64,
    pub base: QuantizedSymbol,
    pub mode: Factor,
}

impl CutoffOperator {
    /// `b(hm)`.
    pub fn weight(&self, m: i64) -> f64 {
        self.mode.eval(self.h * m as f64)
    }

    pub fn active(&self, m: i64) -> bool {
        self.weight(m) != 0.0 && !self.base.rows().is_empty()
    }

    pub fn apply(&self, m: i64, x: &[C64]) -> Vec<C64> {
        let b = self.weight(m);
        let mut y = self.base.apply(x);
        y.iter_mut().for_each(|v| *v *= b);
        y
    }

    pub fn apply_adjoint(&self, m: i64, x: &[C64]) -> Vec<C64> {
        self.apply(m, x)
    }

    pub fn rows(&self) -> Range<usize> {
        self.base.rows()
    }

    pub fn mode_matrix(&self, m: i64) -> DMatrix<C64> {
        self.base.to_dense() * C64::new(self.weight(m), 0.0)
    }
}

pub fn build_cutoff(
    spec: &CutoffSpec,
    h: f64,
    grid: &Grid1D,
    band_tol: f64,
) -> Result<CutoffOperator> {
    Ok(CutoffOperator {
        h,
        base: quantize_symbol(&spec.symbol, h, grid, band_tol)?,
        mode: spec.mode.clone(),
    })
}
