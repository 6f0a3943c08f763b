//! Smooth one-dimensional building blocks.
//!
//! Everything here is assembled from `ψ(x) = e^{-1/x}` (x > 0), which makes
//! square roots of the resulting profiles smooth as well, or from
//! error-function edges whose Fourier transforms decay like Gaussians.

#[allow(unused_imports)]
use num_traits::Float;

/// `ψ(x) = e^{-1/x}` for `x > 0`, zero otherwise.
#[inline]
pub fn psi(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Derivative of [`psi`].
#[inline]
pub fn psi_d(x: f64) -> f64 {
    if x > 0.0 {
        psi(x) / (x * x)
    } else {
        0.0
    }
}

/// Smooth step `ψ(x) / (ψ(x) + ψ(1 - x))`: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
#[inline]
pub fn step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = psi(x);
        let b = psi(1.0 - x);
        a / (a + b)
    }
}

/// Derivative of [`step`].
#[inline]
pub fn step_d(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        let a = psi(x);
        let b = psi(1.0 - x);
        let da = psi_d(x);
        let db = -psi_d(1.0 - x);
        (da * b - a * db) / ((a + b) * (a + b))
    }
}

/// Smooth transition from 0 at `x = lo` to 1 at `x = hi`.
#[inline]
pub fn ramp(x: f64, lo: f64, hi: f64) -> f64 {
    step((x - lo) / (hi - lo))
}

/// Derivative of [`ramp`] in `x`.
#[inline]
pub fn ramp_d(x: f64, lo: f64, hi: f64) -> f64 {
    step_d((x - lo) / (hi - lo)) / (hi - lo)
}

/// How a [`Window`] falls off outside its plateau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Edge {
    /// `ψ`-based step: exactly 0 outside the ramps, exactly 1 on the plateau.
    Psi,
    /// Complementary-error-function edge, 1 on the plateau and 0 outside the
    /// ramps up to a tail `erfc(z)/2`; its Fourier transform decays like a
    /// Gaussian, which keeps Weyl kernels narrow.
    Erf { z: f64 },
}

/// A plateau `[lo, hi]` with smooth ramps of width `ramp_lo` and `ramp_hi`.
///
/// With `even` set the window is evaluated at `|x|`; with `complement` set
/// the value is `1 - w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub ramp_lo: f64,
    pub ramp_hi: f64,
    pub edge: Edge,
    pub even: bool,
    pub complement: bool,
}

impl Window {
    pub fn psi(lo: f64, hi: f64, ramp: f64) -> Self {
        Window {
            lo,
            hi,
            ramp_lo: ramp,
            ramp_hi: ramp,
            edge: Edge::Psi,
            even: false,
            complement: false,
        }
    }

    /// Even `ψ` window: 1 for `|x| ≤ inner`, 0 for `|x| ≥ outer`.
    pub fn radial(inner: f64, outer: f64) -> Self {
        Window {
            lo: -inner,
            hi: inner,
            ramp_lo: outer - inner,
            ramp_hi: outer - inner,
            edge: Edge::Psi,
            even: true,
            complement: false,
        }
    }

    pub fn erf(lo: f64, hi: f64, ramp_lo: f64, ramp_hi: f64, tail: f64) -> Self {
        Window {
            lo,
            hi,
            ramp_lo,
            ramp_hi,
            edge: Edge::Erf {
                z: erf_edge_scale(tail),
            },
            even: false,
            complement: false,
        }
    }

    pub fn complemented(mut self) -> Self {
        self.complement = !self.complement;
        self
    }

    /// Smallest closed interval outside of which the window vanishes (up to
    /// the erf tail). `None` for complemented windows.
    pub fn support(&self) -> Option<(f64, f64)> {
        if self.complement {
            return None;
        }
        if self.even {
            let r = self.hi.abs().max(self.lo.abs()) + self.ramp_hi.max(self.ramp_lo);
            Some((-r, r))
        } else {
            Some((self.lo - self.ramp_lo, self.hi + self.ramp_hi))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = if self.even { x.abs() } else { x };
        let w = match self.edge {
            Edge::Psi => {
                let up = if self.ramp_lo > 0.0 {
                    ramp(x, self.lo - self.ramp_lo, self.lo)
                } else if x >= self.lo {
                    1.0
                } else {
                    0.0
                };
                let down = if self.ramp_hi > 0.0 {
                    1.0 - ramp(x, self.hi, self.hi + self.ramp_hi)
                } else if x <= self.hi {
                    1.0
                } else {
                    0.0
                };
                up * down
            }
            Edge::Erf { z } => {
                let up = 0.5
                    * libm::erfc(-(x - (self.lo - 0.5 * self.ramp_lo)) * 2.0 * z / self.ramp_lo);
                let down =
                    0.5 * libm::erfc((x - (self.hi + 0.5 * self.ramp_hi)) * 2.0 * z / self.ramp_hi);
                up * down
            }
        };
        if self.complement {
            1.0 - w
        } else {
            w
        }
    }

    /// Derivative in `x`.
    pub fn deriv(&self, x: f64) -> f64 {
        let (y, sign) = if self.even {
            (x.abs(), if x < 0.0 { -1.0 } else { 1.0 })
        } else {
            (x, 1.0)
        };
        let d = match self.edge {
            Edge::Psi => {
                let (up, dup) = if self.ramp_lo > 0.0 {
                    (
                        ramp(y, self.lo - self.ramp_lo, self.lo),
                        ramp_d(y, self.lo - self.ramp_lo, self.lo),
                    )
                } else {
                    (if y >= self.lo { 1.0 } else { 0.0 }, 0.0)
                };
                let (down, ddown) = if self.ramp_hi > 0.0 {
                    (
                        1.0 - ramp(y, self.hi, self.hi + self.ramp_hi),
                        -ramp_d(y, self.hi, self.hi + self.ramp_hi),
                    )
                } else {
                    (if y <= self.hi { 1.0 } else { 0.0 }, 0.0)
                };
                dup * down + up * ddown
            }
            Edge::Erf { z } => {
                let kl = 2.0 * z / self.ramp_lo;
                let kh = 2.0 * z / self.ramp_hi;
                let ul = (y - (self.lo - 0.5 * self.ramp_lo)) * kl;
                let uh = (y - (self.hi + 0.5 * self.ramp_hi)) * kh;
                let up = 0.5 * libm::erfc(-ul);
                let down = 0.5 * libm::erfc(uh);
                let g = 1.0 / core::f64::consts::PI.sqrt();
                let dup = g * (-ul * ul).exp() * kl;
                let ddown = -g * (-uh * uh).exp() * kh;
                dup * down + up * ddown
            }
        };
        let d = d * sign;
        if self.complement {
            -d
        } else {
            d
        }
    }
}

/// The `z` with `erfc(z) / 2 = tail`.
pub fn erf_edge_scale(tail: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * libm::erfc(mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_limits_and_symmetry() {
        assert_eq!(step(-0.1), 0.0);
        assert_eq!(step(1.3), 1.0);
        assert!((step(0.5) - 0.5).abs() < 1e-15);
        for i in 1..20 {
            let x = i as f64 / 20.0;
            assert!((step(x) + step(1.0 - x) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let w = Window::psi(-1.0, 0.5, 0.7);
        let e = Window::erf(-1.1, 0.0, 0.4, 0.8, 1e-8);
        let r = Window::radial(0.3, 0.9).complemented();
        let hstep = 1e-6;
        for i in 0..200 {
            let x = -2.5 + 4.0 * i as f64 / 199.0;
            for win in [&w, &e, &r] {
                let fd = (win.eval(x + hstep) - win.eval(x - hstep)) / (2.0 * hstep);
                assert!(
                    (fd - win.deriv(x)).abs() < 1e-6,
                    "x={x} fd={fd} d={}",
                    win.deriv(x)
                );
            }
        }
        let fd = (step(0.3 + hstep) - step(0.3 - hstep)) / (2.0 * hstep);
        assert!((fd - step_d(0.3)).abs() < 1e-8);
    }

    #[test]
    fn erf_window_plateau_and_tail() {
        let e = Window::erf(-1.0, 0.0, 0.4, 0.8, 1e-8);
        assert!((e.eval(-0.5) - 1.0).abs() < 2e-8);
        assert!((e.eval(0.0) - 1.0).abs() < 2e-8);
        assert!(e.eval(0.8) < 2e-8);
        assert!(e.eval(-1.4) < 2e-8);
    }
}
