//! Per-mode discretizations of `P - λ` with absorbing ends, and banded Weyl
//! quantizations of phase-space symbols.
//!
//! Separating `θ` reduces `h²Δ_g + V - 1` on the mode `e^{imθ}` to the
//! Sturm–Liouville operator `-h² a⁻¹∂_s(a∂_s) + h²m²/a² + V - 1`. Conjugating
//! by `a^{1/2}` turns it into `-h²∂_s² + h²q_a + h²m²/a² + V - 1` on
//! `L²(ds)` with `q_a = a''/(2a) - a'²/(4a²)`, which is discretized by the
//! three-point Laplacian with Dirichlet ends.

mod barrier;
mod grid;
mod operator;
mod symbol;

pub use barrier::{BarrierAudit, BarrierSpec, LowRankBarrier};
pub use grid::Grid1D;
pub use operator::{build_mode_operator, Absorber, ModeOperator, ModeSolver, OperatorFamily};
pub use symbol::{
    build_cutoff, quantize_symbol, CutoffOperator, CutoffSpec, Factor, QuantizedSymbol, Symbol,
    SymbolFn,
};

/// Default relative band truncation tolerance for Weyl kernels.
pub const DEFAULT_BAND_TOL: f64 = 1e-10;
