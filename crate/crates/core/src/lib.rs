//! Numerical laboratory for microlocal resolvent estimates on surfaces of
//! revolution `ds² + a(s)² dθ²`.
//!
//! The crate is `no_std` with `alloc`. Everything that touches files, threads
//! or the command line lives in the `resolab` companion crate.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod dynamics;
pub mod error;
pub mod escape;
pub mod exec;
pub mod geometry;
pub mod gluing;
pub mod lab;
pub mod linalg;
pub mod quantize;
pub mod smooth;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
