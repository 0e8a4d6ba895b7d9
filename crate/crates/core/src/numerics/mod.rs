//! Generic numerical utilities: bracketed root finding, adaptive quadrature
//! and finite differences.

mod diff;
mod quad;
mod root;

pub use diff::{default_step, fd_derivative, fd_forward_derivative};
pub use quad::{integrate, integrate_semi_infinite, QuadratureResult};
pub use root::{find_root, find_root_detailed, Bracket, RootError, RootResult};

pub mod defaults {
    pub use super::quad::DEFAULT_RTOL as QUAD_RTOL;
    pub use super::root::{DEFAULT_MAX_ITER as ROOT_MAX_ITER, DEFAULT_RTOL as ROOT_RTOL};
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}
