//! Central finite differences. Used by tests and the verification suite,
//! never on the solver path.

/// Default step for a point `x`.
pub fn default_step(x: f64) -> f64 {
    (1e-5 * x.abs()).max(1e-8)
}

/// Central-difference estimate of the derivative of the given order
/// (1, 2 or 3), all second-order accurate in `h`.
///
/// # Panics
/// If `order` is not 1, 2 or 3.
pub fn fd_derivative<F: Fn(f64) -> f64>(f: F, x: f64, order: u8, h: f64) -> f64 {
    match order {
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        3 => (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h),
        _ => panic!("unsupported derivative order {order}"),
    }
}

/// One-sided (forward) first derivative, second-order accurate. For points
/// sitting on a boundary where only the right neighbourhood is valid.
pub fn fd_forward_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
}
