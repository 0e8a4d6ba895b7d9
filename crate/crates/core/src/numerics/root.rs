//! Bracketed scalar root finding.
//!
//! Brent's method: inverse quadratic interpolation and secant steps, with a
//! bisection fallback whenever an interpolated step would not shrink the
//! bracket fast enough. The returned point always lies inside the initial
//! bracket.

use thiserror::Error;

/// Default relative tolerance on the bracket width.
pub const DEFAULT_RTOL: f64 = 1e-10;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder exceeded {max_iter} iterations (bracket width {width})")]
    MaxIterExceeded { max_iter: usize, width: f64 },
    #[error("invalid bracket [{lo}, {hi}]")]
    InvalidBracket { lo: f64, hi: f64 },
}

/// An interval known to contain a sign change of some function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    /// Evaluates `f` at both ends and checks the sign condition.
    pub fn new<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> Result<Self, RootError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(RootError::InvalidBracket { lo, hi });
        }
        let f_lo = f(lo);
        let f_hi = f(hi);
        Self::from_values(lo, hi, f_lo, f_hi)
    }

    pub fn from_values(lo: f64, hi: f64, f_lo: f64, f_hi: f64) -> Result<Self, RootError> {
        if !(lo < hi) {
            return Err(RootError::InvalidBracket { lo, hi });
        }
        if f_lo.is_nan() || f_hi.is_nan() || f_lo * f_hi > 0.0 {
            return Err(RootError::NoSignChange { lo, hi, f_lo, f_hi });
        }
        Ok(Self { lo, hi, f_lo, f_hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Outcome of a successful root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootResult {
    pub root: f64,
    pub f_root: f64,
    pub iterations: usize,
    pub bracket_width: f64,
}

/// Finds a root of `f` inside `bracket`.
///
/// Terminates once the enclosing interval is narrower than `rtol * |x|`
/// (with a tiny absolute floor so roots at zero are reachable) or when an
/// exact zero is hit.
pub fn find_root<F: FnMut(f64) -> f64>(
    f: F,
    bracket: Bracket,
    rtol: f64,
    max_iter: usize,
) -> Result<f64, RootError> {
    find_root_detailed(f, bracket, rtol, max_iter).map(|r| r.root)
}

pub fn find_root_detailed<F: FnMut(f64) -> f64>(
    mut f: F,
    bracket: Bracket,
    rtol: f64,
    max_iter: usize,
) -> Result<RootResult, RootError> {
    let Bracket { lo, hi, f_lo, f_hi } = bracket;
    if f_lo == 0.0 {
        return Ok(RootResult { root: lo, f_root: 0.0, iterations: 0, bracket_width: 0.0 });
    }
    if f_hi == 0.0 {
        return Ok(RootResult { root: hi, f_root: 0.0, iterations: 0, bracket_width: 0.0 });
    }

    // b is the best estimate, a the previous one, c the counterpoint so that
    // [b, c] always brackets the root.
    let (mut a, mut b, mut c) = (lo, hi, hi);
    let (mut fa, mut fb, mut fc) = (f_lo, f_hi, f_hi);
    let mut d = b - a;
    let mut e = d;
    let atol = 4.0 * f64::MIN_POSITIVE;

    for iter in 0..max_iter {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * (rtol * b.abs()).max(atol);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(RootResult {
                root: b.clamp(lo, hi),
                f_root: fb,
                iterations: iter,
                bracket_width: (c - b).abs(),
            });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                // secant
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                // inverse quadratic interpolation
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(RootError::MaxIterExceeded { max_iter, width: (c - b).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_two() {
        let f = |x: f64| x * x - 2.0;
        let b = Bracket::new(f, 1.0, 2.0).unwrap();
        let x = find_root(f, b, 1e-12, 100).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn odd_function_root_at_zero() {
        let f = |x: f64| x;
        let b = Bracket::new(f, -1.0, 1.0).unwrap();
        let x = find_root(f, b, 1e-12, 100).unwrap();
        assert!(x.abs() < 1e-12);
    }

    #[test]
    fn asymmetric_root_at_zero() {
        let f = |x: f64| x * (1.0 + x * x);
        let b = Bracket::new(f, -0.3, 1.7).unwrap();
        let x = find_root(f, b, 1e-12, 200).unwrap();
        assert!(x.abs() < 1e-200, "{x}");
    }

    #[test]
    fn no_sign_change() {
        let err = Bracket::new(|x| x * x + 1.0, -1.0, 1.0).unwrap_err();
        assert!(matches!(err, RootError::NoSignChange { .. }));
    }

    #[test]
    fn max_iter_is_reported() {
        let f = |x: f64| x.powi(3) - 0.123;
        let b = Bracket::new(f, 0.0, 10.0).unwrap();
        let err = find_root(f, b, 1e-15, 2).unwrap_err();
        assert!(matches!(err, RootError::MaxIterExceeded { max_iter: 2, .. }));
    }

    #[test]
    fn steep_monotone_function() {
        // Mimics the free-boundary equation near zero: huge negative values
        // close to the left end.
        let f = |x: f64| 1.0 - x.powf(-0.3) * 0.5;
        let b = Bracket::new(f, 1e-12, 10.0).unwrap();
        let r = find_root_detailed(f, b, 1e-12, 200).unwrap();
        let exact = 0.5f64.powf(1.0 / 0.3);
        assert!((r.root - exact).abs() <= 1e-11 * exact);
        assert!(r.iterations < 100);
    }

    #[test]
    fn stays_inside_bracket() {
        for k in 1..50 {
            let shift = k as f64 * 0.37;
            let f = move |x: f64| (x - shift).tanh();
            let b = Bracket::new(f, shift - 1.0, shift + 3.0).unwrap();
            let x = find_root(f, b, 1e-10, 200).unwrap();
            assert!(x >= b.lo && x <= b.hi);
            assert!((x - shift).abs() < 1e-9 * shift.max(1.0));
        }
    }
}
