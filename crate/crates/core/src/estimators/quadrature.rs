use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::QuadratureNonConvergence { a, b });
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureNonConvergence { a, b });
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_integrals() {
        let v = adaptive_simpson(&|y: f64| (-y).exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-11);
        // kinks are what survival functions of bounded laws look like
        let v = adaptive_simpson(&|y: f64| (y - 1.0).abs(), 0.0, 3.0, 1e-10).unwrap();
        assert!((v - 2.5).abs() < 1e-9);
        assert_eq!(adaptive_simpson(&|_| 1.0, 2.0, 2.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn step_survival_integrates() {
        // survival of Uniform(0, 2): 1 - y/2 on [0, 2]
        let v =
            adaptive_simpson(&|y: f64| (1.0 - y / 2.0).clamp(0.0, 1.0), 0.0, 3.0, 1e-9).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_integrand_fails() {
        assert!(adaptive_simpson(&|y: f64| 1.0 / y, 0.0, 1.0, 1e-9).is_err());
    }
}
