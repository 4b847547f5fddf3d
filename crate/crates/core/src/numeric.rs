//! Root finding and quadrature shared by the solvers.

/// Absolute tolerance on the argument for every bisection.
pub const BISECT_TOL: f64 = 1e-12;
/// Iteration cap for every bisection.
pub const BISECT_MAX_ITER: usize = 200;
/// Absolute tolerance for adaptive Simpson quadrature.
pub const QUAD_TOL: f64 = 1e-10;

/// Root of a nondecreasing function on `[lo, hi]`.
///
/// Returns `lo` when `f(lo) >= 0` and `hi` when `f(hi) <= 0`, so callers get
/// the clamped root when the bracket does not straddle zero.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    if f(lo) >= 0.0 {
        return lo;
    }
    if f(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECT_TOL || mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of a nonincreasing function on `[lo, hi]`, clamped like [`bisect_increasing`].
pub fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    bisect_increasing(|x| -f(x), lo, hi)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || m <= a || m >= b {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrate over `[a, b]` after splitting at the given interior points.
pub fn integrate_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cuts: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    let mut lo = a;
    for &x in pts.iter().chain(std::iter::once(&b)) {
        total += integrate(&f, lo, x, tol);
        lo = x;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_finds_sqrt_two() {
        let r = bisect_increasing(|x| x * x - 2.0, 0.0, 2.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bisection_clamps_outside_bracket() {
        assert_eq!(bisect_increasing(|x| x + 1.0, 0.0, 1.0), 0.0);
        assert_eq!(bisect_increasing(|x| x - 5.0, 0.0, 1.0), 1.0);
        assert!((bisect_decreasing(|x| 1.0 - x, 0.0, 4.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_matches_closed_forms() {
        let e = integrate(|x| (-x).exp(), 0.0, 30.0, QUAD_TOL);
        assert!((e - (1.0 - (-30f64).exp())).abs() < 1e-9);
        let k = integrate_split(|x| (x - 1.0).max(0.0), 0.0, 3.0, &[1.0], QUAD_TOL);
        assert!((k - 2.0).abs() < 1e-12);
        assert_eq!(integrate(|x| x, 1.0, 1.0, QUAD_TOL), 0.0);
    }
}
