//! Adaptive Simpson quadrature with Richardson correction.

const MAX_DEPTH: u32 = 50;

/// `∫_a^b f` to within `tol` per panel (absolute), refining until the
/// Simpson estimates of a panel and its halves agree.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (m - a).abs() <= f64::EPSILON * m.abs() {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` for a positive integrand, refining each panel until its Simpson
/// correction is below `rel` times the panel's own value. Errors then add up to
/// about `rel` times the whole integral regardless of how the mass is spread.
pub fn adaptive_simpson_rel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fm, fb);
    recurse_rel(f, a, b, fa, fm, fb, whole, rel, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse_rel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, rel: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * rel * (left + right).abs() || (m - a).abs() <= f64::EPSILON * m.abs() {
        return left + right + delta / 15.0;
    }
    recurse_rel(f, a, m, fa, flm, fm, left, rel, depth - 1) + recurse_rel(f, m, b, fm, frm, fb, right, rel, depth - 1)
}

/// Cumulative trapezoid rule over samples `(t_i, y_i)`.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..t.len() {
        acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_smooth_functions() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 3.0, 1e-13);
        assert!((v - (3f64.exp() - 1.0)).abs() < 1e-11);
        let v = adaptive_simpson(&|x: f64| 1.0 / x, 1.0, 1e6, 1e-12);
        assert!((v - 1e6f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn relative_criterion_on_wide_ranges() {
        let v = adaptive_simpson_rel(&|s: f64| 1.0 / (s * s.ln()), 2.0, 1e8, 1e-13);
        let exact = 1e8f64.ln().ln() - 2f64.ln().ln();
        assert!((v - exact).abs() < 1e-11 * exact, "{v} vs {exact}");
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let a = adaptive_simpson(&|x: f64| x.sin(), 0.0, 2.0, 1e-12);
        let b = adaptive_simpson(&|x: f64| x.sin(), 2.0, 0.0, 1e-12);
        assert!((a + b).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_on_linear_data_is_exact() {
        let t = [0.0, 0.5, 2.0];
        let y = [1.0, 2.0, 5.0];
        assert_eq!(cumulative_trapezoid(&t, &y), vec![0.0, 0.75, 6.0]);
    }
}
