//! Slow, independent reference values for the `lbsoft` test suites.
//!
//! Everything here uses double-exponential (tanh-sinh) quadrature with
//! explicit interval splitting, and shares no code with the library.

use std::f64::consts::{FRAC_PI_2, PI};

/// `∫_a^b f` by tanh-sinh quadrature; tolerates integrable endpoint
/// singularities. `f` receives `(x, x - a, b - x)` so endpoint distances
/// keep full precision.
pub fn tanh_sinh<F: FnMut(f64, f64, f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let t_max = 4.0;
    let mut eval = |t: f64| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        let c = FRAC_PI_2 * t.cosh();
        let v = s.abs();
        // 1 - tanh(v) = 2 / (e^{2v} + 1)
        let comp = 2.0 / ((2.0 * v).exp() + 1.0);
        let w = c / (v.cosh() * v.cosh());
        if comp == 0.0 {
            return 0.0;
        }
        let (da, db) = if s >= 0.0 {
            (half * (2.0 - comp), half * comp)
        } else {
            (half * comp, half * (2.0 - comp))
        };
        let x = if s >= 0.0 { b - db } else { a + da };
        let y = f(x, da, db);
        if y.is_finite() {
            y * w
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = sum * h * half;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            sum += eval(t) + eval(-t);
            k += 2;
        }
        let next = sum * h * half;
        if (next - estimate).abs() <= tol * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Geometric split of `[a, b]` refining toward `a` on the scale `scale`.
pub fn split_toward(a: f64, b: f64, scale: f64) -> Vec<f64> {
    let mut pts = vec![a];
    if scale > 0.0 {
        let mut x = a + scale;
        while x < b {
            pts.push(x);
            x = a + 2.0 * (x - a);
        }
    }
    pts.push(b);
    pts
}

fn piecewise<F: FnMut(f64, f64, f64) -> f64>(mut f: F, pts: &[f64], tol: f64) -> f64 {
    pts.windows(2)
        .map(|w| tanh_sinh(&mut f, w[0], w[1], tol))
        .sum()
}

/// `|v - e_alpha|^2` for `|v| = r`, in the cancellation-free form.
pub fn base(r: f64, alpha: f64) -> f64 {
    let s = (0.5 * alpha).sin();
    (r - 1.0) * (r - 1.0) + 4.0 * r * s * s
}

/// `h_delta(r) = (1/pi) ∫_0^pi base^(delta/2)`.
pub fn h(r: f64, delta: f64) -> f64 {
    let scale = (r - 1.0).abs().max(1e-300);
    let pts = split_toward(0.0, PI, scale);
    piecewise(|x, _, _| base(r, x).powf(0.5 * delta), &pts, 1e-13) / PI
}

/// `h_delta(1) = Gamma(1 + delta) / Gamma(1 + delta/2)^2`, `delta > -1`.
pub fn h_at_one(delta: f64) -> f64 {
    let g = statrs::function::gamma::gamma;
    g(1.0 + delta) / (g(1.0 + 0.5 * delta) * g(1.0 + 0.5 * delta))
}

/// `(1/2pi) ∫_{lo}^{hi} min(K(r, alpha), n) d alpha` for `0 <= lo < hi <= pi`.
pub fn truncated_kernel_integral(r: f64, gamma: f64, n: f64, lo: f64, hi: f64) -> f64 {
    let k = |x: f64| base(r, x).powf(0.5 * gamma).min(n);
    // locate the cap crossing by bisection on [0, pi]
    let mut pts = vec![lo, hi];
    if k(PI) < n && base(r, 0.0).powf(0.5 * gamma) > n {
        let (mut a, mut b) = (0.0, PI);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if base(r, m).powf(0.5 * gamma) > n {
                a = m;
            } else {
                b = m;
            }
        }
        if a > lo && a < hi {
            pts.push(a);
            let mut x = 2.0 * a;
            while x < hi {
                pts.push(x);
                x *= 2.0;
            }
        }
    }
    let scale = (r - 1.0).abs();
    if scale > 0.0 {
        let mut x = scale;
        while x < hi {
            if x > lo {
                pts.push(x);
            }
            x *= 2.0;
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    piecewise(|x, _, _| k(x), &pts, 1e-13) / (2.0 * PI)
}

/// `R_n(r) = Lambda (1/2pi) ∫_{-pi}^{pi} min(K, n)`.
pub fn truncated_rate(r: f64, gamma: f64, n: f64, lambda: f64) -> f64 {
    2.0 * lambda * truncated_kernel_integral(r, gamma, n, 0.0, PI)
}

/// `g_gamma(r, rho) = (1/pi) ∫_0^pi (r^2 + rho^2 - 2 r rho cos alpha)^(gamma/2)`.
pub fn two_radius_kernel(r: f64, rho: f64, gamma: f64) -> f64 {
    let d = (r - rho).abs();
    let f = |x: f64| {
        let s = (0.5 * x).sin();
        (d * d + 4.0 * r * rho * s * s).powf(0.5 * gamma)
    };
    let scale = if r * rho > 0.0 { d / (r * rho).sqrt() } else { 0.0 };
    let pts = split_toward(0.0, PI, scale.max(1e-300));
    piecewise(|x, _, _| f(x), &pts, 1e-12) / PI
}

/// `∫_a^b ∫_a^b g_gamma(r, rho) dr drho` by nested double-exponential
/// quadrature with the diagonal singularity at the interval endpoints.
pub fn riesz_square(a: f64, b: f64, gamma: f64, tol: f64) -> f64 {
    let outer = |r: f64, _: f64, _: f64| -> f64 {
        // ∫_a^r g(r, rho) d rho, singular at rho = r
        tanh_sinh(
            |rho, _, to_r| {
                let d = to_r;
                let f = |x: f64| {
                    let s = (0.5 * x).sin();
                    (d * d + 4.0 * r * rho * s * s).powf(0.5 * gamma)
                };
                let scale = d / (r * rho).sqrt();
                piecewise(|x, _, _| f(x), &split_toward(0.0, PI, scale.max(1e-300)), tol) / PI
            },
            a,
            r,
            tol,
        )
    };
    2.0 * tanh_sinh(outer, a, b, tol)
}

/// Cross term `∫_a^b ∫_c^d g_gamma` for disjoint intervals `b <= c`.
pub fn riesz_rectangle(a: f64, b: f64, c: f64, d: f64, gamma: f64, tol: f64) -> f64 {
    tanh_sinh(
        |r, _, _| tanh_sinh(|rho, _, _| two_radius_kernel(r, rho, gamma), c, d, tol),
        a,
        b,
        tol,
    )
}

/// `(1/2pi) ∫ 1{pred(alpha)} K(r, alpha) d alpha` over `(-pi, pi]`,
/// splitting at sign changes of `pred` located by scanning and bisection.
pub fn indicator_kernel_integral<P: Fn(f64) -> f64>(r: f64, gamma: f64, level: P) -> f64 {
    // pred(alpha) <=> level(alpha) > 0
    let scan = 200_000;
    let mut pts = vec![-PI];
    let mut prev = level(-PI);
    for i in 1..=scan {
        let x = -PI + 2.0 * PI * i as f64 / scan as f64;
        let cur = level(x);
        if (cur > 0.0) != (prev > 0.0) {
            let (mut lo, mut hi) = (x - 2.0 * PI / scan as f64, x);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if (level(m) > 0.0) == (prev > 0.0) {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            pts.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    pts.push(PI);
    if !pts.contains(&0.0) {
        pts.push(0.0);
    }
    pts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if level(mid) > 0.0 {
            total += tanh_sinh(|x, _, _| base(r, x).powf(0.5 * gamma), w[0], w[1], 1e-13);
        }
    }
    total / (2.0 * PI)
}

/// `r'^2` for the radial collision map.
pub fn post_radius_sqr(r: f64, theta: f64, alpha: f64) -> f64 {
    0.5 * (1.0 + theta.cos()) * r * r + 0.5 * (1.0 - theta.cos()) - r * theta.sin() * alpha.sin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        let v = tanh_sinh(|_, da, _| da.powf(-0.5), 0.0, 1.0, 1e-14);
        assert!((v - 2.0).abs() < 1e-12);
        let v = tanh_sinh(|x, _, _| x.exp(), -1.0, 2.0, 1e-14);
        assert!((v - (2f64.exp() - (-1f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn h_matches_closed_form_on_circle() {
        for &d in &[-0.75, -0.5, -0.25] {
            assert!((h(1.0, d) / h_at_one(d) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rate_at_origin() {
        assert!((truncated_rate(0.0, -1.5, 5.0, 2.0) - 2.0).abs() < 1e-12);
    }
}
