//! Window functionals around the circle and the atom balance inequality.
//!
//! `A_eps(r)` is the rate, for `r` inside the window `|r^2 - 1| <= eps`, of
//! jumps that leave the window; `B_eps(r)` is the rate, for `r` outside, of
//! jumps that land inside. Both use the untruncated kernel.

use std::f64::consts::PI;

use crate::cross_section::AngularCrossSection;
use crate::geometry::kernel_weight;
use crate::quadrature::{gauss_legendre, integrate, sort_dedup, QuadratureError, QuadratureSettings};
use crate::radial_measure::RadialMeasure;
use crate::solver_det::Trajectory;

/// `r'^2 - 1 = ((1 + cos theta)(r^2 - 1) - 2 r sin theta sin alpha) / 2`.
fn shift(r: f64, theta: f64, alpha: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    0.5 * ((1.0 + ct) * (r * r - 1.0) - 2.0 * r * st * alpha.sin())
}

/// Angles in `(-pi, pi]` where `|r'^2 - 1| = eps`.
fn window_crossings(r: f64, theta: f64, eps: f64) -> Vec<f64> {
    let (st, ct) = theta.sin_cos();
    let mut out = Vec::new();
    if r == 0.0 || st == 0.0 {
        return out;
    }
    let c = (1.0 + ct) * (r * r - 1.0);
    for s in [(c - 2.0 * eps) / (2.0 * r * st), (c + 2.0 * eps) / (2.0 * r * st)] {
        if s.abs() <= 1.0 {
            let a = s.asin();
            let b = PI - a;
            out.push(a);
            out.push(if b > PI { b - 2.0 * PI } else { b });
        }
    }
    out
}

/// `(1/2pi) ∫ 1{landing(alpha)} K(r, alpha) d alpha` for one `theta`.
fn theta_integral<F: Fn(f64) -> bool>(
    r: f64,
    theta: f64,
    eps: f64,
    gamma: f64,
    landing: F,
    q: &QuadratureSettings<f64>,
) -> Result<f64, QuadratureError> {
    let mut breaks = vec![-PI, 0.0, PI];
    breaks.extend(window_crossings(r, theta, eps));
    let scale = (r - 1.0).abs();
    if scale > 0.0 {
        let mut x = scale;
        while x < PI {
            breaks.push(x);
            breaks.push(-x);
            x *= 4.0;
        }
    }
    sort_dedup(&mut breaks);
    let k = |a: f64| kernel_weight(r, a, gamma, None);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] || !landing(0.5 * (w[0] + w[1])) {
            continue;
        }
        // geometric refinement toward a crossing keeps steep pieces cheap
        let mut pts = vec![w[0], w[1]];
        let len = w[1] - w[0];
        let mut h = len * 0.25;
        while h > len * 1e-6 {
            pts.push(w[0] + h);
            pts.push(w[1] - h);
            h *= 0.25;
        }
        sort_dedup(&mut pts);
        total += integrate(k, &pts, q)?;
    }
    Ok(total / (2.0 * PI))
}

/// `A_eps(r)`: out-of-window rate from inside the window.
pub fn a_eps_pointwise(
    r: f64,
    eps: f64,
    beta: &AngularCrossSection<f64>,
    gamma: f64,
    density_nodes: usize,
    q: &QuadratureSettings<f64>,
) -> Result<f64, QuadratureError> {
    if (r * r - 1.0).abs() > eps {
        return Ok(0.0);
    }
    beta.theta_nodes(density_nodes)
        .into_iter()
        .map(|(theta, w)| {
            theta_integral(r, theta, eps, gamma, |a| shift(r, theta, a).abs() > eps, q).map(|v| w * v)
        })
        .sum()
}

/// `B_eps(r)`: into-window rate from outside the window.
pub fn b_eps_pointwise(
    r: f64,
    eps: f64,
    beta: &AngularCrossSection<f64>,
    gamma: f64,
    density_nodes: usize,
    q: &QuadratureSettings<f64>,
) -> Result<f64, QuadratureError> {
    if (r * r - 1.0).abs() <= eps {
        return Ok(0.0);
    }
    beta.theta_nodes(density_nodes)
        .into_iter()
        .map(|(theta, w)| {
            theta_integral(r, theta, eps, gamma, |a| shift(r, theta, a).abs() <= eps, q).map(|v| w * v)
        })
        .sum()
}

/// Window edges in radius, `sqrt(1 - eps)` (if real) and `sqrt(1 + eps)`.
fn window_edges(eps: f64) -> Vec<f64> {
    let mut e = vec![(1.0 + eps).sqrt()];
    if eps < 1.0 {
        e.push((1.0 - eps).sqrt());
    }
    e
}

/// `∫ lambda(dr) f(r)` with `f` evaluated at the atoms and integrated by
/// 4-point Gauss-Legendre over each cell, split at `splits`. Overflow mass
/// has no position and is left out.
pub fn integrate_against<F: FnMut(f64) -> Result<f64, QuadratureError>>(
    lambda: &RadialMeasure<f64>,
    splits: &[f64],
    mut f: F,
) -> Result<f64, QuadratureError> {
    let rule = gauss_legendre::<f64>(4);
    let mut total = 0.0;
    if lambda.atom_at_1 != 0.0 {
        total += lambda.atom_at_1 * f(1.0)?;
    }
    if lambda.atom_at_0 != 0.0 {
        total += lambda.atom_at_0 * f(0.0)?;
    }
    let grid = lambda.grid();
    for (i, &m) in lambda.cells.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let (a, b) = grid.cell(i);
        let mut pts = vec![a, b];
        pts.extend(splits.iter().copied().filter(|&s| s > a && s < b));
        sort_dedup(&mut pts);
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for &(x, wx) in &rule {
                acc += wx * half * f(mid + half * x)?;
            }
        }
        total += m / (b - a) * acc;
    }
    Ok(total)
}

/// `∫ lambda(dr) A_eps(r)`.
pub fn a_eps_functional(
    lambda: &RadialMeasure<f64>,
    eps: f64,
    beta: &AngularCrossSection<f64>,
    gamma: f64,
    density_nodes: usize,
    q: &QuadratureSettings<f64>,
) -> Result<f64, QuadratureError> {
    integrate_against(lambda, &window_edges(eps), |r| {
        a_eps_pointwise(r, eps, beta, gamma, density_nodes, q)
    })
}

/// `∫ lambda(dr) B_eps(r)`.
pub fn b_eps_functional(
    lambda: &RadialMeasure<f64>,
    eps: f64,
    beta: &AngularCrossSection<f64>,
    gamma: f64,
    density_nodes: usize,
    q: &QuadratureSettings<f64>,
) -> Result<f64, QuadratureError> {
    integrate_against(lambda, &window_edges(eps), |r| {
        b_eps_pointwise(r, eps, beta, gamma, density_nodes, q)
    })
}

/// Far-zone bound `2 beta([theta0, pi/2]) |r - 1|^gamma` on `B_eps`.
pub fn far_zone_bound(r: f64, beta: &AngularCrossSection<f64>, gamma: f64) -> f64 {
    beta.total_mass() * (r - 1.0).abs().powf(gamma)
}

/// `∫ mu(dr) |r^2 - 1|^gamma 1{|r^2 - 1| > eps}` with exact integration of
/// the weight across each cell.
pub fn off_window_moment(
    mu: &RadialMeasure<f64>,
    eps: f64,
    gamma: f64,
    q: &QuadratureSettings<f64>,
) -> Result<f64, QuadratureError> {
    let weight = |r: f64| {
        let d = (r * r - 1.0).abs();
        if d > eps {
            d.powf(gamma)
        } else {
            0.0
        }
    };
    let mut total = mu.atom_at_0 * weight(0.0);
    let edges = window_edges(eps);
    let grid = mu.grid();
    for (i, &m) in mu.cells.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let (a, b) = grid.cell(i);
        let mut pts = vec![a, b];
        pts.extend(edges.iter().copied().filter(|&s| s > a && s < b));
        sort_dedup(&mut pts);
        let mut acc = 0.0;
        for w in pts.windows(2) {
            if weight(0.5 * (w[0] + w[1])) > 0.0 {
                acc += integrate(
                    |r: f64| (r * r - 1.0).abs().powf(gamma),
                    &[w[0], w[1]],
                    q,
                )?;
            }
        }
        total += m / (b - a) * acc;
    }
    Ok(total)
}

/// One row of the atom balance table.
#[derive(Debug, Clone, PartialEq)]
pub struct Ob1Row {
    pub eps: f64,
    /// `eps^(|gamma| - 1)`.
    pub first_term: f64,
    /// `∫_0^T ds ∫ lambda_s(dr) |r^2-1|^gamma 1{|r^2-1| > eps}`.
    pub off_window: f64,
    /// Smallest `kappa` for which the inequality holds at this `eps`.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ob1Section {
    /// `∫_0^T lambda_s({1}) ds`.
    pub lhs: f64,
    /// The same by the trapezoid rule on the recorded atom series.
    pub lhs_trapezoid: f64,
    pub rows: Vec<Ob1Row>,
    /// `max kappa / min kappa` over the grid.
    pub spread: f64,
    /// Widest contiguous `eps` range whose spread is at most 3.
    pub stable_range: (f64, f64),
}

impl Ob1Section {
    pub fn stable(&self) -> bool {
        self.spread <= 3.0
    }
}

/// Evaluate the atom balance inequality on an `eps` grid for a trajectory.
pub fn ob1_report(
    traj: &Trajectory<f64>,
    eps_grid: &[f64],
    gamma: f64,
    q: &QuadratureSettings<f64>,
) -> Result<Ob1Section, QuadratureError> {
    let lhs = traj.time_integral.atom_at_1;
    let g = gamma.abs();
    let rows: Vec<Ob1Row> = eps_grid
        .iter()
        .map(|&eps| {
            let first_term = eps.powf(g - 1.0);
            let off_window = off_window_moment(&traj.time_integral, eps, gamma, q)?;
            let kappa = lhs / (first_term + eps.powf(g) * off_window);
            Ok(Ob1Row {
                eps,
                first_term,
                off_window,
                kappa,
            })
        })
        .collect::<Result<_, QuadratureError>>()?;
    let spread_of = |rs: &[Ob1Row]| {
        let (lo, hi) = rs
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.kappa), b.max(r.kappa)));
        if rs.is_empty() {
            1.0
        } else {
            hi / lo
        }
    };
    let spread = spread_of(&rows);
    let mut best = (0usize, 0usize);
    for i in 0..rows.len() {
        for j in i..rows.len() {
            if spread_of(&rows[i..=j]) <= 3.0 && j - i > best.1 - best.0 {
                best = (i, j);
            }
        }
    }
    let stable_range = if rows.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (rows[best.0].eps, rows[best.1].eps)
    };
    Ok(Ob1Section {
        lhs,
        lhs_trapezoid: traj.atom_time_integral(),
        rows,
        spread,
        stable_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_measure::{GridSpec, RadialGrid};
    use crate::solver_det::Snapshot;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;
    use std::sync::Arc;

    fn beta() -> AngularCrossSection<f64> {
        AngularCrossSection::symmetric_atom(FRAC_PI_4, 1.0).unwrap()
    }

    fn grid() -> Arc<RadialGrid<f64>> {
        Arc::new(RadialGrid::build(&GridSpec::default()).unwrap())
    }

    #[test]
    fn crossings_hit_the_window_edge() {
        for &(r, eps) in &[(1.0, 1e-3), (1.2, 1e-2), (0.9, 0.05)] {
            let xs = window_crossings(r, FRAC_PI_4, eps);
            assert!(!xs.is_empty());
            for a in xs {
                assert_relative_eq!(shift(r, FRAC_PI_4, a).abs(), eps, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn leading_indicators() {
        let q = QuadratureSettings::default();
        let g = grid();
        let mut two = RadialMeasure::zero(g.clone());
        two.deposit(2.0, 1.0).unwrap();
        assert_eq!(a_eps_functional(&two, 0.5, &beta(), -1.5, 32, &q).unwrap(), 0.0);
        let one = RadialMeasure::circle(g);
        assert_eq!(b_eps_functional(&one, 1e-3, &beta(), -1.5, 32, &q).unwrap(), 0.0);
    }

    #[test]
    fn a_eps_on_circle_matches_closed_form_region() {
        // at r = 1 the exit region is |sin alpha| > eps / sin(theta)
        let q = QuadratureSettings::default();
        let eps = 1e-2;
        let v = a_eps_pointwise(1.0, eps, &beta(), -1.5, 32, &q).unwrap();
        let s = (eps / FRAC_PI_4.sin()).asin();
        let k = |a: f64| (2.0 - 2.0 * a.cos()).powf(-0.75);
        let half = integrate(k, &[s, 0.5, PI / 2.0, PI - s], &q).unwrap();
        assert_relative_eq!(v, 2.0 * 2.0 * half / (2.0 * PI), max_relative = 1e-8);
    }

    #[test]
    fn ob1_lhs_closed_form() {
        let g = grid();
        let rate = 3.0;
        let t_end = 0.5;
        let steps = 2000;
        let series: Vec<(f64, f64)> = (0..=steps)
            .map(|k| {
                let t = t_end * k as f64 / steps as f64;
                (t, (-rate * t).exp())
            })
            .collect();
        let mut mu = RadialMeasure::zero(g.clone());
        mu.atom_at_1 = (1.0 - (-rate * t_end).exp()) / rate;
        mu.cells[100] = t_end - mu.atom_at_1;
        let traj = Trajectory {
            snapshots: vec![Snapshot {
                t: t_end,
                measure: RadialMeasure::circle(g),
                survivors: None,
            }],
            atom_series: series,
            time_integral: mu,
            horizon: t_end,
        };
        let rep = ob1_report(&traj, &[1e-3, 1e-2], -1.5, &QuadratureSettings::default()).unwrap();
        assert_relative_eq!(rep.lhs, (1.0 - (-1.5f64).exp()) / 3.0, max_relative = 1e-14);
        assert_relative_eq!(rep.lhs_trapezoid, rep.lhs, max_relative = 1e-6);
        assert_relative_eq!(rep.rows[0].first_term, 1e-3f64.powf(0.5), max_relative = 1e-14);
        assert!(rep.rows.iter().all(|r| r.kappa > 0.0));
    }
}
