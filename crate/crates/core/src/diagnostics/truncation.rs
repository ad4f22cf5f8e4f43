//! Truncation error of the collision operator on Lipschitz test functions.
//!
//! For `v = (r, 0)` the scanned quantity is
//! `D_n(r) = sum_theta w_theta (1/2pi) ∫ (K - n)_+ [phi(v') - phi(v)] d alpha`,
//! nonzero only on the arc `|alpha| < alpha_n` where the cap binds.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::cross_section::AngularCrossSection;
use crate::geometry::{kernel_weight, post_collision_velocity, Velocity};
use crate::kernel_integrals::{angular_average, geometric_breaks, kink, near_scale, Kink, KernelError};
use crate::quadrature::{integrate, integrate_power_singular, sort_dedup, QuadratureSettings};

use super::fit::{fit_loglog, ExponentFit, FitError};

/// Lipschitz test functions on the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `|v|`.
    Radius,
    /// `v_x`.
    Coordinate,
    /// `exp(-|v - c|^2)`.
    Bump { center: (f64, f64) },
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Radius => "norm",
            Self::Coordinate => "vx",
            Self::Bump { .. } => "bump",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "norm" => Some(Self::Radius),
            "vx" => Some(Self::Coordinate),
            "bump" => Some(Self::Bump { center: (1.0, 0.0) }),
            _ => None,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Radius | Self::Coordinate => 1.0,
            Self::Bump { .. } => (2.0f64).sqrt() * (-0.5f64).exp(),
        }
    }

    pub fn eval(&self, v: Velocity<f64>) -> f64 {
        match *self {
            Self::Radius => v.norm(),
            Self::Coordinate => v.x,
            Self::Bump { center } => (-(v - Velocity::new(center.0, center.1)).norm_sqr()).exp(),
        }
    }

    /// `phi(v') - phi(v)` for `v = (r, 0)` and `v_star = e_{-alpha}`.
    fn increment(&self, r: f64, theta: f64, alpha: f64) -> f64 {
        if let Self::Radius = self {
            // r'^2 - r^2 without cancellation
            let (st, ct) = theta.sin_cos();
            let d = 0.5 * (1.0 - ct) * (1.0 - r * r) - r * st * alpha.sin();
            let rp = (r * r + d).max(0.0).sqrt();
            return d / (rp + r);
        }
        let v = Velocity::new(r, 0.0);
        let vp = post_collision_velocity(v, Velocity::unit(-alpha), theta);
        self.eval(vp) - self.eval(v)
    }
}

/// `D_n(r)` for one test function.
pub fn truncation_defect(
    phi: TestFunction,
    r: f64,
    n: f64,
    beta: &AngularCrossSection<f64>,
    gamma: f64,
    density_nodes: usize,
    q: &QuadratureSettings<f64>,
) -> Result<f64, KernelError> {
    let edge = match kink(r, gamma, n) {
        Kink::Never => return Ok(0.0),
        Kink::Everywhere => PI,
        Kink::At(a) => a,
    };
    let mut breaks = Vec::new();
    geometric_breaks(near_scale(r), &mut breaks);
    breaks.retain(|&x| x < edge);
    let over = |alpha: f64| (kernel_weight(r, alpha, gamma, None) - n).max(0.0);
    let run = |f: &dyn Fn(f64) -> f64, q: &QuadratureSettings<f64>| {
        if r == 1.0 {
            integrate_power_singular(f, 0.0, edge, gamma + 1.0, &breaks, q)
        } else {
            let mut pts = vec![0.0, edge];
            pts.extend(breaks.iter().copied());
            sort_dedup(&mut pts);
            integrate(f, &pts, q)
        }
    };
    // the symmetrized increment cancels to leading order, so tolerances are
    // taken relative to the size of the unsymmetrized integrand
    let scale = run(&|a: f64| over(a) * a, q)?;
    let q = QuadratureSettings {
        abs_tol: q.abs_tol.max(q.rel_tol * scale),
        ..q.clone()
    };
    let mut total = 0.0;
    for (theta, w) in beta.theta_nodes(density_nodes) {
        let f = |a: f64| {
            let k = over(a);
            if k > 0.0 {
                k * (phi.increment(r, theta, a) + phi.increment(r, theta, -a))
            } else {
                0.0
            }
        };
        total += w * run(&f, &q)?;
    }
    Ok(total / (2.0 * PI))
}

/// Pointwise bound `Lambda |phi|_lip n^((2+gamma)/(2 gamma)) h_{gamma/2}(r)`.
pub fn truncation_bound(
    phi: TestFunction,
    r: f64,
    n: f64,
    beta: &AngularCrossSection<f64>,
    gamma: f64,
    q: &QuadratureSettings<f64>,
) -> Result<f64, KernelError> {
    let h = angular_average(r, 0.5 * gamma, q)?;
    Ok(beta.total_mass() * phi.lipschitz() * n.powf((2.0 + gamma) / (2.0 * gamma)) * h)
}

/// Radii clustered at the unit circle: `1 ± 2^-k` for `k = 1..=levels`,
/// the circle itself, and a uniform sweep of `[0, r_max]`.
pub fn default_radii(levels: u32, r_max: f64, uniform: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for k in 1..=levels {
        let d = 0.5f64.powi(k as i32);
        out.push(1.0 - d);
        out.push(1.0 + d);
    }
    out.extend((0..=uniform).map(|i| r_max * i as f64 / uniform as f64));
    sort_dedup(&mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationScan {
    pub phi: TestFunction,
    pub n_list: Vec<f64>,
    pub radii: Vec<f64>,
    /// `values[j][i] = D_{n_j}(r_i)`.
    pub values: Vec<Vec<f64>>,
    pub bounds: Vec<Vec<f64>>,
    /// `sup_r |D_n(r)|` per `n`.
    pub sup: Vec<f64>,
    /// Radius attaining the sup, per `n`.
    pub argmax: Vec<f64>,
    pub fit: Result<ExponentFit, FitError>,
}

impl TruncationScan {
    /// Every scanned `|D_n(r)|` under its bound.
    pub fn bound_holds(&self) -> bool {
        self.values
            .iter()
            .zip(&self.bounds)
            .all(|(vs, bs)| vs.iter().zip(bs).all(|(v, b)| v.abs() <= *b))
    }

    /// `sup_r |D_n|` strictly decreasing along `n_list`.
    pub fn monotone(&self) -> bool {
        self.sup.windows(2).all(|w| w[1] < w[0])
    }
}

/// Scan `D_n(r)` over radii and truncation levels.
pub fn truncation_scan(
    phi: TestFunction,
    radii: &[f64],
    n_list: &[f64],
    beta: &AngularCrossSection<f64>,
    gamma: f64,
    density_nodes: usize,
    q: &QuadratureSettings<f64>,
) -> Result<TruncationScan, KernelError> {
    let cells: Vec<(usize, usize)> = (0..n_list.len())
        .flat_map(|j| (0..radii.len()).map(move |i| (j, i)))
        .collect();
    let computed: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(j, i)| {
            let (r, n) = (radii[i], n_list[j]);
            Ok((
                truncation_defect(phi, r, n, beta, gamma, density_nodes, q)?,
                truncation_bound(phi, r, n, beta, gamma, q)?,
            ))
        })
        .collect::<Result<_, KernelError>>()?;
    let mut values = vec![Vec::with_capacity(radii.len()); n_list.len()];
    let mut bounds = values.clone();
    for (&(j, _), &(v, b)) in cells.iter().zip(&computed) {
        values[j].push(v);
        bounds[j].push(b);
    }
    let (sup, argmax): (Vec<f64>, Vec<f64>) = values
        .iter()
        .map(|vs| {
            vs.iter()
                .zip(radii)
                .fold((0.0f64, f64::NAN), |(m, at), (v, &r)| if v.abs() > m { (v.abs(), r) } else { (m, at) })
        })
        .unzip();
    let fit = fit_loglog(&format!("truncation_{}", phi.name()), n_list, &sup);
    Ok(TruncationScan {
        phi,
        n_list: n_list.to_vec(),
        radii: radii.to_vec(),
        values,
        bounds,
        sup,
        argmax,
        fit,
    })
}
