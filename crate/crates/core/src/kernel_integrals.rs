//! Angular integrals against the kernel `K(r, alpha) = (r^2 + 1 - 2 r cos alpha)^(gamma/2)`.

use rand::Rng;
use rayon::prelude::*;

use crate::geometry::{kernel_base, kernel_weight, ModelParams};
use crate::quadrature::{
    gauss_legendre, integrate, integrate_power_singular, sort_dedup, QuadratureError, QuadratureSettings,
};
use crate::radial_measure::RadialMeasure;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("h_delta diverges at r = {r} for delta = {delta} <= -1")]
    Divergent { r: f64, delta: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Geometric break points `scale * 4^k` in `(0, pi)`: the kernel varies on
/// the scale `|r - 1|` around `alpha = 0`.
pub(crate) fn geometric_breaks<S: Real>(scale: S, out: &mut Vec<S>) {
    if !(scale > S::zero()) {
        return;
    }
    let mut x = scale;
    while x < S::PI() {
        out.push(x);
        x *= S::lit(4.0);
    }
}

pub(crate) fn near_scale<S: Real>(r: S) -> S {
    if r > S::zero() {
        (r - S::one()).abs() / r.sqrt()
    } else {
        S::zero()
    }
}

/// `h_delta(r) = (1/2pi) ∫ |v - e_alpha|^delta d alpha` with `|v| = r`.
pub fn angular_average<S: Real>(r: S, delta: S, q: &QuadratureSettings<S>) -> Result<S, KernelError> {
    if r == S::zero() {
        return Ok(S::one());
    }
    let half = delta * S::lit(0.5);
    let f = |a: S| kernel_base(r, a).powf(half);
    let value = if r == S::one() {
        if delta <= -S::one() {
            return Err(KernelError::Divergent {
                r: 1.0,
                delta: delta.as_f64(),
            });
        }
        integrate_power_singular(f, S::zero(), S::PI(), delta, &[], q)?
    } else {
        let mut breaks = vec![S::zero()];
        geometric_breaks(near_scale(r), &mut breaks);
        breaks.push(S::PI());
        sort_dedup(&mut breaks);
        integrate(f, &breaks, q)?
    };
    Ok(value / S::PI())
}

/// Angle in `[0, pi]` where `K(r, alpha) = n`, if the cap binds on part of
/// but not the whole half-circle.
pub(crate) fn kink<S: Real>(r: S, gamma: S, n: S) -> Kink<S> {
    let b = n.powf(S::lit(2.0) / gamma);
    let d = r - S::one();
    let rem = b - d * d;
    if rem <= S::zero() {
        return Kink::Never;
    }
    let s2 = rem / (S::lit(4.0) * r);
    if s2 >= S::one() {
        return Kink::Everywhere;
    }
    Kink::At(S::lit(2.0) * s2.sqrt().asin())
}

pub(crate) enum Kink<S> {
    Never,
    Everywhere,
    At(S),
}

/// `R_n(r) = Lambda (1/2pi) ∫ min(K(r, alpha), n) d alpha`.
pub fn truncated_rate<S: Real>(
    r: S,
    params: &ModelParams<S>,
    lambda: S,
    q: &QuadratureSettings<S>,
) -> Result<S, KernelError> {
    let n = params.trunc_n;
    if n == S::zero() || lambda == S::zero() {
        return Ok(S::zero());
    }
    if r == S::zero() {
        return Ok(lambda * n.min(S::one()));
    }
    let gamma = params.gamma;
    let k = |a: S| kernel_base(r, a).powf(gamma * S::lit(0.5));
    let (capped, start) = match kink(r, gamma, n) {
        Kink::Everywhere => return Ok(lambda * n),
        Kink::Never => (S::zero(), S::zero()),
        Kink::At(a) => (n * a, a),
    };
    let mut breaks = vec![start];
    geometric_breaks(start, &mut breaks);
    geometric_breaks(near_scale(r), &mut breaks);
    breaks.retain(|&x| x >= start);
    breaks.push(S::PI());
    sort_dedup(&mut breaks);
    let tail = integrate(k, &breaks, q)?;
    Ok(lambda * (capped + tail) / S::PI())
}

/// Dominating density for `alpha ↦ min(K(r, alpha), n)` on `(-pi, pi]`,
/// sampled exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEnvelope<S> {
    r: S,
    gamma: S,
    n: S,
    shape: Shape<S>,
    /// `(1/2pi) ∫ envelope`.
    mass: S,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape<S> {
    /// Constant `min(n, |r - 1|^gamma)`.
    Flat { level: S },
    /// `min(n, c |alpha|^gamma)` with `c |a_star|^gamma = n`.
    Power { c: S, a_star: S, core: S, tail: S },
}

impl<S: Real> AlphaEnvelope<S> {
    pub fn new(r: S, gamma: S, n: S) -> Self {
        let pi = S::PI();
        let d = (r - S::one()).abs();
        let flat_level = if d == S::zero() { n } else { n.min(d.powf(gamma)) };
        let flat = (Shape::Flat { level: flat_level }, flat_level);
        let best = if r > S::zero() && n > S::zero() {
            let c = (S::lit(0.4) * r).powf(gamma * S::lit(0.5));
            let a_star = (n / c).powf(gamma.recip());
            let (core, tail) = if a_star >= pi {
                (n * pi, S::zero())
            } else {
                (n * a_star, c * power_integral(a_star, pi, gamma))
            };
            let mass = (core + tail) / pi;
            if mass < flat.1 {
                (Shape::Power { c, a_star, core, tail }, mass)
            } else {
                flat
            }
        } else {
            flat
        };
        Self {
            r,
            gamma,
            n,
            shape: best.0,
            mass: best.1,
        }
    }

    /// `(1/2pi) ∫ envelope`; `Lambda * mass` bounds the jump rate at `r`.
    pub fn mass(&self) -> S {
        self.mass
    }

    pub fn density(&self, alpha: S) -> S {
        match self.shape {
            Shape::Flat { level } => level,
            Shape::Power { c, .. } => {
                let a = alpha.abs();
                if a == S::zero() {
                    self.n
                } else {
                    self.n.min(c * a.powf(self.gamma))
                }
            }
        }
    }

    /// Break points of the envelope on `[0, pi]`.
    pub fn breaks(&self) -> Vec<S> {
        match self.shape {
            Shape::Power { a_star, .. } if a_star < S::PI() => vec![S::zero(), a_star, S::PI()],
            _ => vec![S::zero(), S::PI()],
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        let pi = S::PI();
        let magnitude = match self.shape {
            Shape::Flat { .. } => pi * S::lit(rng.gen::<f64>()),
            Shape::Power { a_star, core, tail, .. } => {
                let u = S::lit(rng.gen::<f64>()) * (core + tail);
                if u < core {
                    u / self.n
                } else {
                    let v = (u - core) / tail;
                    let g1 = self.gamma + S::one();
                    let lo = a_star.powf(g1);
                    (lo + v * (pi.powf(g1) - lo)).powf(g1.recip()).min(pi)
                }
            }
        };
        if rng.gen::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }

    /// Probability of accepting a proposal at `alpha`.
    pub fn accept_prob(&self, alpha: S) -> S {
        let target = kernel_weight(self.r, alpha, self.gamma, Some(self.n));
        (target / self.density(alpha)).min(S::one())
    }
}

/// `∫_a^b x^p dx`.
fn power_integral<S: Real>(a: S, b: S, p: S) -> S {
    let p1 = p + S::one();
    if p1.abs() < S::lit(1e-12) {
        (b / a).ln()
    } else {
        (b.powf(p1) - a.powf(p1)) / p1
    }
}

/// Draw `alpha` with density proportional to `min(K(r, alpha), n)`.
pub fn sample_alpha<S: Real, R: Rng + ?Sized>(r: S, params: &ModelParams<S>, rng: &mut R) -> S {
    assert!(params.trunc_n > S::zero(), "sample_alpha needs trunc_n > 0");
    let env = AlphaEnvelope::new(r, params.gamma, params.trunc_n);
    loop {
        let alpha = env.propose(rng);
        if S::lit(rng.gen::<f64>()) < env.accept_prob(alpha) {
            return alpha;
        }
    }
}

/// Hypergeometric series `2F1(a, b; c; z)` for `|z| <= 1/2`.
fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..4000 {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `h_delta(t)` for `0 <= t <= 1` via `2F1(-delta/2, -delta/2; 1; t^2)`;
/// `omt = 1 - t` is passed separately to keep precision near the circle.
/// `delta` must not be an integer.
pub fn angular_average_series(t: f64, omt: f64, delta: f64) -> f64 {
    let a = -0.5 * delta;
    let z = t * t;
    if z <= 0.5 {
        return hyp2f1_series(a, a, 1.0, z);
    }
    let w = omt * (1.0 + t);
    let gamma = statrs::function::gamma::gamma;
    let big_a = gamma(1.0 + delta) / (gamma(1.0 - a) * gamma(1.0 - a));
    let big_b = gamma(-delta - 1.0) / (gamma(a) * gamma(a));
    let first = big_a * hyp2f1_series(a, a, -delta, w);
    if w == 0.0 {
        return if delta > -1.0 { first } else { f64::INFINITY };
    }
    first + w.powf(1.0 + delta) * big_b * hyp2f1_series(1.0 - a, 1.0 - a, 2.0 + delta, w)
}

/// Two-radius kernel `g_gamma(r, rho) = (1/2pi) ∫ (r^2 + rho^2 - 2 r rho cos alpha)^(gamma/2)`.
pub fn two_radius_kernel(r: f64, rho: f64, gamma: f64) -> f64 {
    let (big, small) = if r >= rho { (r, rho) } else { (rho, r) };
    two_radius_kernel_gap(big, big - small, gamma)
}

/// `g_gamma(big, big - gap)` with the gap given exactly.
pub fn two_radius_kernel_gap(big: f64, gap: f64, gamma: f64) -> f64 {
    if big == 0.0 {
        return f64::INFINITY;
    }
    let omt = gap / big;
    big.powf(gamma) * angular_average_series(1.0 - omt, omt, gamma)
}

/// Riesz energy: finite value or the divergence flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Energy<S> {
    Finite(S),
    Infinite,
}

impl<S: Real> Energy<S> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Energy::Finite(_))
    }

    pub fn value(&self) -> S {
        match *self {
            Energy::Finite(v) => v,
            Energy::Infinite => S::infinity(),
        }
    }
}

/// `∫∫_{[a,b]^2} g(r, rho) dr drho`.
fn self_cell(a: f64, b: f64, gamma: f64, q: &QuadratureSettings<f64>) -> Result<f64, QuadratureError> {
    let mut inner_err = None;
    let outer = |r: f64| -> f64 {
        let span = r - a;
        if span <= 0.0 {
            return 0.0;
        }
        match integrate_power_singular(|d| two_radius_kernel_gap(r, d, gamma), 0.0, span, gamma + 1.0, &[], q) {
            Ok(v) => v,
            Err(e) => {
                inner_err.get_or_insert(e);
                0.0
            }
        }
    };
    let p_out = if a == 0.0 { gamma + 1.0 } else { gamma + 2.0 };
    let v = integrate_power_singular(outer, a, b, p_out, &[], q)?;
    if let Some(e) = inner_err {
        return Err(e);
    }
    Ok(2.0 * v)
}

/// Largest tensor rule order used for separated cell pairs.
const MAX_PAIR_ORDER: usize = 12;

/// Tensor Gauss-Legendre over two separated cells. The diagonal singularity
/// sits at relative distance `s = gap / width`; the order is chosen so the
/// Bernstein-ellipse bound `rho^(-2n)` stays below 1e-12.
fn separated_pair(c1: (f64, f64), c2: (f64, f64), gamma: f64, rules: &[Vec<(f64, f64)>]) -> f64 {
    let gap = (c2.0 - c1.1).max(c1.0 - c2.1);
    let width = (c1.1 - c1.0).max(c2.1 - c2.0);
    let s = 1.0 + 2.0 * gap / width;
    let rho = s + (s * s - 1.0).sqrt();
    let order = ((12.0 * std::f64::consts::LN_10) / (2.0 * rho.ln())).ceil() as usize;
    let rule = &rules[order.clamp(1, MAX_PAIR_ORDER) - 1];
    let map = |c: (f64, f64), x: f64| 0.5 * (c.0 + c.1) + 0.5 * (c.1 - c.0) * x;
    let mut acc = 0.0;
    for &(x, wx) in rule {
        let r = map(c1, x);
        for &(y, wy) in rule {
            acc += wx * wy * two_radius_kernel(r, map(c2, y), gamma);
        }
    }
    acc * 0.25 * (c1.1 - c1.0) * (c2.1 - c2.0)
}

/// `∫∫ g_gamma(r, rho) lambda(dr) lambda(drho)` for a measure with uniform
/// density inside each cell. Any atom makes the energy infinite; overflow
/// mass has no position and is left out.
pub fn radial_riesz_energy<S: Real>(
    lambda: &RadialMeasure<S>,
    gamma: S,
    q: &QuadratureSettings<S>,
) -> Result<Energy<S>, KernelError> {
    if lambda.atom_at_1 > S::zero() || lambda.atom_at_0 > S::zero() {
        return Ok(Energy::Infinite);
    }
    let gamma = gamma.as_f64();
    let qf = QuadratureSettings {
        rel_tol: q.rel_tol.as_f64(),
        abs_tol: 1e-300,
        max_subdivisions: q.max_subdivisions,
        singular_split: q.singular_split.as_f64(),
    };
    let grid = lambda.grid();
    let active: Vec<usize> = (0..lambda.cells.len())
        .filter(|&i| lambda.cells[i] != S::zero())
        .collect();
    if active.is_empty() {
        return Ok(Energy::Finite(S::zero()));
    }
    let density = |i: usize| lambda.cells[i].as_f64() / grid.width(i).as_f64();
    let selfs: Vec<f64> = active
        .par_iter()
        .map(|&i| {
            let (a, b) = grid.cell(i);
            self_cell(a.as_f64(), b.as_f64(), gamma, &qf)
        })
        .collect::<Result<_, _>>()?;
    let rules: Vec<Vec<(f64, f64)>> = (1..=MAX_PAIR_ORDER).map(gauss_legendre::<f64>).collect();
    let cell = |i: usize| {
        let (a, b) = grid.cell(i);
        (a.as_f64(), b.as_f64())
    };
    let rows: Vec<f64> = (0..active.len())
        .into_par_iter()
        .map(|p| -> Result<f64, QuadratureError> {
            let i = active[p];
            let di = density(i);
            let mut row = di * di * selfs[p];
            for (off, &j) in active[p + 1..].iter().enumerate() {
                let pair = if j == i + 1 {
                    let union = self_cell(cell(i).0, cell(j).1, gamma, &qf)?;
                    0.5 * (union - selfs[p] - selfs[p + 1 + off])
                } else {
                    separated_pair(cell(i), cell(j), gamma, &rules)
                };
                row += 2.0 * di * density(j) * pair;
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    Ok(Energy::Finite(S::lit(rows.iter().sum())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn q() -> QuadratureSettings<f64> {
        QuadratureSettings::default()
    }

    fn params(n: f64) -> ModelParams<f64> {
        ModelParams::new(-1.5, n, 1.0).unwrap()
    }

    #[test]
    fn h_at_origin_is_one() {
        assert_eq!(angular_average(0.0, -0.5, &q()).unwrap(), 1.0);
    }

    #[test]
    fn h_diverges_on_circle_for_delta_le_minus_one() {
        assert!(matches!(
            angular_average(1.0, -1.5, &q()),
            Err(KernelError::Divergent { .. })
        ));
        assert!(angular_average(1.1, -1.5, &q()).unwrap().is_finite());
    }

    #[test]
    fn series_matches_quadrature() {
        for &r in &[0.0, 0.3, 0.7, 0.95, 0.999, 1.0, 1.001, 1.3, 3.0] {
            for &delta in &[-0.75, -0.5, -0.25, -1.5] {
                if r == 1.0 && delta <= -1.0 {
                    continue;
                }
                let quad = angular_average(r, delta, &q()).unwrap();
                let (t, omt, scale) = if r <= 1.0 {
                    (r, 1.0 - r, 1.0)
                } else {
                    (1.0 / r, (r - 1.0) / r, r.powf(delta))
                };
                let series = scale * angular_average_series(t, omt, delta);
                assert_relative_eq!(quad, series, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn kink_matches_cap() {
        for &r in &[0.99, 1.0, 1.01] {
            if let Kink::At(a) = kink(r, -1.5, 100.0) {
                assert_relative_eq!(kernel_weight(r, a, -1.5, None), 100.0, max_relative = 1e-10);
            } else {
                panic!("no kink at r = {r}");
            }
        }
        assert!(matches!(kink(3.0, -1.5, 2.0), Kink::Never));
        assert!(matches!(kink(0.01, -1.5, 0.5), Kink::Everywhere));
    }

    #[test]
    fn rate_examples() {
        let p = params(5.0);
        assert_eq!(truncated_rate(0.0, &p, 2.0, &q()).unwrap(), 2.0);
        assert_eq!(truncated_rate(1.0, &params(0.0), 2.0, &q()).unwrap(), 0.0);
        let rates: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&n| truncated_rate(1.0, &params(n), 2.0, &q()).unwrap())
            .collect();
        assert!(rates[0] < rates[1] && rates[1] < rates[2]);
        let ratio = rates[2] / rates[1];
        assert!((ratio / 10f64.powf(1.0 / 3.0) - 1.0).abs() < 0.15, "ratio {ratio}");
    }

    #[test]
    fn rate_is_bounded_off_circle() {
        let p = params(1.0);
        let far: Vec<f64> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&n| truncated_rate(1.5, &p.with_trunc(n), 1.0, &q()).unwrap())
            .collect();
        assert_eq!(far[1], far[2]);
        let full = angular_average(1.5, -1.5, &q()).unwrap();
        assert_relative_eq!(far[2], full, max_relative = 1e-9);
    }

    #[test]
    fn envelope_dominates_and_integrates_to_rate() {
        for &r in &[0.0, 0.05, 0.5, 0.9, 1.0, 1.0 + 1e-6, 1.3, 3.5] {
            for &n in &[0.5, 10.0, 100.0, 1e4] {
                let p = params(n);
                let env = AlphaEnvelope::new(r, -1.5, n);
                let mut b = env.breaks();
                if let Kink::At(a) = kink(r, -1.5, n) {
                    b.push(a);
                }
                geometric_breaks(near_scale(r), &mut b);
                sort_dedup(&mut b);
                let weighted = integrate(
                    |a: f64| {
                        let acc = env.accept_prob(a);
                        assert!((0.0..=1.0).contains(&acc));
                        assert!(env.density(a) >= kernel_weight(r, a, -1.5, Some(n)) * (1.0 - 1e-12));
                        acc * env.density(a)
                    },
                    &b,
                    &q(),
                )
                .unwrap()
                    / PI;
                let rate = truncated_rate(r, &p, 1.0, &q()).unwrap();
                assert_relative_eq!(weighted, rate, max_relative = 1e-6);
                assert!(env.mass() >= rate * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn sample_alpha_is_uniform_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = params(100.0);
        let mut xs: Vec<f64> = (0..100_000).map(|_| sample_alpha(0.0, &p, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x + PI) / (2.0 * PI);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn sample_alpha_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = params(100.0);
        for &r in &[0.3, 1.0, 2.0] {
            let n = 40_000;
            let s: f64 = (0..n).map(|_| sample_alpha(r, &p, &mut rng).signum()).sum();
            assert!(s.abs() <= 3.0 * (n as f64).sqrt(), "r = {r}: sign sum {s}");
        }
    }

    #[test]
    fn riesz_atoms_are_infinite() {
        let grid = std::sync::Arc::new(
            crate::radial_measure::RadialGrid::build(&crate::radial_measure::GridSpec::default()).unwrap(),
        );
        let e = radial_riesz_energy(&RadialMeasure::circle(grid.clone()), -1.5, &q()).unwrap();
        assert_eq!(e, Energy::Infinite);
        let mut m = RadialMeasure::zero(grid);
        m.atom_at_0 = 1.0;
        assert!(!radial_riesz_energy(&m, -1.5, &q()).unwrap().is_finite());
    }

    #[test]
    fn self_cell_scales_like_width_to_gamma_plus_three() {
        // near the diagonal g(r, rho) ~ |r - rho|^(gamma+1), so S(w) ~ w^(gamma+3)
        let qf = q();
        let s1 = self_cell(2.0, 2.0 + 1e-6, -1.5, &qf).unwrap();
        let s2 = self_cell(2.0, 2.0 + 5e-7, -1.5, &qf).unwrap();
        assert_relative_eq!(s1 / s2, 2f64.powf(1.5), max_relative = 3e-3);
    }
}
