//! One-dimensional quadrature used by the kernel integrals and the
//! generator assembly.
//!
//! The adaptive scheme compares a Gauss-Legendre rule on a segment with the
//! same rule on its two halves and bisects the segment with the largest
//! discrepancy until the summed discrepancy meets the tolerance. Integrable
//! endpoint singularities `(x - a)^p`, `p > -1`, are flattened by the
//! substitution `x = a + u^(1/(1+p))` before the adaptive pass.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::Real;

/// Nodes per segment of the adaptive rule.
const SEGMENT_ORDER: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSettings<S> {
    pub rel_tol: S,
    /// Absolute floor for integrals that vanish.
    pub abs_tol: S,
    pub max_subdivisions: usize,
    /// Half-width of the window around a power singularity handled by substitution.
    pub singular_split: S,
}

impl<S: Real> Default for QuadratureSettings<S> {
    fn default() -> Self {
        Self {
            rel_tol: S::lit(1e-9),
            abs_tol: S::lit(1e-300).max(S::min_positive_value()),
            max_subdivisions: 2000,
            singular_split: S::lit(0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadratureError {
    #[error("quadrature.rel_tol = {0} must lie in (0, 1e-3]")]
    RelTol(f64),
    #[error("quadrature.max_subdivisions = {0} must be >= 16")]
    MaxSubdivisions(usize),
    #[error("quadrature.singular_split = {0} must be > 0")]
    SingularSplit(f64),
    #[error("no convergence on [{a}, {b}] after {segments} segments: estimate {estimate}, error {error}")]
    NoConvergence {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
        segments: usize,
    },
    #[error("integrand is not finite at x = {0}")]
    NonFinite(f64),
    #[error("singular exponent {0} is not integrable (must exceed -1)")]
    NotIntegrable(f64),
}

impl<S: Real> QuadratureSettings<S> {
    pub fn validate(&self) -> Result<(), QuadratureError> {
        let t = self.rel_tol.as_f64();
        if !(t > 0.0 && t <= 1e-3) {
            return Err(QuadratureError::RelTol(t));
        }
        if self.max_subdivisions < 16 {
            return Err(QuadratureError::MaxSubdivisions(self.max_subdivisions));
        }
        let s = self.singular_split.as_f64();
        if !(s > 0.0) {
            return Err(QuadratureError::SingularSplit(s));
        }
        Ok(())
    }

    pub fn with_rel_tol(&self, rel_tol: S) -> Self {
        Self {
            rel_tol,
            ..self.clone()
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<S: Real>(n: usize) -> Vec<(S, S)> {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut out = vec![(S::zero(), S::zero()); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (S::lit(-x), S::lit(w));
        out[n - 1 - i] = (S::lit(x), S::lit(w));
    }
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule<S: Real>() -> Vec<(S, S)> {
    gauss_legendre(SEGMENT_ORDER)
}

fn apply<S: Real, F: FnMut(S) -> S>(
    f: &mut F,
    a: S,
    b: S,
    nodes: &[(S, S)],
) -> Result<S, QuadratureError> {
    let half = (b - a) * S::lit(0.5);
    let mid = (a + b) * S::lit(0.5);
    let mut acc = S::zero();
    for &(x, w) in nodes {
        let t = mid + half * x;
        let v = f(t);
        if !v.is_finite() {
            return Err(QuadratureError::NonFinite(t.as_f64()));
        }
        acc += w * v;
    }
    Ok(acc * half)
}

#[derive(Debug, Clone, Copy)]
struct Segment<S> {
    a: S,
    b: S,
    value: S,
    left: S,
    right: S,
    error: S,
}

impl<S: Real> PartialEq for Segment<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S: Real> Eq for Segment<S> {}
impl<S: Real> PartialOrd for Segment<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: Real> Ord for Segment<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .as_f64()
            .total_cmp(&other.error.as_f64())
            .then_with(|| other.a.as_f64().total_cmp(&self.a.as_f64()))
    }
}

fn segment<S: Real, F: FnMut(S) -> S>(
    f: &mut F,
    a: S,
    b: S,
    whole: S,
    nodes: &[(S, S)],
) -> Result<Segment<S>, QuadratureError> {
    let m = (a + b) * S::lit(0.5);
    let left = apply(f, a, m, nodes)?;
    let right = apply(f, m, b, nodes)?;
    let value = left + right;
    Ok(Segment {
        a,
        b,
        value,
        left,
        right,
        error: (whole - value).abs(),
    })
}

/// Converged adaptive partition: the segments whose two-half rules make up
/// the estimate.
#[derive(Debug, Clone)]
pub struct AdaptivePartition<S> {
    pub value: S,
    pub error: S,
    /// `(a, b)` of each accepted segment, in increasing order.
    pub segments: Vec<(S, S)>,
}

impl<S: Real> AdaptivePartition<S> {
    /// Weighted nodes reproducing `value` for the integrand used to build
    /// the partition; reused to integrate companion quantities on the same
    /// resolution.
    pub fn nodes(&self) -> Vec<(S, S)> {
        let base = rule::<S>();
        let mut out = Vec::with_capacity(self.segments.len() * 2 * base.len());
        for &(a, b) in &self.segments {
            let m = (a + b) * S::lit(0.5);
            for (lo, hi) in [(a, m), (m, b)] {
                let half = (hi - lo) * S::lit(0.5);
                let mid = (hi + lo) * S::lit(0.5);
                out.extend(base.iter().map(|&(x, w)| (mid + half * x, w * half)));
            }
        }
        out
    }
}

/// Adaptive partition of `[breaks[0], breaks[last]]`, split at every interior
/// break. Breaks must be nondecreasing; empty pieces are skipped.
pub fn adaptive_partition<S: Real, F: FnMut(S) -> S>(
    mut f: F,
    breaks: &[S],
    q: &QuadratureSettings<S>,
) -> Result<AdaptivePartition<S>, QuadratureError> {
    assert!(breaks.len() >= 2, "need at least two break points");
    let nodes = rule::<S>();
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        debug_assert!(b >= a, "breaks must be sorted: {a} > {b}");
        if b <= a {
            continue;
        }
        let whole = apply(&mut f, a, b, &nodes)?;
        heap.push(segment(&mut f, a, b, whole, &nodes)?);
    }
    loop {
        let (value, error) = heap
            .iter()
            .fold((S::zero(), S::zero()), |(v, e), s| (v + s.value, e + s.error));
        if error <= (q.rel_tol * value.abs()).max(q.abs_tol) {
            let mut segments: Vec<(S, S)> = heap.iter().map(|s| (s.a, s.b)).collect();
            segments.sort_by(|x, y| x.0.as_f64().total_cmp(&y.0.as_f64()));
            return Ok(AdaptivePartition { value, error, segments });
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => {
                return Ok(AdaptivePartition {
                    value: S::zero(),
                    error: S::zero(),
                    segments: Vec::new(),
                })
            }
        };
        let m = (worst.a + worst.b) * S::lit(0.5);
        if heap.len() + 2 > q.max_subdivisions || m <= worst.a || m >= worst.b {
            return Err(QuadratureError::NoConvergence {
                a: breaks[0].as_f64(),
                b: breaks[breaks.len() - 1].as_f64(),
                estimate: value.as_f64(),
                error: error.as_f64(),
                segments: heap.len() + 1,
            });
        }
        heap.push(segment(&mut f, worst.a, m, worst.left, &nodes)?);
        heap.push(segment(&mut f, m, worst.b, worst.right, &nodes)?);
    }
}

/// `∫ f` over `[breaks[0], breaks[last]]` split at the interior breaks.
pub fn integrate<S: Real, F: FnMut(S) -> S>(
    f: F,
    breaks: &[S],
    q: &QuadratureSettings<S>,
) -> Result<S, QuadratureError> {
    adaptive_partition(f, breaks, q).map(|p| p.value)
}

/// `∫_a^b f` where `f(x) ~ (x - a)^exponent` near `a`, `exponent > -1`.
/// On `[a, a + singular_split]` the substitution `x = a + u^(1/(1+exponent))`
/// makes the integrand bounded; `breaks` are extra interior break points.
pub fn integrate_power_singular<S: Real, F: FnMut(S) -> S>(
    mut f: F,
    a: S,
    b: S,
    exponent: S,
    breaks: &[S],
    q: &QuadratureSettings<S>,
) -> Result<S, QuadratureError> {
    if exponent <= -S::one() {
        return Err(QuadratureError::NotIntegrable(exponent.as_f64()));
    }
    if b <= a {
        return Ok(S::zero());
    }
    let split = (a + q.singular_split).min(b);
    let one_p = S::one() + exponent;
    let inv = one_p.recip();

    let mut near: Vec<S> = vec![S::zero()];
    near.extend(
        breaks
            .iter()
            .filter(|&&x| x > a && x < split)
            .map(|&x| (x - a).powf(one_p)),
    );
    near.push((split - a).powf(one_p));
    sort_dedup(&mut near);
    let near_value = integrate(
        |u: S| {
            if u <= S::zero() {
                return S::zero();
            }
            let x = a + u.powf(inv);
            let jac = inv * u.powf(inv - S::one());
            f(x) * jac
        },
        &near,
        q,
    )?;

    if split >= b {
        return Ok(near_value);
    }
    let mut far: Vec<S> = vec![split];
    far.extend(breaks.iter().copied().filter(|&x| x > split && x < b));
    far.push(b);
    sort_dedup(&mut far);
    Ok(near_value + integrate(f, &far, q)?)
}

/// Sort ascending and drop exact duplicates.
pub fn sort_dedup<S: Real>(v: &mut Vec<S>) {
    v.sort_by(|x, y| x.as_f64().total_cmp(&y.as_f64()));
    v.dedup();
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1usize, 2, 5, 10, 32] {
            let r = gauss_legendre::<f64>(n);
            let wsum: f64 = r.iter().map(|p| p.1).sum();
            assert_relative_eq!(wsum, 2.0, epsilon = 1e-13);
            // degree 2n - 1 exactness
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            let got: f64 = r.iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
            assert!((got - exact).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 2;
            let got: f64 = r.iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
            assert_relative_eq!(got, 2.0 / (deg as f64 + 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn adaptive_smooth_and_kinked() {
        let q = QuadratureSettings::default();
        let v = integrate(|x: f64| x.sin(), &[0.0, PI], &q).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-12);
        let v = integrate(|x: f64| (x - 0.3).abs(), &[0.0, 0.3, 1.0], &q).unwrap();
        assert_relative_eq!(v, 0.045 + 0.245, max_relative = 1e-12);
        // kink without a break point is still resolved adaptively
        let v = integrate(|x: f64| (x - 0.3).abs(), &[0.0, 1.0], &q).unwrap();
        assert_relative_eq!(v, 0.29, max_relative = 1e-8);
    }

    #[test]
    fn power_singular_endpoint() {
        let q = QuadratureSettings::default();
        let v = integrate_power_singular(|x: f64| x.powf(-0.5), 0.0, 1.0, -0.5, &[], &q).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-12);
        let v = integrate_power_singular(|x: f64| x.powf(-0.9) * x.cos(), 0.0, 2.0, -0.9, &[1.0], &q).unwrap();
        // reference: series sum_k (-1)^k 2^(2k+0.1) / ((2k)! (2k+0.1))
        let mut reference = 0.0;
        let mut fact = 1.0;
        for k in 0..30 {
            if k > 0 {
                fact *= (2 * k - 1) as f64 * (2 * k) as f64;
            }
            let p = 2.0 * k as f64 + 0.1;
            reference += (-1f64).powi(k) * 2f64.powf(p) / (fact * p);
        }
        assert_relative_eq!(v, reference, max_relative = 1e-10);
        assert!(matches!(
            integrate_power_singular(|x: f64| 1.0 / x, 0.0, 1.0, -1.0, &[], &q),
            Err(QuadratureError::NotIntegrable(_))
        ));
    }

    #[test]
    fn partition_nodes_reproduce_value() {
        let q = QuadratureSettings::default();
        let p = adaptive_partition(|x: f64| (3.0 * x).exp(), &[0.0, 0.5, 1.0], &q).unwrap();
        let s: f64 = p.nodes().iter().map(|&(x, w)| w * (3.0 * x).exp()).sum();
        assert_relative_eq!(s, p.value, max_relative = 1e-14);
        assert_relative_eq!(p.value, ((3.0f64).exp() - 1.0) / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn non_convergence_and_non_finite_are_reported() {
        let q = QuadratureSettings {
            max_subdivisions: 16,
            ..QuadratureSettings::default()
        };
        let r = integrate(|x: f64| if x < 1.0 / 3.0 { 0.0 } else { 1.0 }, &[0.0, 1.0], &q);
        assert!(matches!(r, Err(QuadratureError::NoConvergence { .. })));
        let r = integrate(|_x: f64| f64::NAN, &[0.0, 1.0], &QuadratureSettings::default());
        assert!(matches!(r, Err(QuadratureError::NonFinite(_))));
    }

    #[test]
    fn settings_validation() {
        assert!(QuadratureSettings::<f64>::default().validate().is_ok());
        let bad = QuadratureSettings::<f64>::default().with_rel_tol(0.1);
        assert_eq!(bad.validate(), Err(QuadratureError::RelTol(0.1)));
        let bad = QuadratureSettings::<f64> {
            max_subdivisions: 4,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(QuadratureError::MaxSubdivisions(4)));
    }

    #[test]
    fn works_in_f32() {
        let q = QuadratureSettings::<f32> {
            rel_tol: 1e-5,
            ..Default::default()
        };
        let v = integrate(|x: f32| x * x, &[0.0, 1.0], &q).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-6);
    }
}
