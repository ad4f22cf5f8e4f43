//! Constructive de la Vallée Poussin gauge for a finite measure that avoids
//! the unit circle.
//!
//! Thresholds are integers: `a_k` is the smallest integer above `a_{k-1}`
//! with `mu(|r^2 - 1| <= 1/a_k) <= 2^-k`. Once that mass hits zero every
//! later threshold is `a_{k-1} + 1`, so the sequence is stored up to that
//! point and extended arithmetically. With `f = k + 1` on `[a_k, a_{k+1})`,
//! `g(x) = x inf_{(0, x]} f(y)/y = min(x P_k, k + 1)` where
//! `P_k = min_{1 <= i <= k} i / a_i`.
//!
//! Everything is generic over exact or floating scalars so the construction
//! can be replayed in rational arithmetic.

use num_traits::{FromPrimitive, Num, ToPrimitive};

use crate::radial_measure::RadialMeasure;

/// Largest index searched before giving up.
pub const K_MAX: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VpError {
    #[error("measure has an atom on the unit circle")]
    AtomAtOne,
    #[error("negative mass in input")]
    NegativeMass,
    #[error("thresholds did not close within k_max = {0}")]
    NotClosed(usize),
    #[error("threshold search overflowed u64 at k = {0}")]
    Overflow(usize),
}

pub trait VpScalar: Num + PartialOrd + Clone + FromPrimitive + ToPrimitive {}
impl<T: Num + PartialOrd + Clone + FromPrimitive + ToPrimitive> VpScalar for T {}

fn lit<S: VpScalar>(k: u64) -> S {
    S::from_u64(k).expect("integer representable in scalar")
}

fn min<S: VpScalar>(a: S, b: S) -> S {
    if b < a {
        b
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VpFunction<S> {
    /// `a_1, …, a_K`; `K` is the first index with zero window mass.
    thresholds: Vec<u64>,
    /// `(i, a_i)` attaining `P_k = i / a_i`, for `k = 1..=K`.
    prefix: Vec<(u64, u64)>,
    /// Minimizer for every `k > K`.
    tail: (u64, u64),
    _scalar: std::marker::PhantomData<S>,
}

/// `i / a` as an exactly comparable pair.
fn ratio_lt((i1, a1): (u64, u64), (i2, a2): (u64, u64)) -> bool {
    (i1 as u128) * (a2 as u128) < (i2 as u128) * (a1 as u128)
}

fn ratio_min(x: (u64, u64), y: (u64, u64)) -> (u64, u64) {
    if ratio_lt(y, x) {
        y
    } else {
        x
    }
}

/// `(d, m)` pairs with `d = |r^2 - 1|`.
fn window_mass<S: VpScalar>(points: &[(S, S)], a: u64) -> S {
    let a: S = lit(a);
    points
        .iter()
        .filter(|(d, _)| d.clone() * a.clone() <= S::one())
        .fold(S::zero(), |acc, (_, m)| acc + m.clone())
}

impl<S: VpScalar> VpFunction<S> {
    /// Build the gauge from `(d, m)` pairs, `d = |r^2 - 1|`.
    pub fn construct(points: &[(S, S)]) -> Result<Self, VpError> {
        if points.iter().any(|(_, m)| *m < S::zero()) {
            return Err(VpError::NegativeMass);
        }
        let points: Vec<(S, S)> = points.iter().filter(|(_, m)| *m > S::zero()).cloned().collect();
        if points.iter().any(|(d, _)| *d <= S::zero()) {
            return Err(VpError::AtomAtOne);
        }
        let mut thresholds = Vec::new();
        let mut prefix: Vec<(u64, u64)> = Vec::new();
        let mut cap = S::one();
        let mut prev = 0u64;
        for k in 1..=K_MAX {
            cap = cap / lit(2);
            let ok = |a: u64| window_mass(&points, a) <= cap;
            // doubling then bisection for the smallest passing integer
            let mut lo = prev;
            let mut step = 1u64;
            let mut hi = prev.checked_add(1).ok_or(VpError::Overflow(k))?;
            while !ok(hi) {
                lo = hi;
                step = step.checked_mul(2).ok_or(VpError::Overflow(k))?;
                hi = prev.checked_add(step).ok_or(VpError::Overflow(k))?;
            }
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let a = hi;
            let p = match prefix.last() {
                Some(&last) => ratio_min(last, (k as u64, a)),
                None => (k as u64, a),
            };
            thresholds.push(a);
            prefix.push(p);
            prev = a;
            if window_mass(&points, a) == S::zero() {
                let tail = ratio_min(p, (k as u64 + 1, a + 1));
                return Ok(Self {
                    thresholds,
                    prefix,
                    tail,
                    _scalar: std::marker::PhantomData,
                });
            }
        }
        Err(VpError::NotClosed(K_MAX))
    }

    pub fn thresholds(&self) -> &[u64] {
        &self.thresholds
    }

    /// `a_k` for any `k >= 1`.
    pub fn threshold(&self, k: usize) -> u64 {
        let big_k = self.thresholds.len();
        if k <= big_k {
            self.thresholds[k - 1]
        } else {
            self.thresholds[big_k - 1] + (k - big_k) as u64
        }
    }

    /// Largest `k` with `a_k <= x` (`a_0 = 0`); `None` if beyond `u64`.
    fn level(&self, x: &S) -> Option<u64> {
        let big_k = self.thresholds.len();
        let last = self.thresholds[big_k - 1];
        if *x >= lit(last) {
            let extra = (x.clone() - lit(last)).to_u64()?;
            return (big_k as u64).checked_add(extra);
        }
        Some(self.thresholds.iter().take_while(|&&a| lit::<S>(a) <= *x).count() as u64)
    }

    fn p(&self, k: u64) -> Option<(u64, u64)> {
        let big_k = self.prefix.len() as u64;
        match k {
            0 => None,
            k if k <= big_k => Some(self.prefix[k as usize - 1]),
            _ => Some(self.tail),
        }
    }

    /// `x i / a`, multiplied before dividing so that `x = a` gives `i` exactly.
    fn times(x: &S, (i, a): (u64, u64)) -> S {
        x.clone() * lit(i) / lit(a)
    }

    /// Step function `f(x) = k + 1` on `[a_k, a_{k+1})`; `None` if `k + 1`
    /// is not representable.
    pub fn f(&self, x: &S) -> Option<S> {
        self.level(x).and_then(|k| k.checked_add(1)).map(lit)
    }

    /// `g(x)` for `x >= 0`.
    pub fn g(&self, x: &S) -> S {
        if *x <= S::zero() {
            return S::zero();
        }
        let k = self.level(x);
        match k.map(|k| (k, self.p(k))) {
            Some((_, None)) => S::one(),
            Some((k, Some(p))) => min(Self::times(x, p), lit(k + 1)),
            // beyond u64 the linear branch is the smaller one
            None => Self::times(x, self.tail),
        }
    }

    /// `x g(1/x) = min(P_k, (k + 1) x)` with `k` the level of `1/x`.
    pub fn scaled_inverse(&self, x: &S) -> S {
        let k = self.level(&(S::one() / x.clone()));
        match k.map(|k| (k, self.p(k))) {
            Some((_, None)) => x.clone(),
            Some((k, Some((i, a)))) => min(lit::<S>(i) / lit(a), lit::<S>(k + 1) * x.clone()),
            None => lit::<S>(self.tail.0) / lit(self.tail.1),
        }
    }

    /// `∫ g(1/d) dmu` for `(d, m)` pairs.
    pub fn integral(&self, points: &[(S, S)]) -> S {
        points
            .iter()
            .filter(|(_, m)| *m > S::zero())
            .fold(S::zero(), |acc, (d, m)| acc + m.clone() * self.g(&(S::one() / d.clone())))
    }

    /// Dyadic points `2^i`, `i in [lo, hi]`, plus every `a_k` and `1/a_k`.
    pub fn sample_grid(&self, lo: i32, hi: i32) -> Vec<S> {
        let two: S = lit(2);
        let mut out = Vec::new();
        for i in lo..=hi {
            let mut x = S::one();
            for _ in 0..i.unsigned_abs() {
                x = if i < 0 { x / two.clone() } else { x * two.clone() };
            }
            out.push(x);
        }
        for &a in &self.thresholds {
            out.push(lit(a));
            out.push(S::one() / lit(a));
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("ordered scalars"));
        out.dedup();
        out
    }

    /// `x g(1/x)` nondecreasing on `grid`, compared exactly.
    pub fn scaled_inverse_monotone(&self, grid: &[S]) -> bool {
        grid.windows(2)
            .all(|w| self.scaled_inverse(&w[0]) <= self.scaled_inverse(&w[1]))
    }

    /// `g(10 a_k) >= g(a_k)` for stored `k` and `g` nondecreasing and
    /// strictly larger at the end of `grid` than at its start.
    pub fn grows_on(&self, grid: &[S]) -> bool {
        let ten: S = lit(10);
        let jumps = self
            .thresholds
            .iter()
            .all(|&a| self.g(&(lit::<S>(a) * ten.clone())) >= self.g(&lit(a)));
        let values: Vec<S> = grid.iter().map(|x| self.g(x)).collect();
        let monotone = values.windows(2).all(|w| w[0] <= w[1]);
        let unbounded = match (values.first(), values.last()) {
            (Some(a), Some(b)) => b > a,
            _ => false,
        };
        jumps && monotone && unbounded
    }
}

/// `(|r^2 - 1|, mass)` pairs of a radial measure, atoms at cell midpoints.
pub fn distance_points(mu: &RadialMeasure<f64>) -> Vec<(f64, f64)> {
    mu.to_points()
        .into_iter()
        .map(|(r, m)| ((r * r - 1.0).abs(), m))
        .collect()
}

/// Gauge of a radial measure in floating point.
pub fn vallee_poussin(mu: &RadialMeasure<f64>) -> Result<VpFunction<f64>, VpError> {
    VpFunction::construct(&distance_points(mu))
}
