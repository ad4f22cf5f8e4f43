//! Collision kinematics in the plane and their reduction to radii.
//!
//! A binary collision between `v` and a background velocity `v_star` with
//! deflection angle `theta` produces
//!
//! ```text
//! v' = (v + v_star)/2 + R_theta (v - v_star)/2
//! ```
//!
//! Because the background law is uniform on the unit circle, only the
//! radius `|v|` and the relative angle `alpha` between `v` and `v_star`
//! matter, which gives the radial map [`post_collision_radius`] and the
//! kernel [`kernel_weight`].

use crate::scalar::Real;

/// A velocity in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Velocity<S> {
    pub x: S,
    pub y: S,
}

impl<S: Real> Velocity<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    /// Unit vector `(cos a, sin a)`.
    pub fn unit(angle: S) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    /// `r * (cos a, sin a)`.
    pub fn polar(r: S, angle: S) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }

    pub fn norm(self) -> S {
        self.x.hypot(self.y)
    }

    pub fn norm_sqr(self) -> S {
        self.x * self.x + self.y * self.y
    }

    pub fn rotate(self, angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn scale(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<S: Real> std::ops::Add for Velocity<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<S: Real> std::ops::Sub for Velocity<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

/// Physical and numerical parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    /// Soft-potential exponent, in (-2, -1).
    pub gamma: S,
    /// Truncation level `n` of the kernel `min(|v - v_star|^gamma, n)`.
    pub trunc_n: S,
    /// Initial radius; fixed to 1.
    pub r0: S,
    pub horizon: S,
    /// Explicit Euler steps satisfy `dt * max_out_rate <= positivity_factor`.
    pub positivity_factor: S,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("gamma = {0} must lie in (-2, -1)")]
    Gamma(f64),
    #[error("trunc_n = {0} must be finite and >= 0")]
    Truncation(f64),
    #[error("r0 = {0} must equal 1")]
    InitialRadius(f64),
    #[error("horizon = {0} must be finite and > 0")]
    Horizon(f64),
    #[error("positivity_factor = {0} must lie in (0, 1]")]
    PositivityFactor(f64),
}

impl<S: Real> ModelParams<S> {
    pub fn new(gamma: S, trunc_n: S, horizon: S) -> Result<Self, ParamsError> {
        let p = Self {
            gamma,
            trunc_n,
            r0: S::one(),
            horizon,
            positivity_factor: S::lit(0.2),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let g = self.gamma.as_f64();
        if !(g > -2.0 && g < -1.0) {
            return Err(ParamsError::Gamma(g));
        }
        let n = self.trunc_n.as_f64();
        if !(n.is_finite() && n >= 0.0) {
            return Err(ParamsError::Truncation(n));
        }
        if self.r0 != S::one() {
            return Err(ParamsError::InitialRadius(self.r0.as_f64()));
        }
        let t = self.horizon.as_f64();
        if !(t.is_finite() && t > 0.0) {
            return Err(ParamsError::Horizon(t));
        }
        let f = self.positivity_factor.as_f64();
        if !(f > 0.0 && f <= 1.0) {
            return Err(ParamsError::PositivityFactor(f));
        }
        Ok(())
    }

    pub fn with_trunc(&self, trunc_n: S) -> Self {
        Self {
            trunc_n,
            ..self.clone()
        }
    }
}

/// Post-collision velocity `(v + v_star)/2 + R_theta (v - v_star)/2`.
pub fn post_collision_velocity<S: Real>(v: Velocity<S>, v_star: Velocity<S>, theta: S) -> Velocity<S> {
    let half = S::lit(0.5);
    (v + v_star).scale(half) + (v - v_star).rotate(theta).scale(half)
}

/// Radius of `v'` when `|v| = r`, `|v_star| = 1` and the angle from `v_star`
/// to `v` is `alpha`.
pub fn post_collision_radius<S: Real>(r: S, theta: S, alpha: S) -> S {
    let radicand = post_collision_radius_sqr(r, theta, alpha);
    debug_assert!(
        radicand >= -S::lit(64.0) * S::epsilon() * (S::one() + r * r),
        "negative radicand {radicand} at r={r}, theta={theta}, alpha={alpha}"
    );
    radicand.max(S::zero()).sqrt()
}

/// `r'^2` before the square root, without clamping.
pub fn post_collision_radius_sqr<S: Real>(r: S, theta: S, alpha: S) -> S {
    let half = S::lit(0.5);
    let (st, ct) = theta.sin_cos();
    (S::one() + ct) * half * r * r + (S::one() - ct) * half - r * st * alpha.sin()
}

/// `r^2 + 1 - 2 r cos(alpha)`, evaluated as `(r-1)^2 + 4 r sin^2(alpha/2)`
/// which keeps full relative accuracy near the singular point.
pub fn kernel_base<S: Real>(r: S, alpha: S) -> S {
    let d = r - S::one();
    let s = (alpha * S::lit(0.5)).sin();
    d * d + S::lit(4.0) * r * s * s
}

/// Kernel weight `(r^2 + 1 - 2 r cos alpha)^(gamma/2)`, optionally capped at
/// `trunc`. The untruncated weight is `+inf` exactly at `(r, alpha) = (1, 0)`.
pub fn kernel_weight<S: Real>(r: S, alpha: S, gamma: S, trunc: Option<S>) -> S {
    let base = kernel_base(r, alpha);
    let k = if base == S::zero() {
        S::infinity()
    } else {
        base.powf(gamma * S::lit(0.5))
    };
    match trunc {
        Some(n) => k.min(n),
        None => k,
    }
}
