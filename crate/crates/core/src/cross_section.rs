//! Angular cross section `beta`: a finite, even measure on
//! `[-pi/2, pi/2] \ {0}` with a gap `(-theta0, theta0)` around zero.
//!
//! Only the positive half is stored; every atom and density piece is
//! implicitly mirrored, so the total mass is twice the stored mass.

use rand::Rng;

use crate::quadrature::gauss_legendre;
use crate::scalar::Real;

/// Unvalidated cross section as read from a configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawCrossSection<S> {
    /// `(theta, weight)` pairs on the positive half.
    pub atoms: Vec<(S, S)>,
    /// `(lo, hi, density)` pieces on the positive half.
    pub density: Vec<(S, S, S)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrossSectionError {
    #[error("beta has zero total mass")]
    Empty,
    #[error("beta.atoms[{index}]: atom at theta = 0 is not allowed")]
    AtomAtZero { index: usize },
    #[error("beta.atoms[{index}]: theta = {theta} outside (0, pi/2] (the negative half is mirrored)")]
    AtomOutOfRange { index: usize, theta: f64 },
    #[error("beta.atoms[{index}]: weight = {weight} must be finite and > 0")]
    AtomWeight { index: usize, weight: f64 },
    #[error("beta.density[{index}]: interval [{lo}, {hi}] must satisfy 0 < lo < hi <= pi/2")]
    DensityInterval { index: usize, lo: f64, hi: f64 },
    #[error("beta.density[{index}]: density = {value} must be finite and > 0")]
    DensityValue { index: usize, value: f64 },
}

impl CrossSectionError {
    /// Configuration key the error refers to.
    pub fn field(&self) -> &'static str {
        match self {
            Self::Empty => "beta",
            Self::AtomAtZero { .. } | Self::AtomOutOfRange { .. } | Self::AtomWeight { .. } => "beta.atoms",
            Self::DensityInterval { .. } | Self::DensityValue { .. } => "beta.density",
        }
    }
}

/// Validated angular cross section.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularCrossSection<S> {
    atoms: Vec<(S, S)>,
    density: Vec<(S, S, S)>,
    theta0: S,
    lambda: S,
    /// Cumulative half-masses over atoms then density pieces.
    cumulative: Vec<S>,
}

impl<S: Real> AngularCrossSection<S> {
    pub fn validate(raw: &RawCrossSection<S>) -> Result<Self, CrossSectionError> {
        let half_pi = S::FRAC_PI_2();
        for (index, &(theta, weight)) in raw.atoms.iter().enumerate() {
            if theta == S::zero() {
                return Err(CrossSectionError::AtomAtZero { index });
            }
            if !(theta > S::zero() && theta <= half_pi) {
                return Err(CrossSectionError::AtomOutOfRange { index, theta: theta.as_f64() });
            }
            if !(weight.is_finite() && weight > S::zero()) {
                return Err(CrossSectionError::AtomWeight { index, weight: weight.as_f64() });
            }
        }
        for (index, &(lo, hi, value)) in raw.density.iter().enumerate() {
            if !(lo > S::zero() && lo < hi && hi <= half_pi) {
                return Err(CrossSectionError::DensityInterval {
                    index,
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
            if !(value.is_finite() && value > S::zero()) {
                return Err(CrossSectionError::DensityValue { index, value: value.as_f64() });
            }
        }

        let mut cumulative = Vec::with_capacity(raw.atoms.len() + raw.density.len());
        let mut acc = S::zero();
        for &(_, w) in &raw.atoms {
            acc += w;
            cumulative.push(acc);
        }
        for &(lo, hi, value) in &raw.density {
            acc += value * (hi - lo);
            cumulative.push(acc);
        }
        if cumulative.is_empty() || acc <= S::zero() {
            return Err(CrossSectionError::Empty);
        }

        let theta0 = raw
            .atoms
            .iter()
            .map(|a| a.0)
            .chain(raw.density.iter().map(|d| d.0))
            .fold(S::infinity(), S::min);

        Ok(Self {
            atoms: raw.atoms.clone(),
            density: raw.density.clone(),
            theta0,
            lambda: acc + acc,
            cumulative,
        })
    }

    /// Symmetric pair of atoms `delta_theta + delta_{-theta}`, each of mass `weight`.
    pub fn symmetric_atom(theta: S, weight: S) -> Result<Self, CrossSectionError> {
        Self::validate(&RawCrossSection {
            atoms: vec![(theta, weight)],
            density: Vec::new(),
        })
    }

    pub fn atoms(&self) -> &[(S, S)] {
        &self.atoms
    }

    pub fn density_pieces(&self) -> &[(S, S, S)] {
        &self.density
    }

    /// Largest `theta0` with no mass in `(-theta0, theta0)`.
    pub fn theta0(&self) -> S {
        self.theta0
    }

    /// Total mass `Lambda` over both halves.
    pub fn total_mass(&self) -> S {
        self.lambda
    }

    /// Mass of the positive half, `beta([theta0, pi/2])`.
    pub fn half_mass(&self) -> S {
        self.lambda * S::lit(0.5)
    }

    /// Positive angles with weights covering both halves, suitable for
    /// integrating an even function of `theta` against `beta`. Atoms are
    /// exact; each density piece uses `density_nodes` Gauss-Legendre nodes.
    pub fn theta_nodes(&self, density_nodes: usize) -> Vec<(S, S)> {
        let two = S::lit(2.0);
        let mut out: Vec<(S, S)> = self.atoms.iter().map(|&(t, w)| (t, two * w)).collect();
        if !self.density.is_empty() {
            let rule = gauss_legendre::<S>(density_nodes.max(1));
            for &(lo, hi, value) in &self.density {
                let half = (hi - lo) * S::lit(0.5);
                let mid = (hi + lo) * S::lit(0.5);
                for &(x, w) in &rule {
                    out.push((mid + half * x, two * value * half * w));
                }
            }
        }
        out
    }

    /// Draw `theta` from `beta / Lambda`, with both signs.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        let half = *self.cumulative.last().expect("validated beta is non-empty");
        let u = S::lit(rng.gen::<f64>()) * half;
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        let theta = if idx < self.atoms.len() {
            self.atoms[idx].0
        } else {
            let (lo, hi, _) = self.density[idx - self.atoms.len()];
            lo + (hi - lo) * S::lit(rng.gen::<f64>())
        };
        if rng.gen::<bool>() {
            theta
        } else {
            -theta
        }
    }
}
