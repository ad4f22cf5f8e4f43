//! Least-squares log-log fits with Student-t confidence intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Fitted power law `y ≈ exp(intercept) x^value`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub name: String,
    pub value: f64,
    /// 95% confidence interval of the slope; infinite with two points.
    pub ci: (f64, f64),
    /// Range of the abscissa covered by the fit.
    pub range: (f64, f64),
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("fit '{0}' needs at least two points")]
    TooFewPoints(String),
    #[error("fit '{0}' needs positive finite data")]
    NonPositive(String),
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_loglog(name: &str, xs: &[f64], ys: &[f64]) -> Result<ExponentFit, FitError> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return Err(FitError::TooFewPoints(name.into()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(FitError::NonPositive(name.into()));
    }
    let lx: Vec<f64> = xs[..n].iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys[..n].iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ci = if n > 2 {
        let se = (ss / (n - 2) as f64 / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 2) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        (slope - t * se, slope + t * se)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let (lo, hi) = xs[..n]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(ExponentFit {
        name: name.into(),
        value: slope,
        ci,
        range: (lo, hi),
        intercept,
        residual: (ss / n as f64).sqrt(),
    })
}

impl ExponentFit {
    /// `|value / target - 1| <= rel`.
    pub fn within(&self, target: f64, rel: f64) -> bool {
        (self.value / target - 1.0).abs() <= rel
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_law() {
        let xs = [1e-4, 1e-3, 1e-2];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let f = fit_loglog("p", &xs, &ys).unwrap();
        assert_relative_eq!(f.value, -0.5, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 3f64.ln(), epsilon = 1e-10);
        assert!(f.residual < 1e-12);
        assert!(f.ci.0 <= f.value && f.value <= f.ci.1);
        assert_eq!(f.range, (1e-4, 1e-2));
        assert!(f.within(-0.5, 1e-9));
    }

    #[test]
    fn noisy_fit_has_finite_interval() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let ys = [1.0, 2.1, 3.9, 8.3, 15.7];
        let f = fit_loglog("q", &xs, &ys).unwrap();
        assert!(f.ci.1 - f.ci.0 > 0.0 && f.ci.1 - f.ci.0 < 0.5);
    }

    #[test]
    fn errors() {
        assert!(fit_loglog("a", &[1.0], &[1.0]).is_err());
        assert!(fit_loglog("b", &[1.0, 2.0], &[1.0, 0.0]).is_err());
    }
}
