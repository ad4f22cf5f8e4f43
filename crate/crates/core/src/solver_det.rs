//! Deterministic evolution of the radius distribution under the truncated
//! radial generator.
//!
//! States are ordered `[atom at 1, cell 0, …, cell N-1, overflow]`. The
//! overflow state is absorbing: mass beyond `r_max` has no position to
//! collide from. The atom at 0 is not a state; it is carried unchanged.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cross_section::AngularCrossSection;
use crate::geometry::{kernel_weight, post_collision_radius, ModelParams, ParamsError};
use crate::kernel_integrals::KernelError;
use crate::quadrature::{adaptive_partition, sort_dedup, QuadratureError, QuadratureSettings};
use crate::radial_measure::{sig17, DepositTarget, MeasureError, RadialGrid, RadialMeasure};
use crate::scalar::Real;

/// Depth of the geometric refinement of the `alpha` partition toward 0.
const ALPHA_REFINE_LEVELS: i32 = 40;
/// Maximal `alpha` segment length is `pi / ALPHA_MAX_SEGMENTS`.
const ALPHA_MAX_SEGMENTS: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("dt = {dt} exceeds the positivity bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("component {state} = {value} went negative at t = {t}")]
    Positivity { t: f64, state: usize, value: f64 },
    #[error("total mass drifted by {drift} at t = {t}")]
    MassDrift { t: f64, drift: f64 },
    #[error("snapshot times must be sorted, >= 0 and <= horizon; got {0}")]
    SnapshotTimes(String),
    #[error("generator was built for a different grid")]
    GridMismatch,
    #[error("generator cache is corrupt: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSettings<S> {
    /// Gauss-Legendre nodes per density piece of `beta`.
    pub density_nodes: usize,
    pub quadrature: QuadratureSettings<S>,
}

impl<S: Real> Default for GeneratorSettings<S> {
    fn default() -> Self {
        Self {
            density_nodes: 32,
            quadrature: QuadratureSettings::default(),
        }
    }
}

/// Sparse rate matrix with off-diagonals stored by source (CSR) and by
/// target (transposed CSR, for the parallel update).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix<S> {
    grid: Arc<RadialGrid<S>>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<S>,
    diag: Vec<S>,
    t_ptr: Vec<usize>,
    t_rows: Vec<usize>,
    t_vals: Vec<S>,
    /// Quadrature nodes used per source state (summed over `theta` nodes).
    pub nodes_per_source: Vec<usize>,
    pub theta_nodes: usize,
    /// Finest cell is wider than the truncation scale `n^(1/gamma)`.
    pub under_resolved: bool,
}

impl<S: Real> GeneratorMatrix<S> {
    /// Build from per-source off-diagonal rows `(target, rate)`.
    pub fn from_rows(grid: Arc<RadialGrid<S>>, rows: Vec<Vec<(usize, S)>>) -> Self {
        let n = grid.n_cells() + 2;
        assert_eq!(rows.len(), n, "one row per state");
        let mut row_ptr = Vec::with_capacity(n + 1);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        let mut diag = vec![S::zero(); n];
        row_ptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut out = S::zero();
            for &(j, q) in row {
                debug_assert!(j != i && q >= S::zero());
                cols.push(j);
                vals.push(q);
                out += q;
            }
            diag[i] = -out;
            row_ptr.push(cols.len());
        }
        let mut counts = vec![0usize; n + 1];
        for &j in &cols {
            counts[j + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let t_ptr = counts.clone();
        let mut fill = counts;
        let mut t_rows = vec![0; cols.len()];
        let mut t_vals = vec![S::zero(); cols.len()];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[k];
                t_rows[fill[j]] = i;
                t_vals[fill[j]] = vals[k];
                fill[j] += 1;
            }
        }
        Self {
            grid,
            row_ptr,
            cols,
            vals,
            diag,
            t_ptr,
            t_rows,
            t_vals,
            nodes_per_source: vec![0; n],
            theta_nodes: 0,
            under_resolved: false,
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid<S>> {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.diag.len()
    }

    pub fn overflow_state(&self) -> usize {
        self.diag.len() - 1
    }

    /// Off-diagonal `(target, rate)` entries of a source row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn diag(&self) -> &[S] {
        &self.diag
    }

    /// Total out-rate of a state.
    pub fn out_rate(&self, i: usize) -> S {
        -self.diag[i]
    }

    pub fn max_out_rate(&self) -> S {
        self.diag.iter().fold(S::zero(), |m, &d| m.max(-d))
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Largest `|diag_i + sum_j q_ij|` over rows.
    pub fn row_sum_residual(&self) -> S {
        (0..self.n_states())
            .map(|i| (self.diag[i] + self.row(i).map(|(_, q)| q).sum::<S>()).abs())
            .fold(S::zero(), S::max)
    }

    /// Total rate flowing into state `j` from `x`, including the diagonal.
    fn apply_column(&self, x: &[S], j: usize) -> S {
        let mut acc = self.diag[j] * x[j];
        for k in self.t_ptr[j]..self.t_ptr[j + 1] {
            acc += x[self.t_rows[k]] * self.t_vals[k];
        }
        acc
    }

    /// `x Q` (row vector times generator).
    pub fn apply(&self, x: &[S]) -> Vec<S> {
        (0..self.n_states()).into_par_iter().map(|j| self.apply_column(x, j)).collect()
    }

    /// Little-endian binary image used by the on-disk cache.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let push_u64 = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(b"LBGEN1\0\0");
        push_u64(&mut out, self.n_states() as u64);
        push_u64(&mut out, self.nnz() as u64);
        push_u64(&mut out, self.theta_nodes as u64);
        push_u64(&mut out, self.under_resolved as u64);
        for &p in &self.row_ptr {
            push_u64(&mut out, p as u64);
        }
        for &c in &self.cols {
            push_u64(&mut out, c as u64);
        }
        for &v in &self.vals {
            push_u64(&mut out, v.as_f64().to_bits());
        }
        for &n in &self.nodes_per_source {
            push_u64(&mut out, n as u64);
        }
        out
    }

    pub fn from_bytes(grid: Arc<RadialGrid<S>>, bytes: &[u8]) -> Result<Self, SolverError> {
        let bad = |m: &str| SolverError::Cache(m.to_string());
        if bytes.len() < 40 || &bytes[..8] != b"LBGEN1\0\0" || !bytes.len().is_multiple_of(8) {
            return Err(bad("bad header"));
        }
        let words: Vec<u64> = bytes[8..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (n, nnz) = (words[0] as usize, words[1] as usize);
        if n != grid.n_cells() + 2 {
            return Err(SolverError::GridMismatch);
        }
        if words.len() != 4 + (n + 1) + 2 * nnz + n {
            return Err(bad("length mismatch"));
        }
        let mut at = 4;
        let row_ptr: Vec<usize> = words[at..at + n + 1].iter().map(|&w| w as usize).collect();
        at += n + 1;
        let cols: Vec<usize> = words[at..at + nnz].iter().map(|&w| w as usize).collect();
        at += nnz;
        let vals: Vec<S> = words[at..at + nnz].iter().map(|&w| S::lit(f64::from_bits(w))).collect();
        at += nnz;
        let nodes_per_source: Vec<usize> = words[at..at + n].iter().map(|&w| w as usize).collect();
        if row_ptr[0] != 0 || row_ptr[n] != nnz || row_ptr.windows(2).any(|w| w[1] < w[0]) || cols.iter().any(|&c| c >= n)
        {
            return Err(bad("inconsistent structure"));
        }
        let rows = (0..n)
            .map(|i| (row_ptr[i]..row_ptr[i + 1]).map(|k| (cols[k], vals[k])).collect())
            .collect();
        let mut m = Self::from_rows(grid, rows);
        m.nodes_per_source = nodes_per_source;
        m.theta_nodes = words[2] as usize;
        m.under_resolved = words[3] != 0;
        Ok(m)
    }
}

/// Break points of the `alpha` partition on `[-pi, pi]` for a source radius.
fn alpha_breaks<S: Real>(r: S, gamma: S, n: S) -> Vec<S> {
    let pi = S::PI();
    let mut half: Vec<S> = (1..=ALPHA_MAX_SEGMENTS)
        .map(|k| pi * S::from_usize_lossy(k) / S::from_usize_lossy(ALPHA_MAX_SEGMENTS))
        .collect();
    for k in 1..=ALPHA_REFINE_LEVELS {
        half.push(pi * S::lit(0.5).powi(k));
    }
    // cap crossing, where min(K, n) has a kink
    let b = n.powf(S::lit(2.0) / gamma);
    let d = r - S::one();
    if r > S::zero() && b > d * d {
        let s2 = (b - d * d) / (S::lit(4.0) * r);
        if s2 < S::one() {
            half.push(S::lit(2.0) * s2.sqrt().asin());
        }
    }
    let mut all: Vec<S> = half.iter().map(|&x| -x).collect();
    all.push(S::zero());
    all.extend(half);
    all.retain(|x| x.abs() <= pi);
    all.push(-pi);
    sort_dedup(&mut all);
    all
}

/// Weighted `alpha` nodes integrating `min(K(r, ·), n) / 2pi` over `(-pi, pi]`.
pub fn alpha_nodes<S: Real>(
    r: S,
    gamma: S,
    n: S,
    q: &QuadratureSettings<S>,
) -> Result<Vec<(S, S)>, QuadratureError> {
    let f = |a: S| kernel_weight(r, a, gamma, Some(n)) / S::TAU();
    let part = adaptive_partition(f, &alpha_breaks(r, gamma, n), q)?;
    Ok(part
        .nodes()
        .into_iter()
        .map(|(a, w)| (a, w * f(a)))
        .filter(|&(_, w)| w > S::zero())
        .collect())
}

/// Assemble the truncated radial generator on `grid`.
pub fn assemble_generator<S: Real>(
    grid: Arc<RadialGrid<S>>,
    beta: &AngularCrossSection<S>,
    params: &ModelParams<S>,
    settings: &GeneratorSettings<S>,
) -> Result<GeneratorMatrix<S>, SolverError> {
    params.validate()?;
    settings.quadrature.validate()?;
    let n_cells = grid.n_cells();
    let n_states = n_cells + 2;
    let overflow = n_states - 1;
    let thetas = beta.theta_nodes(settings.density_nodes);
    let n = params.trunc_n;

    let under_resolved = n > S::zero() && grid.finest() > n.powf(params.gamma.recip());
    if under_resolved {
        log::warn!(
            "finest cell {} is wider than the truncation scale n^(1/gamma) = {}",
            grid.finest(),
            n.powf(params.gamma.recip())
        );
    }

    let source_radius = |i: usize| -> Option<S> {
        match i {
            0 => Some(S::one()),
            i if i <= n_cells => Some(grid.mids()[i - 1]),
            _ => None,
        }
    };

    let rows: Vec<(Vec<(usize, S)>, usize)> = (0..n_states)
        .into_par_iter()
        .map(|i| -> Result<(Vec<(usize, S)>, usize), SolverError> {
            let r = match source_radius(i) {
                Some(r) if n > S::zero() => r,
                _ => return Ok((Vec::new(), 0)),
            };
            let nodes = alpha_nodes(r, params.gamma, n, &settings.quadrature)?;
            let mut acc = vec![S::zero(); n_states];
            for &(theta, wt) in &thetas {
                for &(alpha, wa) in &nodes {
                    let w = wt * wa;
                    match grid.deposit_weights(post_collision_radius(r, theta, alpha)) {
                        DepositTarget::Overflow => acc[overflow] += w,
                        DepositTarget::Cells { first, second } => {
                            acc[first.0 + 1] += w * first.1;
                            if let Some((j, f)) = second {
                                acc[j + 1] += w * f;
                            }
                        }
                    }
                }
            }
            acc[i] = S::zero();
            let row = acc
                .into_iter()
                .enumerate()
                .filter(|&(_, q)| q > S::zero())
                .collect();
            Ok((row, nodes.len() * thetas.len()))
        })
        .collect::<Result<_, _>>()?;

    let nodes_per_source = rows.iter().map(|r| r.1).collect();
    let mut m = GeneratorMatrix::from_rows(grid, rows.into_iter().map(|r| r.0).collect());
    m.nodes_per_source = nodes_per_source;
    m.theta_nodes = thetas.len();
    m.under_resolved = under_resolved;
    Ok(m)
}

/// A measure at a recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    pub t: S,
    pub measure: RadialMeasure<S>,
    /// Particles that never jumped (Monte Carlo only).
    pub survivors: Option<u64>,
}

/// Output of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub snapshots: Vec<Snapshot<S>>,
    /// `(t, atom mass at 1)` at every internal step.
    pub atom_series: Vec<(S, S)>,
    /// `∫_0^T lambda_t dt` over the horizon.
    pub time_integral: RadialMeasure<S>,
    pub horizon: S,
}

impl<S: Real> Trajectory<S> {
    /// Trapezoid rule on the recorded atom series.
    pub fn atom_time_integral(&self) -> S {
        self.atom_series
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * S::lit(0.5))
            .sum()
    }

    pub fn final_measure(&self) -> Option<&RadialMeasure<S>> {
        self.snapshots.last().map(|s| &s.measure)
    }

    /// One row per snapshot: `t,atom1_mass,atom0_mass,overflow,first_moment`,
    /// then `window_mass_eps{k}` for each entry of `window_eps` (1-based),
    /// then `survivors` if every snapshot carries a count.
    pub fn to_csv(&self, window_eps: &[S]) -> String {
        let with_survivors = self.snapshots.iter().all(|s| s.survivors.is_some());
        let mut out = String::from("t,atom1_mass,atom0_mass,overflow,first_moment");
        for k in 1..=window_eps.len() {
            out.push_str(&format!(",window_mass_eps{k}"));
        }
        if with_survivors {
            out.push_str(",survivors");
        }
        out.push('\n');
        for s in &self.snapshots {
            let m = &s.measure;
            let mut row: Vec<String> = [s.t, m.atom_at_1, m.atom_at_0, m.overflow, m.first_moment()]
                .iter()
                .map(|x| sig17(x.as_f64()))
                .collect();
            row.extend(window_eps.iter().map(|&e| sig17(m.window_mass(e).as_f64())));
            if let (true, Some(n)) = (with_survivors, s.survivors) {
                row.push(n.to_string());
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Check that snapshot times are sorted and within `[0, horizon]`.
pub fn validate_times<S: Real>(times: &[S], horizon: S) -> Result<(), SolverError> {
    let ok = !times.is_empty()
        && times.windows(2).all(|w| w[1] > w[0])
        && times[0] >= S::zero()
        && *times.last().unwrap() <= horizon;
    if ok {
        Ok(())
    } else {
        Err(SolverError::SnapshotTimes(format!("{times:?}")))
    }
}

fn to_state<S: Real>(m: &RadialMeasure<S>) -> Vec<S> {
    let mut x = Vec::with_capacity(m.cells.len() + 2);
    x.push(m.atom_at_1);
    x.extend_from_slice(&m.cells);
    x.push(m.overflow);
    x
}

fn from_state<S: Real>(x: &[S], template: &RadialMeasure<S>) -> RadialMeasure<S> {
    let n = x.len();
    let mut m = template.clone();
    m.atom_at_1 = x[0];
    m.cells.copy_from_slice(&x[1..n - 1]);
    m.overflow = x[n - 1];
    m
}

/// Explicit Euler steps `x ← x + dt x Q`. Each interval between snapshots is
/// split into equal steps no longer than `dt_max`; `dt_max = None` uses
/// `positivity_factor / max_out_rate`.
pub fn evolve<S: Real>(
    lambda0: &RadialMeasure<S>,
    q: &GeneratorMatrix<S>,
    dt_max: Option<S>,
    times: &[S],
    params: &ModelParams<S>,
) -> Result<Trajectory<S>, SolverError> {
    if lambda0.grid().edges() != q.grid().edges() {
        return Err(SolverError::GridMismatch);
    }
    validate_times(times, params.horizon)?;
    let rate = q.max_out_rate();
    let bound = if rate > S::zero() {
        params.positivity_factor / rate
    } else {
        S::infinity()
    };
    let dt_max = match dt_max {
        Some(dt) if dt > bound => {
            return Err(SolverError::StepTooLarge {
                dt: dt.as_f64(),
                bound: bound.as_f64(),
            })
        }
        Some(dt) => dt,
        None => bound,
    };

    let mut x = to_state(lambda0);
    let initial_mass: S = x.iter().copied().sum();
    let mut integral = vec![S::zero(); x.len()];
    let mut t = S::zero();
    let mut snapshots = Vec::with_capacity(times.len());
    let mut atom_series = vec![(t, x[0])];
    let horizon = *times.last().unwrap();
    let mut stops: Vec<S> = times.to_vec();
    if stops[0] != S::zero() {
        stops.insert(0, S::zero());
    }
    if times[0] == S::zero() {
        snapshots.push(Snapshot {
            t,
            measure: lambda0.clone(),
            survivors: None,
        });
    }

    for w in stops.windows(2) {
        let span = w[1] - w[0];
        let steps = if dt_max.is_finite() {
            (span / dt_max).ceil().to_usize().unwrap_or(1).max(1)
        } else {
            1
        };
        let dt = span / S::from_usize_lossy(steps);
        for k in 0..steps {
            let dx = q.apply(&x);
            let next: Vec<S> = x.iter().zip(&dx).map(|(&a, &d)| a + dt * d).collect();
            for (acc, (&a, &b)) in integral.iter_mut().zip(x.iter().zip(&next)) {
                *acc += dt * S::lit(0.5) * (a + b);
            }
            x = next;
            t = if k + 1 == steps {
                w[1]
            } else {
                w[0] + dt * S::from_usize_lossy(k + 1)
            };
            if let Some((state, &value)) = x
                .iter()
                .enumerate()
                .find(|&(_, &v)| v < -S::lit(1e-15))
            {
                return Err(SolverError::Positivity {
                    t: t.as_f64(),
                    state,
                    value: value.as_f64(),
                });
            }
            let drift = x.iter().copied().sum::<S>() - initial_mass;
            if drift.abs() > S::lit(1e-8) {
                return Err(SolverError::MassDrift {
                    t: t.as_f64(),
                    drift: drift.as_f64(),
                });
            }
            atom_series.push((t, x[0]));
        }
        snapshots.push(Snapshot {
            t: w[1],
            measure: from_state(&x, lambda0),
            survivors: None,
        });
    }
    let mut time_integral = from_state(&integral, lambda0);
    time_integral.atom_at_0 = lambda0.atom_at_0 * horizon;
    Ok(Trajectory {
        snapshots,
        atom_series,
        time_integral,
        horizon,
    })
}
