//! The radius distribution: an atom at `r = 1`, a tripwire atom at `r = 0`,
//! piecewise-uniform cell masses on a grid refined toward the circle, and an
//! overflow bucket beyond `r_max`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::geometry::Velocity;
use crate::scalar::Real;

/// Grid construction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<S> {
    /// Number of geometric refinement levels `J` toward `r = 1`.
    pub levels: usize,
    /// Largest geometric offset `eps_max`; offsets are `eps_max * 2^-j`.
    pub eps_max: S,
    /// Background cells per unit radius.
    pub background: usize,
    pub r_max: S,
}

impl<S: Real> Default for GridSpec<S> {
    fn default() -> Self {
        Self {
            levels: 24,
            eps_max: S::lit(0.5),
            background: 128,
            r_max: S::lit(4.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("grid edges must start at 0, increase strictly and contain 1")]
    BadGrid,
    #[error("grid.{field} is invalid: {detail}")]
    BadGridSpec { field: &'static str, detail: String },
    #[error("negative mass {0}")]
    NegativeMass(f64),
    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("measures live on different grids")]
    GridMismatch,
    #[error("radius {0} carries an atom and has no planar density")]
    AtomAtRadius(f64),
    #[error("snapshot parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

/// Cell edges from 0 to `r_max`, with 1 as an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid<S> {
    edges: Vec<S>,
    mids: Vec<S>,
    one_edge: usize,
}

/// Where [`RadialGrid::deposit_weights`] sends mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepositTarget<S> {
    Cells {
        first: (usize, S),
        second: Option<(usize, S)>,
    },
    Overflow,
}

impl<S: Real> RadialGrid<S> {
    pub fn build(spec: &GridSpec<S>) -> Result<Self, MeasureError> {
        let bad = |field, detail: String| MeasureError::BadGridSpec { field, detail };
        if !(spec.r_max > S::lit(2.0) && spec.r_max.is_finite()) {
            return Err(bad("r_max", format!("{} must exceed 2", spec.r_max)));
        }
        if spec.background == 0 {
            return Err(bad("background", "must be >= 1".into()));
        }
        if !(spec.eps_max > S::zero() && spec.eps_max < S::one()) {
            return Err(bad("eps_max", format!("{} must lie in (0, 1)", spec.eps_max)));
        }
        if spec.levels > 48 {
            return Err(bad("levels", format!("{} exceeds 48", spec.levels)));
        }
        let bg = S::from_usize_lossy(spec.background);
        let n_bg = (spec.r_max * bg).ceil().to_usize().expect("finite r_max");
        let mut edges: Vec<S> = (0..=n_bg).map(|k| S::from_usize_lossy(k) / bg).collect();
        edges.retain(|&e| e < spec.r_max);
        edges.push(spec.r_max);
        for j in 0..=spec.levels {
            let off = spec.eps_max * S::lit(0.5).powi(j as i32);
            edges.push(S::one() - off);
            edges.push(S::one() + off);
        }
        edges.push(S::one());
        edges.retain(|&e| e >= S::zero() && e <= spec.r_max);
        crate::quadrature::sort_dedup(&mut edges);
        // merge edges closer than a few ulps, keeping 0, 1 and r_max
        let mut merged: Vec<S> = Vec::with_capacity(edges.len());
        for e in edges {
            if let Some(&last) = merged.last() {
                let tiny = S::lit(1e-14) * e.max(S::one());
                if e - last < tiny {
                    if e == S::one() || e == spec.r_max {
                        merged.pop();
                    } else {
                        continue;
                    }
                }
            }
            merged.push(e);
        }
        Self::from_edges(merged)
    }

    pub fn from_edges(edges: Vec<S>) -> Result<Self, MeasureError> {
        if edges.len() < 3 || edges[0] != S::zero() || !edges.windows(2).all(|w| w[1] > w[0]) {
            return Err(MeasureError::BadGrid);
        }
        let one_edge = edges.iter().position(|&e| e == S::one()).ok_or(MeasureError::BadGrid)?;
        if one_edge + 1 >= edges.len() {
            return Err(MeasureError::BadGrid);
        }
        let mids = edges.windows(2).map(|w| (w[0] + w[1]) * S::lit(0.5)).collect();
        Ok(Self { edges, mids, one_edge })
    }

    pub fn edges(&self) -> &[S] {
        &self.edges
    }

    pub fn mids(&self) -> &[S] {
        &self.mids
    }

    pub fn n_cells(&self) -> usize {
        self.mids.len()
    }

    pub fn r_max(&self) -> S {
        *self.edges.last().unwrap()
    }

    pub fn cell(&self, i: usize) -> (S, S) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn width(&self, i: usize) -> S {
        self.edges[i + 1] - self.edges[i]
    }

    /// Index of the edge at `r = 1`; cell `one_edge - 1` ends at 1.
    pub fn one_edge(&self) -> usize {
        self.one_edge
    }

    /// Largest cell width (the background resolution).
    pub fn spacing(&self) -> S {
        (0..self.n_cells()).map(|i| self.width(i)).fold(S::zero(), S::max)
    }

    pub fn finest(&self) -> S {
        (0..self.n_cells()).map(|i| self.width(i)).fold(S::infinity(), S::min)
    }

    /// Cell containing `r` on `[lo, hi)`, or `None` outside `[0, r_max)`.
    pub fn cell_of(&self, r: S) -> Option<usize> {
        if !(r >= S::zero() && r < self.r_max()) {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= r) - 1)
    }

    /// Mean-preserving split of a unit mass at `r` between the two cells
    /// whose midpoints bracket `r`.
    pub fn deposit_weights(&self, r: S) -> DepositTarget<S> {
        debug_assert!(r >= S::zero(), "negative radius {r}");
        if r >= self.r_max() {
            return DepositTarget::Overflow;
        }
        let n = self.mids.len();
        if r <= self.mids[0] {
            return DepositTarget::Cells {
                first: (0, S::one()),
                second: None,
            };
        }
        if r >= self.mids[n - 1] {
            return DepositTarget::Cells {
                first: (n - 1, S::one()),
                second: None,
            };
        }
        let k = self.mids.partition_point(|&c| c <= r) - 1;
        let (c0, c1) = (self.mids[k], self.mids[k + 1]);
        let w1 = (r - c0) / (c1 - c0);
        if w1 == S::zero() {
            return DepositTarget::Cells {
                first: (k, S::one()),
                second: None,
            };
        }
        DepositTarget::Cells {
            first: (k, S::one() - w1),
            second: Some((k + 1, w1)),
        }
    }

    /// Content fingerprint of the edges (bit patterns).
    pub fn edge_bits(&self) -> Vec<u64> {
        self.edges.iter().map(|e| e.as_f64().to_bits()).collect()
    }
}

/// Radius distribution on a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMeasure<S> {
    grid: Arc<RadialGrid<S>>,
    pub atom_at_1: S,
    /// Tripwire: no dynamics writes here.
    pub atom_at_0: S,
    pub cells: Vec<S>,
    pub overflow: S,
}

impl<S: Real> RadialMeasure<S> {
    pub fn zero(grid: Arc<RadialGrid<S>>) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            atom_at_1: S::zero(),
            atom_at_0: S::zero(),
            cells: vec![S::zero(); n],
            overflow: S::zero(),
        }
    }

    /// `delta_1`: the radial image of the uniform law on the unit circle.
    pub fn circle(grid: Arc<RadialGrid<S>>) -> Self {
        let mut m = Self::zero(grid);
        m.atom_at_1 = S::one();
        m
    }

    /// Uniform density of total mass `mass` on `[lo, hi]`, exact on cells.
    pub fn uniform(grid: Arc<RadialGrid<S>>, lo: S, hi: S, mass: S) -> Self {
        let mut m = Self::zero(grid);
        m.add_uniform(lo, hi, mass);
        m
    }

    pub fn add_uniform(&mut self, lo: S, hi: S, mass: S) {
        let span = hi - lo;
        for i in 0..self.cells.len() {
            let (a, b) = self.grid.cell(i);
            let overlap = b.min(hi) - a.max(lo);
            if overlap > S::zero() {
                self.cells[i] += mass * overlap / span;
            }
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid<S>> {
        &self.grid
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.edges == other.grid.edges
    }

    pub fn total_mass(&self) -> S {
        self.atom_at_1 + self.atom_at_0 + self.cells.iter().copied().sum::<S>() + self.overflow
    }

    /// First moment with overflow counted at `r_max` (a lower bound).
    pub fn first_moment(&self) -> S {
        self.atom_at_1
            + self
                .cells
                .iter()
                .zip(self.grid.mids())
                .map(|(&m, &c)| m * c)
                .sum::<S>()
            + self.overflow * self.grid.r_max()
    }

    pub fn min_component(&self) -> S {
        self.cells
            .iter()
            .copied()
            .chain([self.atom_at_1, self.atom_at_0, self.overflow])
            .fold(S::infinity(), S::min)
    }

    /// Add `mass` at radius `r` with the mean-preserving two-cell split.
    pub fn deposit(&mut self, r: S, mass: S) -> Result<(), MeasureError> {
        if mass < S::zero() {
            return Err(MeasureError::NegativeMass(mass.as_f64()));
        }
        match self.grid.deposit_weights(r) {
            DepositTarget::Overflow => self.overflow += mass,
            DepositTarget::Cells { first, second } => {
                self.cells[first.0] += mass * first.1;
                if let Some((j, w)) = second {
                    self.cells[j] += mass * w;
                }
            }
        }
        Ok(())
    }

    /// `lambda({r : |r^2 - 1| <= eps})`, with partial cells counted by
    /// linear fraction. Overflow mass is never in the window.
    pub fn window_mass(&self, eps: S) -> S {
        let one = S::one();
        let d_hi = eps / ((one + eps).sqrt() + one);
        let d_lo = if eps >= one {
            one
        } else {
            eps / (one + (one - eps).sqrt())
        };
        let mut total = self.atom_at_1;
        if eps >= one {
            total += self.atom_at_0;
        }
        let k = self.grid.one_edge();
        for i in (0..k).rev() {
            let (a, b) = self.grid.cell(i);
            let (near, far) = (one - b, one - a);
            if near >= d_lo {
                break;
            }
            let overlap = far.min(d_lo) - near;
            total += self.cells[i] * (overlap / (far - near)).min(one);
        }
        for i in k..self.cells.len() {
            let (a, b) = self.grid.cell(i);
            let (near, far) = (a - one, b - one);
            if near >= d_hi {
                break;
            }
            let overlap = far.min(d_hi) - near;
            total += self.cells[i] * (overlap / (far - near)).min(one);
        }
        total
    }

    /// `∫ |F_a - F_b|` over `[0, r_max]` with CDFs linear inside cells and
    /// jumps at the atoms.
    pub fn wasserstein1(&self, other: &Self) -> Result<S, MeasureError> {
        if !self.same_grid(other) {
            return Err(MeasureError::GridMismatch);
        }
        let (ma, mb) = (self.total_mass(), other.total_mass());
        if (ma - mb).abs() > S::lit(1e-8) {
            return Err(MeasureError::MassMismatch(ma.as_f64(), mb.as_f64()));
        }
        let one_edge = self.grid.one_edge();
        let mut d = self.atom_at_0 - other.atom_at_0;
        let mut acc = S::zero();
        for i in 0..self.cells.len() {
            if i == one_edge {
                d += self.atom_at_1 - other.atom_at_1;
            }
            let w = self.grid.width(i);
            let d1 = d + (self.cells[i] - other.cells[i]);
            let (a0, a1) = (d.abs(), d1.abs());
            acc += if d * d1 >= S::zero() {
                w * (a0 + a1) * S::lit(0.5)
            } else {
                w * (d * d + d1 * d1) / (S::lit(2.0) * (a0 + a1))
            };
            d = d1;
        }
        Ok(acc)
    }

    /// Planar density `lambda(|v|) / (2 pi |v|)`; zero at the origin and
    /// beyond the grid.
    pub fn density_2d(&self, v: Velocity<S>) -> Result<S, MeasureError> {
        let r = v.norm();
        if r == S::zero() {
            return Ok(S::zero());
        }
        if r == S::one() && self.atom_at_1 > S::zero() {
            return Err(MeasureError::AtomAtRadius(1.0));
        }
        match self.grid.cell_of(r) {
            None => Ok(S::zero()),
            Some(i) => Ok(self.cells[i] / (self.grid.width(i) * S::TAU() * r)),
        }
    }

    /// Copy with both atoms removed.
    pub fn density_part(&self) -> Self {
        Self {
            atom_at_1: S::zero(),
            atom_at_0: S::zero(),
            ..self.clone()
        }
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, other: &Self, weight: S) -> Result<(), MeasureError> {
        if !self.same_grid(other) {
            return Err(MeasureError::GridMismatch);
        }
        self.atom_at_1 += weight * other.atom_at_1;
        self.atom_at_0 += weight * other.atom_at_0;
        self.overflow += weight * other.overflow;
        for (a, &b) in self.cells.iter_mut().zip(&other.cells) {
            *a += weight * b;
        }
        Ok(())
    }

    /// Atoms and cell midpoints as a finite point measure `(radius, mass)`;
    /// overflow is placed at `r_max`. Zero masses are dropped.
    pub fn to_points(&self) -> Vec<(S, S)> {
        let mut out = Vec::new();
        if self.atom_at_0 > S::zero() {
            out.push((S::zero(), self.atom_at_0));
        }
        let k = self.grid.one_edge();
        for (i, (&m, &c)) in self.cells.iter().zip(self.grid.mids()).enumerate() {
            if i == k && self.atom_at_1 > S::zero() {
                out.push((S::one(), self.atom_at_1));
            }
            if m > S::zero() {
                out.push((c, m));
            }
        }
        if self.overflow > S::zero() {
            out.push((self.grid.r_max(), self.overflow));
        }
        out
    }

    /// Snapshot CSV: `kind,r_lo,r_hi,mass`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,r_lo,r_hi,mass\n");
        let _ = writeln!(s, "atom,1,1,{}", sig17(self.atom_at_1.as_f64()));
        let _ = writeln!(s, "atom,0,0,{}", sig17(self.atom_at_0.as_f64()));
        for (i, &m) in self.cells.iter().enumerate() {
            let (a, b) = self.grid.cell(i);
            let _ = writeln!(
                s,
                "cell,{},{},{}",
                sig17(a.as_f64()),
                sig17(b.as_f64()),
                sig17(m.as_f64())
            );
        }
        let _ = writeln!(
            s,
            "overflow,{},inf,{}",
            sig17(self.grid.r_max().as_f64()),
            sig17(self.overflow.as_f64())
        );
        s
    }

    /// Parse a snapshot written by [`to_csv`](Self::to_csv). The grid is
    /// rebuilt from the cell rows.
    pub fn from_csv(text: &str) -> Result<Self, MeasureError> {
        let err = |line: usize, detail: &str| MeasureError::Parse {
            line,
            detail: detail.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "kind,r_lo,r_hi,mass")) => {}
            _ => return Err(err(1, "missing header")),
        }
        let (mut a1, mut a0, mut over) = (None, None, None);
        let mut edges: Vec<S> = Vec::new();
        let mut cells: Vec<S> = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err(line_no, "expected 4 fields"));
            }
            let num = |x: &str| -> Result<S, MeasureError> {
                x.parse::<f64>().map(S::lit).map_err(|e| err(line_no, &e.to_string()))
            };
            let mass = num(f[3])?;
            match (f[0], f[1]) {
                ("atom", "1") => a1 = Some(mass),
                ("atom", "0") => a0 = Some(mass),
                ("cell", _) => {
                    let (lo, hi) = (num(f[1])?, num(f[2])?);
                    match edges.last() {
                        None => edges.push(lo),
                        Some(&last) if last != lo => return Err(err(line_no, "cells are not contiguous")),
                        _ => {}
                    }
                    edges.push(hi);
                    cells.push(mass);
                }
                ("overflow", _) => over = Some(mass),
                _ => return Err(err(line_no, "unknown row kind")),
            }
        }
        let grid = Arc::new(RadialGrid::from_edges(edges)?);
        Ok(Self {
            grid,
            atom_at_1: a1.ok_or_else(|| err(0, "missing atom at 1"))?,
            atom_at_0: a0.ok_or_else(|| err(0, "missing atom at 0"))?,
            cells,
            overflow: over.ok_or_else(|| err(0, "missing overflow row"))?,
        })
    }

    /// Rebind to an equal grid so later comparisons can use pointer equality.
    pub fn with_grid(mut self, grid: Arc<RadialGrid<S>>) -> Result<Self, MeasureError> {
        if grid.edges != self.grid.edges {
            return Err(MeasureError::GridMismatch);
        }
        self.grid = grid;
        Ok(self)
    }
}

/// Decimal with 17 significant digits (round-trips every f64).
pub fn sig17(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}
