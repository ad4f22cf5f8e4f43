//! Snapshot-by-snapshot comparison of two run directories.

use std::path::Path;

use lbsoft::radial_measure::RadialMeasure;

use crate::config::{ExperimentConfig, Mode};
use crate::run::{io_err, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub t: f64,
    pub w1: f64,
    /// `atom_b - atom_a` at `r = 1`.
    pub atom_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub tolerance: f64,
}

impl Comparison {
    pub fn max_w1(&self) -> f64 {
        self.rows.iter().map(|r| r.w1).fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.w1 <= self.tolerance)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,w1,atom1_delta,tolerance,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                r.t,
                r.w1,
                r.atom_delta,
                self.tolerance,
                r.w1 <= self.tolerance
            ));
        }
        out
    }
}

/// Snapshot times present in `dir`, sorted.
fn snapshot_times(dir: &Path) -> Result<Vec<f64>, CliError> {
    let mut ts: Vec<f64> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .flatten()
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_prefix("snapshot_t")?.strip_suffix(".csv")?.parse().ok()
        })
        .collect();
    ts.sort_by(f64::total_cmp);
    Ok(ts)
}

fn read_snapshot(dir: &Path, t: f64) -> Result<RadialMeasure<f64>, CliError> {
    let p = dir.join(crate::run::snapshot_name(t));
    let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
    RadialMeasure::from_csv(&text).map_err(|e| CliError::Incompatible(format!("{}: {e}", p.display())))
}

fn particles(dir: &Path) -> Option<usize> {
    let text = std::fs::read_to_string(dir.join("config.resolved")).ok()?;
    let cfg = ExperimentConfig::parse(&text).ok()?;
    (cfg.mode == Mode::Mc).then_some(cfg.particles)
}

/// Compare every snapshot time the two directories share. Without an
/// explicit tolerance, `3/sqrt(N) + 2h` is used when either run is Monte
/// Carlo with `N` particles, and `2h` otherwise.
pub fn compare(a: &Path, b: &Path, w1_tol: Option<f64>) -> Result<Comparison, CliError> {
    let ta = snapshot_times(a)?;
    let tb = snapshot_times(b)?;
    let shared: Vec<f64> = ta.iter().copied().filter(|t| tb.contains(t)).collect();
    if shared.is_empty() {
        return Err(CliError::Incompatible(format!(
            "no common snapshot times ({ta:?} vs {tb:?})"
        )));
    }
    let mut rows = Vec::new();
    let mut spacing = 0.0f64;
    for t in shared {
        let ma = read_snapshot(a, t)?;
        let mb = read_snapshot(b, t)?;
        if ma.grid().edges() != mb.grid().edges() {
            return Err(CliError::Incompatible(format!("grids differ at t = {t}")));
        }
        spacing = spacing.max(ma.grid().spacing());
        let w1 = ma
            .wasserstein1(&mb)
            .map_err(|e| CliError::Incompatible(format!("t = {t}: {e}")))?;
        rows.push(CompareRow {
            t,
            w1,
            atom_delta: mb.atom_at_1 - ma.atom_at_1,
        });
    }
    let tolerance = w1_tol.unwrap_or_else(|| {
        let n = [particles(a), particles(b)].into_iter().flatten().min();
        2.0 * spacing + n.map_or(0.0, |n| 3.0 / (n as f64).sqrt())
    });
    Ok(Comparison { rows, tolerance })
}
