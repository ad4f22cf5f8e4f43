//! Execute a configured experiment and write its artifact directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lbsoft::cross_section::AngularCrossSection;
use lbsoft::diagnostics::truncation::default_radii;
use lbsoft::diagnostics::{
    fit_loglog, ob1_report, rate_growth, riesz_signature, truncation_scan, vp_checks, DiagnosticsError,
    DiagnosticsReport, WindowScan,
};
use lbsoft::geometry::ModelParams;
use lbsoft::kernel_integrals::truncated_rate;
use lbsoft::quadrature::QuadratureSettings;
use lbsoft::radial_measure::{sig17, RadialGrid, RadialMeasure};
use lbsoft::solver_det::{assemble_generator, evolve, GeneratorMatrix, SolverError, Trajectory};
use lbsoft::solver_mc::{simulate, McError, McSettings};
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig, Mode};
use crate::report::{manifest_json, report_json, sha256_hex, to_text};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("incompatible runs: {0}")]
    Incompatible(String),
    #[error("{0}")]
    Tolerance(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Incompatible(_) => 2,
            Self::Numerical(_) => 3,
            Self::Tolerance(_) | Self::Io { .. } => 1,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn solver_err(e: SolverError) -> CliError {
    match e {
        SolverError::StepTooLarge { .. } => ConfigError {
            location: "validation".into(),
            field: "solver.dt".into(),
            detail: e.to_string(),
        }
        .into(),
        SolverError::SnapshotTimes(_) => ConfigError {
            location: "validation".into(),
            field: "snapshots.times".into(),
            detail: e.to_string(),
        }
        .into(),
        _ => CliError::Numerical(e.to_string()),
    }
}

fn mc_err(e: McError) -> CliError {
    match e {
        McError::Solver(s) => solver_err(s),
        McError::Pool(_) => CliError::Numerical(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

fn diag_err(e: DiagnosticsError) -> CliError {
    CliError::Numerical(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; `None` uses the global pool. Never changes outputs.
    pub workers: Option<usize>,
    /// Directory for cached generator matrices; `None` disables caching.
    pub cache: Option<PathBuf>,
}

impl RunOptions {
    /// Cache next to the output directory, in `.lbsoft-cache`.
    pub fn with_default_cache(out: PathBuf, workers: Option<usize>) -> Self {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        Self {
            out,
            workers,
            cache: Some(parent.join(".lbsoft-cache")),
        }
    }
}

/// Cache key of a generator: grid edges, `beta`, `gamma`, `n` and the
/// assembly settings, all by bit pattern.
fn generator_key(grid: &RadialGrid<f64>, cfg: &ExperimentConfig, trunc_n: f64) -> String {
    let bits = |xs: &[f64]| xs.iter().map(|x| format!("{:016x}", x.to_bits())).collect::<Vec<_>>().join(",");
    let mut text = String::from("lbsoft-generator-v1\n");
    text.push_str(&format!("edges {}\n", bits(grid.edges())));
    for &(t, w) in &cfg.beta_atoms {
        text.push_str(&format!("atom {}\n", bits(&[t, w])));
    }
    for &(a, b, c) in &cfg.beta_density {
        text.push_str(&format!("density {}\n", bits(&[a, b, c])));
    }
    text.push_str(&format!(
        "gamma {}\nn {}\nnodes {}\nrel_tol {}\nmax_subdivisions {}\n",
        bits(&[cfg.gamma]),
        bits(&[trunc_n]),
        cfg.density_nodes,
        bits(&[cfg.rel_tol]),
        cfg.max_subdivisions
    ));
    sha256_hex(text.as_bytes())
}

/// Load the generator from the cache or assemble and store it. Returns the
/// matrix and the digest of its serialized form.
fn generator(
    cfg: &ExperimentConfig,
    grid: &Arc<RadialGrid<f64>>,
    beta: &AngularCrossSection<f64>,
    params: &ModelParams<f64>,
    cache: Option<&Path>,
) -> Result<(GeneratorMatrix<f64>, String), CliError> {
    let key = generator_key(grid, cfg, params.trunc_n);
    let path = cache.map(|d| d.join(format!("{key}.bin")));
    if let Some(p) = &path {
        if let Ok(bytes) = std::fs::read(p) {
            match GeneratorMatrix::from_bytes(grid.clone(), &bytes) {
                Ok(m) => {
                    log::info!("generator loaded from {}", p.display());
                    return Ok((m, sha256_hex(&bytes)));
                }
                Err(e) => log::warn!("ignoring cached generator {}: {e}", p.display()),
            }
        }
    }
    let m = assemble_generator(grid.clone(), beta, params, &cfg.generator_settings()?).map_err(solver_err)?;
    let bytes = m.to_bytes();
    if let (Some(p), Some(dir)) = (&path, cache) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tmp = p.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, &bytes).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, p).map_err(io_err(p))?;
    }
    Ok((m, sha256_hex(&bytes)))
}

fn is_artifact(name: &str) -> bool {
    name == "config.resolved" || name.ends_with(".csv") || name.ends_with(".json")
}

/// Create `dir` and drop artifacts of an earlier run.
fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))?.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type().map(|t| t.is_file()).unwrap_or(false) && is_artifact(&name) {
            std::fs::remove_file(entry.path()).map_err(io_err(&entry.path()))?;
        }
    }
    Ok(())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(io_err(&p))
}

pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t}.csv")
}

fn curves_csv(rep: &DiagnosticsReport) -> String {
    let mut out = String::from("curve,x,y\n");
    for c in &rep.curves {
        for (x, y) in c.x.iter().zip(&c.y) {
            out.push_str(&format!("{},{},{}\n", c.name, sig17(*x), sig17(*y)));
        }
    }
    out
}

/// Checks and measured constants attached to any trajectory.
fn trajectory_report(
    cfg: &ExperimentConfig,
    traj: &Trajectory<f64>,
    beta: &AngularCrossSection<f64>,
    params: &ModelParams<f64>,
    q: &QuadratureSettings<f64>,
) -> Result<DiagnosticsReport, CliError> {
    let mut rep = DiagnosticsReport::default();
    let drift = traj
        .snapshots
        .iter()
        .map(|s| (s.measure.total_mass() - 1.0).abs())
        .fold(0.0, f64::max);
    let floor = traj
        .snapshots
        .iter()
        .map(|s| s.measure.min_component())
        .fold(f64::INFINITY, f64::min);
    rep.check("mass_conserved", drift <= 1e-10, format!("max |mass - 1| = {drift:e}"));
    rep.check("positivity", floor >= -1e-15, format!("min component = {floor:e}"));

    let rate = truncated_rate(1.0, params, beta.total_mass(), q).map_err(|e| CliError::Numerical(e.to_string()))?;
    rep.constant("atom_rate", rate, "R_n(1) by quadrature");
    let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
    let atoms: Vec<f64> = traj.snapshots.iter().map(|s| s.measure.atom_at_1).collect();
    let deviation = times
        .iter()
        .zip(&atoms)
        .map(|(t, p)| (p - (-rate * t).exp()).abs())
        .fold(0.0, f64::max);
    rep.constant("atom_decay_deviation", deviation, "max_t |p(t) - exp(-R_n(1) t)|");
    rep.curve("atom_mass", times.clone(), atoms);
    if traj.snapshots.iter().all(|s| s.survivors.is_some()) {
        let n = cfg.particles;
        for s in &traj.snapshots {
            let p = (-rate * s.t).exp();
            let observed = s.survivors.unwrap_or(0) as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            rep.check(
                &format!("survivors_t{}", s.t),
                (observed - p).abs() <= 3.0 * sd,
                format!("{observed} vs exp(-R t) = {p} (3 sd = {:e})", 3.0 * sd),
            );
        }
    }

    let ob1 = ob1_report(traj, &cfg.eps_grid, params.gamma, q).map_err(|e| CliError::Numerical(e.to_string()))?;
    let kappa_t = ob1.rows.iter().map(|r| r.kappa).fold(0.0, f64::max);
    rep.constant("kappa_T", kappa_t, "smallest kappa satisfying the atom balance on the whole eps grid");
    rep.constant("ob1_lhs", ob1.lhs, "∫_0^T lambda_t({1}) dt");
    rep.constant("ob1_lhs_trapezoid", ob1.lhs_trapezoid, "trapezoid rule on the atom series");
    rep.constant("ob1_stable_eps_lo", ob1.stable_range.0, "widest eps range with kappa spread <= 3");
    rep.constant("ob1_stable_eps_hi", ob1.stable_range.1, "widest eps range with kappa spread <= 3");
    rep.check(
        "ob1_kappa_stable",
        ob1.stable(),
        format!("max/min kappa = {:.4} over {} eps values", ob1.spread, ob1.rows.len()),
    );
    let eps: Vec<f64> = ob1.rows.iter().map(|r| r.eps).collect();
    rep.curve("ob1_kappa", eps.clone(), ob1.rows.iter().map(|r| r.kappa).collect());
    rep.curve("ob1_off_window", eps.clone(), ob1.rows.iter().map(|r| r.off_window).collect());
    let first: Vec<f64> = ob1.rows.iter().map(|r| r.first_term).collect();
    if eps.len() >= 2 {
        rep.fit_check(fit_loglog("ob1_first_term_slope", &eps, &first), params.gamma.abs() - 1.0, 1e-9);
    }

    rep.merge(riesz_signature(&traj.snapshots, params.gamma, q).map_err(diag_err)?);
    if let Some(last) = traj.final_measure() {
        let density = last.density_part();
        if density.total_mass() > 0.0 {
            rep.merge(vp_checks("vp_final_density", &density).map_err(diag_err)?);
        }
    }
    Ok(rep)
}

/// Write trajectory, snapshots and report for a det or mc run.
fn write_trajectory(dir: &Path, cfg: &ExperimentConfig, traj: &Trajectory<f64>) -> Result<(), CliError> {
    write(dir, "trajectory.csv", &traj.to_csv(&cfg.window_eps))?;
    for s in &traj.snapshots {
        write(dir, &snapshot_name(s.t), &s.measure.to_csv())?;
    }
    Ok(())
}

fn diagnose(
    cfg: &ExperimentConfig,
    beta: &AngularCrossSection<f64>,
    params: &ModelParams<f64>,
    q: &QuadratureSettings<f64>,
    grid: &Arc<RadialGrid<f64>>,
) -> Result<DiagnosticsReport, CliError> {
    let mut rep = WindowScan {
        beta,
        gamma: params.gamma,
        eps_a: cfg.exit_eps.clone(),
        eps_b: cfg.entry_eps.clone(),
        r_near: cfg.entry_radius,
        r_far: cfg.far_radius,
        density_nodes: cfg.density_nodes,
    }
    .run(q)
    .map_err(diag_err)?;
    rep.merge(rate_growth(params, beta, &cfg.n_list, q).map_err(diag_err)?);

    let radii = default_radii(cfg.scan_levels, cfg.grid.r_max, cfg.scan_uniform);
    let scan = truncation_scan(cfg.phi, &radii, &cfg.n_list, beta, params.gamma, cfg.density_nodes, q)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let g = params.gamma;
    rep.fit_check(scan.fit.clone(), (2.0 + g) / (2.0 * g), 0.15);
    rep.check(
        &format!("truncation_{}_bound", cfg.phi.name()),
        scan.bound_holds(),
        format!("|D_n(r)| <= Lambda |phi|_lip n^((2+gamma)/(2gamma)) h(r) on {} radii", radii.len()),
    );
    rep.check(
        &format!("truncation_{}_monotone", cfg.phi.name()),
        scan.monotone(),
        format!("sup_r |D_n| = {:?} at r = {:?}", scan.sup, scan.argmax),
    );
    rep.curve(&format!("truncation_{}_sup", cfg.phi.name()), scan.n_list.clone(), scan.sup.clone());
    for (n, vals) in scan.n_list.iter().zip(&scan.values) {
        rep.curve(&format!("truncation_{}_n{n}", cfg.phi.name()), radii.clone(), vals.clone());
    }

    let mut origin = RadialMeasure::zero(grid.clone());
    origin.atom_at_0 = 1.0;
    rep.merge(vp_checks("vp_origin", &origin).map_err(diag_err)?);
    Ok(rep)
}

fn scan(
    dir: &Path,
    cfg: &ExperimentConfig,
    beta: &AngularCrossSection<f64>,
    params: &ModelParams<f64>,
    q: &QuadratureSettings<f64>,
    grid: &Arc<RadialGrid<f64>>,
    cache: Option<&Path>,
) -> Result<(DiagnosticsReport, Vec<(String, String)>), CliError> {
    let mut rep = rate_growth(params, beta, &cfg.n_list, q).map_err(diag_err)?;
    let mut runs = Vec::new();
    let mut digests = Vec::new();
    for &n in &cfg.n_list {
        let p = params.with_trunc(n);
        let (m, digest) = generator(cfg, grid, beta, &p, cache)?;
        let traj = evolve(&RadialMeasure::circle(grid.clone()), &m, cfg.dt, &cfg.snapshot_times, &p).map_err(solver_err)?;
        write(dir, &format!("trajectory_n{n}.csv"), &traj.to_csv(&cfg.window_eps))?;
        digests.push((format!("generator_n{n}"), digest));
        runs.push(traj);
    }
    let mut table = String::from("n,atom_rate,atom_occupation_closed_form,atom_occupation,w1_to_next_final\n");
    let lambda = beta.total_mass();
    let mut numeric = Vec::new();
    for (i, (&n, traj)) in cfg.n_list.iter().zip(&runs).enumerate() {
        let rate = truncated_rate(1.0, &params.with_trunc(n), lambda, q).map_err(|e| CliError::Numerical(e.to_string()))?;
        let closed = -(-rate * params.horizon).exp_m1() / rate;
        let w1 = match runs.get(i + 1) {
            Some(next) => {
                let a = traj.final_measure().expect("snapshots");
                a.wasserstein1(next.final_measure().expect("snapshots"))
                    .map_err(|e| CliError::Numerical(e.to_string()))?
            }
            None => f64::NAN,
        };
        numeric.push(traj.time_integral.atom_at_1);
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            sig17(n),
            sig17(rate),
            sig17(closed),
            sig17(traj.time_integral.atom_at_1),
            sig17(w1)
        ));
    }
    write(dir, "scan.csv", &table)?;
    rep.curve("atom_occupation_numeric", cfg.n_list.clone(), numeric);

    // W1 between successive n at each post-initial snapshot
    let later: Vec<usize> = (0..cfg.snapshot_times.len()).filter(|&k| cfg.snapshot_times[k] > 0.0).collect();
    let mut all_decrease = true;
    for &k in &later {
        let dists: Vec<f64> = runs
            .windows(2)
            .map(|w| w[0].snapshots[k].measure.wasserstein1(&w[1].snapshots[k].measure))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        all_decrease &= dists.windows(2).all(|d| d[1] < d[0]);
        rep.curve(
            &format!("w1_successive_t{}", cfg.snapshot_times[k]),
            cfg.n_list[..cfg.n_list.len() - 1].to_vec(),
            dists,
        );
    }
    rep.check(
        "scan_w1_decreasing",
        all_decrease,
        "W1 between successive truncation levels decreases at every t > 0",
    );
    Ok((rep, digests))
}

/// Outcome of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub all_pass: bool,
}

/// Run `cfg` and write its artifacts into `opts.out`.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| CliError::Numerical(format!("worker pool: {e}")))?
            .install(|| run_inner(cfg, opts)),
        None => run_inner(cfg, opts),
    }
}

fn run_inner(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let dir = opts.out.as_path();
    let cache = opts.cache.as_deref();
    let grid = Arc::new(cfg.radial_grid()?);
    let beta = cfg.beta()?;
    let params = cfg.params()?;
    let q = cfg.quadrature()?;
    prepare_out(dir)?;
    let echo = cfg.echo();
    write(dir, "config.resolved", &echo)?;

    let bits = |xs: &[f64]| xs.iter().map(|x| format!("{:016x}", x.to_bits())).collect::<Vec<_>>().join(",");
    let mut inputs: BTreeMap<&str, Value> = BTreeMap::new();
    inputs.insert("config", json!(sha256_hex(echo.as_bytes())));
    inputs.insert("grid", json!(sha256_hex(bits(grid.edges()).as_bytes())));
    let beta_text: String = cfg
        .beta_atoms
        .iter()
        .map(|&(a, b)| format!("atom {}\n", bits(&[a, b])))
        .chain(cfg.beta_density.iter().map(|&(a, b, c)| format!("density {}\n", bits(&[a, b, c]))))
        .collect();
    inputs.insert("beta", json!(sha256_hex(beta_text.as_bytes())));

    log::info!("mode {} into {}", cfg.mode.as_str(), dir.display());
    let report = match cfg.mode {
        Mode::Det => {
            let (m, digest) = generator(cfg, &grid, &beta, &params, cache)?;
            if m.under_resolved {
                log::warn!("grid is coarser than the kernel cap scale n^(1/gamma)");
            }
            inputs.insert("generator", json!(digest));
            let traj = evolve(&RadialMeasure::circle(grid.clone()), &m, cfg.dt, &cfg.snapshot_times, &params)
                .map_err(|e| {
                    log::error!("deterministic solver stopped: {e}");
                    solver_err(e)
                })?;
            write_trajectory(dir, cfg, &traj)?;
            trajectory_report(cfg, &traj, &beta, &params, &q)?
        }
        Mode::Mc => {
            let settings = McSettings {
                particles: cfg.particles,
                seed: cfg.seed,
                workers: None,
            };
            let traj = simulate(&settings, &cfg.snapshot_times, grid.clone(), &params, &beta).map_err(|e| {
                log::error!("Monte Carlo stopped: {e}");
                mc_err(e)
            })?;
            write_trajectory(dir, cfg, &traj)?;
            trajectory_report(cfg, &traj, &beta, &params, &q)?
        }
        Mode::Diagnose => diagnose(cfg, &beta, &params, &q, &grid)?,
        Mode::Scan => {
            let (rep, digests) = scan(dir, cfg, &beta, &params, &q, &grid, cache)?;
            let all: BTreeMap<String, Value> = digests.into_iter().map(|(k, v)| (k, json!(v))).collect();
            inputs.insert("generators", json!(all));
            rep
        }
    };
    let inputs_digest = sha256_hex(to_text(&json!(inputs)).as_bytes());
    write(dir, "report.json", &to_text(&report_json(&report, &inputs_digest)))?;
    write(dir, "curves.csv", &curves_csv(&report))?;
    for c in report.checks.iter().filter(|c| !c.pass) {
        log::warn!("check {} failed: {}", c.name, c.detail);
    }
    let manifest = manifest_json(dir, cfg.mode.as_str(), inputs).map_err(io_err(dir))?;
    write(dir, "manifest.json", &to_text(&manifest))?;
    Ok(RunSummary {
        out: dir.to_path_buf(),
        all_pass: report.all_pass(),
    })
}
