//! Exact event-driven simulation of independent radius-valued particles.
//!
//! Jumps are generated by thinning: a particle at radius `r` proposes events
//! at the envelope rate `Lambda * mass(r)` and accepts each with probability
//! `min(K, n) / envelope`, which realizes the truncated rate exactly without
//! evaluating it.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cross_section::AngularCrossSection;
use crate::geometry::{post_collision_radius, ModelParams, ParamsError};
use crate::kernel_integrals::AlphaEnvelope;
use crate::radial_measure::{MeasureError, RadialGrid, RadialMeasure};
use crate::scalar::Real;
use crate::solver_det::{validate_times, Snapshot, SolverError, Trajectory};

/// Particles per binning chunk. Chunks are merged in index order, which
/// makes the result independent of the number of workers.
pub const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("mc.particles must be >= 1")]
    NoParticles,
    #[error("particle {0} reached r = 0")]
    ReachedOrigin(usize),
    #[error("particle {0} stayed on the circle after its first jump")]
    StuckOnCircle(usize),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Stream of particle `index` under `seed`: ChaCha8 keyed by the seed with
/// the particle index as stream id.
pub fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One proposal of the thinned jump clock at fixed `r`: the waiting time and,
/// if accepted, the post-collision radius. `None` waiting time means the
/// rate is zero.
pub fn next_event<S: Real, R: Rng + ?Sized>(
    r: S,
    params: &ModelParams<S>,
    beta: &AngularCrossSection<S>,
    rng: &mut R,
) -> Option<(S, Option<S>)> {
    let env = AlphaEnvelope::new(r, params.gamma, params.trunc_n);
    let bound = beta.total_mass() * env.mass();
    if !(bound > S::zero()) {
        return None;
    }
    let wait = -S::lit(1.0 - rng.gen::<f64>()).ln() / bound;
    let theta = beta.sample_theta(rng);
    let alpha = env.propose(rng);
    let accept = S::lit(rng.gen::<f64>()) < env.accept_prob(alpha);
    Some((wait, accept.then(|| post_collision_radius(r, theta, alpha))))
}

/// State of one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle<S> {
    pub r: S,
    /// Time the particle has been advanced to.
    pub clock: S,
    pub jumps: u64,
}

impl<S: Real> Particle<S> {
    pub fn on_circle() -> Self {
        Self {
            r: S::one(),
            clock: S::zero(),
            jumps: 0,
        }
    }
}

/// Run a particle from `t` to `t_end`; `occupy(r, duration, jumped)` is
/// called for each constant piece of the path. Returns the radius at `t_end`.
pub fn advance_particle<S: Real, R: Rng + ?Sized, F: FnMut(S, S, bool)>(
    p: &mut Particle<S>,
    t: S,
    t_end: S,
    params: &ModelParams<S>,
    beta: &AngularCrossSection<S>,
    rng: &mut R,
    mut occupy: F,
) -> S {
    let mut now = t;
    p.clock = t_end;
    if params.trunc_n == S::zero() {
        occupy(p.r, t_end - now, p.jumps > 0);
        return p.r;
    }
    loop {
        let Some((wait, jump)) = next_event(p.r, params, beta, rng) else {
            occupy(p.r, t_end - now, p.jumps > 0);
            return p.r;
        };
        let at = now + wait;
        if at > t_end {
            // memoryless clock: the unused proposal is discarded
            occupy(p.r, t_end - now, p.jumps > 0);
            return p.r;
        }
        occupy(p.r, at - now, p.jumps > 0);
        now = at;
        if let Some(r_new) = jump {
            p.r = r_new;
            p.jumps += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub particles: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

struct ChunkResult<S> {
    snapshots: Vec<RadialMeasure<S>>,
    survivors: Vec<u64>,
    occupation: RadialMeasure<S>,
}

fn run_chunk<S: Real>(
    chunk: usize,
    n_total: usize,
    times: &[S],
    grid: &Arc<RadialGrid<S>>,
    params: &ModelParams<S>,
    beta: &AngularCrossSection<S>,
    seed: u64,
) -> Result<ChunkResult<S>, McError> {
    let lo = chunk * CHUNK;
    let hi = (lo + CHUNK).min(n_total);
    let mut snapshots = vec![RadialMeasure::zero(grid.clone()); times.len()];
    let mut survivors = vec![0u64; times.len()];
    let mut occupation = RadialMeasure::zero(grid.clone());
    for idx in lo..hi {
        let mut rng = particle_rng(seed, idx);
        let mut p = Particle::on_circle();
        let mut t = S::zero();
        for (k, &t_k) in times.iter().enumerate() {
            advance_particle(&mut p, t, t_k, params, beta, &mut rng, |r, dur, jumped| {
                if dur <= S::zero() {
                    return;
                }
                if jumped {
                    occupation.deposit(r, dur).expect("positive duration");
                } else {
                    occupation.atom_at_1 += dur;
                }
            });
            t = t_k;
            if p.jumps == 0 {
                snapshots[k].atom_at_1 += S::one();
                survivors[k] += 1;
            } else {
                if p.r <= S::zero() {
                    return Err(McError::ReachedOrigin(idx));
                }
                if p.r == S::one() && p.jumps == 1 {
                    return Err(McError::StuckOnCircle(idx));
                }
                snapshots[k].deposit(p.r, S::one())?;
            }
        }
    }
    Ok(ChunkResult {
        snapshots,
        survivors,
        occupation,
    })
}

/// Simulate `particles` independent particles started on the unit circle and
/// bin them on `grid` at each snapshot time.
pub fn simulate<S: Real>(
    settings: &McSettings,
    times: &[S],
    grid: Arc<RadialGrid<S>>,
    params: &ModelParams<S>,
    beta: &AngularCrossSection<S>,
) -> Result<Trajectory<S>, McError> {
    params.validate()?;
    validate_times(times, params.horizon)?;
    if settings.particles == 0 {
        return Err(McError::NoParticles);
    }
    let n = settings.particles;
    let chunks = n.div_ceil(CHUNK);
    let work = || -> Result<Vec<ChunkResult<S>>, McError> {
        (0..chunks)
            .into_par_iter()
            .map(|c| run_chunk(c, n, times, &grid, params, beta, settings.seed))
            .collect()
    };
    let results = match settings.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| McError::Pool(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    let scale = S::one() / S::from_usize_lossy(n);
    let mut snaps = vec![RadialMeasure::zero(grid.clone()); times.len()];
    let mut survivors = vec![0u64; times.len()];
    let mut occupation = RadialMeasure::zero(grid.clone());
    for r in &results {
        for (acc, m) in snaps.iter_mut().zip(&r.snapshots) {
            acc.add_scaled(m, S::one())?;
        }
        for (acc, s) in survivors.iter_mut().zip(&r.survivors) {
            *acc += s;
        }
        occupation.add_scaled(&r.occupation, S::one())?;
    }
    let snapshots: Vec<Snapshot<S>> = snaps
        .into_iter()
        .zip(times)
        .zip(&survivors)
        .map(|((m, &t), &s)| {
            let mut measure = RadialMeasure::zero(grid.clone());
            measure.add_scaled(&m, scale).expect("same grid");
            if s as usize == n {
                measure.atom_at_1 = S::one();
            }
            Snapshot {
                t,
                measure,
                survivors: Some(s),
            }
        })
        .collect();
    let mut time_integral = RadialMeasure::zero(grid);
    time_integral.add_scaled(&occupation, scale)?;
    let mut atom_series = vec![(S::zero(), S::one())];
    atom_series.extend(
        snapshots
            .iter()
            .filter(|s| s.t > S::zero())
            .map(|s| (s.t, s.measure.atom_at_1)),
    );
    Ok(Trajectory {
        snapshots,
        atom_series,
        time_integral,
        horizon: *times.last().unwrap(),
    })
}
