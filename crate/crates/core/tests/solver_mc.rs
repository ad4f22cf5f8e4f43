use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use lbsoft::cross_section::AngularCrossSection;
use lbsoft::geometry::ModelParams;
use lbsoft::radial_measure::{GridSpec, RadialGrid, RadialMeasure};
use lbsoft::solver_det::{assemble_generator, evolve, GeneratorSettings};
use lbsoft::solver_mc::{next_event, particle_rng, simulate, McSettings};
use lbsoft_oracle as oracle;

fn grid() -> Arc<RadialGrid<f64>> {
    Arc::new(RadialGrid::build(&GridSpec::default()).unwrap())
}

fn beta() -> AngularCrossSection<f64> {
    AngularCrossSection::symmetric_atom(FRAC_PI_4, 1.0).unwrap()
}

#[test]
fn survivor_fraction_matches_atom_decay() {
    let p = ModelParams::new(-1.5, 100.0, 0.1).unwrap();
    let n = 100_000;
    let s = McSettings {
        particles: n,
        seed: 17,
        workers: None,
    };
    let tr = simulate(&s, &[0.1], grid(), &p, &beta()).unwrap();
    let rate = oracle::truncated_rate(1.0, -1.5, 100.0, 2.0);
    let expected = (-rate * 0.1).exp();
    let observed = tr.snapshots[0].survivors.unwrap() as f64 / n as f64;
    let sd = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!((observed - expected).abs() <= 3.0 * sd, "{observed} vs {expected} ± {sd}");
}

#[test]
fn jump_count_at_origin_is_poisson() {
    // K(0, ·) ≡ 1, so the accepted-jump rate at r = 0 is Lambda * min(1, n)
    let p = ModelParams::new(-1.5, 100.0, 1.0).unwrap();
    let b = beta();
    let t_end = 1.5;
    let replicas = 10_000;
    let mut total = 0u64;
    for i in 0..replicas {
        let mut rng = particle_rng(5, i);
        let mut t = 0.0;
        loop {
            let (wait, jump) = next_event(0.0, &p, &b, &mut rng).unwrap();
            t += wait;
            if t > t_end {
                break;
            }
            if let Some(r) = jump {
                assert!(r > 0.0);
                total += 1;
            }
        }
    }
    let mean = total as f64 / replicas as f64;
    let expected = 2.0 * t_end;
    let sd = (expected / replicas as f64).sqrt();
    assert!((mean - expected).abs() <= 3.0 * sd, "{mean} vs {expected} ± {sd}");
}

#[test]
fn monte_carlo_agrees_with_deterministic_solver() {
    let p = ModelParams::new(-1.5, 100.0, 0.5).unwrap();
    let g = grid();
    let times = [0.1, 0.25, 0.5];
    let m = assemble_generator(g.clone(), &beta(), &p, &GeneratorSettings::default()).unwrap();
    let det = evolve(&RadialMeasure::circle(g.clone()), &m, None, &times, &p).unwrap();
    let n = 100_000;
    let s = McSettings {
        particles: n,
        seed: 2718,
        workers: None,
    };
    let mc = simulate(&s, &times, g.clone(), &p, &beta()).unwrap();
    let tol = 3.0 / (n as f64).sqrt() + 2.0 * g.spacing();
    for (a, b) in det.snapshots.iter().zip(&mc.snapshots) {
        let w = a.measure.wasserstein1(&b.measure).unwrap();
        assert!(w <= tol, "t = {}: W1 = {w}, tol = {tol}", a.t);
    }
    // mass near the origin: the deterministic trickle stays within MC noise
    let near_origin = |m: &RadialMeasure<f64>| -> f64 {
        (0..m.cells.len())
            .filter(|&i| m.grid().cell(i).1 <= 0.05)
            .map(|i| m.cells[i])
            .sum()
    };
    let d = near_origin(det.final_measure().unwrap());
    let e = near_origin(mc.final_measure().unwrap());
    assert!(d <= e + 3.0 * (e.max(1.0 / n as f64) / n as f64).sqrt() + 1e-3, "det {d} vs mc {e}");
    assert_eq!(mc.final_measure().unwrap().atom_at_0, 0.0);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn result_does_not_depend_on_workers(seed in any::<u64>(), workers in 2usize..9) {
            let p = ModelParams::new(-1.5, 100.0, 0.1).unwrap();
            let times = [0.0, 0.05, 0.1];
            let run = |w| {
                let s = McSettings { particles: 3000, seed, workers: Some(w) };
                simulate(&s, &times, grid(), &p, &beta()).unwrap()
            };
            let a = run(1);
            let b = run(workers);
            for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
                prop_assert_eq!(x.measure.to_csv(), y.measure.to_csv());
                prop_assert_eq!(x.survivors, y.survivors);
            }
        }
    }
}
