use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use approx::assert_relative_eq;
use lbsoft::cross_section::AngularCrossSection;
use lbsoft::geometry::ModelParams;
use lbsoft::radial_measure::{GridSpec, RadialGrid, RadialMeasure};
use lbsoft::solver_det::{assemble_generator, evolve, GeneratorMatrix, GeneratorSettings};
use lbsoft_oracle as oracle;

fn default_grid() -> Arc<RadialGrid<f64>> {
    Arc::new(RadialGrid::build(&GridSpec::default()).unwrap())
}

fn setup(n: f64) -> (ModelParams<f64>, GeneratorMatrix<f64>) {
    let p = ModelParams::new(-1.5, n, 0.5).unwrap();
    let beta = AngularCrossSection::symmetric_atom(FRAC_PI_4, 1.0).unwrap();
    let m = assemble_generator(default_grid(), &beta, &p, &GeneratorSettings::default()).unwrap();
    (p, m)
}

#[test]
fn atom_out_rate_matches_oracle() {
    let (_, m) = setup(100.0);
    let want = oracle::truncated_rate(1.0, -1.5, 100.0, 2.0);
    assert_relative_eq!(m.out_rate(0), want, max_relative = 1e-8);
    assert!(m.row_sum_residual() < 1e-12);
}

#[test]
fn cell_out_rates_match_oracle() {
    let (_, m) = setup(100.0);
    let g = m.grid().clone();
    for i in [0, 50, 127, 300, 500] {
        let r = g.mids()[i];
        let want = oracle::truncated_rate(r, -1.5, 100.0, 2.0);
        // self-transitions are dropped, so the out-rate can only be smaller
        let got = m.out_rate(i + 1);
        assert!(got <= want * (1.0 + 1e-8), "cell {i}");
        assert!(got >= 0.5 * want, "cell {i}: {got} vs {want}");
    }
}

#[test]
fn atom_decay_is_exponential() {
    let (p, m) = setup(100.0);
    let rate = oracle::truncated_rate(1.0, -1.5, 100.0, 2.0);
    let l0 = RadialMeasure::circle(m.grid().clone());
    let times = [0.05, 0.1];
    let coarse = evolve(&l0, &m, Some(1e-4), &times, &p).unwrap();
    let fine = evolve(&l0, &m, Some(5e-5), &times, &p).unwrap();
    for (c, f) in coarse.snapshots.iter().zip(&fine.snapshots) {
        let extrapolated = 2.0 * f.measure.atom_at_1 - c.measure.atom_at_1;
        let exact = (-rate * c.t).exp();
        assert!((extrapolated - exact).abs() < 1e-6, "t = {}: {extrapolated} vs {exact}", c.t);
    }
}

/// `sup_r h_{gamma+1}(r)` on the radius grid `{0, 0.01, …, 4}`.
fn sup_h() -> f64 {
    (0..=400).map(|i| oracle::h(0.01 * i as f64, -0.5)).fold(0.0, f64::max)
}

#[test]
fn moment_growth_and_time_equicontinuity() {
    let (p, m) = setup(100.0);
    let g = m.grid().clone();
    let times = [0.0, 0.05, 0.1, 0.25, 0.5];
    let tr = evolve(&RadialMeasure::circle(g.clone()), &m, None, &times, &p).unwrap();
    let lambda = 2.0;
    let sup = sup_h();
    let h = g.spacing();
    for s in &tr.snapshots {
        assert_relative_eq!(s.measure.total_mass(), 1.0, epsilon = 1e-10);
        assert!(s.measure.min_component() >= -1e-15);
        assert_eq!(s.measure.atom_at_0, 0.0);
        assert!(s.measure.first_moment() <= 1.0 + lambda * sup * s.t + h);
    }
    for a in &tr.snapshots {
        for b in &tr.snapshots {
            let w = a.measure.wasserstein1(&b.measure).unwrap();
            assert!(w <= lambda * sup * (a.t - b.t).abs() + 2.0 * h);
        }
    }
}

#[test]
fn no_mass_reaches_the_origin_atom() {
    let (p, m) = setup(1000.0);
    let tr = evolve(&RadialMeasure::circle(m.grid().clone()), &m, None, &[0.5], &p).unwrap();
    assert_eq!(tr.final_measure().unwrap().atom_at_0, 0.0);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn small_grid() -> Arc<RadialGrid<f64>> {
        Arc::new(
            RadialGrid::build(&GridSpec {
                levels: 4,
                background: 16,
                ..GridSpec::default()
            })
            .unwrap(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn evolution_conserves_mass_and_stays_nonnegative(
            gamma in -1.95f64..-1.05,
            n in 5.0f64..300.0,
            theta in 0.05f64..std::f64::consts::FRAC_PI_2,
            mass in 0.1f64..3.0,
        ) {
            let p = ModelParams::new(gamma, n, 0.2).unwrap();
            let beta = AngularCrossSection::symmetric_atom(theta, mass).unwrap();
            let m = assemble_generator(small_grid(), &beta, &p, &GeneratorSettings::default()).unwrap();
            prop_assert!(m.row_sum_residual() < 1e-12);
            let times = [0.0, 0.05, 0.1, 0.2];
            let tr = evolve(&RadialMeasure::circle(m.grid().clone()), &m, None, &times, &p).unwrap();
            let mut prev = f64::INFINITY;
            for s in &tr.snapshots {
                prop_assert!((s.measure.total_mass() - 1.0).abs() <= 1e-10);
                prop_assert!(s.measure.min_component() >= -1e-15);
                prop_assert!(s.measure.atom_at_1 < prev);
                prev = s.measure.atom_at_1;
            }
        }
    }
}
