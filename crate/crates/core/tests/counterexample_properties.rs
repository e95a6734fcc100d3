use std::sync::Arc;

use dissipath_core::counterexamples::{
    evaluate_witness, near_equilibrium_field, rank_one_operator, tilt_projector, uniqueness_sweep, witness_direction,
    ProjectorField,
};
use dissipath_core::dynamics::dissipation;
use dissipath_core::error::Error;
use dissipath_core::linalg::metric_dot;
use dissipath_core::manifold::tangent_frame;
use dissipath_core::projector::{orthogonal_projector, thermodynamic_projector, thermodynamic_projector_from_frame};
use dissipath_core::sampling::{random_catalog_scenario, Scenario};
use dissipath_core::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenarios(seed: u64, count: usize) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| random_catalog_scenario(&mut rng, 5, 3).unwrap())
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn rank_one_operators_are_negative_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut built = 0;
    for s in scenarios(72, 50) {
        let proj = thermodynamic_projector_from_frame(&s.h, &s.frame).unwrap().matrix;
        let y = match witness_direction(&s.h, &s.frame.x, &proj) {
            Ok(y) => y,
            Err(Error::NoWitness) => continue,
            Err(e) => panic!("{e}"),
        };
        let a = rng.gen_range(1.5..3.0);
        let op = rank_one_operator(&s.h, &s.frame.x, &proj, &y, a).unwrap();
        let g = &s.frame.metric.hess;
        for _ in 0..20 {
            let z = random_vec(&mut rng, s.frame.x.len());
            let q = metric_dot(g, &z, &(&op.matrix * &z));
            assert!(
                q <= 1e-12 * (1.0 + z.norm_squared() * op.v.norm_squared() * g.amax()),
                "{q}"
            );
        }
        // the proof's witness x = P̃y violates the sign
        let x_dir = &proj * &y;
        let full = metric_dot(g, &x_dir, &(&op.matrix * &x_dir));
        let reduced = metric_dot(g, &x_dir, &(&proj * (&op.matrix * &x_dir)));
        assert!(full <= 0.0 && reduced > 0.0, "{full} {reduced}");
        built += 1;
    }
    assert!(built >= 40, "{built}");
}

#[test]
fn orthogonal_projectors_admit_no_witness() {
    for s in scenarios(73, 100) {
        let op = orthogonal_projector(&s.h, &s.frame.x, &s.frame.basis).unwrap();
        assert!(matches!(
            witness_direction(&s.h, &s.frame.x, &op.matrix),
            Err(Error::NoWitness)
        ));
    }
}

#[test]
fn near_equilibrium_fields_are_dissipative() {
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    for s in scenarios(75, 20) {
        let chart = s.chart.clone();
        let h = s.h.clone();
        let p = s.p.clone();
        // projector field frozen at the scenario point; the field stays a B_a
        let frozen = thermodynamic_projector(&h, &chart, &p).unwrap().matrix;
        let pf: ProjectorField = Arc::new(move |_x: &Vector| Ok(frozen.clone()));
        let n = s.frame.x.len();
        let field = near_equilibrium_field(&s.h, pf, random_vec(&mut rng, n), rng.gen_range(0.5..2.0));
        for _ in 0..50 {
            let x = &s.frame.x + random_vec(&mut rng, n) * 0.1;
            let d = dissipation(&s.h, &x, &field.eval(&x).unwrap()).unwrap();
            assert!(d <= 0.0, "{d}");
        }
    }
}

#[test]
fn tilted_projectors_remain_projectors_onto_the_tangent_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(76);
    for s in scenarios(77, 100) {
        let base = thermodynamic_projector_from_frame(&s.h, &s.frame).unwrap();
        let n = s.frame.x.len();
        let Ok(zero) = tilt_projector(&base, &s.frame.metric, &random_vec(&mut rng, n), 0.0) else {
            continue;
        };
        assert!((&zero.matrix - &base.matrix).amax() <= 1e-10 * (1.0 + base.matrix.amax()));
        for eps in [0.025, 0.05, 0.1, 0.2] {
            let t = tilt_projector(&base, &s.frame.metric, &zero.tilt_direction, eps).unwrap();
            let p = &t.matrix;
            let scale = 1.0 + p.amax();
            assert!((p * p - p).amax() <= 1e-9 * scale * scale);
            for _ in 0..5 {
                let v = &s.frame.basis * random_vec(&mut rng, s.chart.m());
                assert!((p * &v - &v).amax() <= 1e-9 * scale * (1.0 + v.amax()));
            }
            assert!((p - &base.matrix).amax() > 0.0);
        }
    }
}

#[test]
fn uniqueness_sweeps_separate_tilted_from_thermodynamic() {
    let tilts = [0.2, 0.1, 0.05, 0.025, 0.0];
    for (i, s) in scenarios(78, 12).into_iter().enumerate() {
        let report = uniqueness_sweep(&s.h, &s.chart, &s.p, &tilts, 2000, i as u64).unwrap();
        let frame = tangent_frame(&s.chart, &s.h, &s.p).unwrap();
        let base = thermodynamic_projector_from_frame(&s.h, &frame).unwrap();
        let dir = Vector::from_vec(report.tilt_direction.clone());
        for r in &report.results {
            if r.tilt > 0.0 {
                assert!(r.violation_found, "tilt {} missed", r.tilt);
                let q = Vector::from_vec(r.witness.clone().unwrap());
                let tilted = tilt_projector(&base, &frame.metric, &dir, r.tilt).unwrap();
                let (full, reduced) = evaluate_witness(&s.h, &frame.x, &tilted.matrix, &q).unwrap();
                assert_eq!(Some(full), r.full_dissipation);
                assert_eq!(Some(reduced), r.reduced_dissipation);
                assert!(full <= 0.0 && reduced > 0.0);
            } else {
                assert!(!r.violation_found);
                assert_eq!(r.monte_carlo_violations, 0);
                assert_eq!(r.monte_carlo_trials, 2000);
            }
        }
        let again = uniqueness_sweep(&s.h, &s.chart, &s.p, &tilts, 2000, i as u64).unwrap();
        assert_eq!(format!("{:?}", again.results), format!("{:?}", report.results));
    }
}
