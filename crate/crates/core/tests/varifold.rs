use std::f64::consts::PI;
use std::sync::Arc;

use phasefield::error::Error;
use phasefield::geometry::{ConformalTorus, ScalarField, TorusGrid};
use phasefield::potential::{surface_tension, DoubleWellPotential};
use phasefield::solver::{newton_solve, seed_slab, ACProblem, ACSolution};
use phasefield::varifold::{diffuse_measures, extract_interface, multiplicity_from_ratio, ComponentKind};
use proptest::prelude::*;

fn torus(n: usize) -> Arc<ConformalTorus> {
    Arc::new(ConformalTorus::flat(TorusGrid::new(&[1.0, 1.0], &[n, n]).unwrap()))
}

fn two_slabs(eps: f64) -> ACSolution {
    let m = torus(96);
    let p = ACProblem::new(m.clone(), DoubleWellPotential::quartic(), eps).unwrap();
    let seed = seed_slab(&m, eps, 0, &[0.25, 0.75], 1.0).unwrap();
    newton_solve(&p, &seed, 1e-11, 60).unwrap()
}

/// Wraps an arbitrary field as a solution record, bypassing Newton.
fn record(u: ScalarField, eps: f64) -> ACSolution {
    let m = torus(u.values.len().isqrt());
    let p = ACProblem::new(m, DoubleWellPotential::quartic(), eps).unwrap();
    let energy = phasefield::solver::energy(&p, &u).unwrap();
    ACSolution {
        problem: p,
        u,
        residual_norm: f64::NAN,
        energy,
        newton_iters: 0,
        tol: 1e-10,
        collapsed: false,
        transitions: 0,
    }
}

#[test]
fn two_slabs_give_two_unit_components() {
    let sol = two_slabs(0.05);
    let itf = extract_interface(&sol, 0.0).unwrap();
    assert_eq!(itf.components.len(), 2);
    let mut offsets = vec![];
    for c in &itf.components {
        assert_eq!(c.multiplicity, 1);
        assert!((c.length_or_area - 1.0).abs() < 1e-10, "length {}", c.length_or_area);
        match c.kind {
            ComponentKind::Slice { axis, offset } => {
                assert_eq!(axis, 0);
                offsets.push(offset);
            }
            ComponentKind::ClosedCurve => {
                let x0 = c.nodes[0][0];
                assert!(c.nodes.iter().all(|p| (p[0] - x0).abs() < 1e-8));
                offsets.push(x0.rem_euclid(1.0));
            }
        }
    }
    offsets.sort_by(f64::total_cmp);
    assert!((offsets[0] - 0.25).abs() < 1e-8 && (offsets[1] - 0.75).abs() < 1e-8, "{offsets:?}");
}

#[test]
fn constant_field_has_no_interface() {
    let m = torus(64);
    let sol = record(ScalarField::from_fn(&m.grid, |_| 1.0), 0.1);
    assert!(matches!(extract_interface(&sol, 0.0), Err(Error::EmptyInterface)));
}

#[test]
fn diffuse_masses_of_the_two_slab_solution() {
    let sol = two_slabs(0.05);
    let d = diffuse_measures(&sol);
    let sigma = surface_tension(&DoubleWellPotential::quartic(), 1e-12).unwrap();
    // each side carries half of the energy 2σ per unit length
    assert!((d.mass - 2.0 * sigma).abs() < 1e-3 * sigma, "{d:?}");
    assert!((d.potential_mass - 2.0 * sigma).abs() < 1e-3 * sigma, "{d:?}");
    assert!(d.defect < 1e-3 * d.energy, "{d:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ratios_near_an_integer_round_to_it(n in 1u32..6, off in -0.25f64..0.25) {
        prop_assert_eq!(multiplicity_from_ratio(0, n as f64 + off).unwrap(), n);
    }

    #[test]
    fn ratios_between_integers_are_ambiguous(n in 1u32..6, off in 0.2501f64..0.7499) {
        let is_ambiguous = matches!(
            multiplicity_from_ratio(3, n as f64 + off),
            Err(Error::MultiplicityAmbiguous { component: 3, .. })
        );
        prop_assert!(is_ambiguous);
    }

    #[test]
    fn small_ratios_are_rejected(r in 0.0f64..0.75) {
        prop_assert!(multiplicity_from_ratio(0, r).is_err());
    }

    #[test]
    fn measures_split_the_energy(a in 0.1f64..1.0, k in 1i32..3, phase in 0.0f64..1.0, eps in 0.07f64..0.2) {
        let m = torus(64);
        let u = ScalarField::from_fn(&m.grid, |x| a * (2.0 * PI * (k as f64 * x[0] + x[1] + phase)).sin());
        let d = diffuse_measures(&record(u, eps));
        prop_assert!((d.mass + d.potential_mass - d.energy).abs() <= 1e-12 * d.energy);
        prop_assert!(d.defect <= d.energy * (1.0 + 1e-12));
        prop_assert!(d.defect >= (d.mass - d.potential_mass).abs() * (1.0 - 1e-12));
    }
}
