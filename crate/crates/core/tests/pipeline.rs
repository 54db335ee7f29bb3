use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use gfc_core::analysis::{measure_pipeline, restricted_inner_product, verify_scaling, DecayClass};
use gfc_core::dynamics::{first_return, FlatMetric, FlowMap, TimeConvention};
use gfc_core::geometry::FlatSubmanifold;
use gfc_core::states::{admissible_h_sequence, Scaling, StateFamily, TestFamily, TestKind};
use gfc_core::trig::TrigSeries;
use gfc_core::Complex64;

const TS: [f64; 4] = [0.08, 0.04, 0.02, 0.01];

fn hp() -> FlowMap {
    FlowMap::flat(TimeConvention::HamiltonianHp)
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

#[test]
fn standing_wave_against_restricted_eigenfunction() {
    let h1 = 1.0 / (10.0 * PI);
    let phi = StateFamily::fourier_sum(vec![(one(), vec![3, 4]), (one(), vec![3, -4])], Scaling::Multiples { h1 }).unwrap();
    let parent = StateFamily::fourier_sum(vec![(one(), vec![3, 1])], Scaling::Multiples { h1 }).unwrap();
    let psi = TestFamily::new(FlatSubmanifold::horizontal_line(), TestKind::RestrictedEigenfunction { parent }).unwrap();
    for n in 1..=6 {
        let c = restricted_inner_product(&phi, &psi, h1 / n as f64).unwrap();
        assert!((c.norm() - SQRT_2).abs() < 1e-12);
    }
    let p = measure_pipeline(&phi, &psi, &hp(), &TS).unwrap();
    // density 4/5 on each branch against ν^A mass 1/2 per branch
    let branch = |s: f64| p.mu_a.measure.mass_where(|q| q.xi[1].signum() == s);
    assert!((branch(1.0) - 0.8).abs() < 1e-9 && (branch(-1.0) - 0.8).abs() < 1e-9);
    for (f, mass, _) in p.decomposition.f.weighted(&p.nu_a) {
        if mass > 0.0 {
            assert!((f - 1.6).abs() < 1e-9, "{f}");
        }
    }
    assert!((p.rhs_theorem6 - SQRT_2).abs() < 1e-9);
}

#[test]
fn curve_exponential_three_four() {
    let phi = StateFamily::plane_wave(vec![3, 4]).unwrap();
    let psi = TestFamily::new(FlatSubmanifold::horizontal_line(), TestKind::CurveExponential { alpha0: 0.6 }).unwrap();
    let p = measure_pipeline(&phi, &psi, &hp(), &TS).unwrap();
    let f_plus: Vec<f64> = p
        .decomposition
        .f
        .weighted(&p.nu_a)
        .filter(|(_, m, q)| *m > 0.0 && q.xi[1] > 0.0)
        .map(|(f, _, _)| f)
        .collect();
    assert!(f_plus.iter().all(|f| (f - 3.2).abs() < 1e-9));
    assert!((p.rhs_theorem6 - SQRT_2).abs() < 1e-9);
    assert!((p.rhs_rem - 1.0).abs() < 1e-9);
    assert!(p.decomposition.singular.total_mass().abs() < 1e-12);
}

#[test]
fn constant_weight_coefficient_and_class() {
    let phi = StateFamily::plane_wave(vec![0, 1]).unwrap();
    let w = TrigSeries::from_cos_sin(1.0, &[(1, 0.5)], &[]);
    let psi = TestFamily::new(FlatSubmanifold::horizontal_line(), TestKind::ConstantWeight { weight: w }).unwrap();
    let hseq = admissible_h_sequence(&phi, &psi, 6).unwrap();
    let rep = verify_scaling(&phi, &psi, hseq.values(), Some(SQRT_2)).unwrap();
    let inv_norm = 1.0 / 1.125f64.sqrt();
    assert!(rep.rows.iter().all(|r| (r.modulus - inv_norm).abs() < 1e-12));
    assert_eq!(rep.class, DecayClass::BoundedNonvanishing);
    assert!((rep.sup_ratio.unwrap() - inv_norm / SQRT_2).abs() < 1e-12);
}

#[test]
fn codimension_two_pipeline_has_no_flow_average_mass() {
    let phi = StateFamily::plane_wave(vec![3, 4, 0]).unwrap();
    let psi = TestFamily::new(FlatSubmanifold::axis_circle(), TestKind::CurveExponential { alpha0: 0.6 }).unwrap();
    let p = measure_pipeline(&phi, &psi, &hp(), &TS).unwrap();
    assert!((p.nu_a.total_mass() - 1.0).abs() < 1e-10);
    assert_eq!(p.mu_a.measure.total_mass(), 0.0);
    assert_eq!(p.rhs_theorem6, 0.0);
    let hseq = admissible_h_sequence(&phi, &psi, 6).unwrap();
    let rep = verify_scaling(&phi, &psi, hseq.values(), None).unwrap();
    assert_eq!(rep.class, DecayClass::LittleO);
    assert!((rep.slope + 0.5).abs() < 1e-9);
}

#[test]
fn generic_integrator_matches_exact_first_return() {
    let psi = TestFamily::new(FlatSubmanifold::horizontal_line(), TestKind::CurveExponential { alpha0: 0.6 }).unwrap();
    let sigma = gfc_core::geometry::build_sigma_a(psi.submanifold(), psi.declared_wavefront()).unwrap();
    let rho = sigma.point(&[0.2], &[0.6], 1.0);
    let exact = first_return(&hp(), &rho, &sigma, 1e-6, 10.0).unwrap();
    let generic = FlowMap::generic(Arc::new(FlatMetric { dim: 2 }), 1e-3, TimeConvention::HamiltonianHp).unwrap();
    let approx = first_return(&generic, &rho, &sigma, 1e-6, 10.0).unwrap();
    // y reaches 1 after time 1/(2·4/5); x lands on 0.2 + 3/4 and the next cell of Σ^A
    assert!((exact.time - 0.625).abs() < 1e-12);
    assert!((approx.time - exact.time).abs() < 1e-8);
    assert!(approx.point.distance(&exact.point) < 1e-8);
}
