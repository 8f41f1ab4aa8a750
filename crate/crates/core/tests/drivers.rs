//! Volume prescription, prescribed Ricci form and the Gauduchon pipeline.

use hma_core::diagnostics::beta_closedness;
use hma_core::drivers::{
    calabi_yau_gauduchon, ddbar_potential, phi_pipeline, prescribed_ricci, ricci_two_ways, DriverConfig,
};
use hma_core::geometry::{astheno_defect, chern_ricci, gauduchon_defect};
use hma_core::grid::{hessian_complex, sup_norm};
use hma_core::synth::{rng, MetricModel, SmoothFunction};
use hma_core::{Error, HermField, HermMatrix, MetricField, ProblemSpec, RhsVolume, ScalarField, TorusGrid, Variant};

const ACTIVE: [usize; 2] = [0, 2];

fn grid(m: usize) -> TorusGrid {
    TorusGrid::uniform(3, &ACTIVE, m).unwrap()
}

fn spec(omega0: &MetricField, omega: &MetricField) -> ProblemSpec {
    let g = omega.grid().clone();
    ProblemSpec::new(Variant::Psi, omega0.clone(), omega.clone(), ScalarField::zeros(&g), RhsVolume::OmegaN).unwrap()
}

#[test]
fn flat_volume_problem_is_trivial() {
    let g = grid(8);
    let id = MetricField::identity(&g);
    let res = calabi_yau_gauduchon(&spec(&id, &id), &ScalarField::zeros(&g), &DriverConfig::default()).unwrap();
    assert_eq!(res.b_prime, 0.0);
    assert!(res.omega_u.max_diff(id.field()).unwrap() < 1e-14);
}

#[test]
fn volume_prescription_for_gauduchon_data() {
    let g = grid(32);
    let omega = MetricModel::Astheno { eps: 0.1 }.sample(&g).unwrap();
    let omega0 = MetricModel::Gauduchon { eps: 0.2 }.sample(&g).unwrap();
    assert!(astheno_defect(&omega).unwrap() < 1e-8 && gauduchon_defect(&omega0) < 1e-8);
    let fp = SmoothFunction::random(&mut rng(9), &ACTIVE, 3, 1, 0.3).sample(&g);
    let res = calabi_yau_gauduchon(&spec(&omega0, &omega), &fp, &DriverConfig::default()).unwrap();
    assert!(res.gauduchon_defect < 1e-7, "{:e}", res.gauduchon_defect);
    assert!(res.volume_defect < 1e-8, "{:e}", res.volume_defect);
}

#[test]
fn preconditions_are_enforced() {
    let g = grid(8);
    let mut r = rng(3);
    let bad = MetricModel::random_trig(&mut r, 3, &ACTIVE, 2, 0.3).sample(&g).unwrap();
    let id = MetricField::identity(&g);
    let err = calabi_yau_gauduchon(&spec(&bad, &id), &ScalarField::zeros(&g), &DriverConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition { .. }), "{err}");
    let err = phi_pipeline(&spec(&bad, &bad), &ScalarField::zeros(&g), &DriverConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition { .. }), "{err}");
}

#[test]
fn prescribed_ricci_form() {
    let g = grid(32);
    let omega = MetricModel::Astheno { eps: 0.1 }.sample(&g).unwrap();
    let omega0 = MetricModel::Gauduchon { eps: 0.2 }.sample(&g).unwrap();
    let phi = SmoothFunction::random(&mut rng(10), &ACTIVE, 3, 1, 0.2).sample(&g);
    let psi = chern_ricci(&omega).zip_map(&hessian_complex(&phi), |a, b| *a - *b).unwrap();
    let res = prescribed_ricci(&spec(&omega0, &omega), &psi, &DriverConfig::default()).unwrap();
    assert!(res.ricci_defect < 1e-6, "{:e}", res.ricci_defect);
    // The recovered potential is φ up to its mean.
    let m = hma_core::grid::mean(&phi);
    let centred = phi.map(|z| z - m);
    assert!(sup_norm(&(&res.f - &centred)) < 1e-10);
    assert!(ricci_two_ways(&res.omega_tilde, &omega).unwrap() < 1e-8);
}

#[test]
fn ricci_of_omega_itself_gives_constant_potential() {
    let g = grid(16);
    let omega = MetricModel::Astheno { eps: 0.1 }.sample(&g).unwrap();
    let d = chern_ricci(&omega).zip_map(&chern_ricci(&omega), |a, b| *a - *b).unwrap();
    let f = ddbar_potential(&d, &DriverConfig::default()).unwrap();
    assert_eq!(sup_norm(&f), 0.0);
}

#[test]
fn non_exact_ricci_target_is_an_obstruction() {
    let g = grid(8);
    let omega = MetricModel::Astheno { eps: 0.1 }.sample(&g).unwrap();
    // A constant (1,1)-form is closed but never i∂∂̄ of a periodic function.
    let shift = HermField::from_fn(&g, |_| HermMatrix::diag(&[0.5, 0.0, 0.0]));
    let psi = chern_ricci(&omega).zip_map(&shift, |a, b| *a - *b).unwrap();
    let err = prescribed_ricci(&spec(&omega, &omega), &psi, &DriverConfig::default()).unwrap_err();
    match err {
        Error::CohomologyObstruction { i, j, magnitude } => {
            assert_eq!((i, j), (0, 0));
            assert!((magnitude - 0.5).abs() < 1e-12);
        }
        other => panic!("expected an obstruction, got {other}"),
    }
}

#[test]
fn phi_pipeline_flat_and_gauduchon() {
    let g8 = grid(8);
    let id = MetricField::identity(&g8);
    let res = phi_pipeline(&spec(&id, &id), &ScalarField::zeros(&g8), &DriverConfig::default()).unwrap();
    assert_eq!(res.b, 0.0);
    assert!(res.gauduchon_defect < 1e-14);

    let g = grid(32);
    let omega = MetricModel::Gauduchon { eps: 0.2 }.sample(&g).unwrap();
    let f = SmoothFunction::random(&mut rng(11), &ACTIVE, 3, 1, 0.3).sample(&g);
    let res = phi_pipeline(&spec(&omega, &omega), &f, &DriverConfig::default()).unwrap();
    assert!(res.volume_defect < 1e-8, "{:e}", res.volume_defect);
    assert!(res.gauduchon_preserved(1e-8), "{:e} vs {:e}", res.gauduchon_defect, res.reference_defect);
    let phi_spec = spec(&omega, &omega).with_variant(Variant::Phi).unwrap();
    assert!(beta_closedness(&phi_spec, &res.report.state.u).unwrap() < 1e-8);
}

#[test]
fn phi_pipeline_rejects_two_dimensions() {
    let g = TorusGrid::uniform(2, &[0], 4).unwrap();
    let id = MetricField::identity(&g);
    let s = ProblemSpec::new(Variant::Psi, id.clone(), id, ScalarField::zeros(&g), RhsVolume::OmegaN).unwrap();
    let err = phi_pipeline(&s, &ScalarField::zeros(&g), &DriverConfig::default()).unwrap_err();
    assert!(matches!(err, Error::UnsupportedDimension { .. }));
}
