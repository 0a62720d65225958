mod common;

use spinframe::geometry::{
    connection_field, curvature, frame, gcr_residuals, Block, CurvatureMethod,
};
use spinframe::spin_field::{Differentiation, FdConfig, SpinFieldSpec};

fn fd() -> CurvatureMethod {
    CurvatureMethod::FiniteDifference(FdConfig::new(1e-4).unwrap())
}

#[test]
fn frames_are_orthonormal() {
    let mut rng = common::rng(21);
    for _ in 0..20 {
        let spec = common::random_product(&mut rng);
        let x = common::random_point(&mut rng, 1.0);
        assert!(frame(&spec, x).unwrap().orthonormality_residual() < 1e-12);
    }
}

#[test]
fn gauss_codazzi_ricci_hold_for_random_families() {
    let mut rng = common::rng(22);
    let mut specs: Vec<SpinFieldSpec> = Vec::new();
    specs.extend((0..20).map(|_| common::random_type_a(&mut rng)));
    specs.extend((0..20).map(|_| common::random_type_b(&mut rng)));
    specs.extend((0..10).map(|_| common::random_product(&mut rng)));
    for spec in &specs {
        let x = common::random_point(&mut rng, 1.0);
        let by_fd = gcr_residuals(spec, x, fd()).unwrap();
        assert!(by_fd.max() < 1e-4, "{spec:?} at {x:?}: {by_fd:?}");
        let exact = gcr_residuals(spec, x, CurvatureMethod::Exact).unwrap();
        assert!(exact.max() < 1e-10, "{spec:?} at {x:?}: {exact:?}");
    }
}

#[test]
fn closed_form_curvature_matches_exact_extraction() {
    let mut rng = common::rng(23);
    for _ in 0..10 {
        let spec = common::random_family(&mut rng);
        let x = common::random_point(&mut rng, 1.0);
        let a = curvature(&spec, x, CurvatureMethod::Exact).unwrap();
        let b = curvature(&spec, x, CurvatureMethod::ClosedForm).unwrap();
        for ((_, ia, va), (_, ib, vb)) in a.rows().iter().zip(b.rows().iter()) {
            assert_eq!(ia, ib);
            assert!((va - vb).abs() < 1e-9);
        }
    }
}

#[test]
fn single_factor_blocks_vanish_where_expected() {
    let mut rng = common::rng(24);
    for _ in 0..10 {
        let a = common::random_type_a(&mut rng);
        let b = common::random_type_b(&mut rng);
        let x = common::random_point(&mut rng, 1.0);
        let ca = connection_field(&a, x, Differentiation::Automatic).unwrap();
        let SpinFieldSpec::TypeA { normal_index: n, .. } = a else { unreachable!() };
        assert!(ca.max_abs_block(Block::A) < 1e-14);
        for alpha in 0..4 {
            for mu in 0..4 {
                for i in (4..10).filter(|&i| i != n) {
                    assert!(ca.h(alpha, mu, i).abs() < 1e-14);
                }
            }
        }
        let cb = connection_field(&b, x, Differentiation::Automatic).unwrap();
        assert!(cb.max_abs_block(Block::Omega) < 1e-14);
    }
}

#[test]
fn sphere_is_curved_but_integrable() {
    let spec = SpinFieldSpec::Sphere;
    let x = [0.1, 0.4, -0.3, 0.2];
    let c = curvature(&spec, x, CurvatureMethod::Exact).unwrap();
    assert!(c.gcr().max() < 1e-12);
    assert!(c.r(1, 2, 1, 2).abs() > 0.1);
}
