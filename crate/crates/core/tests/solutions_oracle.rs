mod common;

use spinframe::geometry::connection_field;
use spinframe::solutions::{
    closed_connection, compose_a_checked, compose_b_checked, compose_by_conjugation, printed,
    type_a_closed_connection, TypeAPointData, TypeBPointData,
};
use spinframe::spin_field::{Differentiation, SpinFieldSpec};

#[test]
fn type_a_composition_matches_conjugation() {
    let mut rng = common::rng(31);
    for _ in 0..100 {
        let p = common::random_type_a_data(&mut rng);
        let w = common::random_connection(&mut rng);
        let checked = compose_a_checked(&p, &w).unwrap();
        assert!(checked.oracle_discrepancy < 1e-10, "{}", checked.oracle_discrepancy);
        assert!(!checked.used_oracle);
    }
}

#[test]
fn type_b_composition_matches_conjugation() {
    let mut rng = common::rng(32);
    for _ in 0..100 {
        let p = common::random_type_b_data(&mut rng);
        let w = common::random_connection(&mut rng);
        let checked = compose_b_checked(&p, &w).unwrap();
        assert!(checked.oracle_discrepancy < 1e-10, "{}", checked.oracle_discrepancy);
    }
}

#[test]
fn literal_expansion_disagrees_with_conjugation() {
    let mut rng = common::rng(33);
    let mut worst_a: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    for _ in 0..20 {
        let w = common::random_connection(&mut rng);
        worst_a = worst_a.max(printed::audit_a(&common::random_type_a_data(&mut rng), &w).unwrap().max());
        worst_b = worst_b.max(printed::audit_b(&common::random_type_b_data(&mut rng), &w).unwrap().max());
    }
    assert!(worst_a > 1e-3, "{worst_a}");
    assert!(worst_b > 1e-3, "{worst_b}");
}

#[test]
fn closed_forms_match_extraction() {
    let mut rng = common::rng(34);
    for _ in 0..20 {
        let spec = common::random_family(&mut rng);
        let x = common::random_point(&mut rng, 1.0);
        let closed = closed_connection(&spec, x).unwrap();
        let extracted = connection_field(&spec, x, Differentiation::Automatic).unwrap();
        assert!(closed.distance(&extracted) < 1e-10, "{spec:?}");
    }
    let x = [0.2, -0.4, 0.9, 0.1];
    let sphere = closed_connection(&SpinFieldSpec::Sphere, x).unwrap();
    let via_a = TypeAPointData::from_spec(&SpinFieldSpec::Sphere, x).unwrap();
    assert_eq!(sphere, type_a_closed_connection(&via_a).unwrap());
}

#[test]
fn product_extraction_matches_composition() {
    let mut rng = common::rng(35);
    for _ in 0..20 {
        let spec = common::random_product(&mut rng);
        let SpinFieldSpec::Product { factors } = &spec else { unreachable!() };
        let x = common::random_point(&mut rng, 1.0);
        let conn1 = closed_connection(&factors[0], x).unwrap();
        let conn2 = closed_connection(&factors[1], x).unwrap();
        let psi1 = factors[0].evaluate(x).unwrap();
        let composed = compose_by_conjugation(&psi1, &conn1, &conn2).unwrap();
        let extracted = connection_field(&spec, x, Differentiation::Automatic).unwrap();
        assert!(composed.distance(&extracted) < 1e-10);
        let formula = match &factors[0] {
            SpinFieldSpec::TypeA { .. } => {
                compose_a_checked(&TypeAPointData::from_spec(&factors[0], x).unwrap(), &conn2)
                    .unwrap()
                    .composed
                    .conn
            }
            _ => {
                compose_b_checked(&TypeBPointData::from_spec(&factors[0], x).unwrap(), &conn2)
                    .unwrap()
                    .composed
                    .conn
            }
        };
        assert!(formula.distance(&extracted) < 1e-10);
    }
}

#[test]
fn rotation_gives_a_pure_gauge_field() {
    let spec = SpinFieldSpec::rotation(4, 5, "x0*x1 + sin(x2) - 0.3*x3").unwrap();
    let x = [0.3, -0.7, 0.4, 1.2];
    let conn = connection_field(&spec, x, Differentiation::Automatic).unwrap();
    let grad = [x[1], x[0], x[2].cos(), -0.3];
    for (a, g) in grad.iter().enumerate() {
        assert!((conn.a(a, 4, 5) - g).abs() < 1e-12);
    }
    assert!(conn.distance(&closed_connection(&spec, x).unwrap()) < 1e-14);
}
