mod common;

use spinframe::clifford::{Multivector, Signature};
use spinframe::geometry::split_connection;
use spinframe::spin_field::{
    check_spin, killing_extract, killing_jet, Differentiation, FdConfig, SpinFieldSpec,
};

#[test]
fn random_families_are_spin_fields() {
    let mut rng = common::rng(11);
    for _ in 0..20 {
        for spec in [
            common::random_type_a(&mut rng),
            common::random_type_b(&mut rng),
            common::random_product(&mut rng),
        ] {
            let x = common::random_point(&mut rng, 1.0);
            let check = check_spin(&spec, x, 1e-10).unwrap();
            assert!(check.passed(), "{spec:?} at {x:?}: {check:?}");
        }
    }
}

#[test]
fn killing_bivectors_are_pure_and_reconstruct_the_derivative() {
    let mut rng = common::rng(12);
    for _ in 0..20 {
        let spec = common::random_product(&mut rng);
        let x = common::random_point(&mut rng, 1.0);
        let k = killing_extract(&spec, x, Differentiation::Automatic).unwrap();
        assert!(k.max_grade2_residual() < 1e-12, "{}", k.max_grade2_residual());
        assert!(k.max_reconstruction_residual() < 1e-12);
        let antisym = split_connection(&k.k).antisymmetry_defect();
        assert_eq!(antisym, 0.0);
    }
}

#[test]
fn automatic_and_central_differences_agree() {
    let mut rng = common::rng(13);
    let fd = Differentiation::Central(FdConfig::new(1e-5).unwrap());
    for _ in 0..10 {
        let spec = common::random_family(&mut rng);
        let x = common::random_point(&mut rng, 1.0);
        let ad = killing_extract(&spec, x, Differentiation::Automatic).unwrap();
        let num = killing_extract(&spec, x, fd).unwrap();
        for a in 0..4 {
            assert!(ad.k[a].distance(&num.k[a]) < 1e-8);
        }
    }
}

#[test]
fn killing_jet_matches_differences_of_extraction() {
    let mut rng = common::rng(14);
    let h = 1e-5;
    for _ in 0..5 {
        let spec = common::random_product(&mut rng);
        let x = common::random_point(&mut rng, 0.8);
        let jet = killing_jet(&spec, x).unwrap();
        for b in 0..4 {
            let mut xp = x;
            xp[b] += h;
            let mut xm = x;
            xm[b] -= h;
            let kp = killing_extract(&spec, xp, Differentiation::Automatic).unwrap();
            let km = killing_extract(&spec, xm, Differentiation::Automatic).unwrap();
            for a in 0..4 {
                let fd = (&kp.k[a] - &km.k[a]).scale(0.5 / h);
                assert!(fd.distance(&jet.dk[b][a]) < 1e-6);
            }
        }
    }
}

#[test]
fn unnormalized_parameters_are_rejected() {
    let spec = SpinFieldSpec::type_a(5, "1", ["0", "0.5", "0", "0"]).unwrap();
    assert!(killing_extract(&spec, [0.0; 4], Differentiation::Automatic).is_err());
    let check = check_spin(&spec, [0.0; 4], 1e-10).unwrap();
    assert!(!check.normalization_ok);
}

#[test]
fn grade_four_element_fails_the_vector_condition() {
    let sig = Signature::spacetime();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let t = &Multivector::blade(sig, &[1, 2]).scale(s) + &Multivector::blade(sig, &[3, 4, 5, 6]).scale(s);
    let spec = SpinFieldSpec::Constant { terms: t.to_term_list() };
    let check = check_spin(&spec, [0.0; 4], 1e-10).unwrap();
    assert!(check.normalization_ok);
    assert_eq!(check.failing_indices(), vec![1, 2, 3, 4, 5, 6]);
}
