mod common;

use common::companion_plant;
use rtac_core::linalg::matrix_to_rows;
use rtac_core::models::{Dims, ModelSpec};
use rtac_core::polybridge::{build_dual, AGREE_TOL};

fn check(spec: &ModelSpec, theta: &[f64], z: &[f64]) {
    let dual = build_dual(spec, theta, z).unwrap();
    let (worst, _) = dual.max_discrepancy(100, 0x51de).unwrap();
    assert!(worst <= AGREE_TOL, "{} disagrees by {worst:e}", spec.name());
    assert_eq!(dual.field().dim(), dual.model().dims().n);
}

#[test]
fn builtins_agree_at_fresh_points() {
    check(&ModelSpec::Planar { c: 0.6, k1: 1.4, k2: 2.2 }, &[-1.3], &[0.9]);
    check(&ModelSpec::Triangular { k1: 1.0, k2: 2.0, k3: 3.0 }, &[0.7, 1.2], &[-0.3, 0.1]);
    check(&ModelSpec::Triangular { k1: 0.5, k2: 1.0, k3: 4.0 }, &[-2.0, 0.3], &[1.1, -0.8]);
}

#[test]
fn linear_plants_agree() {
    let p = companion_plant([0.3, -0.2], [1.0, 0.5], [1.0, 2.0]);
    let spec = ModelSpec::Linear {
        a: matrix_to_rows(p.a()),
        b: matrix_to_rows(p.b()),
        c: p.c().iter().map(matrix_to_rows).collect(),
        k0: matrix_to_rows(&p.gains().k0),
        k_theta: p.gains().per_param.iter().map(matrix_to_rows).collect(),
        omega: None,
    };
    check(&spec, &[1.7], &[-0.4]);
}

#[test]
fn polynomial_models_agree() {
    let spec = ModelSpec::Polynomial {
        dims: Dims { n: 2, m: 1, l: 1 },
        drift: vec!["x2".into(), "x1^3 + u1".into()],
        regressor: vec!["x1*x2".into()],
        rows: vec![2],
        feedback: vec!["-x1 - 2*x2 - x1^3 - z1*x1*x2".into()],
        v: Some("x1^2 + x2^2".into()),
        q: Some("3*x1^2 + 3*x2^2".into()),
    };
    check(&spec, &[0.4], &[-1.2]);
}

#[test]
fn polynomial_model_without_lyapunov_pair_cannot_be_simulated() {
    let spec = ModelSpec::Polynomial {
        dims: Dims { n: 1, m: 1, l: 1 },
        drift: vec!["u1".into()],
        regressor: vec!["x1".into()],
        rows: vec![1],
        feedback: vec!["-x1".into()],
        v: None,
        q: None,
    };
    assert!(spec.poly_plant().is_ok());
    assert!(build_dual(&spec, &[1.0], &[0.0]).is_err());
}
