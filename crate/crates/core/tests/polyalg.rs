use proptest::prelude::*;
use rtac_core::poly::{lie_derivative, repeated_lie, Polynomial, PolyVectorField};

fn poly_strategy(n: usize, max_deg: u32) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(
        (prop::collection::vec(0..=max_deg, n), -3.0..3.0f64),
        0..6,
    )
    .prop_map(move |terms| {
        let terms = terms.into_iter().filter(|(e, _)| e.iter().sum::<u32>() <= max_deg);
        Polynomial::from_terms(n, terms).unwrap()
    })
}

fn field_strategy(n: usize) -> impl Strategy<Value = PolyVectorField> {
    prop::collection::vec(poly_strategy(n, 2), n).prop_map(|c| PolyVectorField::new(c).unwrap())
}

fn setup() -> impl Strategy<Value = (Polynomial, Polynomial, PolyVectorField, f64)> {
    (1..=4usize).prop_flat_map(|n| (poly_strategy(n, 4), poly_strategy(n, 4), field_strategy(n), -2.0..2.0f64))
}

/// Largest coefficient magnitude of `a − b`, relative to the larger operand.
fn gap(a: &Polynomial, b: &Polynomial) -> f64 {
    let d = a - b;
    let scale = 1.0 + a.coefficient_norm().max(b.coefficient_norm());
    d.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lie_derivative_is_linear((h1, h2, f, a) in setup()) {
        let lhs = lie_derivative(&(&h1.scale(a) + &h2), &f).unwrap();
        let rhs = &lie_derivative(&h1, &f).unwrap().scale(a) + &lie_derivative(&h2, &f).unwrap();
        prop_assert!(gap(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn leibniz_rule((h1, h2, f, _a) in setup()) {
        let lhs = lie_derivative(&(&h1 * &h2), &f).unwrap();
        let rhs = &(&h1 * &lie_derivative(&h2, &f).unwrap()) + &(&h2 * &lie_derivative(&h1, &f).unwrap());
        prop_assert!(gap(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn lie_derivative_matches_central_differences(
        (h, _h2, f, _a) in setup(),
        seed in prop::collection::vec(-1.5..1.5f64, 4),
    ) {
        let n = h.nvars();
        let x: Vec<f64> = seed[..n].to_vec();
        let fx = f.eval(&x).unwrap();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let step = 1e-6 * (1.0 + xn);
        let plus: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a + step * b).collect();
        let minus: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a - step * b).collect();
        let fd = (h.eval(&plus).unwrap() - h.eval(&minus).unwrap()) / (2.0 * step);
        let exact = lie_derivative(&h, &f).unwrap().eval(&x).unwrap();
        // absolute floor for values that cancel to ~0
        let scale = exact.abs().max(h.eval_abs(&x).unwrap() * 1e-3).max(1e-6);
        prop_assert!((fd - exact).abs() / scale <= 1e-5, "fd {} exact {}", fd, exact);
    }

    #[test]
    fn print_parse_round_trip(p in (1..=4usize).prop_flat_map(|n| poly_strategy(n, 4))) {
        let text = p.to_string();
        let back = Polynomial::parse(&text, p.nvars()).unwrap();
        prop_assert!(gap(&p, &back) <= 1e-15, "{} vs {}", text, back);
    }

    #[test]
    fn repeated_lie_composes((h, _h2, f, _a) in setup()) {
        let twice = lie_derivative(&lie_derivative(&h, &f).unwrap(), &f).unwrap();
        prop_assert!(gap(&repeated_lie(&h, &f, 2).unwrap(), &twice) <= 1e-12);
        prop_assert_eq!(repeated_lie(&h, &f, 0).unwrap(), h);
    }
}

#[test]
fn planar_display() {
    // h = x1 + c x2 along the planar closed loop with feedback at z
    let (c, k1, k2, theta, z) = (0.7, 1.3, 2.1, 1.9, -0.4);
    let p = |s: String| Polynomial::parse(&s, 2).unwrap();
    let u = format!("-{k1:?}*x1 - {k2:?}*x2 - {z:?}*(x1 + {c:?}*x2)");
    let f = PolyVectorField::new(vec![
        p("x2".into()),
        p(format!("{theta:?}*(x1 + {c:?}*x2) + {u}")),
    ])
    .unwrap();
    let h = p(format!("x1 + {c:?}*x2"));
    let expected = p(format!(
        "{:?}*x1 + {:?}*x2 + {:?}*(x1 + {c:?}*x2)",
        -c * k1,
        1.0 - c * k2,
        c * (theta - z)
    ));
    assert!(gap(&lie_derivative(&h, &f).unwrap(), &expected) <= 1e-14);
}

#[test]
fn square_along_shift() {
    let f = PolyVectorField::new(vec![
        Polynomial::parse("x2", 3).unwrap(),
        Polynomial::parse("x1^2 + x3", 3).unwrap(),
        Polynomial::parse("x1", 3).unwrap(),
    ])
    .unwrap();
    let h = Polynomial::parse("x1^2", 3).unwrap();
    assert_eq!(lie_derivative(&h, &f).unwrap(), Polynomial::parse("2x1*x2", 3).unwrap());
    assert_eq!(Polynomial::parse("x1^2", 3).unwrap().eval(&[2.0, 0.0, 0.0]).unwrap(), 4.0);
    assert_eq!(Polynomial::parse("x1 + x2", 2).unwrap().eval(&[1.0, -1.0]).unwrap(), 0.0);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let h = Polynomial::parse("x1", 2).unwrap();
    let f = PolyVectorField::new(vec![Polynomial::parse("x1", 3).unwrap(); 3]).unwrap();
    assert!(lie_derivative(&h, &f).is_err());
    assert!(h.eval(&[1.0]).is_err());
}
