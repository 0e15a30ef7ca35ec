use super::*;
use proptest::prelude::*;

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn p(text: &str, n: usize) -> Polynomial {
    parse_polynomial(text, &names(n)).unwrap()
}

#[test]
fn difference_of_squares() {
    let a = p("x1 + 1", 2);
    let b = p("x1 - 1", 2);
    assert_eq!(a.mul(&b).unwrap(), p("x1^2 - 1", 2));
}

#[test]
fn add_zero_is_identity() {
    let a = p("3*x1^2 - 0.5*x2", 2);
    assert_eq!(a.add(&Polynomial::zero(2)).unwrap(), a);
}

#[test]
fn monomial_product_adds_exponents() {
    let a = p("-x1*x2", 2);
    let b = p("x1", 2);
    assert_eq!(a.mul(&b).unwrap(), p("-x1^2*x2", 2));
}

#[test]
fn dimension_mismatch_is_rejected() {
    let a = p("x1", 1);
    let b = p("x1", 2);
    assert!(matches!(a.add(&b), Err(PolyError::DimensionMismatch { .. })));
    assert!(a.eval(0.0, &[1.0, 2.0]).is_err());
}

#[test]
fn lie_derivative_bilinear_field() {
    // v = x1 along (x1' = -x1*x2, x2' = 0)
    let f = vec![p("-x1*x2", 2), Polynomial::zero(2)];
    assert_eq!(p("x1", 2).lie_derivative(&f).unwrap(), p("-x1*x2", 2));
    // v = t has unit generator under any field
    assert_eq!(p("t", 2).lie_derivative(&f).unwrap(), p("1", 2));
    // v = x1^2 -> 2 x1 * (-x1 x2)
    assert_eq!(p("x1^2", 2).lie_derivative(&f).unwrap(), p("-2*x1^2*x2", 2));
}

#[test]
fn lie_derivative_requires_full_field() {
    let f = vec![p("-x1*x2", 2)];
    assert!(matches!(
        p("x1", 2).lie_derivative(&f),
        Err(PolyError::FieldLengthMismatch { expected: 2, found: 1 })
    ));
}

#[test]
fn eval_examples() {
    assert_eq!(p("x1*x2", 2).eval(0.0, &[0.5, 1.0]).unwrap(), 0.5);
    assert_eq!(p("3", 2).eval(7.0, &[-2.0, 11.0]).unwrap(), 3.0);
    // the Example-2 x1 field at (1, 2)
    assert_eq!(p("-x1^3 + x1*x2", 2).eval(0.0, &[1.0, 2.0]).unwrap(), 1.0);
}

#[test]
fn basis_counts_and_order() {
    let b = monomial_basis(2, 2, false);
    let show: Vec<String> = b.iter().map(|m| m.to_string()).collect();
    assert_eq!(show, vec!["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]);

    assert_eq!(monomial_basis(1, 3, true).len(), 10); // C(5,3)
    let constant_only = monomial_basis(0, 5, false);
    assert_eq!(constant_only.len(), 1);
    assert!(constant_only[0].is_constant());
}

#[test]
fn basis_with_t_orders_time_first() {
    let b = monomial_basis(1, 2, true);
    let show: Vec<String> = b.iter().map(|m| m.to_string()).collect();
    assert_eq!(show, vec!["1", "t", "x1", "t^2", "t*x1", "x1^2"]);
}

#[test]
fn monomial_index_is_bijective() {
    let idx = MonomialIndex::new(2, 3, true);
    assert_eq!(idx.len(), binomial(3 + 3, 3));
    assert!(idx.monomial(0).is_constant());
    for i in 0..idx.len() {
        assert_eq!(idx.position(idx.monomial(i)), Some(i));
    }
    assert_eq!(idx.position(&Monomial::new(4, vec![0, 0])), None);
}

#[test]
fn parse_examples() {
    let q = p("-x1*x2", 2);
    assert_eq!(q.num_terms(), 1);
    assert_eq!(q.coefficient(&Monomial::new(0, vec![1, 1])), -1.0);

    assert_eq!(p("-x1^3 + x1*x2", 2).num_terms(), 2);

    let bad = parse_polynomial("x1 + + x2", &names(2));
    assert!(bad.is_err());
    let err = bad.unwrap_err();
    assert_eq!(err.pos, 5);

    let unknown = parse_polynomial("x1 + y", &names(2)).unwrap_err();
    assert!(unknown.message.contains("unknown variable"));
}

#[test]
fn parse_handles_parentheses_and_powers() {
    assert_eq!(p("(x1 + x2)^2", 2), p("x1^2 + 2*x1*x2 + x2^2", 2));
    assert_eq!(p("2.5e-1*x1", 1), p("0.25*x1", 1));
}

#[test]
fn substitute_t_fixes_time() {
    let q = p("t^2*x1 + t + 3", 1);
    assert_eq!(q.substitute_t(2.0), p("4*x1 + 5", 1));
}

#[test]
fn printer_is_canonical() {
    let q = p("x2 - x1^2 + 1", 2);
    assert_eq!(q.to_string(), "1.0 + x2 - x1^2");
}

// RK4 step for the finite-difference property below.
fn rk4_step(f: &[Polynomial], t: f64, x: &[f64], h: f64) -> Vec<f64> {
    let eval = |t: f64, x: &[f64]| -> Vec<f64> {
        f.iter().map(|fi| fi.eval(t, x).unwrap()).collect()
    };
    let k1 = eval(t, x);
    let add = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(xi, ki)| xi + s * ki).collect()
    };
    let k2 = eval(t + h / 2.0, &add(x, &k1, h / 2.0));
    let k3 = eval(t + h / 2.0, &add(x, &k2, h / 2.0));
    let k4 = eval(t + h, &add(x, &k3, h));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

#[test]
fn lie_derivative_matches_trajectory_derivative() {
    // d/ds v(t+s, phi(s)) at s=0 equals L_f v(t, x), checked by central
    // differences along an RK4 fine solution.
    let f = vec![p("-x1*x2", 2), Polynomial::zero(2)];
    let v = p("x1^2*x2 + t*x1", 2);
    let lv = v.lie_derivative(&f).unwrap();
    let (t0, x0) = (0.3, vec![0.5, 0.8]);
    let h = 1e-4;
    let fwd = rk4_step(&f, t0, &x0, h);
    let bwd = rk4_step(&f, t0, &x0, -h);
    let num = (v.eval(t0 + h, &fwd).unwrap() - v.eval(t0 - h, &bwd).unwrap()) / (2.0 * h);
    let exact = lv.eval(t0, &x0).unwrap();
    assert!((num - exact).abs() < 10.0 * h * h, "num={num} exact={exact}");
}

fn arb_poly(n_x: usize, max_deg: u32) -> impl Strategy<Value = Polynomial> {
    let mono = (0..=max_deg, proptest::collection::vec(0..=max_deg, n_x)).prop_map(
        move |(t_exp, x_exps)| Monomial::new(t_exp, x_exps),
    );
    proptest::collection::vec((mono, -2.0f64..2.0), 0..6).prop_map(move |terms| {
        let mut p = Polynomial::zero(n_x);
        for (m, c) in terms {
            if m.degree() <= max_deg {
                p = p.add(&Polynomial::from_monomial(m, c)).unwrap();
            }
        }
        p
    })
}

proptest! {
    #[test]
    fn lie_derivative_is_linear(u in arb_poly(2, 3), v in arb_poly(2, 3), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = vec![p("-x1*x2", 2), p("x1 - x2^2", 2)];
        let lhs = u.scale(a).add(&v.scale(b)).unwrap().lie_derivative(&f).unwrap();
        let rhs = u.lie_derivative(&f).unwrap().scale(a)
            .add(&v.lie_derivative(&f).unwrap().scale(b)).unwrap();
        // compare by evaluation on a few points (coefficients may differ by fp roundoff)
        for (t, x1, x2) in [(0.0, 0.3, 0.7), (0.5, -1.0, 0.2), (1.0, 0.9, -0.4)] {
            let l = lhs.eval(t, &[x1, x2]).unwrap();
            let r = rhs.eval(t, &[x1, x2]).unwrap();
            prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs().max(r.abs())));
        }
    }

    #[test]
    fn zero_field_reduces_to_time_derivative(a in 0u32..4, b in 0u32..4) {
        let f = vec![Polynomial::zero(1)];
        let v = Polynomial::from_monomial(Monomial::new(a, vec![b]), 1.0);
        let lv = v.lie_derivative(&f).unwrap();
        let expected = if a == 0 {
            Polynomial::zero(1)
        } else {
            Polynomial::from_monomial(Monomial::new(a - 1, vec![b]), f64::from(a))
        };
        prop_assert_eq!(lv, expected);
    }

    #[test]
    fn parse_print_roundtrip(q in arb_poly(3, 4)) {
        let text = q.to_string();
        let back = parse_polynomial(&text, &names(3)).unwrap();
        prop_assert_eq!(back, q);
    }
}
