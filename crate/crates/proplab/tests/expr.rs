use proplab::expr::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn at(e: &Expr, x: &[f64]) -> f64 {
    evaluate(e, x).unwrap()
}

/// Random smooth expression text built from the full grammar.
fn gen(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.5) {
            format!("x{}", rng.gen_range(0..4))
        } else {
            format!("{}", rng.gen_range(-2.0..2.0))
        };
    }
    let a = gen(rng, depth - 1);
    let b = gen(rng, depth - 1);
    match rng.gen_range(0..13) {
        0 => format!("({a}) + ({b})"),
        1 => format!("({a}) - ({b})"),
        2 => format!("({a}) * ({b})"),
        3 => format!("({a}) / (2 + ({b})^2)"),
        4 => format!("({a})^{}", rng.gen_range(1..4)),
        5 => format!("sin({a})"),
        6 => format!("cos({a})"),
        7 => format!("exp(0.3*tanh({a}))"),
        8 => format!("log(1 + ({a})^2)"),
        9 => format!("sqrt(1 + ({a})^2)"),
        10 => format!("sinh(0.5*tanh({a})) * cosh(0.2*tanh({b}))"),
        11 => format!("tan(0.3*tanh({a}))"),
        _ => format!("-({a})"),
    }
}

#[test]
fn spec_examples() {
    let e = parse_expression("-x0 + 1").unwrap();
    assert_eq!(at(&e, &[0.5]), 0.5);
    let e = parse_expression("exp(2*x1)/x2").unwrap();
    let oracle = (0.6f64).exp() / 2.0;
    assert!((at(&e, &[0.0, 0.3, 2.0]) - oracle).abs() < 1e-15);
    assert!((oracle - 0.911059).abs() < 1e-6);
    assert_eq!(at(&parse_expression("1").unwrap(), &[3.0, 4.0]), 1.0);
    assert_eq!(at(&parse_expression("x0 - x0").unwrap(), &[7.3]), 0.0);
    assert!((at(&parse_expression("log(x0)").unwrap(), &[2.0]) - 2f64.ln()).abs() < 1e-16);
    assert_eq!(parse_expression("t^2").unwrap(), parse_expression("x0^2").unwrap());
}

#[test]
fn ast_shapes() {
    let e = parse_expression("x0^2 * sin(x1)").unwrap();
    assert_eq!(e, var(0).powi(2).mul(Expr::call(Func::Sin, var(1))));
    let e = parse_expression("-x0 + 1").unwrap();
    assert!(matches!(e, Expr::Add(ref l, ref r) if matches!(**l, Expr::Neg(_)) && **r == Expr::Num(1.0)));
    assert!(matches!(parse_expression("x0 - x1 - x2").unwrap(), Expr::Sub(ref l, _) if matches!(**l, Expr::Sub(..))));
    assert!(matches!(parse_expression("x0 / x1 * x2").unwrap(), Expr::Mul(ref l, _) if matches!(**l, Expr::Div(..))));
}

#[test]
fn derivative_examples() {
    let d = differentiate(&parse_expression("x0^2").unwrap(), 0);
    assert_eq!(d.to_string(), "2*x0");
    let d = differentiate(&parse_expression("sin(x1)*x0").unwrap(), 1);
    assert_eq!(d.to_string(), "cos(x1)*x0");
    let e = parse_expression("exp(x0*x1)").unwrap();
    let d = at(&differentiate(&e, 0), &[0.2, 3.0]);
    let h = 1e-5;
    let fd = (at(&e, &[0.2 + h, 3.0]) - at(&e, &[0.2 - h, 3.0])) / (2.0 * h);
    assert!((d - fd).abs() < 1e-6 * d.abs());
    assert!((d - 5.46635).abs() < 1e-5);
}

#[test]
fn errors_carry_offsets() {
    match parse_expression("x0 + * 2") {
        Err(ParseError::Syntax { offset, expected }) => {
            assert_eq!(offset, 5);
            assert!(!expected.is_empty());
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        parse_expression("foo(x0)"),
        Err(ParseError::UnknownIdentifier { offset: 0, .. })
    ));
    assert!(matches!(parse_expression("x7"), Err(ParseError::UnknownIdentifier { .. })));
    assert!(parse_expression("x0^1.5").is_err());
    assert!(parse_expression("").is_err());
}

#[test]
fn evaluation_domain_errors() {
    assert!(matches!(evaluate(&parse_expression("log(x0)").unwrap(), &[-1.0]), Err(EvalError::Domain(_))));
    assert!(matches!(evaluate(&parse_expression("sqrt(x0)").unwrap(), &[-1.0]), Err(EvalError::Domain(_))));
    assert!(matches!(evaluate(&parse_expression("1/x0").unwrap(), &[0.0]), Err(EvalError::Domain(_))));
    assert!(evaluate(&parse_expression("exp(x0)").unwrap(), &[1e4]).is_err());
}

#[test]
fn parser_is_total_on_random_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let alphabet = b"x0123456789t+-*/^() .esincoqrtahlgp,";
    for k in 0..100_000 {
        let len = rng.gen_range(0..24);
        let bytes: Vec<u8> = (0..len)
            .map(|_| {
                if k % 2 == 0 {
                    rng.gen()
                } else {
                    alphabet[rng.gen_range(0..alphabet.len())]
                }
            })
            .collect();
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_expression(&text);
    }
}

#[test]
fn print_parse_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let e = parse_expression(&gen(&mut rng, 4)).unwrap();
        let back = parse_expression(&e.to_string()).unwrap();
        for _ in 0..100 {
            let mut s = [0.0; NUM_SLOTS];
            for v in s.iter_mut().take(4) {
                *v = rng.gen_range(-2.0..2.0);
            }
            let (a, b) = (eval_raw(&e, &s), eval_raw(&back, &s));
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "{e}");
        }
    }
}

#[test]
fn derivatives_match_finite_differences_on_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut checked = 0;
    for _ in 0..50 {
        let e = parse_expression(&gen(&mut rng, 3)).unwrap();
        for mu in 0..4 {
            let d = differentiate(&e, mu);
            for _ in 0..5 {
                let mut s = [0.0; NUM_SLOTS];
                for v in s.iter_mut().take(4) {
                    *v = rng.gen_range(-1.5..1.5);
                }
                let h = 1e-5;
                let mut sp = s;
                let mut sm = s;
                sp[mu] += h;
                sm[mu] -= h;
                let fd = (eval_raw(&e, &sp) - eval_raw(&e, &sm)) / (2.0 * h);
                let exact = eval_raw(&d, &s);
                let scale = exact.abs().max(1.0);
                assert!((exact - fd).abs() < 1e-6 * scale, "{e} d/dx{mu}: {exact} vs {fd}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 1000);
}

#[test]
fn folding_keeps_derivative_trees_small() {
    let e = parse_expression("x1*x2 + 3").unwrap();
    assert!(differentiate(&e, 0).is_zero());
    assert_eq!(differentiate(&e, 1), var(2));
}
