use masim_core::logic::{
    estimate_risk, parse, stl_robustness_vector, AffineExpr, Formula, Interval, Predicate, RiskQuery, Trace,
};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn small_interval() -> impl Strategy<Value = Interval> {
    (0u8..3, 0u8..3).prop_map(|(a, w)| Interval::new(a as f64, (a + w) as f64).unwrap())
}

fn affine() -> impl Strategy<Value = Predicate> {
    (prop::collection::vec(-3i8..=3, 1..3), -4i8..=4).prop_map(|(c, k)| {
        Predicate::Affine(AffineExpr::new(c.into_iter().map(f64::from).collect(), f64::from(k)))
    })
}

fn stl_formula() -> impl Strategy<Value = Formula> {
    affine().prop_map(Formula::Pred).prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            inner.clone().prop_map(Formula::next),
            (small_interval(), inner.clone()).prop_map(|(i, f)| Formula::always(i, f)),
            (small_interval(), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
            (small_interval(), inner.clone(), inner.clone()).prop_map(|(i, a, b)| Formula::timed_until(i, a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::until(a, b)),
        ]
    })
}

fn ltl_formula() -> impl Strategy<Value = Formula> {
    prop_oneof![Just(Formula::atom("p")), Just(Formula::atom("q")), Just(Formula::True)].prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            inner.clone().prop_map(Formula::next),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::until(a, b)),
            inner.clone().prop_map(|f| Formula::always(Interval::unbounded(), f)),
            (small_interval(), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
            (small_interval(), inner.clone(), inner).prop_map(|(i, a, b)| Formula::timed_until(i, a, b)),
        ]
    })
}

/// Boolean semantics on unit-spaced samples, written directly from the
/// definitions. `None` when the trace is too short.
fn holds(tr: &[Vec<f64>], f: &Formula, i: usize) -> Option<bool> {
    let n = tr.len();
    let window = |iv: &Interval| -> Option<Vec<usize>> {
        if iv.hi.is_infinite() {
            return Some((i..n).collect());
        }
        let (lo, hi) = (i + iv.lo as usize, i + iv.hi as usize);
        (hi < n).then(|| (lo..=hi).collect())
    };
    Some(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Pred(p) => p.value(&tr[i]).unwrap() >= 0.0,
        Formula::Not(g) => !holds(tr, g, i)?,
        Formula::And(a, b) => {
            let (x, y) = (holds(tr, a, i)?, holds(tr, b, i)?);
            x && y
        }
        Formula::Or(a, b) => {
            let (x, y) = (holds(tr, a, i)?, holds(tr, b, i)?);
            x || y
        }
        Formula::Next(g) => {
            if i + 1 >= n {
                return None;
            }
            holds(tr, g, i + 1)?
        }
        Formula::Always(iv, g) => {
            let mut all = true;
            for j in window(iv)? {
                all &= holds(tr, g, j)?;
            }
            all
        }
        Formula::Eventually(iv, g) => {
            let mut any = false;
            for j in window(iv)? {
                any |= holds(tr, g, j)?;
            }
            any
        }
        Formula::Until(a, b) | Formula::TimedUntil(_, a, b) => {
            let iv = match f {
                Formula::TimedUntil(iv, ..) => *iv,
                _ => Interval::unbounded(),
            };
            let w = window(&iv)?;
            let mut any = false;
            for j in w {
                let mut prefix = true;
                for m in i..j {
                    prefix &= holds(tr, a, m)?;
                }
                any |= prefix && holds(tr, b, j)?;
            }
            any
        }
        Formula::Atom(_) => unreachable!("stl formulas only"),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn stl_sign_soundness(
        f in stl_formula(),
        samples in prop::collection::vec(prop::collection::vec(-3i8..=3, 2), 1..9),
    ) {
        let states: Vec<Vec<f64>> = samples.iter().map(|s| s.iter().map(|v| f64::from(*v) * 0.5).collect()).collect();
        let trace = Trace::uniform(0.0, 1.0, states.clone()).unwrap();
        let rob = stl_robustness_vector(&trace, &f).unwrap();
        for (i, r) in rob.iter().enumerate() {
            let b = holds(&states, &f, i);
            // The oracle short-circuits, so it may be defined where the
            // eager evaluator is not, never the other way round.
            prop_assert!(r.is_none() || b.is_some(), "definedness at {} for {}", i, f);
            if let (Some(r), Some(b)) = (r, b) {
                if *r > 0.0 { prop_assert!(b, "rho {} > 0 but violated: {} at {}", r, f, i); }
                if *r < 0.0 { prop_assert!(!b, "rho {} < 0 but satisfied: {} at {}", r, f, i); }
            }
        }
    }

    #[test]
    fn print_parse_identity(f in prop_oneof![stl_formula(), ltl_formula()]) {
        let text = f.to_string();
        prop_assert_eq!(parse(&text).unwrap(), f, "{}", text);
    }
}

#[test]
fn gaussian_half_space() {
    let f = parse("x1 >= 0").unwrap();
    let source = |rng: &mut ChaCha8Rng| {
        let x: f64 = StandardNormal.sample(rng);
        Trace::scalar(&[x]).unwrap()
    };
    let est = estimate_risk(source, &f, &RiskQuery::new(10_000, 2024)).unwrap();
    assert!((est.p_hat - 0.5).abs() <= 0.02, "{}", est.p_hat);
    assert!(!est.pass);
}
