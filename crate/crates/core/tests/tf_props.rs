use num_complex::Complex64;
use proptest::prelude::*;

use hostcap::tf::{pade_delay, poly_roots, Polynomial, RationalFunction, DEFAULT_POLISH_ITERS};

fn poly(max_deg: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(-10.0f64..10.0, 2..=max_deg + 1)
        .prop_filter("nonconstant", |c| c.last().is_some_and(|x| x.abs() > 0.1))
        .prop_map(Polynomial::new)
}

fn rational() -> impl Strategy<Value = RationalFunction> {
    (poly(4), poly(4)).prop_map(|(n, d)| RationalFunction::new(n, d).unwrap())
}

fn root() -> impl Strategy<Value = Complex64> {
    (0.1f64..3.0, 0.0f64..std::f64::consts::PI).prop_map(|(r, th)| Complex64::from_polar(r, th))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roots_closed_under_conjugation(p in poly(12)) {
        let roots = poly_roots(&p, DEFAULT_POLISH_ITERS).unwrap().values;
        prop_assert_eq!(roots.len(), p.degree().unwrap());
        for r in &roots {
            let tol = 1e-6 * r.norm().max(1.0);
            prop_assert!(roots.iter().any(|q| (q - r.conj()).norm() <= tol), "{} lacks a conjugate", r);
        }
    }

    // planted roots in conjugate pairs, well separated on a circle
    #[test]
    fn planted_roots_recovered(
        pairs in prop::collection::vec(root(), 1..=12),
        scale in 1e-12f64..1e3,
        freq in 1.0f64..1e4,
    ) {
        let mut planted: Vec<Complex64> = Vec::new();
        for (i, z) in pairs.iter().enumerate() {
            // force distinct moduli so roots never collide
            let z = Complex64::from_polar(1.0 + 0.15 * i as f64, z.arg()) * freq;
            if z.im.abs() < 1e-3 * freq {
                planted.push(Complex64::new(z.re, 0.0));
            } else {
                planted.push(z);
                planted.push(z.conj());
            }
        }
        prop_assume!(planted.len() <= 25);
        let p = Polynomial::from_roots(&planted).scale(scale);
        let got = poly_roots(&p, DEFAULT_POLISH_ITERS).unwrap();
        for r in &planted {
            let best = got.values.iter().map(|g| (g - r).norm()).fold(f64::MAX, f64::min);
            prop_assert!(best <= 1e-6 * r.norm(), "{} missed by {}", r, best);
        }
    }

    #[test]
    fn pade_is_all_pass(td in 1e-6f64..2e-4, w in 1.0f64..1e5) {
        let g = pade_delay(td).unwrap();
        let v = g.eval(Complex64::new(0.0, w)).unwrap();
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arithmetic_laws_pointwise(a in rational(), b in rational(), c in rational(), pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 20)) {
        let ab_c = a.add(&b).add(&c);
        let a_bc = a.add(&b.add(&c));
        let ab = a.mul(&b);
        let ba = b.mul(&a);
        for (re, im) in pts {
            let s = Complex64::new(re, im);
            let (Ok(x), Ok(y)) = (ab_c.eval(s), a_bc.eval(s)) else { continue };
            prop_assert!((x - y).norm() <= 1e-8 * (1.0 + x.norm()));
            let (Ok(x), Ok(y)) = (ab.eval(s), ba.eval(s)) else { continue };
            prop_assert!((x - y).norm() <= 1e-8 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn reduce_keeps_function(a in poly(3), extra in root()) {
        // a common factor (s - r)(s - conj r) must cancel and leave the same function
        let f = Polynomial::from_roots(&[extra, extra.conj()]);
        let num = &a * &f;
        let den = &Polynomial::new(vec![2.0, 3.0, 1.0]) * &f;
        let r = RationalFunction::new(num, den).unwrap();
        let reduced = r.reduce(1e-6).unwrap();
        prop_assert!(reduced.den().degree().unwrap() <= 2);
        let s = Complex64::new(0.3, 7.0);
        let (x, y) = (r.eval(s).unwrap(), reduced.eval(s).unwrap());
        prop_assert!((x - y).norm() <= 1e-6 * x.norm().max(1e-12));
    }
}
