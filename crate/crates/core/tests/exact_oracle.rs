//! Rational-arithmetic reimplementation of the optimality equations, used to
//! settle cases where the float solver lands exactly on a tie.

use std::collections::HashMap;

use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};

use collabq::presets::example;
use collabq::solver::{diff, solve_optimal};
use collabq::thresholds::{actual_profile, constants, heuristic_profile};
use collabq::Threshold;

type Q = BigRational;

fn q(num: i64, den: i64) -> Q {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

struct Exact {
    c1: u32,
    c2: u32,
    mu1: Q,
    mu2: Q,
    h: [Q; 3],
    memo: HashMap<(u32, u32, u32), Q>,
}

impl Exact {
    fn v(&mut self, i: u32, k: u32, l: u32) -> Q {
        if i == 0 && k == 0 && l == 0 {
            return Q::zero();
        }
        if let Some(x) = self.memo.get(&(i, k, l)) {
            return x.clone();
        }
        let served2 = l.min(self.c2);
        let rate = &self.mu1 * Q::from_integer(k.into()) + &self.mu2 * Q::from_integer(served2.into());
        let mut acc = &self.h[0] * Q::from_integer(i.into())
            + &self.h[1] * Q::from_integer(k.into())
            + &self.h[2] * Q::from_integer(l.into());
        if k > 0 {
            let next = if i == 0 {
                self.v(0, k - 1, l)
            } else {
                let a = self.v(i - 1, k, l);
                let b = self.v(i - 1, k - 1, l + 1);
                a.min(b)
            };
            acc += &self.mu1 * Q::from_integer(k.into()) * next;
        }
        if served2 > 0 {
            let next = if i == 0 {
                self.v(0, k, l - 1)
            } else {
                let a = self.v(i - 1, k + 1, l - 1);
                let b = self.v(i - 1, k, l);
                a.min(b)
            };
            acc += &self.mu2 * Q::from_integer(served2.into()) * next;
        }
        let out = acc / rate;
        self.memo.insert((i, k, l), out.clone());
        out
    }

    fn d(&mut self, i: u32, k: u32, l: u32) -> Q {
        self.v(i, k, l) - self.v(i, k - 1, l + 1)
    }
}

fn fifth_example() -> Exact {
    // C1=4, C2=2, mu1=1, mu2=3/2, h0=1/5, h1=1, h2=1/5
    Exact {
        c1: 4,
        c2: 2,
        mu1: q(1, 1),
        mu2: q(3, 2),
        h: [q(1, 5), q(1, 1), q(1, 5)],
        memo: HashMap::new(),
    }
}

#[test]
fn fifth_example_has_an_exact_tie_at_twelve() {
    let mut ex = fifth_example();
    assert_eq!(ex.c1, 4);
    for i in 0..12 {
        assert!(ex.d(i, 2, 2).is_positive(), "D({i},2,2) should be positive");
    }
    assert!(ex.d(12, 2, 2).is_zero());
    assert!(ex.d(13, 2, 2).is_negative());
}

#[test]
fn fifth_example_surrogate_root_is_integral() {
    // R2(2) = (C2 m (h1 - h2) - C1 h2) / h0 + (k - 1 + C2 m) with m = 3/2
    let m = q(3, 2);
    let r2 = (q(2, 1) * &m * (q(1, 1) - q(1, 5)) - q(4, 1) * q(1, 5)) / q(1, 5) + (q(1, 1) + q(2, 1) * &m);
    assert_eq!(r2, q(12, 1));
    let p = example("ex5").unwrap();
    assert!((constants(&p).r2_k(2) - 12.0).abs() < 1e-9);
}

#[test]
fn float_solver_thresholds_agree_with_exact_crossing() {
    let p = example("ex5").unwrap();
    let d = diff(&solve_optimal(&p, 40)).unwrap();
    assert!(d.d(12, 2, 2).abs() < 1e-9);
    let act = actual_profile(&p, &d).unwrap();
    assert_eq!(act.get(2), Some(Threshold::Finite(13)));
    assert_eq!(heuristic_profile(&p).get(2), Some(Threshold::Finite(13)));
}

#[test]
fn float_solver_matches_exact_values() {
    let mut ex = fifth_example();
    let p = example("ex5").unwrap();
    let t = solve_optimal(&p, 15);
    for (s, v) in t.iter() {
        let exact = ex.v(s.i, s.k, s.l);
        let approx = exact.to_f64().unwrap();
        assert!((v - approx).abs() <= 1e-12 * (1.0 + approx.abs()), "{s}: {v} vs {approx}");
    }
}
