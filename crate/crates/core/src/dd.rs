//! Double-double arithmetic (about 32 significant digits) for the
//! extended-precision reference flow. Only what the oracle needs.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: e }
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

#[inline]
fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd { hi: p, lo: a.mul_add(b, -p) }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact sum of two doubles.
    pub fn sum(a: f64, b: f64) -> Self {
        two_sum(a, b)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_zero(self) -> bool {
        self.hi == 0.0
    }

    #[cfg(test)]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let p = two_prod(self.hi, b);
        quick_two_sum(p.hi, p.lo + self.lo * b)
    }

    pub fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Dd { hi: self.hi * s, lo: self.lo * s }
    }

    /// `e^x − 1` by argument reduction and Taylor series.
    pub fn exp_m1(self) -> Self {
        if self.is_zero() {
            return Dd::ZERO;
        }
        if self.hi.abs() < 0.25 {
            return taylor_exp_m1(self);
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2.mul_f64(k);
        // e^x = 2^k e^r; halve r a few times and square back
        let mut e = taylor_exp_m1(r.ldexp(-4));
        for _ in 0..4 {
            e = e * (e + Dd::new(2.0));
        }
        (e + Dd::ONE).ldexp(k as i32) - Dd::ONE
    }

    /// `ln(1 + x)` for `x > −1`: one Newton step on `exp_m1` from the
    /// double-precision estimate.
    pub fn ln_1p(self) -> Self {
        let y = Dd::new(self.to_f64().ln_1p());
        let e = y.exp_m1();
        y - (e - self) / (e + Dd::ONE)
    }
}

fn taylor_exp_m1(x: Dd) -> Dd {
    let mut term = x;
    let mut sum = x;
    for n in 2..40 {
        term = term * x / Dd::new(n as f64);
        sum = sum + term;
        if term.hi.abs() < 1e-34 * sum.hi.abs() {
            break;
        }
    }
    sum
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let s = two_sum(self.hi, b.hi);
        let t = two_sum(self.lo, b.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = two_prod(self.hi, b.hi);
        quick_two_sum(p.hi, p.lo + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        quick_two_sum(q1, q2) + Dd::new(q3)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            o => o,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_keeps_the_low_word() {
        let third = Dd::ONE / Dd::new(3.0);
        let back = third * Dd::new(3.0) - Dd::ONE;
        assert!(back.to_f64().abs() < 1e-31);
        let s = Dd::sum(1.0, 1e-20);
        assert_eq!((s - Dd::ONE).to_f64(), 1e-20);
    }

    #[test]
    fn exp_m1_matches_f64_and_identities() {
        for x in [-3.0, -0.7, -1e-3, 1e-12, 0.2, 0.5, 2.5] {
            let e = Dd::new(x).exp_m1();
            assert!((e.to_f64() - x.exp_m1()).abs() <= 4.0 * f64::EPSILON * x.exp_m1().abs());
            // e^{2x} − 1 = (e^x − 1)(e^x + 1)
            let lhs = Dd::new(2.0 * x).exp_m1();
            let rhs = e * (e + Dd::new(2.0));
            assert!((lhs - rhs).abs().to_f64() <= 1e-30 * lhs.abs().to_f64().max(1.0));
        }
    }

    #[test]
    fn known_constants() {
        let e1 = Dd::ONE.exp_m1() - Dd { hi: 1.718_281_828_459_045_3, lo: -7.747_991_575_210_629e-17 };
        assert!(e1.abs().to_f64() < 1e-31);
        let l = Dd::new(0.5).ln_1p() - Dd { hi: 0.405_465_108_108_164_4, lo: -2.881_138_025_962_642_6e-18 };
        assert!(l.abs().to_f64() < 1e-31);
    }

    #[test]
    fn ln_1p_inverts_exp_m1() {
        for x in [-0.9, -0.3, -1e-9, 1e-15, 0.4, 3.0, 50.0] {
            let y = Dd::new(x).ln_1p();
            assert!((y.exp_m1() - Dd::new(x)).abs().to_f64() <= 1e-30 * (1.0 + x.abs()));
            assert!((y.to_f64() - x.ln_1p()).abs() <= 4.0 * f64::EPSILON * x.ln_1p().abs());
        }
    }
}
