//! Double-double arithmetic (about 106 bits of mantissa) for
//! finite-difference oracles whose f64 roundoff floor is too high.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

pub const LN2: DD = DD {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DD {
    pub const ZERO: DD = DD { hi: 0.0, lo: 0.0 };
    pub const ONE: DD = DD { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        DD { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale_pow2(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        DD {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Self {
        if self.hi > 700.0 {
            return DD::new(f64::INFINITY);
        }
        if self.hi < -700.0 {
            return DD::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * DD::new(k)).scale_pow2(-10);
        // Taylor series of exp(r) for |r| < 2^-10.
        let mut term = DD::ONE;
        let mut sum = DD::ONE;
        for n in 1..=22 {
            term = term * r / DD::new(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.scale_pow2(k as i32)
    }

    pub fn ln(self) -> Self {
        assert!(self.hi > 0.0);
        let mut y = DD::new(self.hi.ln());
        for _ in 0..3 {
            y = y + self * (-y).exp() - DD::ONE;
        }
        y
    }

    pub fn tanh(self) -> Self {
        let e = (self + self).exp();
        (e - DD::ONE) / (e + DD::ONE)
    }

    pub fn sigmoid(self) -> Self {
        DD::ONE / (DD::ONE + (-self).exp())
    }

    pub fn max(self, other: DD) -> DD {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, y: DD) -> DD {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, y: DD) -> DD {
        self + (-y)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, y: DD) -> DD {
        let (p, e) = two_prod(self.hi, y.hi);
        let e = e + (self.hi * y.lo + self.lo * y.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, y: DD) -> DD {
        let q1 = self.hi / y.hi;
        let r = self - y * DD::new(q1);
        let q2 = r.hi / y.hi;
        let r = r - y * DD::new(q2);
        let q3 = r.hi / y.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DD { hi, lo } + DD::new(q3)
    }
}
