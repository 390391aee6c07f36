//! Double-double arithmetic: a value is the unevaluated sum `hi + lo` of two
//! f64 components with |lo| <= ulp(hi)/2, giving roughly 31 significant
//! decimal digits. Used internally by the Mittag-Leffler series, where
//! alternating terms cancel to far below what f64 terms can resolve.
//!
//! The error-free transforms (two_sum, two_prod) are the standard Knuth/Dekker
//! constructions; two_prod relies on fused multiply-add.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[cfg_attr(not(test), allow(dead_code))] // test oracles only
pub(crate) const DD_PI: Dd = Dd { hi: std::f64::consts::PI, lo: 1.2246467991473532e-16 };
const DD_LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };
// ln(sqrt(2*pi)), the additive constant of the Stirling series.
const DD_LN_SQRT_2PI: Dd = Dd { hi: 0.9189385332046728, lo: -3.8782941580672414e-17 };

/// s + err = a + b exactly, with s = fl(a + b).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Faster variant; requires |a| >= |b| (or a == 0).
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// p + err = a * b exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two f64 values, kept to full width.
    #[inline]
    pub fn prod(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn neg(self) -> Self {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn add(self, rhs: Dd) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let e = e + self.lo + rhs.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, rhs: Dd) -> Self {
        self.add(rhs.neg())
    }

    #[inline]
    pub fn add_f64(self, rhs: f64) -> Self {
        self.add(Dd::from_f64(rhs))
    }

    #[inline]
    pub fn mul(self, rhs: Dd) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + self.hi * rhs.lo + self.lo * rhs.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, rhs: f64) -> Self {
        let (p, e) = two_prod(self.hi, rhs);
        let e = e + self.lo * rhs;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    /// Long division: three correction passes reach full dd precision.
    pub fn div(self, rhs: Dd) -> Self {
        let q1 = self.hi / rhs.hi;
        let r = self.sub(rhs.mul_f64(q1));
        let q2 = r.hi / rhs.hi;
        let r = r.sub(rhs.mul_f64(q2));
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add_f64(q3)
    }

    #[inline]
    pub fn recip(self) -> Self {
        Dd::from_f64(1.0).div(self)
    }

    /// One dd Newton step on an f64 seed doubles its precision.
    #[cfg_attr(not(test), allow(dead_code))] // test oracles only
    pub fn sqrt(self) -> Self {
        debug_assert!(self.hi >= 0.0);
        if self.hi == 0.0 {
            return Dd::from_f64(0.0);
        }
        let y = Dd::from_f64(self.hi.sqrt());
        y.add(self.div(y)).mul_f64(0.5)
    }

    /// exp(x) via k*ln2 range reduction and a Taylor tail on |r| <= ln2/2.
    /// Accurate to ~1e-31 relative for |x| <= 709.
    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd { hi: f64::INFINITY, lo: 0.0 };
        }
        if self.hi < -745.0 {
            return Dd::from_f64(0.0);
        }
        let k = (self.hi / DD_LN2.hi).round();
        let r = self.sub(DD_LN2.mul_f64(k));
        // Taylor sum of exp(r); 26 terms leave a tail below 1e-33. The 1/n
        // factor must be divided in dd, not premultiplied as a rounded f64.
        let mut term = Dd::from_f64(1.0);
        let mut sum = Dd::from_f64(1.0);
        for n in 1..=26 {
            term = term.mul(r).div(Dd::from_f64(n as f64));
            sum = sum.add(term);
        }
        let scale = 2.0_f64.powi(k as i32);
        Dd { hi: sum.hi * scale, lo: sum.lo * scale }
    }

    /// ln(x) for x > 0: f64 seed plus one dd Newton step y += x*exp(-y) - 1.
    pub fn ln(self) -> Self {
        debug_assert!(self.hi > 0.0);
        let y = Dd::from_f64(self.hi.ln());
        let correction = self.mul(y.neg().exp()).add_f64(-1.0);
        y.add(correction)
    }
}

// Bernoulli quotients B_{2k} / (2k * (2k-1)) for the Stirling series,
// k = 1..13, pre-split to double-double so no rational rounding leaks in.
const STIRLING: [Dd; 13] = [
    Dd { hi: 0.08333333333333333, lo: 4.625929269271485e-18 },
    Dd { hi: -0.002777777777777778, lo: 1.0601087908747154e-19 },
    Dd { hi: 0.0007936507936507937, lo: 6.883823317368282e-22 },
    Dd { hi: -0.0005952380952380953, lo: 5.36938218754726e-20 },
    Dd { hi: 0.0008417508417508417, lo: 3.6870174889237694e-20 },
    Dd { hi: -0.0019175269175269176, lo: 1.0675702776872475e-19 },
    Dd { hi: 0.00641025641025641, lo: 2.2240044563805217e-19 },
    Dd { hi: -0.029550653594771242, lo: 4.861760957508855e-19 },
    Dd { hi: 0.17964437236883057, lo: -6.401600482710946e-19 },
    Dd { hi: -1.3924322169059011, lo: 1.5837056989230303e-17 },
    Dd { hi: 13.402864044168393, lo: -6.154114101993966e-16 },
    Dd { hi: -156.84828462600203, lo: 9.391823141715389e-15 },
    Dd { hi: 2193.1033333333335, lo: -1.3339255626002948e-13 },
];

/// log Gamma(x) for x > 0 in double-double precision.
///
/// Stirling's series applies directly for x >= 32, where thirteen Bernoulli
/// terms leave a remainder below 1e-34 relative; smaller arguments are lifted
/// with log Gamma(x) = log Gamma(x + m) - sum ln(x + j).
pub(crate) fn lgamma_dd(x: Dd) -> Dd {
    debug_assert!(x.hi > 0.0);
    let shift = if x.hi < 32.0 { (32.0 - x.hi).ceil() as usize } else { 0 };
    let z = x.add_f64(shift as f64);
    let mut log_shift = Dd::from_f64(0.0);
    for j in 0..shift {
        log_shift = log_shift.add(x.add_f64(j as f64).ln());
    }
    let ln_z = z.ln();
    let mut result = z.add_f64(-0.5).mul(ln_z).sub(z).add(DD_LN_SQRT_2PI);
    let inv = z.recip();
    let inv2 = inv.mul(inv);
    let mut power = inv;
    for b in STIRLING {
        result = result.add(power.mul(b));
        power = power.mul(inv2);
    }
    result.sub(log_shift)
}
