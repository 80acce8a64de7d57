use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};

use super::tape::{record, record_iter, CONST};
use crate::scalar::Scalar;

/// Scalar that records every operation on the thread-local tape.
///
/// Constants carry no tape index, so mixing literals into an expression
/// costs nothing.
#[derive(Clone, Copy)]
pub struct Var {
    idx: u32,
    v: f64,
}

impl Var {
    pub fn constant(v: f64) -> Self {
        Var { idx: CONST, v }
    }

    pub(crate) fn from_raw(idx: u32, v: f64) -> Self {
        Var { idx, v }
    }

    pub fn value(&self) -> f64 {
        self.v
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    pub(crate) fn index(&self) -> u32 {
        self.idx
    }

    #[inline]
    fn unary(self, v: f64, d: f64) -> Var {
        if self.idx == CONST {
            Var::constant(v)
        } else {
            Var::from_raw(record(v, &[(self.idx, d)]), v)
        }
    }

    #[inline]
    fn binary(self, other: Var, v: f64, da: f64, db: f64) -> Var {
        match (self.idx == CONST, other.idx == CONST) {
            (true, true) => Var::constant(v),
            (false, true) => Var::from_raw(record(v, &[(self.idx, da)]), v),
            (true, false) => Var::from_raw(record(v, &[(other.idx, db)]), v),
            (false, false) => Var::from_raw(record(v, &[(self.idx, da), (other.idx, db)]), v),
        }
    }
}

impl Default for Var {
    fn default() -> Self {
        Var::constant(0.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.idx == CONST {
            write!(f, "Var(const {})", self.v)
        } else {
            write!(f, "Var(#{} {})", self.idx, self.v)
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.v, f)
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, rhs: Var) -> Var {
        self.binary(rhs, self.v + rhs.v, 1.0, 1.0)
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, rhs: Var) -> Var {
        self.binary(rhs, self.v - rhs.v, 1.0, -1.0)
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, rhs: Var) -> Var {
        self.binary(rhs, self.v * rhs.v, rhs.v, self.v)
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, rhs: Var) -> Var {
        let inv = 1.0 / rhs.v;
        self.binary(rhs, self.v * inv, inv, -self.v * inv * inv)
    }
}

impl Rem for Var {
    type Output = Var;
    fn rem(self, rhs: Var) -> Var {
        self.binary(rhs, self.v % rhs.v, 1.0, -(self.v / rhs.v).trunc())
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.v, -1.0)
    }
}

impl AddAssign for Var {
    fn add_assign(&mut self, rhs: Var) {
        *self = *self + rhs;
    }
}

impl SubAssign for Var {
    fn sub_assign(&mut self, rhs: Var) {
        *self = *self - rhs;
    }
}

impl MulAssign for Var {
    fn mul_assign(&mut self, rhs: Var) {
        *self = *self * rhs;
    }
}

impl DivAssign for Var {
    fn div_assign(&mut self, rhs: Var) {
        *self = *self / rhs;
    }
}

impl Sum for Var {
    fn sum<I: Iterator<Item = Var>>(iter: I) -> Var {
        let xs: Vec<Var> = iter.collect();
        Var::sum_of(&xs)
    }
}

impl Zero for Var {
    fn zero() -> Self {
        Var::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.v == 0.0
    }
}

impl One for Var {
    fn one() -> Self {
        Var::constant(1.0)
    }
}

impl Num for Var {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Var::constant)
    }
}

impl ToPrimitive for Var {
    fn to_i64(&self) -> Option<i64> {
        self.v.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.v.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.v)
    }
}

impl NumCast for Var {
    fn from<T: ToPrimitive>(n: T) -> Option<Self> {
        n.to_f64().map(Var::constant)
    }
}

impl FromPrimitive for Var {
    fn from_i64(n: i64) -> Option<Self> {
        Some(Var::constant(n as f64))
    }
    fn from_u64(n: u64) -> Option<Self> {
        Some(Var::constant(n as f64))
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(Var::constant(n))
    }
}

impl Float for Var {
    fn nan() -> Self {
        Var::constant(f64::NAN)
    }
    fn infinity() -> Self {
        Var::constant(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        Var::constant(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        Var::constant(-0.0)
    }
    fn min_value() -> Self {
        Var::constant(f64::MIN)
    }
    fn min_positive_value() -> Self {
        Var::constant(f64::MIN_POSITIVE)
    }
    fn epsilon() -> Self {
        Var::constant(f64::EPSILON)
    }
    fn max_value() -> Self {
        Var::constant(f64::MAX)
    }
    fn is_nan(self) -> bool {
        self.v.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.v.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.v.is_finite()
    }
    fn is_normal(self) -> bool {
        self.v.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.v.classify()
    }
    fn floor(self) -> Self {
        Var::constant(self.v.floor())
    }
    fn ceil(self) -> Self {
        Var::constant(self.v.ceil())
    }
    fn round(self) -> Self {
        Var::constant(self.v.round())
    }
    fn trunc(self) -> Self {
        Var::constant(self.v.trunc())
    }
    fn fract(self) -> Self {
        self.unary(self.v.fract(), 1.0)
    }
    fn abs(self) -> Self {
        let d = if self.v > 0.0 {
            1.0
        } else if self.v < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.v.abs(), d)
    }
    fn signum(self) -> Self {
        Var::constant(self.v.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.v.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.v.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.unary(r, -r * r)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Var::constant(1.0);
        }
        self.unary(self.v.powi(n), n as f64 * self.v.powi(n - 1))
    }
    fn powf(self, n: Self) -> Self {
        let v = self.v.powf(n.v);
        let da = n.v * self.v.powf(n.v - 1.0);
        let db = if self.v > 0.0 { v * self.v.ln() } else { 0.0 };
        self.binary(n, v, da, db)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.unary(e, e)
    }
    fn exp2(self) -> Self {
        let e = self.v.exp2();
        self.unary(e, e * std::f64::consts::LN_2)
    }
    fn ln(self) -> Self {
        self.unary(self.v.ln(), 1.0 / self.v)
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        self.unary(self.v.log2(), 1.0 / (self.v * std::f64::consts::LN_2))
    }
    fn log10(self) -> Self {
        self.unary(self.v.log10(), 1.0 / (self.v * std::f64::consts::LN_10))
    }
    fn max(self, other: Self) -> Self {
        self.max_first(other)
    }
    fn min(self, other: Self) -> Self {
        self.min_first(other)
    }
    fn abs_sub(self, other: Self) -> Self {
        (self - other).relu()
    }
    fn cbrt(self) -> Self {
        let c = self.v.cbrt();
        self.unary(c, 1.0 / (3.0 * c * c))
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn sin(self) -> Self {
        self.unary(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.v.cos(), -self.v.sin())
    }
    fn tan(self) -> Self {
        let t = self.v.tan();
        self.unary(t, 1.0 + t * t)
    }
    fn asin(self) -> Self {
        self.unary(self.v.asin(), 1.0 / (1.0 - self.v * self.v).sqrt())
    }
    fn acos(self) -> Self {
        self.unary(self.v.acos(), -1.0 / (1.0 - self.v * self.v).sqrt())
    }
    fn atan(self) -> Self {
        self.unary(self.v.atan(), 1.0 / (1.0 + self.v * self.v))
    }
    fn atan2(self, other: Self) -> Self {
        let den = self.v * self.v + other.v * other.v;
        self.binary(other, self.v.atan2(other.v), other.v / den, -self.v / den)
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        self.unary(self.v.exp_m1(), self.v.exp())
    }
    fn ln_1p(self) -> Self {
        self.unary(self.v.ln_1p(), 1.0 / (1.0 + self.v))
    }
    fn sinh(self) -> Self {
        self.unary(self.v.sinh(), self.v.cosh())
    }
    fn cosh(self) -> Self {
        self.unary(self.v.cosh(), self.v.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn asinh(self) -> Self {
        self.unary(self.v.asinh(), 1.0 / (self.v * self.v + 1.0).sqrt())
    }
    fn acosh(self) -> Self {
        self.unary(self.v.acosh(), 1.0 / (self.v * self.v - 1.0).sqrt())
    }
    fn atanh(self) -> Self {
        self.unary(self.v.atanh(), 1.0 / (1.0 - self.v * self.v))
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        Float::integer_decode(self.v)
    }
}

impl Scalar for Var {
    #[inline]
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    #[inline]
    fn val(self) -> f64 {
        self.v
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut v = 0.0;
        let mut live = false;
        for (x, y) in a.iter().zip(b) {
            v += x.v * y.v;
            live |= x.idx != CONST || y.idx != CONST;
        }
        if !live {
            return Var::constant(v);
        }
        let entries = a.iter().zip(b).flat_map(|(x, y)| {
            let ex = (x.idx != CONST).then_some((x.idx, y.v));
            let ey = (y.idx != CONST).then_some((y.idx, x.v));
            ex.into_iter().chain(ey)
        });
        Var::from_raw(record_iter(v, entries), v)
    }

    fn sum_of(xs: &[Self]) -> Self {
        let mut v = 0.0;
        let mut live = false;
        for x in xs {
            v += x.v;
            live |= x.idx != CONST;
        }
        if !live {
            return Var::constant(v);
        }
        let entries = xs.iter().filter(|x| x.idx != CONST).map(|x| (x.idx, 1.0));
        Var::from_raw(record_iter(v, entries), v)
    }
}
