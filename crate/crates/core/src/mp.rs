//! Multiprecision real scalar.
//!
//! [`Mp`] wraps an `astro_float::BigFloat` and reads its working precision
//! from a thread-local setting, so arithmetic can be written with ordinary
//! operators. Use [`with_digits`] (or a [`PrecisionGuard`]) to change the
//! precision for a region of code.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, Sub, SubAssign};

use astro_float::{BigFloat, Consts, RoundingMode, Sign, Word};
use num_traits::{Num, One, Zero};

const RM: RoundingMode = RoundingMode::ToEven;
const DEFAULT_DIGITS: u32 = 50;

struct Context {
    bits: usize,
    consts: Consts,
}

thread_local! {
    static CTX: RefCell<Context> = RefCell::new(Context {
        bits: digits_to_bits(DEFAULT_DIGITS),
        consts: Consts::new().expect("astro-float constant cache"),
    });
}

/// Number of mantissa bits used for `digits` significant decimal digits,
/// including a few guard words.
pub fn digits_to_bits(digits: u32) -> usize {
    let raw = (f64::from(digits) * std::f64::consts::LOG2_10).ceil() as usize + 24;
    raw.div_ceil(64) * 64
}

/// Current working precision in bits.
pub fn working_bits() -> usize {
    CTX.with(|c| c.borrow().bits)
}

fn set_working_bits(bits: usize) -> usize {
    CTX.with(|c| std::mem::replace(&mut c.borrow_mut().bits, bits.max(64)))
}

fn with_consts<R>(f: impl FnOnce(usize, &mut Consts) -> R) -> R {
    CTX.with(|c| {
        let mut ctx = c.borrow_mut();
        let bits = ctx.bits;
        f(bits, &mut ctx.consts)
    })
}

/// Restores the previous working precision on drop.
pub struct PrecisionGuard {
    previous: usize,
}

impl PrecisionGuard {
    pub fn digits(digits: u32) -> Self {
        Self::bits(digits_to_bits(digits))
    }

    pub fn bits(bits: usize) -> Self {
        PrecisionGuard { previous: set_working_bits(bits) }
    }
}

impl Drop for PrecisionGuard {
    fn drop(&mut self) {
        set_working_bits(self.previous);
    }
}

/// Runs `f` with the working precision set to `digits` decimal digits.
pub fn with_digits<R>(digits: u32, f: impl FnOnce() -> R) -> R {
    let _guard = PrecisionGuard::digits(digits);
    f()
}

/// Arbitrary precision real number.
#[derive(Clone)]
pub struct Mp(BigFloat);

impl Mp {
    pub fn from_f64(x: f64) -> Self {
        Mp(BigFloat::from_f64(x, working_bits()))
    }

    pub fn from_i64(x: i64) -> Self {
        Mp(BigFloat::from_i64(x, working_bits()))
    }

    pub fn pi() -> Self {
        with_consts(|p, cc| Mp(cc.pi(p, RM)))
    }

    pub fn is_finite(&self) -> bool {
        !(self.0.is_nan() || self.0.is_inf())
    }

    pub fn is_zero_value(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative() && !self.0.is_zero()
    }

    pub fn abs(&self) -> Self {
        Mp(self.0.abs())
    }

    pub fn sqrt(&self) -> Self {
        Mp(self.0.sqrt(working_bits(), RM))
    }

    pub fn exp(&self) -> Self {
        with_consts(|p, cc| Mp(self.0.exp(p, RM, cc)))
    }

    pub fn ln(&self) -> Self {
        with_consts(|p, cc| Mp(self.0.ln(p, RM, cc)))
    }

    pub fn sin(&self) -> Self {
        with_consts(|p, cc| Mp(self.0.sin(p, RM, cc)))
    }

    pub fn cos(&self) -> Self {
        with_consts(|p, cc| Mp(self.0.cos(p, RM, cc)))
    }

    pub fn atan(&self) -> Self {
        with_consts(|p, cc| Mp(self.0.atan(p, RM, cc)))
    }

    /// `self^n` for a non-negative integer `n`.
    pub fn powu(&self, n: usize) -> Self {
        Mp(self.0.powi(n, working_bits(), RM))
    }

    /// `self^y` for `self > 0`.
    pub fn powf(&self, y: &Mp) -> Self {
        (y * &self.ln()).exp()
    }

    pub fn recip(&self) -> Self {
        Mp(self.0.reciprocal(working_bits(), RM))
    }

    /// Nearest `f64`; values outside the `f64` range saturate to infinity or zero.
    pub fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        let Some((words, _, sign, exponent, _)) = self.0.as_raw_parts() else {
            return f64::NAN;
        };
        if self.0.is_zero() || words.is_empty() {
            return 0.0;
        }
        // value = 0.m × 2^exponent with the mantissa's top bit set in the last word
        let wbits = Word::BITS as i32;
        let mut frac = 0.0f64;
        let mut scale = 2f64.powi(-wbits);
        for w in words.iter().rev().take(128 / wbits as usize + 1) {
            frac += (*w as f64) * scale;
            scale *= 2f64.powi(-wbits);
        }
        let v = ldexp(frac, exponent);
        if sign == Sign::Neg {
            -v
        } else {
            v
        }
    }

    pub fn max(self, other: Mp) -> Mp {
        if other > self {
            other
        } else {
            self
        }
    }
}

fn ldexp(mut x: f64, mut e: i32) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e)
}

impl From<f64> for Mp {
    fn from(x: f64) -> Self {
        Mp::from_f64(x)
    }
}

impl From<i64> for Mp {
    fn from(x: i64) -> Self {
        Mp::from_i64(x)
    }
}

impl From<usize> for Mp {
    fn from(x: usize) -> Self {
        Mp::from_i64(x as i64)
    }
}

impl fmt::Debug for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mp({:e})", self.to_f64())
    }
}

impl fmt::Display for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = with_consts(|_, cc| self.0.format(astro_float::Radix::Dec, RM, cc));
        match s {
            Ok(s) => f.write_str(&s),
            Err(_) => write!(f, "{:e}", self.to_f64()),
        }
    }
}

impl PartialEq for Mp {
    fn eq(&self, other: &Self) -> bool {
        self.0.cmp(&other.0) == Some(0)
    }
}

impl PartialOrd for Mp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.cmp(&other.0).map(|c| c.cmp(&0))
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident, $inner:ident) => {
        impl $tr<&Mp> for &Mp {
            type Output = Mp;
            fn $m(self, rhs: &Mp) -> Mp {
                Mp(self.0.$inner(&rhs.0, working_bits(), RM))
            }
        }
        impl $tr<Mp> for Mp {
            type Output = Mp;
            fn $m(self, rhs: Mp) -> Mp {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Mp> for Mp {
            type Output = Mp;
            fn $m(self, rhs: &Mp) -> Mp {
                (&self).$m(rhs)
            }
        }
        impl $tr<Mp> for &Mp {
            type Output = Mp;
            fn $m(self, rhs: Mp) -> Mp {
                self.$m(&rhs)
            }
        }
        impl $tr<f64> for Mp {
            type Output = Mp;
            fn $m(self, rhs: f64) -> Mp {
                (&self).$m(&Mp::from_f64(rhs))
            }
        }
        impl $tr<f64> for &Mp {
            type Output = Mp;
            fn $m(self, rhs: f64) -> Mp {
                self.$m(&Mp::from_f64(rhs))
            }
        }
        impl $tr<Mp> for f64 {
            type Output = Mp;
            fn $m(self, rhs: Mp) -> Mp {
                (&Mp::from_f64(self)).$m(&rhs)
            }
        }
        impl $tr<&Mp> for f64 {
            type Output = Mp;
            fn $m(self, rhs: &Mp) -> Mp {
                (&Mp::from_f64(self)).$m(rhs)
            }
        }
        impl $atr<&Mp> for Mp {
            fn $am(&mut self, rhs: &Mp) {
                *self = (&*self).$m(rhs);
            }
        }
        impl $atr<Mp> for Mp {
            fn $am(&mut self, rhs: Mp) {
                *self = (&*self).$m(&rhs);
            }
        }
        impl $atr<f64> for Mp {
            fn $am(&mut self, rhs: f64) {
                *self = (&*self).$m(&Mp::from_f64(rhs));
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign, add);
binop!(Sub, sub, SubAssign, sub_assign, sub);
binop!(Mul, mul, MulAssign, mul_assign, mul);
binop!(Div, div, DivAssign, div_assign, div);

impl Neg for Mp {
    type Output = Mp;
    fn neg(self) -> Mp {
        Mp(BigFloat::neg(&self.0))
    }
}

impl Neg for &Mp {
    type Output = Mp;
    fn neg(self) -> Mp {
        Mp(BigFloat::neg(&self.0))
    }
}

impl Rem for Mp {
    type Output = Mp;
    fn rem(self, rhs: Mp) -> Mp {
        Mp(self.0.rem(&rhs.0))
    }
}

impl Zero for Mp {
    fn zero() -> Self {
        Mp::from_i64(0)
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl One for Mp {
    fn one() -> Self {
        Mp::from_i64(1)
    }
}

impl Num for Mp {
    type FromStrRadixErr = astro_float::Error;

    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        if radix != 10 {
            return Err(astro_float::Error::InvalidArgument);
        }
        let v = with_consts(|p, cc| BigFloat::parse(s, astro_float::Radix::Dec, p, RM, cc));
        match v.err() {
            Some(e) => Err(e),
            None => Ok(Mp(v)),
        }
    }
}

impl std::iter::Sum for Mp {
    fn sum<I: Iterator<Item = Mp>>(iter: I) -> Mp {
        iter.fold(Mp::zero(), |a, b| a + b)
    }
}

/// Arithmetic shared by `f64` and [`Mp`], for formulas evaluated at either
/// precision.
pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn of(x: f64) -> Self;
    fn value(&self) -> f64;
    fn magnitude(&self) -> Self;
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn magnitude(&self) -> Self {
        self.abs()
    }
}

impl Scalar for Mp {
    fn of(x: f64) -> Self {
        Mp::from_f64(x)
    }
    fn value(&self) -> f64 {
        self.to_f64()
    }
    fn magnitude(&self) -> Self {
        self.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn roundtrip_basic_values() {
        for x in [1.0, -2.5, 0.1, 1e-300, 3.7e250, 0.0, -1e-5] {
            assert_eq!(Mp::from_f64(x).to_f64(), x);
        }
    }

    #[test]
    fn elementary_functions_at_default_precision() {
        let two = Mp::from_i64(2);
        let e = Mp::one().exp();
        assert_eq!(e.to_f64(), std::f64::consts::E);
        assert_eq!(two.ln().to_f64(), std::f64::consts::LN_2);
        assert_eq!(two.sqrt().to_f64(), std::f64::consts::SQRT_2);
        assert_eq!(Mp::pi().to_f64(), std::f64::consts::PI);
        let s = Mp::from_f64(0.7).sin();
        let c = Mp::from_f64(0.7).cos();
        let one = &s * &s + &c * &c;
        assert!((one - 1.0).abs().to_f64() < 1e-45);
    }

    #[test]
    fn guard_restores_precision() {
        let before = working_bits();
        with_digits(120, || assert!(working_bits() > before));
        assert_eq!(working_bits(), before);
    }

    #[test]
    fn precision_is_respected() {
        let third = with_digits(80, || (Mp::one() / Mp::from_i64(3) * 3.0 - 1.0).abs().to_f64());
        assert!(third < 1e-78);
    }

    #[test]
    fn parse_decimal() {
        let v = Mp::from_str_radix("0.59634736232319407434", 10).unwrap();
        assert!((v.to_f64() - 0.596_347_362_323_194).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn f64_roundtrip(x in -1e200f64..1e200) {
            prop_assert_eq!(Mp::from_f64(x).to_f64(), x);
        }

        #[test]
        fn exp_ln_inverse(x in 1e-3f64..1e3) {
            let v = Mp::from_f64(x);
            let back = v.ln().exp();
            prop_assert!(((back - &v) / v).abs().to_f64() < 1e-45);
        }
    }
}
