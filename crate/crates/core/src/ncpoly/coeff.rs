use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact complex number with arbitrary-precision rational parts.
pub type ExactComplex = Complex<BigRational>;

/// Coefficient ring of a polynomial.
///
/// Implemented for exact rational complexes and for `Complex<f32>` /
/// `Complex<f64>`.
pub trait Coeff:
    Clone
    + PartialEq
    + Debug
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn conj(&self) -> Self;

    fn to_c64(&self) -> Complex<f64>;

    fn from_c64(z: Complex<f64>) -> Self;

    fn from_i64(re: i64, im: i64) -> Self;

    /// Builds a coefficient from decimal (or `p/q` fraction) literals for the
    /// real and imaginary parts. Returns `None` if a literal is malformed.
    fn from_decimal(re: &str, im: &str) -> Option<Self>;

    /// Formats a nonnegative real value as a literal accepted by `from_decimal`.
    fn fmt_real(x: &Self) -> String;

    /// `Some(sign)` if the coefficient is real and nonzero.
    fn real_sign(&self) -> Option<bool>;

    /// Real and imaginary parts as separate (real-valued) coefficients.
    fn parts(&self) -> (Self, Self);

    fn modulus(&self) -> f64 {
        self.to_c64().norm()
    }
}

fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty() {
        return None;
    }
    let value = if let Some((num, den)) = body.split_once('/') {
        let num = parse_decimal(num)?;
        let den = parse_decimal(den)?;
        if den.is_zero() {
            return None;
        }
        num / den
    } else {
        parse_decimal(body)?
    };
    Some(if neg { -value } else { value })
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let (int, frac) = match s.split_once('.') {
        Some((a, b)) => (a, b),
        None => (s, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let denom = BigInt::from(10u32).pow(frac.len() as u32);
    Some(BigRational::new(numer, denom))
}

impl Coeff for ExactComplex {
    fn conj(&self) -> Self {
        Complex::new(self.re.clone(), -self.im.clone())
    }

    fn to_c64(&self) -> Complex<f64> {
        Complex::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }

    fn from_c64(z: Complex<f64>) -> Self {
        let conv = |x: f64| BigRational::from_float(x).expect("finite coefficient");
        Complex::new(conv(z.re), conv(z.im))
    }

    fn from_i64(re: i64, im: i64) -> Self {
        Complex::new(BigRational::from_integer(re.into()), BigRational::from_integer(im.into()))
    }

    fn from_decimal(re: &str, im: &str) -> Option<Self> {
        Some(Complex::new(parse_rational(re)?, parse_rational(im)?))
    }

    fn fmt_real(x: &Self) -> String {
        let r = x.re.abs();
        if r.is_integer() {
            r.to_integer().to_string()
        } else {
            format!("{}/{}", r.numer(), r.denom())
        }
    }

    fn real_sign(&self) -> Option<bool> {
        (self.im.is_zero() && !self.re.is_zero()).then(|| self.re.is_positive())
    }

    fn parts(&self) -> (Self, Self) {
        (
            Complex::new(self.re.clone(), BigRational::zero()),
            Complex::new(self.im.clone(), BigRational::zero()),
        )
    }
}

macro_rules! float_coeff {
    ($t:ty) => {
        impl Coeff for Complex<$t> {
            fn conj(&self) -> Self {
                Complex::conj(self)
            }

            fn to_c64(&self) -> Complex<f64> {
                Complex::new(self.re as f64, self.im as f64)
            }

            fn from_c64(z: Complex<f64>) -> Self {
                Complex::new(z.re as $t, z.im as $t)
            }

            fn from_i64(re: i64, im: i64) -> Self {
                Complex::new(re as $t, im as $t)
            }

            fn from_decimal(re: &str, im: &str) -> Option<Self> {
                let conv = |s: &str| -> Option<$t> {
                    let q = parse_rational(s)?;
                    if q.is_integer() || s.contains('/') {
                        q.to_f64().map(|v| v as $t)
                    } else {
                        s.trim().parse::<$t>().ok()
                    }
                };
                Some(Complex::new(conv(re)?, conv(im)?))
            }

            fn fmt_real(x: &Self) -> String {
                format!("{}", x.re.abs())
            }

            fn real_sign(&self) -> Option<bool> {
                (self.im == 0.0 && self.re != 0.0).then(|| self.re > 0.0)
            }

            fn parts(&self) -> (Self, Self) {
                (Complex::new(self.re, 0.0), Complex::new(self.im, 0.0))
            }
        }
    };
}

float_coeff!(f32);
float_coeff!(f64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        let c = ExactComplex::from_decimal("2.5", "-0.125").unwrap();
        assert_eq!(c.re, BigRational::new(5.into(), 2.into()));
        assert_eq!(c.im, BigRational::new((-1).into(), 8.into()));
        let q = ExactComplex::from_decimal("1/3", "0").unwrap();
        assert_eq!(q.re, BigRational::new(1.into(), 3.into()));
        assert!(ExactComplex::from_decimal("1.2.3", "0").is_none());
        assert!(ExactComplex::from_decimal("", "0").is_none());
        assert!(ExactComplex::from_decimal("1/0", "0").is_none());
    }

    #[test]
    fn float_literals_roundtrip_through_display() {
        for x in [0.1f64, 1.0 / 3.0, 1e-7, 123456.789] {
            let s = <Complex<f64> as Coeff>::fmt_real(&Complex::new(x, 0.0));
            let back = <Complex<f64> as Coeff>::from_decimal(&s, "0").unwrap();
            assert_eq!(back.re, x);
        }
    }
}
