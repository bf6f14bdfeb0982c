use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::ops::{Add, Mul, Sub};
use core::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

/// A nonnegative privacy budget held as an exact rational so that budget
/// comparisons never suffer from rounding.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Epsilon(BigRational);

impl Epsilon {
    pub fn zero() -> Self {
        Epsilon(BigRational::zero())
    }

    /// `num / den`.
    pub fn ratio(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::invalid("zero denominator"));
        }
        Ok(Epsilon(BigRational::new(BigInt::from(num), BigInt::from(den))))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }

    /// Exact representation, `p` or `p/q` in lowest terms.
    pub fn exact(&self) -> String {
        self.0.to_string()
    }

    /// Converts a float through its shortest round-trip decimal form, so
    /// `0.1` becomes exactly `1/10`.
    pub fn from_f64(v: f64) -> Result<Self> {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(format!("budget must be finite and nonnegative, got {v}")));
        }
        format!("{v}").parse()
    }

    pub fn max(self, other: Epsilon) -> Epsilon {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// `max(self - other, 0)`.
    pub fn saturating_sub(&self, other: &Epsilon) -> Epsilon {
        if self > other {
            Epsilon(&self.0 - &other.0)
        } else {
            Epsilon::zero()
        }
    }

    /// Splits `self` into `parts` equal shares.
    pub fn div_int(&self, parts: u64) -> Result<Epsilon> {
        if parts == 0 {
            return Err(Error::invalid("cannot split a budget into zero parts"));
        }
        Ok(Epsilon(&self.0 / BigRational::from_integer(BigInt::from(parts))))
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    /// Parses decimal notation with an optional exponent (`0.25`, `1e-3`)
    /// or an exact fraction (`1/3`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("`{s}` is not a nonnegative decimal"));
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() || n < BigInt::zero() || d < BigInt::zero() {
                return Err(bad());
            }
            return Ok(Epsilon(BigRational::new(n, d)));
        }
        let (mant, exp) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], s[i + 1..].parse::<i64>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let mant = mant.strip_prefix('+').unwrap_or(mant);
        let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
        if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
        let scale = exp - frac.len() as i64;
        if scale.unsigned_abs() > 4096 {
            return Err(bad());
        }
        let pow = num_traits::pow(BigInt::from(10), scale.unsigned_abs() as usize);
        let r = if scale >= 0 {
            BigRational::from_integer(digits * pow)
        } else {
            BigRational::new(digits, pow)
        };
        Ok(Epsilon(r))
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Add for &Epsilon {
    type Output = Epsilon;
    fn add(self, rhs: &Epsilon) -> Epsilon {
        Epsilon(&self.0 + &rhs.0)
    }
}

impl Add for Epsilon {
    type Output = Epsilon;
    fn add(self, rhs: Epsilon) -> Epsilon {
        Epsilon(self.0 + rhs.0)
    }
}

impl Sub for &Epsilon {
    type Output = Epsilon;
    /// Saturates at zero; budgets are never negative.
    fn sub(self, rhs: &Epsilon) -> Epsilon {
        self.saturating_sub(rhs)
    }
}

impl Mul for &Epsilon {
    type Output = Epsilon;
    fn mul(self, rhs: &Epsilon) -> Epsilon {
        Epsilon(&self.0 * &rhs.0)
    }
}

impl Mul for Epsilon {
    type Output = Epsilon;
    fn mul(self, rhs: Epsilon) -> Epsilon {
        Epsilon(self.0 * rhs.0)
    }
}

impl core::iter::Sum for Epsilon {
    fn sum<I: Iterator<Item = Epsilon>>(iter: I) -> Epsilon {
        iter.fold(Epsilon::zero(), |a, b| a + b)
    }
}

impl serde::Serialize for Epsilon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.exact())
    }
}

impl<'de> serde::Deserialize<'de> for Epsilon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
