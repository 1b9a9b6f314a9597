//! Exact rational arithmetic for score aggregation.
//!
//! Averages are kept as reduced fractions end to end; decimal rendering
//! happens only at display time, so two runs over the same inputs produce
//! byte-identical output.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Sub};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A reduced fraction with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };
    pub const ONE: Rational = Rational { num: 1, den: 1 };

    /// # Panics
    /// Panics when `den == 0`.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "rational with zero denominator");
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        Rational {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn from_int(n: i64) -> Self {
        Rational { num: n, den: 1 }
    }

    /// Arithmetic mean of an integer multiset; `None` when empty.
    pub fn mean_of_ints<I: IntoIterator<Item = i64>>(items: I) -> Option<Self> {
        let mut sum = 0i64;
        let mut count = 0i64;
        for v in items {
            sum += v;
            count += 1;
        }
        (count > 0).then(|| Rational::new(sum, count))
    }

    /// Arithmetic mean of rationals; `None` when empty.
    pub fn mean<I: IntoIterator<Item = Rational>>(items: I) -> Option<Self> {
        let mut sum = Rational::ZERO;
        let mut count = 0i64;
        for v in items {
            sum = sum + v;
            count += 1;
        }
        (count > 0).then(|| sum / Rational::from_int(count))
    }

    pub fn numerator(&self) -> i64 {
        self.num
    }

    pub fn denominator(&self) -> i64 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Renders with a fixed number of decimal places, rounding half away
    /// from zero (so 4/7 prints as "0.57" and 11/3 as "3.67").
    pub fn to_decimal(&self, places: u32) -> String {
        let scale = 10i128.pow(places);
        let num = self.num as i128;
        let den = self.den as i128;
        let scaled = num.abs() * scale;
        let mut q = scaled / den;
        let r = scaled % den;
        if 2 * r >= den {
            q += 1;
        }
        let int_part = q / scale;
        let frac_part = q % scale;
        let sign = if self.num < 0 && q != 0 { "-" } else { "" };
        if places == 0 {
            format!("{sign}{int_part}")
        } else {
            format!(
                "{sign}{int_part}.{frac:0width$}",
                frac = frac_part,
                width = places as usize
            )
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    if a == 0 {
        return b.max(1);
    }
    while b != 0 {
        let t = b;
        b = a % b;
        a = t;
    }
    a
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational::new(self.num * rhs.den + rhs.num * self.den, self.den * rhs.den)
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational::new(self.num * rhs.den - rhs.num * self.den, self.den * rhs.den)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational::new(self.num * rhs.num, self.den * rhs.den)
    }
}

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        assert!(rhs.num != 0, "division by zero rational");
        Rational::new(self.num * rhs.den, self.den * rhs.num)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, v| acc + v)
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.num as i128 * other.den as i128;
        let rhs = other.num as i128 * self.den as i128;
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl std::str::FromStr for Rational {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parse_int = |t: &str| {
            t.trim()
                .parse::<i64>()
                .map_err(|e| format!("bad rational component {t:?}: {e}"))
        };
        match s.split_once('/') {
            Some((n, d)) => {
                let den = parse_int(d)?;
                if den == 0 {
                    return Err("zero denominator".into());
                }
                Ok(Rational::new(parse_int(n)?, den))
            }
            None => Ok(Rational::from_int(parse_int(s)?)),
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}
