//! Exact rational arithmetic for injection rates.
//!
//! Admissibility bounds of the form `⌊rho * t⌋ + b` must be evaluated
//! exactly; binary floats cannot represent rates like 1/144 or 0.15, so
//! rates are kept as reduced integer fractions end to end.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A non-negative rational number, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rate {
    num: u64,
    den: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RateParseError {
    #[error("empty rate literal")]
    Empty,
    #[error("invalid rate literal `{0}`")]
    Invalid(String),
    #[error("rate denominator must be nonzero in `{0}`")]
    ZeroDenominator(String),
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

impl Rate {
    pub const ZERO: Rate = Rate { num: 0, den: 1 };
    pub const ONE: Rate = Rate { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Rate {
        assert!(den != 0, "rate denominator must be nonzero");
        let g = gcd(num, den);
        Rate {
            num: num / g,
            den: den / g,
        }
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// `⌊self * t⌋` computed without overflow for any round index.
    pub fn mul_floor(&self, t: u64) -> u64 {
        ((self.num as u128 * t as u128) / self.den as u128) as u64
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn checked_add(&self, other: Rate) -> Option<Rate> {
        let num = (self.num as u128)
            .checked_mul(other.den as u128)?
            .checked_add((other.num as u128).checked_mul(self.den as u128)?)?;
        let den = (self.den as u128).checked_mul(other.den as u128)?;
        let g = {
            let mut a = num;
            let mut b = den;
            while b != 0 {
                let t = a % b;
                a = b;
                b = t;
            }
            a.max(1)
        };
        let num = num / g;
        let den = den / g;
        if num > u64::MAX as u128 || den > u64::MAX as u128 {
            return None;
        }
        Some(Rate {
            num: num as u64,
            den: den as u64,
        })
    }

    /// 1 / n, used for rate thresholds of the form 1/(18k).
    pub fn recip_of(n: u64) -> Rate {
        Rate::new(1, n.max(1))
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let lhs = self.num as u128 * other.den as u128;
        let rhs = other.num as u128 * self.den as u128;
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Rate {
    type Err = RateParseError;

    /// Accepts decimals (`0.15`), fractions (`1/144`), and integers (`1`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(RateParseError::Empty);
        }
        if let Some((n, d)) = s.split_once('/') {
            let num: u64 = n
                .trim()
                .parse()
                .map_err(|_| RateParseError::Invalid(s.to_string()))?;
            let den: u64 = d
                .trim()
                .parse()
                .map_err(|_| RateParseError::Invalid(s.to_string()))?;
            if den == 0 {
                return Err(RateParseError::ZeroDenominator(s.to_string()));
            }
            return Ok(Rate::new(num, den));
        }
        if let Some((whole, frac)) = s.split_once('.') {
            let whole: u64 = if whole.is_empty() {
                0
            } else {
                whole
                    .parse()
                    .map_err(|_| RateParseError::Invalid(s.to_string()))?
            };
            if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(RateParseError::Invalid(s.to_string()));
            }
            let digits: u64 = frac
                .parse()
                .map_err(|_| RateParseError::Invalid(s.to_string()))?;
            let den = 10u64.pow(frac.len() as u32);
            return Ok(Rate::new(whole * den + digits, den));
        }
        let num: u64 = s
            .parse()
            .map_err(|_| RateParseError::Invalid(s.to_string()))?;
        Ok(Rate::new(num, 1))
    }
}
