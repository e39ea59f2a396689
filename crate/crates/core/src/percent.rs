use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

/// A count ratio expressed as a percentage. Kept as an exact fraction so
/// that rendering and ranking never depend on float rounding.
#[derive(Debug, Clone, Copy)]
pub struct Percentage {
    num: u64,
    den: u64,
}

impl Percentage {
    /// `None` when the denominator is zero.
    pub fn of(num: u64, den: u64) -> Option<Percentage> {
        (den != 0).then_some(Percentage { num, den })
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 * 100.0 / self.den as f64
    }

    /// Hundredths of a percent, rounded half-up.
    pub fn hundredths(&self) -> u128 {
        let scaled = u128::from(self.num) * 10_000;
        let den = u128::from(self.den);
        let (q, r) = (scaled / den, scaled % den);
        if 2 * r >= den {
            q + 1
        } else {
            q
        }
    }

    /// The value rounded half-up to two decimals, as f64.
    pub fn rounded(&self) -> f64 {
        self.hundredths() as f64 / 100.0
    }
}

impl PartialEq for Percentage {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Percentage {}

impl PartialOrd for Percentage {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Percentage {
    fn cmp(&self, other: &Self) -> Ordering {
        (u128::from(self.num) * u128::from(other.den))
            .cmp(&(u128::from(other.num) * u128::from(self.den)))
    }
}

impl fmt::Display for Percentage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.hundredths();
        write!(f, "{}.{:02}", h / 100, h % 100)
    }
}

impl Serialize for Percentage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.rounded())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_two_decimals_half_up() {
        assert_eq!(Percentage::of(1, 8).unwrap().to_string(), "12.50");
        // 1/800 = 0.125% -> 0.13 (half-up, not banker's)
        assert_eq!(Percentage::of(1, 800).unwrap().to_string(), "0.13");
        assert_eq!(Percentage::of(21294, 58739).unwrap().to_string(), "36.25");
        assert_eq!(Percentage::of(0, 5).unwrap().to_string(), "0.00");
        assert_eq!(Percentage::of(5, 5).unwrap().to_string(), "100.00");
        assert!(Percentage::of(1, 0).is_none());
    }

    #[test]
    fn ordering_is_exact() {
        let a = Percentage::of(1, 3).unwrap();
        let b = Percentage::of(2, 6).unwrap();
        assert_eq!(a, b);
        assert!(Percentage::of(305, 1000).unwrap() > Percentage::of(251, 1000).unwrap());
    }
}
