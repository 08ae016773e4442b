use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Calendar month. Ordering and arithmetic work on the month count since year 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    index: i32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        if !(1..=12).contains(&month) {
            return None;
        }
        Some(Self {
            index: year * 12 + month as i32 - 1,
        })
    }

    pub fn year(self) -> i32 {
        self.index.div_euclid(12)
    }

    pub fn month(self) -> u32 {
        self.index.rem_euclid(12) as u32 + 1
    }

    pub fn add_months(self, n: i32) -> Self {
        Self {
            index: self.index + n,
        }
    }

    /// Signed number of months from `earlier` to `self`.
    pub fn months_since(self, earlier: Month) -> i32 {
        self.index - earlier.index
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseMonthError(pub String);

impl fmt::Display for ParseMonthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid month {:?} (expected YYYY-MM or M/D/YYYY)", self.0)
    }
}

impl std::error::Error for ParseMonthError {}

impl FromStr for Month {
    type Err = ParseMonthError;

    /// Accepts `YYYY-MM`, `YYYY-MM-DD` and `M/D/YYYY`; the day is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMonthError(s.to_string());
        let s = s.trim();
        let (year, month) = if s.contains('/') {
            let parts: Vec<&str> = s.split('/').collect();
            if parts.len() != 3 {
                return Err(err());
            }
            let month: u32 = parts[0].parse().map_err(|_| err())?;
            let day: u32 = parts[1].parse().map_err(|_| err())?;
            if !(1..=31).contains(&day) {
                return Err(err());
            }
            let year: i32 = parts[2].parse().map_err(|_| err())?;
            (year, month)
        } else {
            let parts: Vec<&str> = s.split('-').collect();
            if parts.len() < 2 || parts.len() > 3 || parts[0].len() != 4 {
                return Err(err());
            }
            let year: i32 = parts[0].parse().map_err(|_| err())?;
            let month: u32 = parts[1].parse().map_err(|_| err())?;
            if let Some(day) = parts.get(2) {
                let day: u32 = day.parse().map_err(|_| err())?;
                if !(1..=31).contains(&day) {
                    return Err(err());
                }
            }
            (year, month)
        };
        Month::new(year, month).ok_or_else(err)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
