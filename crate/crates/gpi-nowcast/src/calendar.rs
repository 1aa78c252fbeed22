//! Year-month arithmetic for monthly panels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar month. Ordering is chronological; arithmetic is in whole months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    /// 1..=12
    month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::data(format!("month out of range: {year}-{month}")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    /// Parses the compact `YYYYMM` form used by GDELT's MonthYear field.
    pub fn parse_compact(s: &str) -> Result<Self> {
        if s.len() != 6 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::data(format!("not a YYYYMM month: {s:?}")));
        }
        let year: i32 = s[..4].parse().expect("4 digits");
        let month: u8 = s[4..].parse().expect("2 digits");
        YearMonth::new(year, month)
    }

    /// Months since year 0 January. Total order and distance live here.
    pub fn index(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(index: i64) -> Self {
        let year = index.div_euclid(12);
        let month = index.rem_euclid(12) + 1;
        YearMonth { year: year as i32, month: month as u8 }
    }

    pub fn add_months(&self, delta: i64) -> Self {
        Self::from_index(self.index() + delta)
    }

    /// Signed month count from `self` to `other`.
    pub fn months_until(&self, other: YearMonth) -> i64 {
        other.index() - self.index()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    /// Parses the `YYYY-MM` form used in CSV and JSON interfaces.
    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::data(format!("not a YYYY-MM month: {s:?}")))?;
        if y.len() != 4 || m.len() != 2 || !y.bytes().all(|b| b.is_ascii_digit()) || !m.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::data(format!("not a YYYY-MM month: {s:?}")));
        }
        YearMonth::new(y.parse().expect("4 digits"), m.parse().expect("2 digits"))
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
