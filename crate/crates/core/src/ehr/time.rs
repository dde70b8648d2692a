use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Seconds since the Unix epoch, UTC.
///
/// On the wire this is an ISO-8601 string (`2019-03-04T08:00:00Z`); offsets
/// other than `Z` are accepted on input and normalized to UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_secs(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn secs(self) -> i64 {
        self.0
    }

    pub fn parse(s: &str) -> Result<Self, chrono::ParseError> {
        DateTime::parse_from_rfc3339(s).map(|dt| Timestamp(dt.with_timezone(&Utc).timestamp()))
    }

    pub fn plus_days(self, days: i64) -> Self {
        Timestamp(self.0 + days * SECONDS_PER_DAY)
    }

    pub fn plus_secs(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }

    /// Whole UTC calendar day index.
    pub fn day_index(self) -> i64 {
        self.0.div_euclid(SECONDS_PER_DAY)
    }

    pub fn days_until(self, later: Timestamp) -> f64 {
        (later.0 - self.0) as f64 / SECONDS_PER_DAY as f64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => f.write_str(&dt.to_rfc3339_opts(SecondsFormat::Secs, true)),
            None => write!(f, "@{}", self.0),
        }
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s)
            .map_err(|e| de::Error::custom(format!("invalid ISO-8601 timestamp {s:?}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_round_trip() {
        let t = Timestamp::parse("2019-03-04T08:30:00Z").unwrap();
        assert_eq!(t.to_string(), "2019-03-04T08:30:00Z");
        assert_eq!(Timestamp::parse(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn offsets_normalize_to_utc() {
        let a = Timestamp::parse("2019-03-04T16:30:00+08:00").unwrap();
        let b = Timestamp::parse("2019-03-04T08:30:00Z").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Timestamp::parse("yesterday").is_err());
        assert!(serde_json::from_str::<Timestamp>("\"2019-13-01T00:00:00Z\"").is_err());
    }

    #[test]
    fn day_arithmetic() {
        let t = Timestamp::parse("2020-01-01T23:00:00Z").unwrap();
        assert_eq!(t.plus_days(2).to_string(), "2020-01-03T23:00:00Z");
        assert_eq!(t.day_index() + 1, t.plus_secs(3600).day_index());
        assert!((t.days_until(t.plus_days(5)) - 5.0).abs() < 1e-12);
    }
}
