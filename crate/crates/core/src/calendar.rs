//! Hour-resolution timestamps and local civil-time classification.

use std::fmt;

use jiff::civil::Weekday;
use jiff::tz::TimeZone;
use jiff::Timestamp;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEZONE: &str = "Europe/Berlin";

/// Whole hours since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EpochHour(pub i64);

impl EpochHour {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let ts: Timestamp = text
            .trim()
            .parse()
            .map_err(|e| format!("invalid timestamp {text:?}: {e}"))?;
        let secs = ts.as_second();
        if secs.rem_euclid(3600) != 0 || ts.subsec_nanosecond() != 0 {
            return Err(format!("timestamp {text:?} is not on an hour boundary"));
        }
        Ok(EpochHour(secs.div_euclid(3600)))
    }

    pub fn offset(self, hours: i64) -> Self {
        EpochHour(self.0 + hours)
    }

    fn timestamp(self) -> Timestamp {
        Timestamp::from_second(self.0 * 3600).expect("epoch hour in jiff range")
    }
}

impl fmt::Display for EpochHour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.timestamp().strftime("%Y-%m-%dT%H:%M:%SZ"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakClass {
    OnPeak,
    OffPeak,
}

impl fmt::Display for PeakClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeakClass::OnPeak => "on_peak",
            PeakClass::OffPeak => "off_peak",
        })
    }
}

/// Civil-time fields of one hour in the configured zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalHour {
    pub year: i16,
    pub month: i8,
    pub hour: i8,
    pub weekday: Weekday,
}

#[derive(Debug, Clone)]
pub struct LocalCalendar {
    tz: TimeZone,
}

impl LocalCalendar {
    pub fn new(zone: &str) -> Result<Self> {
        let tz = TimeZone::get(zone).map_err(|e| Error::Config(format!("unknown time zone {zone:?}: {e}")))?;
        Ok(Self { tz })
    }

    pub fn utc() -> Self {
        Self { tz: TimeZone::UTC }
    }

    pub fn local(&self, hour: EpochHour) -> LocalHour {
        let zoned = hour.timestamp().to_zoned(self.tz.clone());
        LocalHour {
            year: zoned.year(),
            month: zoned.month(),
            hour: zoned.hour(),
            weekday: zoned.weekday(),
        }
    }

    /// On-peak is [08:00, 20:00) local time, Monday to Friday.
    pub fn peak_class(&self, hour: EpochHour) -> PeakClass {
        let local = self.local(hour);
        let weekday = !matches!(local.weekday, Weekday::Saturday | Weekday::Sunday);
        if weekday && (8..20).contains(&local.hour) {
            PeakClass::OnPeak
        } else {
            PeakClass::OffPeak
        }
    }
}
