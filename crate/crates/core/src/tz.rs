//! Study timezone used to decide which calendar day a message falls on.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, NaiveDate, TimeZone};
use chrono_tz::Tz;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StudyTz {
    Fixed(FixedOffset),
    Named(Tz),
}

impl StudyTz {
    pub fn utc_offset_hours(hours: i32) -> Result<Self> {
        FixedOffset::east_opt(hours * 3600)
            .map(StudyTz::Fixed)
            .ok_or_else(|| Error::InvalidConfig(format!("utc offset {hours}h out of range")))
    }

    pub fn local_date(&self, t: &DateTime<FixedOffset>) -> NaiveDate {
        match self {
            StudyTz::Fixed(off) => t.with_timezone(off).date_naive(),
            StudyTz::Named(tz) => t.with_timezone(tz).date_naive(),
        }
    }

    /// Offset in effect at `t`, for rendering timestamps in local time.
    pub fn offset_at(&self, t: &DateTime<FixedOffset>) -> FixedOffset {
        match self {
            StudyTz::Fixed(off) => *off,
            StudyTz::Named(tz) => {
                use chrono::Offset;
                tz.offset_from_utc_datetime(&t.naive_utc()).fix()
            }
        }
    }
}

impl Default for StudyTz {
    /// UTC−7, San Francisco summer time.
    fn default() -> Self {
        StudyTz::Fixed(FixedOffset::west_opt(7 * 3600).expect("valid offset"))
    }
}

impl fmt::Display for StudyTz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyTz::Fixed(off) => write!(f, "{off}"),
            StudyTz::Named(tz) => write!(f, "{}", tz.name()),
        }
    }
}

/// Accepts IANA names (`America/Los_Angeles`), `UTC`, `UTC-7`, `UTC+05:30`
/// and bare offsets such as `-07:00`.
impl FromStr for StudyTz {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("utc") || s.eq_ignore_ascii_case("z") {
            return StudyTz::utc_offset_hours(0);
        }
        let offset_part = s
            .strip_prefix("UTC")
            .or_else(|| s.strip_prefix("utc"))
            .or_else(|| s.strip_prefix("GMT"))
            .unwrap_or(s);
        if offset_part.starts_with('+') || offset_part.starts_with('-') {
            return parse_offset(offset_part)
                .map(StudyTz::Fixed)
                .ok_or_else(|| Error::InvalidConfig(format!("bad utc offset {s:?}")));
        }
        s.parse::<Tz>()
            .map(StudyTz::Named)
            .map_err(|_| Error::InvalidConfig(format!("unknown timezone {s:?}")))
    }
}

fn parse_offset(s: &str) -> Option<FixedOffset> {
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1, &s[1..]),
        b'-' => (-1, &s[1..]),
        _ => return None,
    };
    let (h, m) = match rest.split_once(':') {
        Some((h, m)) => (h.parse::<i32>().ok()?, m.parse::<i32>().ok()?),
        None if rest.len() == 4 => (rest[..2].parse().ok()?, rest[2..].parse().ok()?),
        None => (rest.parse().ok()?, 0),
    };
    if !(0..60).contains(&m) {
        return None;
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60))
}
