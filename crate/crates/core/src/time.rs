//! Log timestamps (`20/Jul/2002:22:50:55 +0200`) and calendar bucketing.
//!
//! Times keep the offset they were logged with. Bucketing works on the
//! local calendar date, which is what an administrator reading the file sees.

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

/// A proleptic Gregorian calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CivilDate {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl CivilDate {
    pub fn new(year: i32, month: u8, day: u8) -> Option<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(Self { year, month, day })
    }

    /// Days since 1970-01-01.
    pub fn days_since_epoch(self) -> i64 {
        // Hinnant's days_from_civil.
        let y = i64::from(self.year) - i64::from(self.month <= 2);
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let m = i64::from(self.month);
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + i64::from(self.day) - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    pub fn from_days_since_epoch(days: i64) -> Self {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
        let month = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
        let year = (yoe + era * 400 + i64::from(month <= 2)) as i32;
        Self { year, month, day }
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn weekday(self) -> u8 {
        (self.days_since_epoch() + 3).rem_euclid(7) as u8
    }

    pub fn bucket_start(self, granularity: Granularity) -> Self {
        match granularity {
            Granularity::Day => self,
            Granularity::Week => {
                Self::from_days_since_epoch(self.days_since_epoch() - i64::from(self.weekday()))
            }
            Granularity::Month => Self { day: 1, ..self },
        }
    }
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

impl fmt::Display for CivilDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for CivilDate {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, '-');
        let (Some(y), Some(m), Some(d)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(TimeError);
        };
        if y.len() != 4 || m.len() != 2 || d.len() != 2 {
            return Err(TimeError);
        }
        let year = digits(y).ok_or(TimeError)? as i32;
        let month = digits(m).ok_or(TimeError)? as u8;
        let day = digits(d).ok_or(TimeError)? as u8;
        Self::new(year, month, day).ok_or(TimeError)
    }
}

impl Serialize for CivilDate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CivilDate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct DateVisitor;
        impl Visitor<'_> for DateVisitor {
            type Value = CivilDate;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a YYYY-MM-DD date")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<CivilDate, E> {
                v.parse().map_err(|_| E::custom("invalid date"))
            }
        }
        deserializer.deserialize_str(DateVisitor)
    }
}

/// Time-series bucket width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Week,
    Month,
}

impl FromStr for Granularity {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(Self::Day),
            "week" => Ok(Self::Week),
            "month" => Ok(Self::Month),
            _ => Err(TimeError),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Day => "day",
            Self::Week => "week",
            Self::Month => "month",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("malformed time")]
pub struct TimeError;

/// A logged instant: local wall-clock time plus the logged UTC offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LogTime {
    pub date: CivilDate,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
    /// Minutes east of UTC.
    pub offset_minutes: i16,
}

impl LogTime {
    /// Seconds since the Unix epoch, UTC.
    pub fn unix_seconds(&self) -> i64 {
        self.date.days_since_epoch() * 86_400
            + i64::from(self.hour) * 3600
            + i64::from(self.minute) * 60
            + i64::from(self.second)
            - i64::from(self.offset_minutes) * 60
    }

    /// Parses the bracket contents of a combined-format time field,
    /// `dd/Mon/yyyy:HH:MM:SS +hhmm`.
    pub fn parse_clf(s: &str) -> Result<Self, TimeError> {
        let b = s.as_bytes();
        if b.len() != 26 || b[2] != b'/' || b[6] != b'/' || b[11] != b':' || b[14] != b':' {
            return Err(TimeError);
        }
        if b[17] != b':' || b[20] != b' ' {
            return Err(TimeError);
        }
        let day = digits(&s[0..2]).ok_or(TimeError)? as u8;
        let month = MONTHS
            .iter()
            .position(|m| *m == &s[3..6])
            .ok_or(TimeError)? as u8
            + 1;
        let year = digits(&s[7..11]).ok_or(TimeError)? as i32;
        let hour = digits(&s[12..14]).ok_or(TimeError)? as u8;
        let minute = digits(&s[15..17]).ok_or(TimeError)? as u8;
        let second = digits(&s[18..20]).ok_or(TimeError)? as u8;
        // 60 admits a leap second.
        if hour > 23 || minute > 59 || second > 60 {
            return Err(TimeError);
        }
        let sign: i16 = match b[21] {
            b'+' => 1,
            b'-' => -1,
            _ => return Err(TimeError),
        };
        let oh = digits(&s[22..24]).ok_or(TimeError)? as i16;
        let om = digits(&s[24..26]).ok_or(TimeError)? as i16;
        if om > 59 {
            return Err(TimeError);
        }
        let date = CivilDate::new(year, month, day).ok_or(TimeError)?;
        Ok(Self {
            date,
            hour,
            minute,
            second,
            offset_minutes: sign * (oh * 60 + om),
        })
    }

    pub fn to_clf(&self) -> String {
        alloc::format!("{self}")
    }

    fn sort_key(&self) -> (i64, i16) {
        (self.unix_seconds(), self.offset_minutes)
    }
}

impl fmt::Display for LogTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.offset_minutes < 0 { '-' } else { '+' };
        let off = self.offset_minutes.unsigned_abs();
        write!(
            f,
            "{:02}/{}/{:04}:{:02}:{:02}:{:02} {}{:02}{:02}",
            self.date.day,
            MONTHS[usize::from(self.date.month - 1)],
            self.date.year,
            self.hour,
            self.minute,
            self.second,
            sign,
            off / 60,
            off % 60
        )
    }
}

/// Ordered by instant, then by offset so that equal instants logged under
/// different offsets still compare deterministically.
impl Ord for LogTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for LogTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for LogTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LogTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TimeVisitor;
        impl Visitor<'_> for TimeVisitor {
            type Value = LogTime;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a dd/Mon/yyyy:HH:MM:SS +hhmm timestamp")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<LogTime, E> {
                LogTime::parse_clf(v).map_err(|_| E::custom("invalid timestamp"))
            }
        }
        deserializer.deserialize_str(TimeVisitor)
    }
}

fn digits(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}
