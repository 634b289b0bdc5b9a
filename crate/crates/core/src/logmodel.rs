//! Combined Log Format records.
//!
//! `%h %l %u [%d/%b/%Y:%H:%M:%S %z] "%m %U %H" %s %b "%{Referer}" "%{User-agent}"`

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::time::LogTime;

/// One parsed access-log line. The ident and authuser fields are consumed
/// during parsing but not kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub client: String,
    pub timestamp: LogTime,
    pub method: String,
    pub path: String,
    /// Empty for HTTP/0.9-style requests that omit it.
    pub protocol: String,
    pub status: u16,
    pub bytes: Option<u64>,
    pub referer: Option<String>,
    pub user_agent: Option<String>,
    pub line_number: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedReason {
    WrongFieldCount,
    MalformedTime,
    UnclosedQuote,
    MalformedRequest,
    NonNumericStatus,
    StatusOutOfRange,
    MalformedBytes,
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::WrongFieldCount => "wrong field count",
            Self::MalformedTime => "malformed time",
            Self::UnclosedQuote => "unclosed quote",
            Self::MalformedRequest => "malformed request",
            Self::NonNumericStatus => "non-numeric status",
            Self::StatusOutOfRange => "status out of range",
            Self::MalformedBytes => "malformed byte count",
        })
    }
}

const EXCERPT_CHARS: usize = 120;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line_number}: {reason}")]
pub struct MalformedLine {
    pub line_number: u64,
    pub reason: MalformedReason,
    pub excerpt: String,
}

pub type ParseOutcome = Result<LogRecord, MalformedLine>;

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_spaces(&mut self) -> bool {
        let start = self.pos;
        while self.s.as_bytes().get(self.pos) == Some(&b' ') {
            self.pos += 1;
        }
        self.pos > start
    }

    fn at_end(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn peek(&self) -> Option<u8> {
        self.s.as_bytes().get(self.pos).copied()
    }

    fn token(&mut self) -> Option<&'a str> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == b' ' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.s[start..self.pos])
    }

    /// Reads a field separator followed by a bare token.
    fn next_token(&mut self) -> Option<&'a str> {
        if !self.skip_spaces() {
            return None;
        }
        self.token()
    }

    fn bracketed(&mut self) -> Result<&'a str, MalformedReason> {
        if self.peek() != Some(b'[') {
            return Err(MalformedReason::WrongFieldCount);
        }
        let rest = &self.s[self.pos + 1..];
        let end = rest.find(']').ok_or(MalformedReason::MalformedTime)?;
        self.pos += end + 2;
        Ok(&rest[..end])
    }

    /// Reads a double-quoted field, undoing `\"` and `\\` escapes.
    fn quoted(&mut self) -> Result<String, MalformedReason> {
        if self.peek() != Some(b'"') {
            return Err(MalformedReason::WrongFieldCount);
        }
        self.pos += 1;
        let bytes = self.s.as_bytes();
        let mut out = String::new();
        let mut run = self.pos;
        while self.pos < bytes.len() {
            match bytes[self.pos] {
                b'\\' if matches!(bytes.get(self.pos + 1), Some(b'"') | Some(b'\\')) => {
                    out.push_str(&self.s[run..self.pos]);
                    out.push(bytes[self.pos + 1] as char);
                    self.pos += 2;
                    run = self.pos;
                }
                b'"' => {
                    out.push_str(&self.s[run..self.pos]);
                    self.pos += 1;
                    return Ok(out);
                }
                _ => self.pos += 1,
            }
        }
        Err(MalformedReason::UnclosedQuote)
    }
}

fn optional_field(raw: String) -> Option<String> {
    let t = raw.trim();
    if t.is_empty() || t == "-" {
        None
    } else {
        Some(raw)
    }
}

fn parse_fields(line: &str, line_number: u64) -> Result<LogRecord, MalformedReason> {
    use MalformedReason::*;
    let mut c = Cursor { s: line, pos: 0 };
    let client = c.token().ok_or(WrongFieldCount)?;
    let _ident = c.next_token().ok_or(WrongFieldCount)?;
    let _authuser = c.next_token().ok_or(WrongFieldCount)?;
    if !c.skip_spaces() {
        return Err(WrongFieldCount);
    }
    let timestamp = LogTime::parse_clf(c.bracketed()?).map_err(|_| MalformedTime)?;
    if !c.skip_spaces() {
        return Err(WrongFieldCount);
    }
    let request = c.quoted()?;
    let status = c.next_token().ok_or(WrongFieldCount)?;
    let bytes = c.next_token().ok_or(WrongFieldCount)?;
    if !c.skip_spaces() {
        return Err(WrongFieldCount);
    }
    let referer = c.quoted()?;
    if !c.skip_spaces() {
        return Err(WrongFieldCount);
    }
    let user_agent = c.quoted()?;
    c.skip_spaces();
    if !c.at_end() {
        return Err(WrongFieldCount);
    }

    if !status.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NonNumericStatus);
    }
    let status: u16 = status.parse().map_err(|_| StatusOutOfRange)?;
    if !(100..=599).contains(&status) {
        return Err(StatusOutOfRange);
    }
    let bytes = match bytes {
        "-" => None,
        b if b.bytes().all(|c| c.is_ascii_digit()) => Some(b.parse().map_err(|_| MalformedBytes)?),
        _ => return Err(MalformedBytes),
    };

    let (method, path, protocol) = split_request(&request).ok_or(MalformedRequest)?;

    Ok(LogRecord {
        client: client.into(),
        timestamp,
        method: method.into(),
        path: path.into(),
        protocol: protocol.into(),
        status,
        bytes,
        referer: optional_field(referer),
        user_agent: optional_field(user_agent),
        line_number,
    })
}

fn split_request(request: &str) -> Option<(&str, &str, &str)> {
    let request = request.trim_matches(' ');
    let (method, rest) = request.split_once(' ')?;
    let rest = rest.trim_start_matches(' ');
    if method.is_empty() || rest.is_empty() {
        return None;
    }
    match rest.rsplit_once(' ') {
        Some((path, proto)) if proto.starts_with("HTTP/") => {
            Some((method, path.trim_end_matches(' '), proto))
        }
        _ => Some((method, rest, "")),
    }
}

/// Parses one combined-format line (without its trailing newline).
pub fn parse_line(raw_line: &str, line_number: u64) -> ParseOutcome {
    parse_fields(raw_line, line_number).map_err(|reason| MalformedLine {
        line_number,
        reason,
        excerpt: raw_line.chars().take(EXCERPT_CHARS).collect(),
    })
}

fn push_quoted(out: &mut String, value: Option<&str>) {
    out.push('"');
    match value {
        None => out.push('-'),
        Some(v) => {
            for ch in v.chars() {
                if ch == '"' || ch == '\\' {
                    out.push('\\');
                }
                out.push(ch);
            }
        }
    }
    out.push('"');
}

impl LogRecord {
    /// Renders the record back into combined format. Ident and authuser are
    /// written as `-`.
    pub fn to_combined(&self) -> String {
        let mut out = String::with_capacity(160);
        let _ = write!(out, "{} - - [{}] ", self.client, self.timestamp);
        let mut request = String::with_capacity(self.path.len() + 16);
        request.push_str(&self.method);
        request.push(' ');
        request.push_str(&self.path);
        if !self.protocol.is_empty() {
            request.push(' ');
            request.push_str(&self.protocol);
        }
        push_quoted(&mut out, Some(&request));
        let _ = write!(out, " {} ", self.status);
        match self.bytes {
            Some(b) => {
                let _ = write!(out, "{b}");
            }
            None => out.push('-'),
        }
        out.push(' ');
        push_quoted(&mut out, self.referer.as_deref());
        out.push(' ');
        push_quoted(&mut out, self.user_agent.as_deref());
        out
    }
}

/// How client identifiers are masked at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anonymization {
    None,
    /// `141.20.20.77` becomes `141.20.20.xx`.
    #[default]
    LastOctet,
    /// A stable `anon-` token derived from SHA-256 of the client field.
    FullHash,
}

impl FromStr for Anonymization {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "last-octet" => Ok(Self::LastOctet),
            "full-hash" => Ok(Self::FullHash),
            _ => Err(UnknownPolicy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("unknown anonymization policy")]
pub struct UnknownPolicy;

const MASK: &str = "xx";
const HASH_PREFIX: &str = "anon-";
const HASH_HEX_LEN: usize = 16;

fn is_hash_token(s: &str) -> bool {
    s.strip_prefix(HASH_PREFIX).is_some_and(|h| {
        h.len() == HASH_HEX_LEN && h.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
    })
}

fn mask_client(client: &str) -> String {
    let is_ipv4 = {
        let parts: Vec<&str> = client.split('.').collect();
        parts.len() == 4
            && parts[..3]
                .iter()
                .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()))
    };
    if is_ipv4 || (client.contains(':') && !client.contains('.')) {
        let cut = client.rfind(['.', ':']).map_or(0, |i| i + 1);
        let mut out = String::from(&client[..cut]);
        out.push_str(MASK);
        return out;
    }
    match client.split_once('.') {
        // Hostnames lose their leading label.
        Some((_, domain)) => {
            let mut out = String::from(MASK);
            out.push('.');
            out.push_str(domain);
            out
        }
        None => MASK.into(),
    }
}

fn hash_client(client: &str) -> String {
    let digest = Sha256::digest(client.as_bytes());
    let mut out = String::from(HASH_PREFIX);
    for b in &digest[..HASH_HEX_LEN / 2] {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Rewrites the client field according to `policy`. Idempotent.
pub fn anonymize(mut record: LogRecord, policy: Anonymization) -> LogRecord {
    record.client = anonymize_client(&record.client, policy);
    record
}

pub fn anonymize_client(client: &str, policy: Anonymization) -> String {
    match policy {
        Anonymization::None => client.into(),
        Anonymization::LastOctet => mask_client(client),
        Anonymization::FullHash if is_hash_token(client) => client.into(),
        Anonymization::FullHash => hash_client(client),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    const SAMPLES_BACKLINK: &str = r#"141.20.20.xx - - [20/Jul/2002:22:50:55 +0200] "GET /~wumsta/ubach/fuss.htm HTTP/1.1" 200 54988 "http://www.referrer.com/article11.htm" "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1)""#;
    const SAMPLES_DIRECT: &str = r#"200.109.102.xxx - - [20/Jul/2002:23:14:38 +0200] "GET /index.html HTTP/1.0" 200 279 "-" "BlitzBOT@tricus.net (Mozilla compatible)""#;

    fn reason(line: &str) -> MalformedReason {
        parse_line(line, 7).unwrap_err().reason
    }

    #[test]
    fn parses_backlink_sample() {
        let r = parse_line(SAMPLES_BACKLINK, 1).unwrap();
        assert_eq!(r.client, "141.20.20.xx");
        assert_eq!(r.method, "GET");
        assert_eq!(r.path, "/~wumsta/ubach/fuss.htm");
        assert_eq!(r.protocol, "HTTP/1.1");
        assert_eq!(r.status, 200);
        assert_eq!(r.bytes, Some(54988));
        assert_eq!(r.referer.as_deref(), Some("http://www.referrer.com/article11.htm"));
        assert_eq!(
            r.user_agent.as_deref(),
            Some("Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1)")
        );
        assert_eq!(r.line_number, 1);
        assert_eq!(r.to_combined(), SAMPLES_BACKLINK);
    }

    #[test]
    fn parses_direct_sample() {
        let r = parse_line(SAMPLES_DIRECT, 3).unwrap();
        assert_eq!(r.referer, None);
        assert_eq!(r.user_agent.as_deref(), Some("BlitzBOT@tricus.net (Mozilla compatible)"));
        assert_eq!(r.to_combined(), SAMPLES_DIRECT);
    }

    #[test]
    fn padded_dash_referer_is_absent() {
        let line = SAMPLES_DIRECT.replace(r#""-" "Blitz"#, r#""- " "Blitz"#);
        assert_eq!(parse_line(&line, 3).unwrap().referer, None);
    }

    #[test]
    fn escaped_quotes_in_fields() {
        let line = r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "GET /a HTTP/1.1" 200 - "http://x.org/?q=\"hi\"" "agent \\ with \"quotes\"""#;
        let r = parse_line(line, 1).unwrap();
        assert_eq!(r.referer.as_deref(), Some(r#"http://x.org/?q="hi""#));
        assert_eq!(r.user_agent.as_deref(), Some(r#"agent \ with "quotes""#));
        assert_eq!(r.bytes, None);
        assert_eq!(r.to_combined(), line);
    }

    #[test]
    fn malformed_lines_are_categorized() {
        use MalformedReason::*;
        assert_eq!(reason(""), WrongFieldCount);
        assert_eq!(reason("garbage"), WrongFieldCount);
        assert_eq!(
            reason(r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "GET / HTTP/1.1" 200 5"#),
            WrongFieldCount
        );
        assert_eq!(
            reason(r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "GET / HTTP/1.1" 200 5 "-" "ua" extra"#),
            WrongFieldCount
        );
        assert_eq!(
            reason(r#"1.2.3.4 - - [20/Jul/2002 22:50:55 +0200] "GET / HTTP/1.1" 200 5 "-" "ua""#),
            MalformedTime
        );
        assert_eq!(
            reason(r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "GET / HTTP/1.1" 200 5 "-" "ua"#),
            UnclosedQuote
        );
        assert_eq!(
            reason(r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "GET / HTTP/1.1" OK 5 "-" "ua""#),
            NonNumericStatus
        );
        assert_eq!(
            reason(r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "GET / HTTP/1.1" 700 5 "-" "ua""#),
            StatusOutOfRange
        );
        assert_eq!(
            reason(r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "GET / HTTP/1.1" 200 5k "-" "ua""#),
            MalformedBytes
        );
        assert_eq!(
            reason(r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "-" 408 0 "-" "-""#),
            MalformedRequest
        );
    }

    #[test]
    fn malformed_excerpt_is_bounded() {
        let long = "x".repeat(500);
        let err = parse_line(&long, 9).unwrap_err();
        assert_eq!(err.line_number, 9);
        assert_eq!(err.excerpt.len(), EXCERPT_CHARS);
    }

    #[test]
    fn request_without_protocol() {
        let line = r#"1.2.3.4 - - [20/Jul/2002:22:50:55 +0200] "GET /old" 200 5 "-" "-""#;
        let r = parse_line(line, 1).unwrap();
        assert_eq!((r.method.as_str(), r.path.as_str(), r.protocol.as_str()), ("GET", "/old", ""));
        assert_eq!(r.to_combined(), line);
    }

    #[test]
    fn anonymize_policies() {
        assert_eq!(anonymize_client("141.20.20.77", Anonymization::LastOctet), "141.20.20.xx");
        assert_eq!(anonymize_client("141.20.20.77", Anonymization::None), "141.20.20.77");
        // Golden values: first 8 bytes of SHA-256 over the client text.
        assert_eq!(anonymize_client("141.20.20.77", Anonymization::FullHash), "anon-f2abb6ee0c40bd5b");
        assert_eq!(anonymize_client("141.20.20.78", Anonymization::FullHash), "anon-42a1a44a6eab2bdd");
        assert_eq!(anonymize_client("2001:db8::1", Anonymization::LastOctet), "2001:db8::xx");
        assert_eq!(anonymize_client("proxy.example.org", Anonymization::LastOctet), "xx.example.org");
        assert_eq!(anonymize_client("localhost", Anonymization::LastOctet), "xx");
    }

    #[test]
    fn anonymize_only_touches_client() {
        let r = parse_line(SAMPLES_BACKLINK, 1).unwrap();
        let a = anonymize(r.clone(), Anonymization::FullHash);
        assert_ne!(a.client, r.client);
        assert_eq!(LogRecord { client: r.client.clone(), ..a }, r);
    }

    #[test]
    fn anonymize_is_idempotent() {
        for policy in [Anonymization::None, Anonymization::LastOctet, Anonymization::FullHash] {
            for client in ["141.20.20.77", "141.20.20.xx", "::1", "a.b.c", "host", "anon-0123456789abcdef"] {
                let once = anonymize_client(client, policy);
                assert_eq!(anonymize_client(&once, policy), once, "{policy:?} {client}");
            }
        }
    }

    #[test]
    fn round_trip_many_shapes() {
        for (i, status) in [200u16, 304, 404, 599].iter().enumerate() {
            let line = format!(
                r#"10.0.0.{i} - - [0{}/Mar/2019:03:17:05 -0500] "HEAD /p/{i}.pdf?x=1 HTTP/1.0" {status} {} "https://ref.example/{i}" "UA {i}""#,
                i + 1,
                i * 100
            );
            assert_eq!(parse_line(&line, 1).unwrap().to_combined(), line);
        }
    }
}
