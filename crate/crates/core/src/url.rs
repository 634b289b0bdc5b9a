//! Just enough URL handling for referer fields.

use alloc::string::String;
use alloc::vec::Vec;

/// Borrowed pieces of an absolute `scheme://authority/path?query#fragment` URL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefererUrl<'a> {
    pub scheme: &'a str,
    /// As written; may carry a port. Userinfo is dropped.
    pub authority: &'a str,
    pub path: &'a str,
    pub query: Option<&'a str>,
}

impl<'a> RefererUrl<'a> {
    /// Returns `None` when `raw` is not an absolute URL with a host.
    pub fn parse(raw: &'a str) -> Option<Self> {
        let raw = raw.trim();
        let (scheme, rest) = raw.split_once("://")?;
        if scheme.is_empty()
            || !scheme.starts_with(|c: char| c.is_ascii_alphabetic())
            || !scheme.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'+' | b'-' | b'.'))
        {
            return None;
        }
        let rest = rest.split('#').next().unwrap_or("");
        let auth_end = rest.find(['/', '?']).unwrap_or(rest.len());
        let mut authority = &rest[..auth_end];
        if let Some((_, host)) = authority.rsplit_once('@') {
            authority = host;
        }
        if authority.is_empty() || authority.contains(' ') {
            return None;
        }
        let tail = &rest[auth_end..];
        let (path, query) = match tail.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (tail, None),
        };
        Some(Self { scheme, authority, path, query })
    }

    /// Host without port, as written.
    pub fn host(&self) -> &'a str {
        if let Some(rest) = self.authority.strip_prefix('[') {
            return rest.split(']').next().unwrap_or(rest);
        }
        match self.authority.rsplit_once(':') {
            Some((h, port)) if port.bytes().all(|b| b.is_ascii_digit()) => h,
            _ => self.authority,
        }
    }

    /// Lowercased host, path kept as-is, query kept, fragment and scheme
    /// dropped. An empty path becomes `/`.
    pub fn normalized(&self) -> String {
        let mut out = String::with_capacity(self.authority.len() + self.path.len() + 8);
        out.extend(self.authority.chars().map(|c| c.to_ascii_lowercase()));
        if self.path.is_empty() {
            out.push('/');
        } else {
            out.push_str(self.path);
        }
        if let Some(q) = self.query {
            out.push('?');
            out.push_str(q);
        }
        out
    }
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Form-style decoding: `+` is a space and `%XX` is a byte. Invalid escapes
/// pass through literally; invalid UTF-8 is replaced lossily.
pub fn form_decode(s: &str) -> String {
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'+' => {
                out.push(b' ');
                i += 1;
            }
            b'%' if i + 2 < b.len() => {
                match (hex_val(b[i + 1]), hex_val(b[i + 2])) {
                    (Some(h), Some(l)) => {
                        out.push(h << 4 | l);
                        i += 3;
                    }
                    _ => {
                        out.push(b'%');
                        i += 1;
                    }
                }
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    match String::from_utf8(out) {
        Ok(s) => s,
        Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
    }
}

/// Iterates `key=value` pairs of a raw query string, undecoded.
pub fn query_pairs(query: &str) -> impl Iterator<Item = (&str, &str)> {
    query
        .split('&')
        .filter(|p| !p.is_empty())
        .map(|p| p.split_once('=').unwrap_or((p, "")))
}
