//! Flat `key = value` configuration files.
//!
//! UTF-8 text, one assignment per line. Blank lines and lines starting with `#` are
//! ignored. Duplicate keys are rejected, and every key must be consumed by a parser
//! before [`KvFile::finish`] succeeds.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct KvFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("expected `key = value`, found `{line}`"),
                });
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    msg: "empty key".into(),
                });
            }
            let value = value.trim().to_string();
            if let Some((prev, _)) = entries.insert(key.clone(), (line_no, value)) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("duplicate key `{key}` (first set on line {prev})"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take_str(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    pub fn require_str(&mut self, key: &str) -> Result<(usize, String)> {
        self.take_str(key).ok_or_else(|| Error::Config {
            line: 0,
            msg: format!("missing required key `{key}`"),
        })
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take_str(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| Error::Config {
                line,
                msg: format!("cannot parse `{v}` for key `{key}`"),
            }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, v) = self.require_str(key)?;
        v.parse::<T>().map_err(|_| Error::Config {
            line,
            msg: format!("cannot parse `{v}` for key `{key}`"),
        })
    }

    /// Removes every key starting with `prefix`.
    pub fn discard_prefix(&mut self, prefix: &str) {
        self.entries.retain(|k, _| !k.starts_with(prefix));
    }

    /// Errors on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::Config {
                line,
                msg: format!("unknown key `{key}`"),
            }),
        }
    }
}

/// Splits `name(a, b, ...)` into the name and its top-level arguments.
pub(crate) fn split_call(expr: &str) -> Option<(&str, Vec<&str>)> {
    let expr = expr.trim();
    let open = expr.find('(')?;
    if !expr.ends_with(')') {
        return None;
    }
    let name = expr[..open].trim();
    let inner = &expr[open + 1..expr.len() - 1];
    let mut args = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.checked_sub(1)?,
            ',' | ';' if depth == 0 => {
                args.push(inner[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return None;
    }
    let last = inner[start..].trim();
    if !last.is_empty() || !args.is_empty() {
        args.push(last);
    }
    Some((name, args))
}
