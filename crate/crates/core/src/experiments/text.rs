//! Shared helpers for the line-oriented text formats.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Fixed-width scientific notation with 17 significant digits; parses back
/// to the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_row(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ")
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Cursor over the non-blank lines of a file that reports positions.
pub struct LineReader<'a> {
    path: PathBuf,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str, path: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            lines: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Line number of the most recently returned line.
    pub fn line(&self) -> usize {
        self.line
    }

    pub fn parse_error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    pub fn truncated(&self, expecting: &str) -> Error {
        Error::Truncated {
            path: self.path.clone(),
            msg: format!("ended after line {} while expecting {expecting}", self.line),
        }
    }

    /// Next non-blank line, trimmed.
    pub fn next(&mut self, expecting: &str) -> Result<&'a str> {
        for (i, raw) in self.lines.by_ref() {
            self.line = i + 1;
            let t = raw.trim();
            if !t.is_empty() {
                return Ok(t);
            }
        }
        Err(self.truncated(expecting))
    }

    /// Next line, which must start with the token `key`; returns the rest.
    pub fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next(key)?;
        let (k, rest) = split_token(line);
        if k != key {
            return Err(self.parse_error(format!("expected `{key}`, found `{k}`")));
        }
        Ok(rest)
    }

    pub fn usize_field(&mut self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|e| self.parse_error(format!("bad integer `{v}` for {key}: {e}")))
    }

    pub fn floats(&self, text: &str) -> Result<Vec<f64>> {
        text.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| self.parse_error(format!("bad number `{t}`: {e}")))
            })
            .collect()
    }

    /// Exactly `n` floats from `text`, or a dimension mismatch.
    pub fn floats_n(&self, text: &str, n: usize, what: &str) -> Result<Vec<f64>> {
        let v = self.floats(text)?;
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                what: format!("{} line {}: {what}", self.path.display(), self.line),
                expected: n,
                got: v.len(),
            });
        }
        Ok(v)
    }

    /// Checks that nothing but blank lines remain.
    pub fn finish(&mut self) -> Result<()> {
        for (i, raw) in self.lines.by_ref() {
            if !raw.trim().is_empty() {
                self.line = i + 1;
                return Err(self.parse_error("unexpected content after `end`"));
            }
        }
        Ok(())
    }
}

pub fn split_token(line: &str) -> (&str, &str) {
    match line.split_once(char::is_whitespace) {
        Some((k, rest)) => (k, rest.trim()),
        None => (line, ""),
    }
}

/// Checks the magic line and the `version` line.
pub fn check_header(r: &mut LineReader<'_>, magic: &str, version: u32) -> Result<()> {
    let first = r.next(magic)?;
    if first != magic {
        return Err(r.parse_error(format!("not a {magic} file (first line `{first}`)")));
    }
    let v = r.field("version")?;
    if v != version.to_string() {
        return Err(Error::Version {
            path: r.path().to_path_buf(),
            found: v.to_string(),
            expected: version,
        });
    }
    Ok(())
}
