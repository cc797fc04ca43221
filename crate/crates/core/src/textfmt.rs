//! Shared reader for the whitespace-separated line formats.

use std::path::Path;
use std::str::SplitWhitespace;

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) struct Fields<'a> {
    pub line: usize,
    it: SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    pub fn str(&mut self, name: &str) -> Result<&'a str> {
        self.it
            .next()
            .ok_or_else(|| Error::parse(self.line, format!("missing field `{name}`")))
    }

    pub fn f64(&mut self, name: &str) -> Result<f64> {
        let raw = self.str(name)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::parse(
                self.line,
                format!("`{name}` is not a finite number: {raw:?}"),
            )),
        }
    }

    pub fn end(mut self) -> Result<()> {
        match self.it.next() {
            None => Ok(()),
            Some(extra) => Err(Error::parse(self.line, format!("unexpected trailing field {extra:?}"))),
        }
    }
}

/// Non-blank lines not starting with `#`, numbered from 1.
pub(crate) fn records(text: &str) -> impl Iterator<Item = Fields<'_>> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        (!t.is_empty() && !t.starts_with('#')).then(|| Fields {
            line: i + 1,
            it: t.split_whitespace(),
        })
    })
}
