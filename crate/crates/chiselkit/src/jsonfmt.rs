//! Byte-deterministic JSON encoding for the report formats.
//!
//! Every floating-point value is rendered as `{:.16e}` (17 significant
//! digits), which round-trips any finite `f64` exactly and makes repeated
//! runs produce byte-identical files — the default shortest-representation
//! float printing is also deterministic, but ties the on-disk format to the
//! serializer's rounding internals. All container orders come from struct
//! field order and vector order, so no nondeterminism can enter.

use std::io;

use serde::Serialize;

use crate::error::{Error, Result};

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.8e}")
    }
}

/// Serialize to a compact JSON string with deterministic float formatting,
/// terminated by a newline.
pub fn to_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::arg(format!("JSON encoding failed: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::arg(format!("JSON encoding produced non-UTF-8: {e}")))
}

/// Parse JSON with line-aware error reporting.
pub fn from_str<'a, T: serde::Deserialize<'a>>(text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::format(e.line(), e.to_string()))
}
