//! JSON output with fixed key order and 17-significant-digit floats.
//!
//! Key order comes from struct field order (serde derive). Floats are written
//! in scientific notation with a 16-digit mantissa fraction, so the text is
//! stable across platforms and parses back to the identical `f64`.
//! Non-finite floats become `null`.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter, Serializer};

/// Formatter wrapper that replaces float formatting and delegates the rest.
pub struct FixedFloat<F>(pub F);

impl<F: Formatter> Formatter for FixedFloat<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{value:.8e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_key(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

fn render<T: Serialize + ?Sized, F: Formatter>(value: &T, formatter: F) -> String {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, FixedFloat(formatter));
    value
        .serialize(&mut ser)
        .expect("serializing into memory cannot fail for plain data");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

/// Single-line JSON.
pub fn to_compact<T: Serialize + ?Sized>(value: &T) -> String {
    render(value, CompactFormatter)
}

/// Indented JSON (two spaces).
pub fn to_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    render(value, PrettyFormatter::new())
}
