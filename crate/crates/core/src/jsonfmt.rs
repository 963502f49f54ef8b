//! Deterministic JSON emission: fixed field order (struct order), floats
//! with 17 significant digits so reruns are byte-identical and values
//! round-trip exactly.

use serde::Serialize;
use serde_json::ser::Formatter;
use std::io;

#[derive(Default)]
pub struct SigDigitFormatter;

impl Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:.16e}", value)
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:e}", value)
    }
}

/// Serialize to a JSON string with 17-significant-digit floats.
pub fn to_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_17_significant_digits() {
        let s = to_string(&serde_json::json!({"x": 0.1})).unwrap();
        assert_eq!(s, "{\"x\":1.0000000000000001e-1}");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let v = serde_json::json!({"a": 1.0 / 3.0, "b": [2.0f64.sqrt()]});
        assert_eq!(to_string(&v).unwrap(), to_string(&v).unwrap());
    }
}
