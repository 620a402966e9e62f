//! JSON serialization helpers.
//!
//! Every float written to disk goes through a fixed 17-significant-digit
//! format (`{:.16e}`). That is enough digits to round-trip any f64 exactly,
//! and it makes repeated runs byte-identical so output files can be diffed.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

/// Format a float with 17 significant digits (exact f64 round-trip).
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Compact JSON formatter that writes all floats via [`fmt_f64`].
///
/// Non-finite floats never reach this formatter: the data types validate
/// finiteness on construction, and serde_json maps any that slip through to
/// `null`, which fails loudly on load.
pub struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize a value to a compact JSON string with 17-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits valid utf-8"))
}

/// Write a value as a JSON file (single line plus trailing newline).
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    let mut ser = serde_json::Serializer::with_formatter(&mut writer, SigDigitFormatter);
    value.serialize(&mut ser)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Read a JSON file written by [`write_json_file`] (or any JSON).
pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for &v in &[
            0.0,
            -0.0,
            1.0,
            0.1,
            std::f64::consts::PI,
            1e-300,
            -3.5e200,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn json_floats_use_fixed_format() {
        let s = to_json_string(&vec![0.5, 1.0]).unwrap();
        assert_eq!(s, "[5.0000000000000000e-1,1.0000000000000000e0]");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.5, 1.0]);
    }

    #[test]
    fn json_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        let value = vec![0.1, 2.0 / 3.0, 1e-300];
        write_json_file(&path, &value).unwrap();
        let back: Vec<f64> = read_json_file(&path).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&value));
    }
}
