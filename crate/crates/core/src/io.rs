//! Sample files (CSV or binary) and JSON reports.
//!
//! Binary sample files are the 8-byte magic `SOLXI001`, a little-endian `u64`
//! count, then that many little-endian `f64` values. CSV files hold one
//! value per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_MAGIC: &[u8; 8] = b"SOLXI001";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    Binary,
    Csv,
}

/// Writes samples with 17 significant digits per line.
pub fn write_csv<W: Write>(out: W, samples: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(out);
    for x in samples {
        writeln!(w, "{x:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(out: W, samples: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(SAMPLE_MAGIC)?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for x in samples {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples(path: &Path, samples: &[f64], format: SampleFormat) -> Result<()> {
    let file = fs::File::create(path)?;
    match format {
        SampleFormat::Binary => write_binary(file, samples),
        SampleFormat::Csv => write_csv(file, samples),
    }
}

fn read_binary_body<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let n = u64::from_le_bytes(count) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != n * 8 {
        return Err(Error::Validation(format!(
            "binary sample file declares {n} values but holds {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Reads either format, detected from the magic bytes.
pub fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let head = r.fill_buf()?;
    if head.len() >= 8 && &head[..8] == SAMPLE_MAGIC {
        r.consume(8);
        return read_binary_body(r);
    }
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Validation(format!("line {}: not a number: {s:?}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
