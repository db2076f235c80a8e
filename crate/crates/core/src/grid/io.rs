//! Field import and export.
//!
//! Binary layout: the resolution `N` as a little-endian `u64`, followed by
//! `N * N` little-endian `f64` samples in row-major order (first index
//! along `x`). Vector fields are two such records back to back.
//!
//! CSV layout: `N` lines of `N` comma-separated values; line `i` holds the
//! samples at `x = i/N`. Values are written in shortest round-trip form.

use std::io::{Read, Write};

use super::ScalarField;
use crate::error::{Error, Result};

pub fn write_binary<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    out.write_all(&(field.resolution() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.samples().len() * 8);
    for v in field.samples() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<ScalarField> {
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    super::check_resolution(n)?;
    let mut bytes = vec![0u8; n * n * 8];
    input.read_exact(&mut bytes)?;
    let samples = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::new(n, samples, false)
}

pub fn write_csv<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let n = field.resolution();
    let mut text = String::new();
    for row in field.samples().chunks(n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn read_csv<R: Read>(mut input: R) -> Result<ScalarField> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut samples = Vec::new();
    let mut rows = 0;
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        rows += 1;
        let before = samples.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad value `{tok}`", lineno + 1)))?;
            samples.push(v);
        }
        let len = samples.len() - before;
        if *width.get_or_insert(len) != len {
            return Err(Error::Parse(format!("line {}: ragged row", lineno + 1)));
        }
    }
    if samples.len() != rows * rows {
        return Err(Error::Parse(format!("{rows} rows but {} values", samples.len())));
    }
    ScalarField::new(rows, samples, false)
}

pub fn write_binary_pair<W: Write>(a: &ScalarField, b: &ScalarField, mut out: W) -> Result<()> {
    write_binary(a, &mut out)?;
    write_binary(b, &mut out)
}

pub fn read_binary_pair<R: Read>(mut input: R) -> Result<(ScalarField, ScalarField)> {
    let a = read_binary(&mut input)?;
    let b = read_binary(&mut input)?;
    if a.resolution() != b.resolution() {
        return Err(Error::Parse("vector components differ in resolution".into()));
    }
    Ok((a, b))
}
