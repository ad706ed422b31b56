//! Embedding files.
//!
//! Text: a header `EMB1 <N> <D> <descriptor_tag>` followed by N rows
//! `object_id<TAB>v1 v2 ... vD`.
//!
//! Binary: the header line `EMB1B <N> <D> <descriptor_tag>\n`, then per row a
//! little-endian `u32` id length, the UTF-8 id, and D little-endian `f32`s.

use std::fs;
use std::path::Path;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, IoContext, Result};

pub const TEXT_MAGIC: &str = "EMB1";
pub const BINARY_MAGIC: &str = "EMB1B";

pub fn encode_text(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = format!("{TEXT_MAGIC} {} {} {}\n", m.len(), m.dim(), m.descriptor_tag);
    for (id, row) in m.rows() {
        out.push_str(id);
        out.push('\t');
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub fn encode_binary(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = format!("{BINARY_MAGIC} {} {} {}\n", m.len(), m.dim(), m.descriptor_tag).into_bytes();
    for (id, row) in m.rows() {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path, binary: bool) -> Result<()> {
    let bytes = if binary { encode_binary(m) } else { encode_text(m) };
    crate::ingest::write_atomic(path, &bytes)
}

struct Header<'a> {
    binary: bool,
    n: usize,
    dim: usize,
    tag: &'a str,
}

fn parse_header(line: &str) -> Result<Header<'_>> {
    let mut parts = line.splitn(4, ' ');
    let magic = parts.next().unwrap_or_default();
    let binary = match magic {
        TEXT_MAGIC => false,
        BINARY_MAGIC => true,
        _ => return Err(Error::format(format!("unknown embedding file magic {magic:?}"), Some(1))),
    };
    let num = |s: Option<&str>, what: &str| -> Result<usize> {
        s.and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::format(format!("header lacks a valid {what}"), Some(1)))
    };
    let n = num(parts.next(), "row count")?;
    let dim = num(parts.next(), "dimension")?;
    if dim == 0 {
        return Err(Error::format("dimension must be positive", Some(1)));
    }
    let tag = parts.next().unwrap_or("").trim_end_matches('\r');
    Ok(Header { binary, n, dim, tag })
}

fn check_row(values: &[f32], dim: usize, row: usize) -> Result<()> {
    if values.len() != dim {
        return Err(Error::format(
            format!("row {row} has {} values, header says {dim}", values.len()),
            Some(row + 2),
        ));
    }
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(
            format!("row {row} has a non-finite value at column {j}"),
            Some(row + 2),
        ));
    }
    Ok(())
}

/// Parse either variant; rows are returned as stored (no normalization).
pub fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("missing header line", Some(1)))?;
    let header_line = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::format("header is not UTF-8", Some(1)))?;
    let header = parse_header(header_line)?;
    let body = &bytes[nl + 1..];
    let mut ids = Vec::with_capacity(header.n);
    let mut data = Vec::with_capacity(header.n * header.dim);

    if header.binary {
        let mut pos = 0;
        let mut take = |len: usize, row: usize| -> Result<&[u8]> {
            let chunk = body
                .get(pos..pos + len)
                .ok_or_else(|| Error::format(format!("truncated binary data in row {row}"), None))?;
            pos += len;
            Ok(chunk)
        };
        for row in 0..header.n {
            let len = u32::from_le_bytes(take(4, row)?.try_into().unwrap()) as usize;
            let id = std::str::from_utf8(take(len, row)?)
                .map_err(|_| Error::format(format!("row {row} id is not UTF-8"), None))?
                .to_string();
            let raw = take(4 * header.dim, row)?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            check_row(&values, header.dim, row)?;
            ids.push(id);
            data.extend_from_slice(&values);
        }
        if pos != body.len() {
            return Err(Error::format("trailing bytes after the last row", None));
        }
    } else {
        let text = std::str::from_utf8(body).map_err(|_| Error::format("body is not UTF-8", None))?;
        for (row, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            if row >= header.n {
                return Err(Error::format(
                    format!("more rows than the header's {}", header.n),
                    Some(row + 2),
                ));
            }
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(format!("row {row} lacks a tab after the id"), Some(row + 2)))?;
            let values = rest
                .split_ascii_whitespace()
                .map(|t| {
                    t.parse::<f32>().map_err(|_| {
                        Error::format(format!("row {row}: {t:?} is not a number"), Some(row + 2))
                    })
                })
                .collect::<Result<Vec<f32>>>()?;
            check_row(&values, header.dim, row)?;
            ids.push(id.to_string());
            data.extend_from_slice(&values);
        }
    }
    if ids.len() != header.n {
        return Err(Error::format(
            format!("header promises {} rows, found {}", header.n, ids.len()),
            None,
        ));
    }
    EmbeddingMatrix::new(ids, header.dim, data, header.tag.to_string())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).at(path)?;
    decode(&bytes)
}
