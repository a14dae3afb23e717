//! Tensor data files.
//!
//! Binary layout (little endian):
//!
//! ```text
//! 0  "CAMT"
//! 4  u8   element code: bit width 1..=32 for iN, 0 for f32
//! 5  u8   rank (1 or 2)
//! 6  u16  reserved, zero
//! 8  u32  extent 0
//! 12 u32  extent 1 (0 for rank 1)
//! 16 payload: row-major, i32 per integer element or f32
//! ```
//!
//! Text layout: a header line `<elem> <d0>x<d1>` followed by
//! whitespace-separated values; `#` starts a comment.

use std::path::Path;

use thiserror::Error;

use crate::ir::{parse_elem, ElemType};
use crate::sim::Tensor;

pub const MAGIC: &[u8; 4] = b"CAMT";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, DataError> {
    Err(DataError::Format(msg.into()))
}

pub fn encode(t: &Tensor) -> Result<Vec<u8>, DataError> {
    if t.shape.is_empty() || t.shape.len() > 2 {
        return format_err(format!("rank {} tensors cannot be stored", t.shape.len()));
    }
    let mut out = Vec::with_capacity(16 + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(if t.elem.is_float() { 0 } else { t.elem.bits() });
    out.push(t.shape.len() as u8);
    out.extend_from_slice(&[0, 0]);
    for i in 0..2 {
        let e = t.shape.get(i).copied().unwrap_or(0);
        let e = u32::try_from(e).or_else(|_| format_err("extent exceeds u32"))?;
        out.extend_from_slice(&e.to_le_bytes());
    }
    for v in t.values_f64() {
        if t.elem.is_float() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        } else {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, DataError> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return format_err("missing CAMT header");
    }
    let code = bytes[4];
    let rank = bytes[5] as usize;
    let elem = match code {
        0 => ElemType::F32,
        1..=32 => ElemType::Int(code),
        _ => return format_err(format!("unknown element code {code}")),
    };
    if !(1..=2).contains(&rank) {
        return format_err(format!("unsupported rank {rank}"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let shape: Vec<usize> = (0..rank).map(|i| word(8 + 4 * i) as usize).collect();
    let n: usize = shape.iter().product();
    let payload = &bytes[16..];
    if payload.len() != 4 * n {
        return format_err(format!("payload holds {} bytes, expected {}", payload.len(), 4 * n));
    }
    let words = payload.chunks_exact(4).map(|c| c.try_into().unwrap());
    let t = if elem.is_float() {
        Tensor::from_floats(shape, words.map(|w| f64::from(f32::from_le_bytes(w))).collect())
    } else {
        Tensor::from_ints(shape, elem, words.map(|w| i64::from(i32::from_le_bytes(w))).collect())
    };
    t.map_err(|e| DataError::Format(e.0))
}

pub fn to_text(t: &Tensor) -> String {
    let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
    let mut s = format!("{} {}\n", t.elem, dims.join("x"));
    let w = *t.shape.last().unwrap_or(&1);
    for (i, v) in t.values_f64().iter().enumerate() {
        s.push_str(&v.to_string());
        s.push(if (i + 1) % w.max(1) == 0 { '\n' } else { ' ' });
    }
    s
}

pub fn parse_text(text: &str) -> Result<Tensor, DataError> {
    let mut words = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let (Some(elem), Some(dims)) = (words.next(), words.next()) else {
        return format_err("text data needs a '<elem> <shape>' header");
    };
    let elem = parse_elem(elem).ok_or_else(|| DataError::Format(format!("unknown element type '{elem}'")))?;
    let shape = dims
        .split('x')
        .map(|d| d.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .or_else(|_| format_err(format!("bad shape '{dims}'")))?;
    let t = if elem.is_float() {
        let vals = words
            .map(|w| w.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .or_else(|e| format_err(format!("bad value: {e}")))?;
        Tensor::from_floats(shape, vals)
    } else {
        let vals = words
            .map(|w| w.parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .or_else(|e| format_err(format!("bad value: {e}")))?;
        Tensor::from_ints(shape, elem, vals)
    };
    t.map_err(|e| DataError::Format(e.0))
}

/// Load a binary file (detected by its magic) or a text file.
pub fn load(path: &Path) -> Result<Tensor, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.starts_with(MAGIC) {
        return decode(&bytes);
    }
    let text = String::from_utf8(bytes).or_else(|_| format_err("data file is neither CAMT nor text"))?;
    parse_text(&text)
}

/// Write binary when the extension is not `.txt`.
pub fn save(path: &Path, t: &Tensor) -> Result<(), DataError> {
    let bytes = if path.extension().is_some_and(|e| e == "txt") {
        to_text(t).into_bytes()
    } else {
        encode(t)?
    };
    std::fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let t = Tensor::from_ints([2, 3], ElemType::Int(4), vec![0, 15, 3, 7, 1, 2]).unwrap();
        assert_eq!(decode(&encode(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn text_with_comments() {
        let t = parse_text("# query\ni1 1x4\n1 0 # tail\n1 1\n").unwrap();
        assert_eq!(t.ints(), &[1, 0, 1, 1]);
        assert_eq!(parse_text(&to_text(&t)).unwrap(), t);
    }

    #[test]
    fn rejects_out_of_range_bits() {
        assert!(parse_text("i1 1x2\n0 2").is_err());
        assert!(decode(b"CAMX").is_err());
    }
}
