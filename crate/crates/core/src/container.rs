// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary array container shared by checkpoints and activation matrices.
//!
//! Layout (little-endian):
//!
//! ```text
//! [8 bytes magic][u32 header length N][N bytes UTF-8 JSON header][payload]
//! ```
//!
//! The JSON header carries an `arrays` list of `{name, rows, cols, offset,
//! dtype}` entries; `offset` is the byte offset of the array inside the
//! payload, which stores each array row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub dtype: Dtype,
}

impl ArrayEntry {
    fn byte_len(&self) -> Option<usize> {
        self.rows.checked_mul(self.cols)?.checked_mul(self.dtype.size())
    }
}

/// Array to be written: name, shape, row-major values and storage type.
pub struct ArrayRef<'a> {
    pub name: &'a str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
    pub dtype: Dtype,
}

/// Computes payload offsets for `arrays` in order.
pub fn layout(arrays: &[ArrayRef<'_>]) -> Vec<ArrayEntry> {
    let mut offset = 0;
    arrays
        .iter()
        .map(|a| {
            let e = ArrayEntry {
                name: a.name.to_string(),
                rows: a.rows,
                cols: a.cols,
                offset,
                dtype: a.dtype,
            };
            offset += a.rows * a.cols * a.dtype.size();
            e
        })
        .collect()
}

/// Serializes a full container. `header` must already contain the array
/// table produced by [`layout`] for the same `arrays`.
pub fn encode(magic: &[u8; 8], header: &[u8], arrays: &[ArrayRef<'_>]) -> Vec<u8> {
    let payload: usize = arrays.iter().map(|a| a.data.len() * a.dtype.size()).sum();
    let mut out = Vec::with_capacity(12 + header.len() + payload);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    for a in arrays {
        debug_assert_eq!(a.data.len(), a.rows * a.cols);
        match a.dtype {
            Dtype::F64 => a.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Dtype::F32 => a
                .data
                .iter()
                .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        }
    }
    out
}

/// Splits a container into its JSON header bytes and payload.
pub fn split<'a>(bytes: &'a [u8], magic: &[u8; 8], path: &str) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 12 {
        return Err(Error::format(path, "truncated header"));
    }
    if &bytes[..8] != magic {
        return Err(Error::format(path, "bad magic"));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 12 + n {
        return Err(Error::format(path, "truncated header"));
    }
    Ok((&bytes[12..12 + n], &bytes[12 + n..]))
}

/// Reads one array from the payload, upcasting to `f64`.
pub fn read_array(payload: &[u8], entry: &ArrayEntry, path: &str) -> Result<Vec<f64>> {
    let len = entry
        .byte_len()
        .ok_or_else(|| Error::format(path, format!("array {} shape overflows", entry.name)))?;
    let end = entry
        .offset
        .checked_add(len)
        .filter(|&e| e <= payload.len())
        .ok_or_else(|| Error::format(path, format!("truncated payload in array {}", entry.name)))?;
    let raw = &payload[entry.offset..end];
    Ok(match entry.dtype {
        Dtype::F64 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Dtype::F32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
    })
}
