//! Basis files and basis visualisation.
//!
//! A basis file starts with one JSON header line, `{"m":7,"K":3,"encoding":"text"}`,
//! followed by `K` rows of `m*m` reals (row-major patches). With
//! `"encoding":"binary"` the rows are raw little-endian `f64`s; with `"text"`
//! each row is one line of whitespace-separated decimals.

use std::io::Write;
use std::path::Path;

use ::image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::PatchBasis;
use crate::error::{Error, Result};
use crate::grid::Patch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Text,
    Binary,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    encoding: Encoding,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_basis(path: impl AsRef<Path>, basis: &PatchBasis, encoding: Encoding) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        m: basis.side(),
        k: basis.len(),
        encoding,
    };
    let mut out = serde_json::to_vec(&header).expect("header serialises");
    out.push(b'\n');
    match encoding {
        Encoding::Binary => {
            for v in basis {
                for x in v.values() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Encoding::Text => {
            for v in basis {
                let line: Vec<String> = v.values().iter().map(|x| x.to_string()).collect();
                writeln!(out, "{}", line.join(" ")).expect("write to vec");
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_basis(path: impl AsRef<Path>) -> Result<PatchBasis> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(path, "missing header line"))?;
    let header: Header = serde_json::from_slice(&raw[..split])
        .map_err(|e| format_err(path, format!("bad header: {e}")))?;
    let n = header.m * header.m;
    let body = &raw[split + 1..];
    let values: Vec<f64> = match header.encoding {
        Encoding::Binary => {
            if body.len() != header.k * n * 8 {
                return Err(format_err(
                    path,
                    format!(
                        "expected {} bytes of data, found {}",
                        header.k * n * 8,
                        body.len()
                    ),
                ));
            }
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
        Encoding::Text => {
            let text = std::str::from_utf8(body).map_err(|e| format_err(path, e.to_string()))?;
            text.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| format_err(path, format!("'{t}': {e}")))
                })
                .collect::<Result<_>>()?
        }
    };
    if values.len() != header.k * n {
        return Err(format_err(
            path,
            format!("expected {} values, found {}", header.k * n, values.len()),
        ));
    }
    let bases = values
        .chunks_exact(n)
        .map(|c| Patch::new(header.m, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    PatchBasis::new(bases)
}

/// Renders the bases side by side, each stretched to its own min/max range.
pub fn save_basis_tiles(basis: &PatchBasis, path: impl AsRef<Path>, zoom: usize) -> Result<()> {
    let path = path.as_ref();
    let zoom = zoom.max(1);
    let m = basis.side();
    let gap = 1;
    let tile = m * zoom;
    let width = basis.len() * tile + (basis.len() + 1) * gap;
    let height = tile + 2 * gap;
    let mut img = GrayImage::from_pixel(width as u32, height as u32, Luma([255]));
    for (k, v) in basis.iter().enumerate() {
        let lo = v.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let x0 = gap + k * (tile + gap);
        for py in 0..tile {
            for px in 0..tile {
                let val = (v.at(px / zoom, py / zoom) - lo) / span;
                img.put_pixel(
                    (x0 + px) as u32,
                    (gap + py) as u32,
                    Luma([(val * 255.0).round() as u8]),
                );
            }
        }
    }
    img.save_with_format(path, ::image::ImageFormat::Png)
        .map_err(|e| Error::Codec {
            path: path.to_path_buf(),
            source: e,
        })
}
