//! The `PMAP` probability-map file: a 16-byte header followed by raw
//! little-endian `f32` values, row-major.
//!
//! | offset | field | type |
//! |--------|-------|------|
//! | 0 | magic `"PMAP"` | 4 bytes |
//! | 4 | format version (1) | u16 LE |
//! | 6 | reserved (written 0, ignored on read) | u16 LE |
//! | 8 | height | u32 LE |
//! | 12 | width | u32 LE |
//! | 16 | `height*width` probabilities in `[0, 1]` | f32 LE each |
//!
//! The format is trivially implementable in any language and bit-exact.
//! For convenience the reader also accepts 8-bit portable graymaps (`P5`
//! binary or `P2` ASCII, maxval 255), mapping each pixel to `value/255`.

use std::path::{Path, PathBuf};

use detconf_core::postprocess::ProbabilityMap;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"PMAP";
const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum PmapError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(
        "{path}: unrecognized magic {found:?} at byte 0 (expected \"PMAP\", \"P5\" or \"P2\")"
    )]
    BadMagic { path: PathBuf, found: String },
    #[error("{path}: unsupported PMAP version {found} at byte 4")]
    UnsupportedVersion { path: PathBuf, found: u16 },
    #[error(
        "{path}: truncated at byte {offset}: expected {expected} bytes of payload, found {found}"
    )]
    SizeMismatch {
        path: PathBuf,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: value {value} at byte {offset} is outside [0, 1]")]
    ValueOutOfRange {
        path: PathBuf,
        offset: usize,
        value: f64,
    },
    #[error("{path}: zero dimension {height}x{width} at byte 8")]
    ZeroDimension {
        path: PathBuf,
        height: u32,
        width: u32,
    },
    #[error("{path}: malformed PGM at byte {offset}: {reason}")]
    BadPgm {
        path: PathBuf,
        offset: usize,
        reason: String,
    },
}

pub fn write_pmap(path: &Path, map: &ProbabilityMap) -> Result<(), PmapError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + map.values().len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(map.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for &v in map.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|source| PmapError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a probability map, dispatching on the magic bytes.
pub fn read_probability_map(path: &Path) -> Result<ProbabilityMap, PmapError> {
    let bytes = std::fs::read(path).map_err(|source| PmapError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.starts_with(MAGIC) {
        return read_pmap(path, &bytes);
    }
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        return read_pgm(path, &bytes);
    }
    let found = bytes
        .iter()
        .take(4)
        .map(|&b| if b.is_ascii_graphic() { b as char } else { '.' })
        .collect();
    Err(PmapError::BadMagic {
        path: path.to_path_buf(),
        found,
    })
}

fn read_pmap(path: &Path, bytes: &[u8]) -> Result<ProbabilityMap, PmapError> {
    let io_path = || path.to_path_buf();
    if bytes.len() < HEADER_LEN {
        return Err(PmapError::SizeMismatch {
            path: io_path(),
            offset: bytes.len(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(PmapError::UnsupportedVersion {
            path: io_path(),
            found: version,
        });
    }
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let width = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if height == 0 || width == 0 {
        return Err(PmapError::ZeroDimension {
            path: io_path(),
            height,
            width,
        });
    }
    let count = height as usize * width as usize;
    let expected = count * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(PmapError::SizeMismatch {
            path: io_path(),
            offset: HEADER_LEN,
            expected,
            found: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let offset = HEADER_LEN + i * 4;
        let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as f64;
        if !(0.0..=1.0).contains(&v) {
            return Err(PmapError::ValueOutOfRange {
                path: io_path(),
                offset,
                value: v,
            });
        }
        values.push(v);
    }
    Ok(ProbabilityMap::new(height as usize, width as usize, values)
        .expect("dimensions and range checked above"))
}

/// Minimal PGM reader: `P5`/`P2`, `#` comments in the header, maxval 255.
fn read_pgm(path: &Path, bytes: &[u8]) -> Result<ProbabilityMap, PmapError> {
    let io_path = || path.to_path_buf();
    let binary = bytes.starts_with(b"P5");
    let mut pos = 2usize;

    let next_token = |pos: &mut usize| -> Result<(usize, String), PmapError> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(PmapError::BadPgm {
                path: path.to_path_buf(),
                offset: start,
                reason: "unexpected end of header".into(),
            });
        }
        Ok((
            start,
            String::from_utf8_lossy(&bytes[start..*pos]).into_owned(),
        ))
    };

    let read_number = |pos: &mut usize, what: &str| -> Result<usize, PmapError> {
        let (offset, token) = next_token(pos)?;
        token.parse::<usize>().map_err(|_| PmapError::BadPgm {
            path: io_path(),
            offset,
            reason: format!("{what} is not a number: {token:?}"),
        })
    };

    let width = read_number(&mut pos, "width")?;
    let height = read_number(&mut pos, "height")?;
    let (maxval_offset, maxval) = {
        let v = read_number(&mut pos, "maxval")?;
        (pos, v)
    };
    if maxval != 255 {
        return Err(PmapError::BadPgm {
            path: io_path(),
            offset: maxval_offset,
            reason: format!("only maxval 255 is supported, got {maxval}"),
        });
    }
    if height == 0 || width == 0 {
        return Err(PmapError::ZeroDimension {
            path: io_path(),
            height: height as u32,
            width: width as u32,
        });
    }
    let count = height * width;
    let mut values = Vec::with_capacity(count);
    if binary {
        pos += 1; // single whitespace after maxval
        let payload = &bytes[pos.min(bytes.len())..];
        if payload.len() < count {
            return Err(PmapError::SizeMismatch {
                path: io_path(),
                offset: pos,
                expected: count,
                found: payload.len(),
            });
        }
        values.extend(payload[..count].iter().map(|&b| f64::from(b) / 255.0));
    } else {
        for _ in 0..count {
            let v = read_number(&mut pos, "pixel")?;
            if v > 255 {
                return Err(PmapError::BadPgm {
                    path: io_path(),
                    offset: pos,
                    reason: format!("pixel {v} exceeds maxval 255"),
                });
            }
            values.push(v as f64 / 255.0);
        }
    }
    Ok(ProbabilityMap::new(height, width, values).expect("values scaled into range"))
}
