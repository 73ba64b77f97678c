//! Fixed binary envelope used for every dense array on disk.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"BNCL"`                         |
//! | 4      | 1    | format version (currently `1`)          |
//! | 5      | 4    | `u32` rows                              |
//! | 9      | 4    | `u32` columns                           |
//! | 13     | 4    | `u32` channels                          |
//! | 17     | 4·n  | row-major `f32` payload, channel fastest |
//!
//! Envelopes may be concatenated in one file (checkpoints do this).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BNCL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl Header {
    pub fn len(&self) -> usize {
        self.rows * self.cols * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One header plus its payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub header: Header,
    pub data: Vec<f32>,
}

impl Envelope {
    pub fn new(rows: usize, cols: usize, channels: usize, data: Vec<f32>) -> Self {
        let header = Header {
            rows,
            cols,
            channels,
        };
        assert_eq!(header.len(), data.len(), "envelope payload length");
        Envelope { header, data }
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + 4 * self.data.len()
    }
}

fn dim_u32(v: usize) -> std::io::Result<u32> {
    u32::try_from(v).map_err(|_| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("dimension {v} exceeds u32"),
        )
    })
}

pub fn write_envelope<W: Write>(w: &mut W, env: &Envelope) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&dim_u32(env.header.rows)?.to_le_bytes())?;
    w.write_all(&dim_u32(env.header.cols)?.to_le_bytes())?;
    w.write_all(&dim_u32(env.header.channels)?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(env.data.len() * 4);
    for v in &env.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn encode(env: &Envelope) -> Vec<u8> {
    let mut out = Vec::with_capacity(env.byte_len());
    write_envelope(&mut out, env).expect("writing to a Vec cannot fail");
    out
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a header. `path` is only used for error messages.
pub fn read_header<R: Read>(r: &mut R, path: &Path) -> Result<Header> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            format_err(path, "truncated header")
        } else {
            Error::io(path, e)
        }
    })?;
    if head[0..4] != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    if head[4] != VERSION {
        return Err(format_err(
            path,
            format!("unsupported version {} (expected {VERSION})", head[4]),
        ));
    }
    let field = |at: usize| u32::from_le_bytes(head[at..at + 4].try_into().unwrap()) as usize;
    Ok(Header {
        rows: field(5),
        cols: field(9),
        channels: field(13),
    })
}

pub fn read_envelope<R: Read>(r: &mut R, path: &Path) -> Result<Envelope> {
    let header = read_header(r, path)?;
    let n = header
        .rows
        .checked_mul(header.cols)
        .and_then(|v| v.checked_mul(header.channels))
        .ok_or_else(|| format_err(path, "dimensions overflow"))?;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            format_err(path, format!("payload shorter than {n} floats"))
        } else {
            Error::io(path, e)
        }
    })?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Envelope { header, data })
}

/// Reads exactly one envelope and rejects trailing bytes.
pub fn load_envelope(path: &Path) -> Result<Envelope> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let env = read_envelope(&mut reader, path)?;
    let mut rest = [0u8; 1];
    match reader.read(&mut rest) {
        Ok(0) => Ok(env),
        Ok(_) => Err(format_err(path, "trailing bytes after payload")),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn peek_header(path: &Path) -> Result<Header> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_header(&mut BufReader::new(file), path)
}

pub fn save_envelopes(path: &Path, envs: &[Envelope]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for env in envs {
        write_envelope(&mut w, env).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
