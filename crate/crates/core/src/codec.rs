//! Framed little-endian binary encoding shared by the compiled artifacts.
//!
//! Layout: 4 magic bytes, `u16` format version, `u64` payload length, the
//! payload, then a CRC-32 of everything before it.

use std::fs;
use std::io;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("not a {expected} file")]
    BadMagic { expected: String },
    #[error("format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    pub fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
    pub fn seq<T>(&mut self, items: &[T], mut f: impl FnMut(&mut Self, &T)) {
        self.len(items.len());
        for it in items {
            f(self, it);
        }
    }

    /// Wraps the payload in the frame described in the module docs.
    pub fn finish(self, magic: &[u8; 4], version: u16) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.buf.len() + 18);
        out.extend_from_slice(magic);
        out.extend_from_slice(&version.to_le_bytes());
        out.extend_from_slice(&(self.buf.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.buf);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Validates the frame and returns a decoder over its payload.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], version: u16) -> Result<Self, CodecError> {
        let name = String::from_utf8_lossy(magic).into_owned();
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(CodecError::BadMagic { expected: name });
        }
        if bytes.len() < 18 {
            return Err(CodecError::Corrupt("truncated header".into()));
        }
        let found = LittleEndian::read_u16(&bytes[4..6]);
        let len = LittleEndian::read_u64(&bytes[6..14]) as usize;
        if bytes.len() != 14 + len + 4 {
            return Err(CodecError::Corrupt(format!(
                "expected {} payload bytes, file holds {}",
                len,
                bytes.len().saturating_sub(18)
            )));
        }
        let crc = LittleEndian::read_u32(&bytes[14 + len..]);
        if crc32fast::hash(&bytes[..14 + len]) != crc {
            return Err(CodecError::Corrupt("checksum mismatch".into()));
        }
        if found != version {
            return Err(CodecError::VersionMismatch { found, expected: version });
        }
        Ok(Self { buf: &bytes[14..14 + len], pos: 0 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| CodecError::Corrupt("unexpected end of payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(CodecError::Corrupt(format!("invalid bool byte {b}"))),
        }
    }
    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }
    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }
    pub fn i64(&mut self) -> Result<i64, CodecError> {
        Ok(LittleEndian::read_i64(self.take(8)?))
    }
    pub fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }
    /// Reads a sequence length prefix.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&mut self) -> Result<usize, CodecError> {
        let n = self.u64()? as usize;
        if n > self.buf.len() - self.pos {
            // every element takes at least one byte
            return Err(CodecError::Corrupt(format!("length {n} exceeds remaining payload")));
        }
        Ok(n)
    }
    pub fn str(&mut self) -> Result<String, CodecError> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CodecError::Corrupt("invalid utf-8".into()))
    }
    pub fn seq<T>(&mut self, mut f: impl FnMut(&mut Self) -> Result<T, CodecError>) -> Result<Vec<T>, CodecError> {
        let n = self.len()?;
        (0..n).map(|_| f(self)).collect()
    }
    pub fn finish(self) -> Result<(), CodecError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(CodecError::Corrupt("trailing bytes in payload".into()))
        }
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CodecError> {
    Ok(fs::read(path)?)
}
