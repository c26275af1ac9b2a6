//! File formats and helpers the pipeline stages communicate through.
//!
//! Every binary format is little-endian and opens with a 4-byte magic so
//! `validate` can identify and check any artifact. Writes are atomic
//! (temp file + rename) so interrupted stages never leave partial outputs.

pub mod cameras;
pub mod fmap;
pub mod part;
pub mod ply;
pub mod raster;
pub mod trip;
pub mod validate;

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Writes via a temp file in the target directory, then renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Hex-encoded SHA-256 of a file, used by stage reports for staleness checks.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(hex_encode(&h.finalize()))
}

fn hex_encode(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Cursor over a little-endian byte buffer that reports the offset of the
/// first malformed byte on error.
pub struct ByteReader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(path: &'a Path, buf: &'a [u8]) -> Self {
        Self { path, buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::format(self.path, self.pos as u64, message)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(format!(
                "truncated {what}: need {n} bytes, {} remain",
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            self.pos -= 4;
            return Err(self.error(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f32_slice(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(count * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u32_slice(&mut self, count: usize, what: &str) -> Result<Vec<u32>> {
        let bytes = self.take(count * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Little-endian byte accumulator mirroring ByteReader.
#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> &mut Self {
        self.buf.extend_from_slice(magic);
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f32(&mut self, v: f32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f32_slice(&mut self, vs: impl IntoIterator<Item = f32>) -> &mut Self {
        for v in vs {
            self.f32(v);
        }
        self
    }

    pub fn u32_slice(&mut self, vs: impl IntoIterator<Item = u32>) -> &mut Self {
        for v in vs {
            self.u32(v);
        }
        self
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn reader_reports_offsets() {
        let path = PathBuf::from("x.bin");
        let mut w = ByteWriter::new();
        w.magic(b"FUSE").u32(3);
        let bytes = w.into_bytes();
        let mut r = ByteReader::new(&path, &bytes);
        r.expect_magic(b"FUSE").unwrap();
        assert_eq!(r.u32("n").unwrap(), 3);
        let err = r.u32("missing").unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 8),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_magic_at_offset_zero() {
        let path = PathBuf::from("x.bin");
        let bytes = b"JUNKxxxx".to_vec();
        let mut r = ByteReader::new(&path, &bytes);
        match r.expect_magic(b"FUSE").unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn atomic_write_round_trip() {
        let dir = std::env::temp_dir().join(format!("psplat_io_test_{}", std::process::id()));
        let path = dir.join("sub").join("file.bin");
        atomic_write(&path, b"hello").unwrap();
        assert_eq!(read_bytes(&path).unwrap(), b"hello");
        atomic_write(&path, b"world").unwrap();
        assert_eq!(read_bytes(&path).unwrap(), b"world");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
