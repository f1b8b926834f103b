//! Self-describing binary container shared by all persisted models.
//!
//! Layout: 7-byte magic, `u16` major and minor version, a sequence of
//! length-prefixed sections (JSON, little-endian `f32`/`f64` arrays or raw
//! bytes), then a 32-byte SHA-256 of everything before it.

use byteorder::{ByteOrder, LittleEndian};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

const DIGEST_LEN: usize = 32;

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 7], major: u16, minor: u16) -> Self {
        let mut buf = Vec::with_capacity(1024);
        buf.extend_from_slice(magic);
        let mut v = [0u8; 4];
        LittleEndian::write_u16(&mut v[..2], major);
        LittleEndian::write_u16(&mut v[2..], minor);
        buf.extend_from_slice(&v);
        Self { buf }
    }

    pub fn u64(&mut self, x: u64) -> &mut Self {
        let mut b = [0u8; 8];
        LittleEndian::write_u64(&mut b, x);
        self.buf.extend_from_slice(&b);
        self
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        self.u64(data.len() as u64);
        self.buf.extend_from_slice(data);
        self
    }

    pub fn json<T: Serialize>(&mut self, value: &T) -> Result<&mut Self> {
        let data = serde_json::to_vec(value)?;
        Ok(self.bytes(&data))
    }

    pub fn f32s(&mut self, data: &[f32]) -> &mut Self {
        self.u64(data.len() as u64);
        let start = self.buf.len();
        self.buf.resize(start + data.len() * 4, 0);
        LittleEndian::write_f32_into(data, &mut self.buf[start..]);
        self
    }

    pub fn f64s(&mut self, data: &[f64]) -> &mut Self {
        self.u64(data.len() as u64);
        let start = self.buf.len();
        self.buf.resize(start + data.len() * 8, 0);
        LittleEndian::write_f64_into(data, &mut self.buf[start..]);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        let mut buf = self.buf;
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    pub major: u16,
    pub minor: u16,
}

impl<'a> Reader<'a> {
    /// Verifies checksum, magic and major version.
    pub fn open(bytes: &'a [u8], magic: &[u8; 7], supported_major: u16) -> Result<Self> {
        if bytes.len() < DIGEST_LEN + 11 {
            return Err(Error::Checksum);
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum);
        }
        if &body[..7] != magic {
            return Err(Error::BadFormat(format!(
                "expected magic {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let major = LittleEndian::read_u16(&body[7..9]);
        let minor = LittleEndian::read_u16(&body[9..11]);
        if major > supported_major {
            return Err(Error::Version {
                found: major as u32,
                supported: supported_major as u32,
            });
        }
        Ok(Self {
            data: body,
            pos: 11,
            major,
            minor,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::BadFormat("unexpected end of data".into()))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::BadFormat("length overflow".into()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }

    pub fn json<T: DeserializeOwned>(&mut self) -> Result<T> {
        Ok(serde_json::from_slice(self.bytes()?)?)
    }

    pub fn f32s(&mut self) -> Result<Vec<f32>> {
        let n = self.len()?;
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::BadFormat("length overflow".into()))?)?;
        let mut out = vec![0f32; n];
        LittleEndian::read_f32_into(raw, &mut out);
        Ok(out)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::BadFormat("length overflow".into()))?)?;
        let mut out = vec![0f64; n];
        LittleEndian::read_f64_into(raw, &mut out);
        Ok(out)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::BadFormat("trailing data".into()));
        }
        Ok(())
    }
}
