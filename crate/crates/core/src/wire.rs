//! Canonical byte encoding.
//!
//! Integers are big-endian, byte strings and sequences carry a `u32`
//! length prefix, optional values a one-byte presence flag. The same bytes
//! are what gets signed, hashed and persisted in traces, so the layout
//! must never depend on in-memory representation.

use crate::error::WireError;

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    /// Encodes `v` on its own and writes it as a length-prefixed field.
    pub fn nested<T: Wire>(&mut self, v: &T) -> &mut Self {
        let inner = v.to_bytes();
        self.bytes(&inner)
    }

    pub fn item<T: Wire>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn option<T: Wire>(&mut self, v: &Option<T>) -> &mut Self {
        match v {
            None => self.u8(0),
            Some(x) => self.u8(1).item(x),
        }
    }

    pub fn seq<T: Wire>(&mut self, items: &[T]) -> &mut Self {
        self.u32(items.len() as u32);
        for it in items {
            it.encode(self);
        }
        self
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(len).ok_or(WireError::Truncated(self.pos))?;
        if end > self.input.len() {
            return Err(WireError::Truncated(self.pos));
        }
        let out = &self.input[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn nested<T: Wire>(&mut self) -> Result<T, WireError> {
        let inner = self.bytes()?;
        T::from_bytes(&inner)
    }

    pub fn item<T: Wire>(&mut self) -> Result<T, WireError> {
        T::decode(self)
    }

    pub fn option<T: Wire>(&mut self) -> Result<Option<T>, WireError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(self)?)),
            value => Err(WireError::Discriminant { what: "option", value }),
        }
    }

    pub fn seq<T: Wire>(&mut self) -> Result<Vec<T>, WireError> {
        let len = self.u32()? as usize;
        // Every item takes at least one byte; bound the allocation by input.
        if len > self.input.len() - self.pos {
            return Err(WireError::Truncated(self.pos));
        }
        (0..len).map(|_| T::decode(self)).collect()
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }
}

pub trait Wire: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode(&mut dec)?;
        match dec.remaining() {
            0 => Ok(v),
            n => Err(WireError::Trailing(n)),
        }
    }
}

impl Wire for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        dec.u64()
    }
}

impl Wire for Vec<u8> {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        dec.bytes()
    }
}
