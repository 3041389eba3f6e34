//! Binary checkpoint container.
//!
//! Layout: `"ICFY"`, format version (u32), model kind (u32), record count
//! (u32), records, then the 64-bit FNV-1a hash of every preceding byte. A
//! record is a length-prefixed UTF-8 name, rank, dims and the values as
//! little-endian 32-bit words. All integers are little-endian.

use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ICFY";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const CHECKSUM_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    CycleGan,
    Unit,
}

impl ModelKind {
    pub fn tag(self) -> u32 {
        match self {
            ModelKind::CycleGan => 0,
            ModelKind::Unit => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(ModelKind::CycleGan),
            1 => Ok(ModelKind::Unit),
            t => Err(Error::CheckpointMismatch(format!("unknown model kind tag {t}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub shape: Vec<usize>,
    pub words: Vec<u32>,
}

pub fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// An ordered set of named records plus the model kind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointFile {
    pub kind: ModelKind,
    records: IndexMap<String, Record>,
}

impl CheckpointFile {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            records: IndexMap::new(),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn put_raw(&mut self, name: impl Into<String>, shape: Vec<usize>, words: Vec<u32>) {
        self.records.insert(name.into(), Record { shape, words });
    }

    pub fn put_tensor(&mut self, name: impl Into<String>, t: &Tensor<f32>) {
        self.put_raw(name, t.shape().to_vec(), t.data().iter().map(|v| v.to_bits()).collect());
    }

    pub fn put_u64s(&mut self, name: impl Into<String>, values: &[u64]) {
        let words = values.iter().flat_map(|v| [*v as u32, (*v >> 32) as u32]).collect();
        self.put_raw(name, vec![2 * values.len()], words);
    }

    pub fn put_f64s(&mut self, name: impl Into<String>, values: &[f64]) {
        let bits: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        self.put_u64s(name, &bits);
    }

    /// Seed (8 words), stream (2) and word position (4).
    pub fn put_rng(&mut self, name: impl Into<String>, rng: &ChaCha8Rng) {
        let seed = rng.get_seed();
        let mut words: Vec<u32> = seed
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let stream = rng.get_stream();
        words.extend([stream as u32, (stream >> 32) as u32]);
        let pos = rng.get_word_pos();
        words.extend((0..4).map(|i| (pos >> (32 * i)) as u32));
        self.put_raw(name, vec![14], words);
    }

    fn record(&self, name: &str) -> Result<&Record> {
        self.records
            .get(name)
            .ok_or_else(|| Error::CheckpointMismatch(format!("missing record `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.records.contains_key(name)
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor<f32>> {
        let r = self.record(name)?;
        Tensor::new(r.shape.clone(), r.words.iter().map(|w| f32::from_bits(*w)).collect())
            .map_err(|_| Error::CheckpointMismatch(format!("record `{name}` has inconsistent shape")))
    }

    pub fn u64s(&self, name: &str) -> Result<Vec<u64>> {
        let r = self.record(name)?;
        if r.words.len() % 2 != 0 {
            return Err(Error::CheckpointMismatch(format!("record `{name}` is not a u64 list")));
        }
        Ok(r.words
            .chunks_exact(2)
            .map(|c| c[0] as u64 | (c[1] as u64) << 32)
            .collect())
    }

    pub fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.u64s(name)?.into_iter().map(f64::from_bits).collect())
    }

    pub fn rng(&self, name: &str) -> Result<ChaCha8Rng> {
        let r = self.record(name)?;
        if r.words.len() != 14 {
            return Err(Error::CheckpointMismatch(format!(
                "record `{name}` is not an rng state"
            )));
        }
        let mut seed = [0u8; 32];
        for (i, w) in r.words[..8].iter().enumerate() {
            seed[4 * i..4 * i + 4].copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(r.words[8] as u64 | (r.words[9] as u64) << 32);
        let pos = r.words[10..14]
            .iter()
            .enumerate()
            .fold(0u128, |acc, (i, w)| acc | (*w as u128) << (32 * i));
        rng.set_word_pos(pos);
        Ok(rng)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.tag().to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (name, r) in &self.records {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for d in &r.shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for w in &r.words {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Validates magic, version and checksum before parsing any record.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::CheckpointMagic);
        }
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(Error::CheckpointTruncated(format!(
                "{} bytes is shorter than any checkpoint",
                bytes.len()
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = checksum(body);
        if stored != computed {
            return Err(Error::CheckpointChecksum { stored, computed });
        }
        let mut cur = Cursor { buf: body, pos: 8 };
        let kind = ModelKind::from_tag(cur.u32()?)?;
        let count = cur.u32()?;
        let mut file = CheckpointFile::new(kind);
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::CheckpointMismatch("record name is not UTF-8".into()))?
                .to_owned();
            let rank = cur.u32()? as usize;
            let shape = (0..rank)
                .map(|_| cur.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let words = (0..n).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
            if file.records.insert(name.clone(), Record { shape, words }).is_some() {
                return Err(Error::CheckpointMismatch(format!("duplicate record `{name}`")));
            }
        }
        if cur.pos != body.len() {
            return Err(Error::CheckpointMismatch(format!(
                "{} trailing bytes",
                body.len() - cur.pos
            )));
        }
        Ok(file)
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CheckpointTruncated(format!(
                "record data ends at byte {}",
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample() -> CheckpointFile {
        let mut f = CheckpointFile::new(ModelKind::Unit);
        f.put_tensor("w", &Tensor::from_fn([2, 3], |i| i as f32 * -0.5));
        f.put_u64s("pos", &[1, u64::MAX]);
        f.put_f64s("lr", &[2e-4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        rng.set_stream(9);
        let _: u64 = rng.random();
        f.put_rng("rng", &rng);
        f
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let bytes = f.encode();
        let g = CheckpointFile::decode(&bytes).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.encode(), bytes);
        assert_eq!(g.u64s("pos").unwrap(), [1, u64::MAX]);
        assert_eq!(g.f64s("lr").unwrap(), [2e-4]);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        a.set_stream(9);
        let _: u64 = a.random();
        let mut b = g.rng("rng").unwrap();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn distinct_errors() {
        let bytes = sample().encode();
        assert!(matches!(
            CheckpointFile::decode(&bytes[..bytes.len() - 5]),
            Err(Error::CheckpointChecksum { .. })
        ));
        assert!(matches!(
            CheckpointFile::decode(&bytes[..10]),
            Err(Error::CheckpointTruncated(_))
        ));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(
            CheckpointFile::decode(&v),
            Err(Error::CheckpointVersion { found: 9, .. })
        ));
        let mut m = bytes.clone();
        m[0] = b'X';
        assert!(matches!(CheckpointFile::decode(&m), Err(Error::CheckpointMagic)));
        let mut c = bytes;
        c[30] ^= 1;
        assert!(matches!(
            CheckpointFile::decode(&c),
            Err(Error::CheckpointChecksum { .. })
        ));
    }
}
