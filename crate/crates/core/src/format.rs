//! The SAXE binary embedding format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "SAXE"
//! version  u32      FORMAT_VERSION
//! dim      u32
//! count    u64      number of records
//! record*  key_len u16, key (UTF-8), dim x f32
//! ```
//!
//! A key may appear in several records; each record appends one embedding to
//! that key's list. Writers emit keys in lexicographic order and, within a
//! key, embeddings in list order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::embedding::{Embedding, EmbeddingSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SAXE";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(format_err(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.buf.len() - self.pos
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Decodes a SAXE byte buffer.
pub fn decode(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}")));
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(format_err(8, "dim must be positive"));
    }
    let count = cur.u64("record count")?;
    let mut set = EmbeddingSet::new(dim)?;
    for i in 0..count {
        let start = cur.pos;
        let key_len = cur.u16("key length")? as usize;
        let key_bytes = cur.take(key_len, "key")?;
        let key = std::str::from_utf8(key_bytes)
            .map_err(|e| format_err(start + 2, format!("record {i}: key is not UTF-8: {e}")))?;
        let vec_start = cur.pos;
        let raw = cur.take(dim * 4, "vector")?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(format_err(
                vec_start + 4 * j,
                format!("record {i} ({key}): non-finite component {j}"),
            ));
        }
        set.push(key, Embedding::new(values)?)?;
    }
    if cur.pos != bytes.len() {
        return Err(format_err(
            cur.pos,
            format!("{} trailing bytes after {count} records", bytes.len() - cur.pos),
        ));
    }
    Ok(set)
}

/// Encodes a set in canonical (sorted-key) order.
pub fn encode(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let mut keys: Vec<&str> = set.keys().collect();
    keys.sort_unstable();
    let count = set.embedding_count() as u64;
    let dim = u32::try_from(set.dim())
        .map_err(|_| Error::Precondition("dim does not fit in u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + set.embedding_count() * (set.dim() * 4 + 16));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for key in keys {
        let key_len = u16::try_from(key.len())
            .map_err(|_| Error::Precondition(format!("key too long ({} bytes)", key.len())))?;
        for e in set.get(key).unwrap_or_default() {
            out.extend_from_slice(&key_len.to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for v in e.values() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    decode(&bytes)
}

/// Loads a set and requires its header dim to equal `expected`.
pub fn load_embeddings_with_dim(path: &Path, expected: usize) -> Result<EmbeddingSet> {
    let set = load_embeddings(path)?;
    if set.dim() != expected {
        return Err(format_err(
            8,
            format!("header dim {} does not match expected {expected}", set.dim()),
        ));
    }
    Ok(set)
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let bytes = encode(set)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent byte-level reader used as oracle: walks the buffer with
    /// fixed offsets instead of the cursor.
    fn hand_decode(bytes: &[u8]) -> Vec<(String, Vec<f32>)> {
        let dim = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        let mut count_b = [0u8; 8];
        count_b.copy_from_slice(&bytes[12..20]);
        let count = u64::from_le_bytes(count_b);
        let mut off = 20;
        let mut out = vec![];
        for _ in 0..count {
            let kl = bytes[off] as usize | (bytes[off + 1] as usize) << 8;
            off += 2;
            let key = String::from_utf8(bytes[off..off + kl].to_vec()).unwrap();
            off += kl;
            let mut v = vec![];
            for _ in 0..dim {
                let bits = bytes[off] as u32
                    | (bytes[off + 1] as u32) << 8
                    | (bytes[off + 2] as u32) << 16
                    | (bytes[off + 3] as u32) << 24;
                v.push(f32::from_bits(bits));
                off += 4;
            }
            out.push((key, v));
        }
        out
    }

    fn fixture_bytes() -> Vec<u8> {
        // 3 vectors, dim 2, written by hand.
        let mut b = vec![];
        b.extend_from_slice(b"SAXE");
        b.extend_from_slice(&[1, 0, 0, 0]);
        b.extend_from_slice(&[2, 0, 0, 0]);
        b.extend_from_slice(&[3, 0, 0, 0, 0, 0, 0, 0]);
        // "ab": (1.0, -2.5)
        b.extend_from_slice(&[2, 0, b'a', b'b']);
        b.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0]);
        // "ab": (0.5, 0.0)
        b.extend_from_slice(&[2, 0, b'a', b'b']);
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x00, 0x00]);
        // "c": (3.0, 0.25)
        b.extend_from_slice(&[1, 0, b'c']);
        b.extend_from_slice(&[0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x80, 0x3e]);
        b
    }

    #[test]
    fn empty_set_round_trip() {
        let set = EmbeddingSet::new(4).unwrap();
        let bytes = encode(&set).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.dim(), 4);
        assert!(back.is_empty());
    }

    #[test]
    fn fixture_matches_hand_decoder() {
        let bytes = fixture_bytes();
        let oracle = hand_decode(&bytes);
        assert_eq!(oracle[0], ("ab".to_string(), vec![1.0, -2.5]));
        assert_eq!(oracle[2], ("c".to_string(), vec![3.0, 0.25]));
        let set = decode(&bytes).unwrap();
        assert_eq!(set.dim(), 2);
        let ab = set.get("ab").unwrap();
        assert_eq!(ab.len(), 2);
        assert_eq!(ab[0].values(), &[1.0, -2.5]);
        assert_eq!(ab[1].values(), &[0.5, 0.0]);
        assert_eq!(set.first("c").unwrap().values(), &[3.0, 0.25]);
        // Canonical re-encode reproduces the hand-written bytes.
        assert_eq!(encode(&set).unwrap(), bytes);
    }

    #[test]
    fn bad_magic_offset_zero() {
        let mut b = fixture_bytes();
        b[0] = b'X';
        match decode(&b) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_version_and_dim() {
        let mut b = fixture_bytes();
        b[4] = 9;
        assert!(matches!(decode(&b), Err(Error::Format { offset: 4, .. })));
        let mut b = fixture_bytes();
        b[8] = 0;
        assert!(matches!(decode(&b), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn truncated_record_names_offset() {
        let b = fixture_bytes();
        let cut = &b[..b.len() - 3];
        match decode(cut) {
            // third record vector starts at 20 + 12 + 12 + 3
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 47);
                assert!(message.contains("truncated vector"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode(&b[..10]), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut b = fixture_bytes();
        b.push(0);
        assert!(matches!(decode(&b), Err(Error::Format { offset: 55, .. })));
    }

    #[test]
    fn dim_expectation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.saxe");
        std::fs::write(&p, fixture_bytes()).unwrap();
        assert!(load_embeddings_with_dim(&p, 2).is_ok());
        assert!(matches!(
            load_embeddings_with_dim(&p, 3),
            Err(Error::Format { offset: 8, .. })
        ));
        assert!(matches!(
            load_embeddings(&dir.path().join("nope.saxe")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn writer_sorts_keys() {
        let mut set = EmbeddingSet::new(1).unwrap();
        set.push("zeta", Embedding::new(vec![1.0]).unwrap()).unwrap();
        set.push("alpha#2", Embedding::new(vec![2.0]).unwrap()).unwrap();
        set.push("alpha#1", Embedding::new(vec![3.0]).unwrap()).unwrap();
        let keys: Vec<String> = hand_decode(&encode(&set).unwrap())
            .into_iter()
            .map(|(k, _)| k)
            .collect();
        assert_eq!(keys, ["alpha#1", "alpha#2", "zeta"]);
    }
}
