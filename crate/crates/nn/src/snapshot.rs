//! Flat binary weight container: shape-tagged named arrays, little-endian
//! float64 throughout, for byte-exact persistence and cross-implementation
//! comparison.
//!
//! Layout: 8-byte magic, u32 entry count, then per entry a u16 name length,
//! the UTF-8 name, five u32 shape fields (batch, channels, depth, height,
//! width), and the row of f64 values.

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PSNNW01\0";

/// One named, shape-tagged array.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub name: String,
    pub shape: Shape5,
    pub values: Vec<f64>,
}

/// An ordered collection of named weight tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    entries: Vec<SnapshotEntry>,
}

impl Snapshot {
    pub fn new() -> Self {
        Snapshot::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SnapshotEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&SnapshotEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Records a tensor's values under a unique name.
    pub fn insert(&mut self, name: &str, tensor: &Tensor5) -> Result<()> {
        if self.get(name).is_some() {
            return Err(Error::Snapshot(format!("duplicate entry name {name:?}")));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::Snapshot(format!("entry name too long ({})", name.len())));
        }
        self.entries.push(SnapshotEntry {
            name: name.to_string(),
            shape: tensor.shape(),
            values: tensor.data().to_vec(),
        });
        Ok(())
    }

    /// Copies a stored entry back into a tensor of the same shape.
    pub fn restore(&self, name: &str, tensor: &mut Tensor5) -> Result<()> {
        let entry = self
            .get(name)
            .ok_or_else(|| Error::Snapshot(format!("no entry named {name:?}")))?;
        if entry.shape != tensor.shape() {
            return Err(Error::Snapshot(format!(
                "entry {name:?} has shape {:?}, tensor has {:?}",
                entry.shape,
                tensor.shape()
            )));
        }
        tensor.data_mut().copy_from_slice(&entry.values);
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for entry in &self.entries {
            out.extend_from_slice(&(entry.name.len() as u16).to_le_bytes());
            out.extend_from_slice(entry.name.as_bytes());
            let s = entry.shape;
            for dim in [s.n, s.c, s.d, s.h, s.w] {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for v in &entry.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(8)?;
        if magic != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let count = cursor.u32()? as usize;
        let mut snapshot = Snapshot::new();
        for _ in 0..count {
            let name_len = cursor.u16()? as usize;
            let name = std::str::from_utf8(cursor.take(name_len)?)
                .map_err(|_| Error::Snapshot("entry name is not UTF-8".into()))?
                .to_string();
            if snapshot.get(&name).is_some() {
                return Err(Error::Snapshot(format!("duplicate entry name {name:?}")));
            }
            let mut dims = [0usize; 5];
            for d in &mut dims {
                *d = cursor.u32()? as usize;
            }
            let shape = Shape5::new(dims[0], dims[1], dims[2], dims[3], dims[4]);
            let mut values = Vec::with_capacity(shape.len());
            for _ in 0..shape.len() {
                values.push(cursor.f64()?);
            }
            snapshot.entries.push(SnapshotEntry { name, shape, values });
        }
        if cursor.pos != bytes.len() {
            return Err(Error::Snapshot(format!(
                "{} trailing bytes after the last entry",
                bytes.len() - cursor.pos
            )));
        }
        Ok(snapshot)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Snapshot::from_bytes(&std::fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Snapshot(format!(
                "truncated: wanted {} bytes at offset {}, file has {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut snapshot = Snapshot::new();
        for (i, shape) in [
            Shape5::new(2, 3, 2, 2, 2),
            Shape5::new(1, 1, 1, 1, 7),
            Shape5::new(4, 1, 1, 1, 1),
        ]
        .into_iter()
        .enumerate()
        {
            let mut t = Tensor5::zeros(shape);
            for v in t.data_mut() {
                *v = rng.gen_range(-1e6..1e6) * 1e-3_f64.powi(rng.gen_range(0..4));
            }
            snapshot.insert(&format!("layer{i}.weight"), &t).unwrap();
        }
        let decoded = Snapshot::from_bytes(&snapshot.to_bytes()).unwrap();
        assert_eq!(decoded.len(), 3);
        for (a, b) in snapshot.entries().iter().zip(decoded.entries()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn golden_byte_layout() {
        let mut snapshot = Snapshot::new();
        let t = Tensor5::from_vec(Shape5::new(1, 1, 1, 1, 2), vec![1.0, -2.5]).unwrap();
        snapshot.insert("w", &t).unwrap();
        let bytes = snapshot.to_bytes();
        assert_eq!(bytes.len(), 8 + 4 + 2 + 1 + 20 + 16);
        assert_eq!(&bytes[0..8], b"PSNNW01\0");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..14], &1u16.to_le_bytes());
        assert_eq!(bytes[14], b'w');
        let shape_words: Vec<u32> = (0..5)
            .map(|i| u32::from_le_bytes(bytes[15 + 4 * i..19 + 4 * i].try_into().unwrap()))
            .collect();
        assert_eq!(shape_words, vec![1, 1, 1, 1, 2]);
        assert_eq!(&bytes[35..43], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[43..51], &(-2.5f64).to_le_bytes());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let mut snapshot = Snapshot::new();
        let t = Tensor5::from_vec(Shape5::new(1, 1, 1, 1, 1), vec![4.0]).unwrap();
        snapshot.insert("a", &t).unwrap();
        let good = snapshot.to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(Snapshot::from_bytes(&bad_magic).is_err());

        assert!(Snapshot::from_bytes(&good[..good.len() - 1]).is_err());

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(Snapshot::from_bytes(&trailing).is_err());

        assert!(snapshot.insert("a", &t).is_err());
    }

    #[test]
    fn restore_checks_name_and_shape() {
        let mut snapshot = Snapshot::new();
        let t = Tensor5::from_vec(Shape5::new(1, 2, 1, 1, 1), vec![5.0, 6.0]).unwrap();
        snapshot.insert("w", &t).unwrap();

        let mut target = Tensor5::zeros(Shape5::new(1, 2, 1, 1, 1));
        snapshot.restore("w", &mut target).unwrap();
        assert_eq!(target.data(), &[5.0, 6.0]);

        let mut wrong = Tensor5::zeros(Shape5::new(2, 1, 1, 1, 1));
        assert!(snapshot.restore("w", &mut wrong).is_err());
        assert!(snapshot.restore("missing", &mut target).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.bin");
        let mut snapshot = Snapshot::new();
        let t = Tensor5::from_vec(Shape5::new(1, 1, 1, 2, 2), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        snapshot.insert("stem.weight", &t).unwrap();
        snapshot.save(&path).unwrap();
        let loaded = Snapshot::load(&path).unwrap();
        assert_eq!(loaded, snapshot);
    }
}
