//! Weight tables and the PDCM v1 binary format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "PDCM" | version: u32 = 1 | tensor_count: u32
//! per tensor: name_len: u16 | name: utf-8 | ndim: u8 | dims: ndim x u32 | data: f32 x product(dims)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::rng::SplitMix64;
use super::schema::{is_norm_bias, is_norm_gain, parameter_schema};
use super::{NnetError, Result, Tensor};

pub const MAGIC: &[u8; 4] = b"PDCM";
pub const VERSION: u32 = 1;

/// Named parameter tensors in schedule order, validated against the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl WeightTable {
    /// Accepts exactly the schema's tensors, in order, with matching shapes.
    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let schema = parameter_schema();
        for (i, (name, shape)) in schema.iter().enumerate() {
            let Some((found, tensor)) = entries.get(i) else {
                return Err(NnetError::WeightsMissing(name.clone()));
            };
            if found != name || tensor.shape() != shape.as_slice() {
                return Err(NnetError::SchemaMismatch(found.clone()));
            }
        }
        if let Some((extra, _)) = entries.get(schema.len()) {
            return Err(NnetError::SchemaMismatch(extra.clone()));
        }
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        Ok(WeightTable { entries, index })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| NnetError::WeightsMissing(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Deterministic fixture weights: one SplitMix64 draw per scalar, mapped to
/// [-0.05, 0.05), filled in schema order. Layer-norm gains and biases still
/// consume their draws and are then reset to 1 and 0.
pub fn gen_fixture_weights(seed: u64) -> WeightTable {
    let mut rng = SplitMix64::new(seed);
    let entries = parameter_schema()
        .into_iter()
        .map(|(name, shape)| {
            let mut tensor = Tensor::from_fn(shape, |_| (-0.05 + 0.1 * rng.next_unit()) as f32);
            if is_norm_gain(&name) {
                tensor.data_mut().fill(1.0);
            } else if is_norm_bias(&name) {
                tensor.data_mut().fill(0.0);
            }
            (name, tensor)
        })
        .collect();
    WeightTable::from_entries(entries).expect("generated from the schema")
}

pub fn encode_weights(table: &WeightTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + table.parameter_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (name, tensor) in table.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(NnetError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(NnetError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decode and validate a PDCM v1 payload.
///
/// Each tensor header is checked against the schema before its data is read,
/// so a corrupt dimension cannot trigger a huge allocation.
pub fn decode_weights(bytes: &[u8]) -> Result<WeightTable> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).map_err(|_| NnetError::BadMagic)? != MAGIC {
        return Err(NnetError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(NnetError::BadVersion(version));
    }
    let count = cur.u32()? as usize;
    let schema = parameter_schema();

    let mut entries = Vec::with_capacity(schema.len());
    for i in 0..count {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| NnetError::SchemaMismatch(format!("<non-utf8 name #{i}>")))?
            .to_string();
        let ndim = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u32()? as usize);
        }
        match schema.get(i) {
            Some((expected, shape)) if *expected == name && *shape == dims => {}
            _ => return Err(NnetError::SchemaMismatch(name)),
        }
        let n: usize = dims.iter().product();
        let data = cur
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push((name, Tensor::new(dims, data)?));
    }
    if cur.pos != bytes.len() {
        return Err(NnetError::TrailingData(bytes.len() - cur.pos));
    }
    WeightTable::from_entries(entries)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightTable> {
    decode_weights(&fs::read(path)?)
}

pub fn save_weights(table: &WeightTable, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_weights(table))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_weights_deterministic_and_seed_sensitive() {
        let a = gen_fixture_weights(0x5EED);
        let b = gen_fixture_weights(0x5EED);
        assert_eq!(a, b);
        let c = gen_fixture_weights(0x5EEE);
        assert_ne!(a.get("stem.w").unwrap(), c.get("stem.w").unwrap());
    }

    #[test]
    fn fixture_weight_ranges() {
        let w = gen_fixture_weights(7);
        for (name, t) in w.iter() {
            if is_norm_gain(name) {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
            } else if is_norm_bias(name) {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            } else {
                assert!(t.data().iter().all(|&v| (-0.05..0.05).contains(&v)), "{name}");
            }
        }
    }

    #[test]
    fn first_scalar_follows_first_draw() {
        let mut rng = SplitMix64::new(0x5EED);
        let first = (-0.05 + 0.1 * rng.next_unit()) as f32;
        assert_eq!(gen_fixture_weights(0x5EED).get("stem.w").unwrap().data()[0], first);
    }

    #[test]
    fn codec_round_trip_bytes() {
        let table = gen_fixture_weights(3);
        let bytes = encode_weights(&table);
        let decoded = decode_weights(&bytes).unwrap();
        assert_eq!(decoded, table);
        assert_eq!(encode_weights(&decoded), bytes);
    }

    #[test]
    fn codec_rejections() {
        let mut bytes = encode_weights(&gen_fixture_weights(3));
        let good = bytes.clone();

        bytes[0] = b'X';
        assert!(matches!(decode_weights(&bytes), Err(NnetError::BadMagic)));

        let mut bytes = good.clone();
        bytes[4] = 2;
        assert!(matches!(decode_weights(&bytes), Err(NnetError::BadVersion(2))));

        assert!(matches!(decode_weights(&good[..good.len() - 1]), Err(NnetError::TruncatedFile)));
        assert!(matches!(decode_weights(&good[..2]), Err(NnetError::BadMagic)));

        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(decode_weights(&extra), Err(NnetError::TrailingData(1))));

        // stem.w dims [8,1,3,2]: the last dim lives after magic, version,
        // count, name_len, "stem.w", ndim and three dims.
        let mut bytes = good.clone();
        let last_dim = 4 + 4 + 4 + 2 + 6 + 1 + 3 * 4;
        bytes[last_dim..last_dim + 4].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode_weights(&bytes), Err(NnetError::SchemaMismatch(n)) if n == "stem.w"));
    }

    #[test]
    fn table_validation() {
        let table = gen_fixture_weights(1);
        let mut entries: Vec<(String, Tensor)> =
            table.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        entries.pop();
        assert!(matches!(
            WeightTable::from_entries(entries.clone()),
            Err(NnetError::WeightsMissing(n)) if n == "head.b"
        ));
        entries.swap(0, 1);
        assert!(matches!(
            WeightTable::from_entries(entries),
            Err(NnetError::SchemaMismatch(n)) if n == "stem.b"
        ));
    }
}
