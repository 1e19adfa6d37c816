//! Flat trainable parameter vector with a named block layout, and its
//! binary checkpoint format.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! b"DGMA1"
//! u32 block count
//! per block: u32 name length, name bytes (UTF-8), u32 rows, u32 cols, u32 offset
//! u32 value count
//! f64 values
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"DGMA1";

/// One named `rows × cols` slab of the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Registry mapping block names to offset ranges. Append-only.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.len();
        self.blocks.push(Block {
            name: name.into(),
            rows,
            cols,
            offset,
        });
        offset
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn get(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Parameter values plus the layout that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParameterVector {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|b| &self.values[b.range()])
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        write_u32(&mut w, self.layout.blocks.len())?;
        for b in &self.layout.blocks {
            write_u32(&mut w, b.name.len())?;
            w.write_all(b.name.as_bytes())?;
            write_u32(&mut w, b.rows)?;
            write_u32(&mut w, b.cols)?;
            write_u32(&mut w, b.offset)?;
        }
        write_u32(&mut w, self.values.len())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let n_blocks = read_u32(&mut r)?;
        let mut layout = Layout::new();
        for _ in 0..n_blocks {
            let len = read_u32(&mut r)?;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
            let rows = read_u32(&mut r)?;
            let cols = read_u32(&mut r)?;
            let offset = read_u32(&mut r)?;
            if layout.push(name, rows, cols) != offset {
                return Err(Error::Format("non-contiguous checkpoint layout".into()));
            }
        }
        let n = read_u32(&mut r)?;
        if n != layout.len() {
            return Err(Error::Format(format!(
                "layout covers {} values, checkpoint stores {n}",
                layout.len()
            )));
        }
        let mut values = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok(Self { values, layout })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_offsets_are_contiguous() {
        let mut l = Layout::new();
        assert_eq!(l.push("a.weight", 3, 2), 0);
        assert_eq!(l.push("a.bias", 3, 1), 6);
        assert_eq!(l.len(), 9);
        assert_eq!(l.get("a.bias").unwrap().range(), 6..9);
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let err = ParameterVector::read_checkpoint(&b"XXXXX\0\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn checkpoint_header_starts_with_magic() {
        let mut l = Layout::new();
        l.push("w", 1, 2);
        let p = ParameterVector {
            values: vec![1.0, -2.0],
            layout: l,
        };
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"DGMA1");
        assert_eq!(&buf[buf.len() - 8..], &(-2.0f64).to_le_bytes());
    }

    proptest! {
        #[test]
        fn checkpoint_round_trips_bitwise(
            vals in proptest::collection::vec(proptest::num::f64::ANY, 6),
        ) {
            let mut l = Layout::new();
            l.push("net.0.weight", 2, 2);
            l.push("net.0.bias", 2, 1);
            let p = ParameterVector { values: vals, layout: l };
            let mut buf = Vec::new();
            p.write_checkpoint(&mut buf).unwrap();
            let q = ParameterVector::read_checkpoint(&buf[..]).unwrap();
            prop_assert_eq!(&q.layout, &p.layout);
            for (a, b) in p.values.iter().zip(&q.values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
