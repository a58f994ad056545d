//! DRT1 named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DRT1"
//! u32 entry count
//! per entry:
//!     u32 name length, UTF-8 name bytes
//!     u32 rank, rank x u32 dims
//!     product(dims) x f32 values
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};

pub const MAGIC: &[u8; 4] = b"DRT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

impl Entry {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, values: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let expected: u64 = dims.iter().map(|&d| d as u64).product();
        if expected != values.len() as u64 {
            return Err(TensorError::Container(format!(
                "entry {name}: dims {dims:?} need {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Entry { name, dims, values })
    }
}

fn corrupt(msg: impl Into<String>) -> TensorError {
    TensorError::Container(msg.into())
}

pub fn write_entries<W: Write>(mut w: W, entries: &[Entry]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(e.dims.len() as u32).to_le_bytes())?;
        for d in &e.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(e.values.len() * 4);
        for v in &e.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| corrupt(format!("truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_entries<R: Read>(mut r: R) -> Result<Vec<Entry>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated magic"))?;
    if &magic != MAGIC {
        return Err(corrupt(format!("bad magic {magic:?}, expected DRT1")));
    }
    let count = read_u32(&mut r, "entry count")?;
    let mut entries = Vec::new();
    for i in 0..count {
        let len = read_u32(&mut r, "name length")? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| corrupt(format!("truncated name of entry {i}")))?;
        let name = String::from_utf8(name).map_err(|_| corrupt(format!("entry {i}: name is not UTF-8")))?;
        let rank = read_u32(&mut r, "rank")?;
        let dims = (0..rank).map(|_| read_u32(&mut r, "dims")).collect::<Result<Vec<_>>>()?;
        let numel: u64 = dims.iter().map(|&d| d as u64).product();
        let mut raw = vec![0u8; (numel * 4) as usize];
        r.read_exact(&mut raw).map_err(|_| corrupt(format!("truncated values of entry {name}")))?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        entries.push(Entry { name, dims, values });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after last entry"));
    }
    Ok(entries)
}

pub fn save<P: AsRef<Path>>(path: P, entries: &[Entry]) -> Result<()> {
    write_entries(BufWriter::new(File::create(path)?), entries)
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<Vec<Entry>> {
    read_entries(BufReader::new(File::open(path)?))
}

/// Entries keyed by name; duplicate names are rejected.
pub fn index(entries: Vec<Entry>) -> Result<HashMap<String, Entry>> {
    let mut map = HashMap::with_capacity(entries.len());
    for e in entries {
        if map.contains_key(&e.name) {
            return Err(corrupt(format!("duplicate entry {}", e.name)));
        }
        map.insert(e.name.clone(), e);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let e = Entry::new("ab", vec![2], vec![1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_entries(&mut buf, &[e]).unwrap();
        let mut expect = b"DRT1".to_vec();
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(b"ab");
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-0.5f32).to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_entries(&b"DRT2\0\0\0\0"[..]).is_err());
        let mut buf = Vec::new();
        write_entries(&mut buf, &[Entry::new("x", vec![3], vec![1.0, 2.0, 3.0]).unwrap()]).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(read_entries(&buf[..]).is_err());
    }

    #[test]
    fn entry_checks_length() {
        assert!(Entry::new("x", vec![2, 2], vec![0.0; 3]).is_err());
    }
}
