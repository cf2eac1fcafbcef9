//! Shared binary checkpoint format.
//!
//! Layout: magic `ZIPPO\0`, format version u32, section count u32, then per
//! section: name length u32, UTF-8 name, rank u32, dims u32 each, and a
//! little-endian f32 payload. All integers little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"ZIPPO\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Section {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Section {
        let section = Section {
            name: name.into(),
            dims,
            data,
        };
        debug_assert_eq!(
            section.dims.iter().product::<usize>(),
            section.data.len(),
            "section {} dims/data mismatch",
            section.name
        );
        section
    }
}

pub fn save(path: &Path, sections: &[Section]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(sections.len() as u32).to_le_bytes())?;
    for s in sections {
        let name = s.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(s.dims.len() as u32).to_le_bytes())?;
        for &d in &s.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &s.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<Section>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic {:?}",
            path.display(),
            magic
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            version
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut sections = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("section name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = dims.iter().product();
        let mut payload = vec![0u8; numel * 4];
        r.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        sections.push(Section { name, dims, data });
    }
    Ok(sections)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Find a section by exact name.
pub fn find<'a>(sections: &'a [Section], name: &str) -> Result<&'a Section> {
    sections
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Checkpoint(format!("missing section {}", name)))
}
