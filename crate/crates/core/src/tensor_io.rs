//! Length-prefixed little-endian tensor records shared by checkpoints and the
//! patch cache: `u32 name_len, name bytes, u32 rank, rank x u32 dims,
//! product(dims) x f32`.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

/// Upper bound on a single record's element count when reading.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> io::Result<()> {
    write_u32(w, bytes.len() as u32)?;
    w.write_all(bytes)
}

pub fn read_bytes<R: Read>(r: &mut R, limit: usize) -> Result<Vec<u8>> {
    let len = read_u32(r).map_err(truncated)? as usize;
    if len > limit {
        return Err(Error::Format(format!(
            "length prefix {len} exceeds limit {limit}"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

pub fn write_record<W: Write>(
    w: &mut W,
    name: &str,
    dims: &[usize],
    data: &[f32],
) -> io::Result<()> {
    write_bytes(w, name.as_bytes())?;
    write_u32(w, dims.len() as u32)?;
    for &d in dims {
        write_u32(w, d as u32)?;
    }
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// Reads the next record, or `None` at a clean end of stream.
pub fn read_record<R: Read>(r: &mut R) -> Result<Option<Record>> {
    let mut first = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut first[got..]).map_err(truncated)?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::Format("truncated record header".into()));
        }
        got += n;
    }
    let name_len = u32::from_le_bytes(first) as usize;
    if name_len > 4096 {
        return Err(Error::Format(format!("implausible name length {name_len}")));
    }
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name).map_err(truncated)?;
    let name =
        String::from_utf8(name).map_err(|_| Error::Format("record name is not UTF-8".into()))?;
    let rank = read_u32(r).map_err(truncated)? as usize;
    if rank > 8 {
        return Err(Error::Format(format!("implausible rank {rank} for {name}")));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut count: u64 = 1;
    for _ in 0..rank {
        let d = read_u32(r).map_err(truncated)? as usize;
        count = count.saturating_mul(d as u64);
        dims.push(d);
    }
    if count > MAX_ELEMENTS {
        return Err(Error::Format(format!("record {name} is too large")));
    }
    let mut raw = vec![0u8; count as usize * 4];
    r.read_exact(&mut raw).map_err(truncated)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Some(Record { name, dims, data }))
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Format(e.to_string())
    }
}
