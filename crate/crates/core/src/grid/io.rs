//! OLAP binary dumps of grid data.
//!
//! Layout, all little-endian: `b"OLAP"`, `u32` version, `u32` kind
//! (0 scalar, 1 vector), three `u64` cell counts, three `f64` extents, then
//! the `f64` payload in x-fastest cell order. Vector payloads interleave the
//! three components of each cell.

use std::io::{Read, Write};

use super::{GridError, GridScalar, GridVector};

pub const OLAP_MAGIC: &[u8; 4] = b"OLAP";
pub const OLAP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OlapKind {
    Scalar = 0,
    Vector = 1,
}

impl OlapKind {
    fn components(self) -> usize {
        match self {
            OlapKind::Scalar => 1,
            OlapKind::Vector => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlapData {
    pub kind: OlapKind,
    pub dims: [u64; 3],
    pub extent: [f64; 3],
    pub values: Vec<f64>,
}

impl From<&GridScalar> for OlapData {
    fn from(s: &GridScalar) -> OlapData {
        OlapData {
            kind: OlapKind::Scalar,
            dims: s.grid.cells().map(|n| n as u64),
            extent: s.grid.extent(),
            values: s.values.clone(),
        }
    }
}

impl From<&GridVector> for OlapData {
    fn from(v: &GridVector) -> OlapData {
        OlapData {
            kind: OlapKind::Vector,
            dims: v.grid.cells().map(|n| n as u64),
            extent: v.grid.extent(),
            values: v.values.iter().flat_map(|c| [c.x, c.y, c.z]).collect(),
        }
    }
}

pub fn write_olap(mut out: impl Write, data: &OlapData) -> Result<(), GridError> {
    let cells: u64 = data.dims.iter().product();
    if data.values.len() as u64 != cells * data.kind.components() as u64 {
        return Err(GridError::ShapeMismatch(format!(
            "{} values for dims {:?}",
            data.values.len(),
            data.dims
        )));
    }
    let mut buf = Vec::with_capacity(60 + 8 * data.values.len());
    buf.extend_from_slice(OLAP_MAGIC);
    buf.extend_from_slice(&OLAP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(data.kind as u32).to_le_bytes());
    for d in data.dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for e in data.extent {
        buf.extend_from_slice(&e.to_le_bytes());
    }
    for v in &data.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_olap(mut input: impl Read) -> Result<OlapData, GridError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], GridError> {
        let s = buf
            .get(pos..pos + n)
            .ok_or_else(|| GridError::Format("truncated OLAP header".into()))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != OLAP_MAGIC {
        return Err(GridError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != OLAP_VERSION {
        return Err(GridError::Format(format!("unsupported version {version}")));
    }
    let kind = match u32::from_le_bytes(take(4)?.try_into().unwrap()) {
        0 => OlapKind::Scalar,
        1 => OlapKind::Vector,
        k => return Err(GridError::Format(format!("unknown kind {k}"))),
    };
    let mut dims = [0u64; 3];
    for d in &mut dims {
        *d = u64::from_le_bytes(take(8)?.try_into().unwrap());
    }
    let mut extent = [0f64; 3];
    for e in &mut extent {
        *e = f64::from_le_bytes(take(8)?.try_into().unwrap());
    }
    let count = dims
        .iter()
        .try_fold(kind.components() as u64, |a, &d| a.checked_mul(d))
        .ok_or_else(|| GridError::Format("dims overflow".into()))? as usize;
    let payload = &buf[60..];
    if payload.len() != 8 * count {
        return Err(GridError::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            8 * count
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(OlapData {
        kind,
        dims,
        extent,
        values,
    })
}
