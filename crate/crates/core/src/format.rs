//! `.ogrd` binary grid files.
//!
//! Layout (little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..4  | magic `OGRD` |
//! | 4     | version (1) |
//! | 5     | payload kind: 1 labels, 2 affinity, 3 instance ids, 4 mask |
//! | 6..8  | reserved, zero |
//! | 8..20 | nx, ny, nz as `u32` |
//! | 20..24| voxel size `f32` |
//! | 24..36| origin 3 x `f32` |
//!
//! Label files then carry a `u16` class count and each name as a `u16` byte
//! length followed by UTF-8. The payload follows in linear-index order. Instance
//! files append a `u32` record count and records of
//! `{id: u32, class: u8, center: 3 x f32, voxel_count: u32}`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{
    AffinityField, ClassTable, GridMeta, InstanceMap, InstanceRecord, LossMask, SemanticGrid,
};

pub const MAGIC: [u8; 4] = *b"OGRD";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Labels = 1,
    Affinity = 2,
    InstanceIds = 3,
    Mask = 4,
}

impl PayloadKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Labels),
            2 => Some(Self::Affinity),
            3 => Some(Self::InstanceIds),
            4 => Some(Self::Mask),
            _ => None,
        }
    }

    fn cell_bytes(self) -> usize {
        match self {
            Self::Labels | Self::Mask => 1,
            Self::Affinity => 12,
            Self::InstanceIds => 4,
        }
    }
}

const INSTANCE_RECORD_BYTES: usize = 4 + 1 + 12 + 4;

fn write_header(out: &mut Vec<u8>, kind: PayloadKind, meta: &GridMeta) {
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&[0, 0]);
    for d in meta.dims() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&meta.voxel_size().to_le_bytes());
    for o in meta.origin() {
        out.extend_from_slice(&o.to_le_bytes());
    }
}

pub fn encode_grid(grid: &SemanticGrid) -> Vec<u8> {
    let table = grid.class_table();
    let mut out = Vec::with_capacity(64 + grid.labels().len());
    write_header(&mut out, PayloadKind::Labels, grid.meta());
    out.extend_from_slice(&(table.len() as u16).to_le_bytes());
    for name in table.names() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out.extend_from_slice(grid.labels());
    out
}

pub fn encode_affinity(field: &AffinityField) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + field.values().len() * 12);
    write_header(&mut out, PayloadKind::Affinity, field.meta());
    for v in field.values() {
        for c in v {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn encode_instances(map: &InstanceMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        40 + map.ids().len() * 4 + map.instances().len() * INSTANCE_RECORD_BYTES,
    );
    write_header(&mut out, PayloadKind::InstanceIds, map.meta());
    for id in map.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out.extend_from_slice(&(map.instances().len() as u32).to_le_bytes());
    for rec in map.instances() {
        out.extend_from_slice(&rec.id.to_le_bytes());
        out.push(rec.class);
        for c in rec.center {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&rec.voxel_count.to_le_bytes());
    }
    out
}

pub fn encode_mask(mask: &LossMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + mask.flags().len());
    write_header(&mut out, PayloadKind::Mask, mask.meta());
    out.extend(mask.flags().iter().map(|&f| u8::from(f)));
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::format(field, "file ends early"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn f32(&mut self, field: &'static str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Reserves the payload for `cells` values of `cell_bytes` each.
    fn payload(&mut self, cells: usize, cell_bytes: usize) -> Result<&'a [u8]> {
        let len = cells
            .checked_mul(cell_bytes)
            .ok_or_else(|| Error::Size(format!("{cells} cells of {cell_bytes} bytes overflow")))?;
        if self.remaining() < len {
            return Err(Error::format(
                "payload",
                "payload shorter than header promises",
            ));
        }
        self.take(len, "payload")
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(Error::format(
                "payload",
                format!("{} trailing bytes after payload", self.remaining()),
            ))
        }
    }
}

fn read_header(r: &mut Reader<'_>, expected: PayloadKind) -> Result<GridMeta> {
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format("magic", "bad magic"));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}"),
        ));
    }
    let kind_byte = r.u8("payload kind")?;
    let kind = PayloadKind::from_byte(kind_byte)
        .ok_or_else(|| Error::format("payload kind", format!("unknown kind {kind_byte}")))?;
    if kind != expected {
        return Err(Error::format(
            "payload kind",
            format!("expected {expected:?}, file holds {kind:?}"),
        ));
    }
    if r.take(2, "reserved")? != [0, 0] {
        return Err(Error::format("reserved", "reserved bytes must be zero"));
    }
    let dims = [r.u32("nx")?, r.u32("ny")?, r.u32("nz")?];
    let voxel_size = r.f32("voxel_size")?;
    let origin = [r.f32("origin")?, r.f32("origin")?, r.f32("origin")?];
    if dims.contains(&0) {
        return Err(Error::format("dims", format!("zero extent in {dims:?}")));
    }
    if !(voxel_size.is_finite() && voxel_size > 0.0) {
        return Err(Error::format(
            "voxel_size",
            format!("must be positive and finite, got {voxel_size}"),
        ));
    }
    if origin.iter().any(|o| !o.is_finite()) {
        return Err(Error::format("origin", "non-finite component"));
    }
    GridMeta::new(dims, voxel_size, origin)
}

fn invalid(field: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::InvalidParameter(reason) | Error::DimensionMismatch(reason) => {
            Error::format(field, reason)
        }
        other => other,
    }
}

pub fn decode_grid(bytes: &[u8]) -> Result<SemanticGrid> {
    let mut r = Reader::new(bytes);
    let meta = read_header(&mut r, PayloadKind::Labels)?;
    let count = r.u16("class table")?;
    let mut names = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u16("class table")? as usize;
        let raw = r.take(len, "class table")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| Error::format("class table", "class name is not UTF-8"))?;
        names.push(name.to_owned());
    }
    let table = ClassTable::new(names).map_err(invalid("class table"))?;
    let labels = r.payload(meta.cell_count(), 1)?.to_vec();
    r.finish()?;
    SemanticGrid::new(meta, labels, table).map_err(invalid("labels"))
}

pub fn decode_affinity(bytes: &[u8]) -> Result<AffinityField> {
    let mut r = Reader::new(bytes);
    let meta = read_header(&mut r, PayloadKind::Affinity)?;
    let payload = r.payload(meta.cell_count(), PayloadKind::Affinity.cell_bytes())?;
    r.finish()?;
    let values = payload
        .chunks_exact(12)
        .map(|c| [0, 4, 8].map(|o| f32::from_le_bytes(c[o..o + 4].try_into().unwrap())))
        .collect();
    AffinityField::new(meta, values).map_err(invalid("affinity values"))
}

pub fn decode_instances(bytes: &[u8]) -> Result<InstanceMap> {
    let mut r = Reader::new(bytes);
    let meta = read_header(&mut r, PayloadKind::InstanceIds)?;
    let payload = r.payload(meta.cell_count(), PayloadKind::InstanceIds.cell_bytes())?;
    let ids = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let count = r.u32("instance count")? as usize;
    let needed = count
        .checked_mul(INSTANCE_RECORD_BYTES)
        .ok_or_else(|| Error::Size(format!("{count} instance records overflow")))?;
    if r.remaining() < needed {
        return Err(Error::format(
            "instance records",
            "payload shorter than header promises",
        ));
    }
    let mut instances = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.u32("instance records")?;
        let class = r.u8("instance records")?;
        let center = [
            r.f32("instance records")?,
            r.f32("instance records")?,
            r.f32("instance records")?,
        ];
        let voxel_count = r.u32("instance records")?;
        instances.push(InstanceRecord {
            id,
            class,
            center,
            voxel_count,
        });
    }
    r.finish()?;
    InstanceMap::new(meta, ids, instances).map_err(invalid("instance records"))
}

pub fn decode_mask(bytes: &[u8]) -> Result<LossMask> {
    let mut r = Reader::new(bytes);
    let meta = read_header(&mut r, PayloadKind::Mask)?;
    let payload = r.payload(meta.cell_count(), 1)?;
    r.finish()?;
    let flags = payload
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(
                "payload",
                format!("mask byte {other} is not 0/1"),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    LossMask::new(meta, flags).map_err(invalid("payload"))
}

pub fn save_grid(grid: &SemanticGrid, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_grid(grid))?)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<SemanticGrid> {
    decode_grid(&fs::read(path)?)
}

pub fn save_affinity(field: &AffinityField, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_affinity(field))?)
}

pub fn load_affinity(path: impl AsRef<Path>) -> Result<AffinityField> {
    decode_affinity(&fs::read(path)?)
}

pub fn save_instances(map: &InstanceMap, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_instances(map))?)
}

pub fn load_instances(path: impl AsRef<Path>) -> Result<InstanceMap> {
    decode_instances(&fs::read(path)?)
}

pub fn save_mask(mask: &LossMask, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_mask(mask))?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<LossMask> {
    decode_mask(&fs::read(path)?)
}
