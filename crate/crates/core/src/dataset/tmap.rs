//! `.tmap` tensor container.
//!
//! Layout: one manifest line of JSON, then a body made of sections. Each
//! section is a JSON header line
//! `{"shape":[H,W,C],"dtype":"f32","order":"row-major","byte_order":"little"}`
//! followed by `H*W*C` little-endian `f32` values. The manifest lists every
//! section as `{name, offset, length}` with offsets relative to the first
//! body byte and lengths covering header line plus payload.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decode::{Grid, TensorMaps};
use crate::error::DataError;

const FORMAT: &str = "tmap";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    byte_order: String,
    tensors: Vec<Entry>,
    #[serde(default)]
    meta: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SectionHeader {
    shape: [usize; 3],
    dtype: String,
    order: String,
    byte_order: String,
}

/// Named tensors and free-form metadata, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub meta: BTreeMap<String, Value>,
    pub tensors: Vec<(String, Grid)>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&Grid> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }
}

fn section(grid: &Grid) -> Vec<u8> {
    let header = SectionHeader {
        shape: grid.shape(),
        dtype: "f32".into(),
        order: "row-major".into(),
        byte_order: "little".into(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(grid.data().len() * 4);
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_tmap<W: Write>(mut writer: W, file: &TensorFile) -> Result<(), DataError> {
    let sections: Vec<Vec<u8>> = file.tensors.iter().map(|(_, g)| section(g)).collect();
    let mut offset = 0;
    let tensors = file
        .tensors
        .iter()
        .zip(&sections)
        .map(|((name, _), s)| {
            let e = Entry { name: name.clone(), offset, length: s.len() };
            offset += s.len();
            e
        })
        .collect();
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        byte_order: "little".into(),
        tensors,
        meta: file.meta.clone(),
    };
    serde_json::to_writer(&mut writer, &manifest).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    for s in &sections {
        writer.write_all(s)?;
    }
    writer.flush()?;
    Ok(())
}

fn split_line(bytes: &[u8], base: usize) -> Result<(&[u8], &[u8]), DataError> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| DataError::Container {
        offset: base,
        msg: "missing header line terminator".into(),
    })?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

pub fn read_tmap(bytes: &[u8]) -> Result<TensorFile, DataError> {
    let (head, body) = split_line(bytes, 0)?;
    let manifest: Manifest = serde_json::from_slice(head).map_err(|e| DataError::Container {
        offset: 0,
        msg: format!("manifest: {e}"),
    })?;
    if manifest.format != FORMAT || manifest.version != VERSION || manifest.byte_order != "little" {
        return Err(DataError::Container {
            offset: 0,
            msg: format!(
                "unsupported container {} v{} ({})",
                manifest.format, manifest.version, manifest.byte_order
            ),
        });
    }
    let body_start = head.len() + 1;

    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let start = body_start + e.offset;
        let end = e.offset.checked_add(e.length).ok_or_else(|| DataError::Container {
            offset: start,
            msg: "section length overflows".into(),
        })?;
        if end > body.len() {
            return Err(DataError::Truncated {
                what: format!("section {}", e.name),
                expected: e.length,
                actual: body.len().saturating_sub(e.offset),
            });
        }
        let (hline, payload) = split_line(&body[e.offset..end], start)?;
        let h: SectionHeader = serde_json::from_slice(hline).map_err(|err| DataError::Container {
            offset: start,
            msg: format!("section {}: {err}", e.name),
        })?;
        if h.dtype != "f32" || h.order != "row-major" || h.byte_order != "little" {
            return Err(DataError::Container {
                offset: start,
                msg: format!("section {}: unsupported layout {}/{}/{}", e.name, h.dtype, h.order, h.byte_order),
            });
        }
        let expected = h.shape.iter().product::<usize>() * 4;
        if payload.len() != expected {
            return Err(DataError::Truncated {
                what: format!("section {} payload", e.name),
                expected,
                actual: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push((e.name.clone(), Grid::from_vec(h.shape, data)?));
    }
    Ok(TensorFile { meta: manifest.meta, tensors })
}

const MAP_NAMES: [&str; 6] = ["center_heat", "center_off", "box_size", "kp_heat", "kp_off", "kp_disp"];

pub fn maps_to_tmap(maps: &TensorMaps, image_id: Option<&str>) -> TensorFile {
    let mut meta = BTreeMap::new();
    meta.insert("stride".into(), Value::from(maps.stride));
    if let Some(id) = image_id {
        meta.insert("image_id".into(), Value::from(id));
    }
    let grids = [
        &maps.center_heat,
        &maps.center_off,
        &maps.box_size,
        &maps.kp_heat,
        &maps.kp_off,
        &maps.kp_disp,
    ];
    let mut tensors: Vec<(String, Grid)> = MAP_NAMES
        .iter()
        .zip(grids)
        .map(|(n, g)| (n.to_string(), g.clone()))
        .collect();
    if let Some(d) = &maps.dims {
        tensors.push(("dims".into(), d.clone()));
    }
    TensorFile { meta, tensors }
}

/// Rebuilds decoder maps; the `dims` tensor is optional.
pub fn maps_from_tmap(file: &TensorFile) -> Result<TensorMaps, DataError> {
    let stride = file
        .meta
        .get("stride")
        .and_then(Value::as_u64)
        .and_then(|s| u32::try_from(s).ok())
        .ok_or_else(|| DataError::Shape("meta.stride missing or invalid".into()))?;
    let take = |name: &str| {
        file.get(name)
            .cloned()
            .ok_or_else(|| DataError::Shape(format!("missing tensor {name}")))
    };
    let maps = TensorMaps {
        stride,
        center_heat: take("center_heat")?,
        center_off: take("center_off")?,
        box_size: take("box_size")?,
        kp_heat: take("kp_heat")?,
        kp_off: take("kp_off")?,
        kp_disp: take("kp_disp")?,
        dims: file.get("dims").cloned(),
    };
    maps.validate()?;
    Ok(maps)
}
