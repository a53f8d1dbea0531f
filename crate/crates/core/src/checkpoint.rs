//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PRST" | version u32 | entry count u32
//! per entry: name len u16 | name utf-8 | rank u8 | extents u32×rank
//!            | values f32×n | adam m f32×n | adam v f32×n | step u64
//! trailer:   len u32 | utf-8 `key = value` lines
//! ```
//!
//! Rank is 4 for every tensor the model produces; leading unit extents are kept.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::{ParamStore, Parameter, Tensor};

pub const MAGIC: &[u8; 4] = b"PRST";
pub const VERSION: u32 = 1;

/// Ordered `key = value` pairs stored after the parameters.
pub type Meta = Vec<(String, String)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub meta: Meta,
}

impl Checkpoint {
    pub fn get(&self, key: &str) -> Option<&str> {
        meta_get(&self.meta, key)
    }
}

pub fn meta_get<'a>(meta: &'a Meta, key: &str) -> Option<&'a str> {
    meta.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

pub fn encode(params: &ParamStore, meta: &Meta) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (_, p) in params.iter() {
        let name = p.name.as_bytes();
        let len =
            u16::try_from(name.len()).map_err(|_| Error::config(format!("parameter name `{}` too long", p.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        let shape = p.shape();
        out.push(shape.len() as u8);
        for e in shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for arr in [p.value.data(), &p.adam_m[..], &p.adam_v[..]] {
            for v in arr {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&p.step.to_le_bytes());
    }
    let mut text = String::new();
    for (k, v) in meta {
        if k.contains(['=', '\n']) || v.contains('\n') || k.trim() != k || v.trim() != v {
            return Err(Error::config(format!("metadata entry `{k}` cannot be stored")));
        }
        text.push_str(&format!("{k} = {v}\n"));
    }
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::format("checkpoint", "tensor too large"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format("checkpoint", "parameter name is not utf-8"))?
            .to_string();
        let rank = r.u8()? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::format("checkpoint", format!("`{name}` has rank {rank}")));
        }
        let mut shape = [1usize; 4];
        for i in 0..rank {
            shape[4 - rank + i] = r.u32()? as usize;
        }
        let n: usize = shape.iter().product();
        let value = Tensor::new(shape, r.f32s(n)?)?;
        let adam_m = r.f32s(n)?;
        let adam_v = r.f32s(n)?;
        let step = r.u64()?;
        params
            .insert(Parameter {
                name,
                value,
                adam_m,
                adam_v,
                step,
            })
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
    }
    let len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format("checkpoint", "metadata is not utf-8"))?;
    if r.pos != bytes.len() {
        return Err(Error::format(
            "checkpoint",
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    let mut meta = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("checkpoint", format!("metadata line `{line}`")))?;
        meta.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(Checkpoint { params, meta })
}

pub fn save(path: &Path, params: &ParamStore, meta: &Meta) -> Result<()> {
    let bytes = encode(params, meta)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// `model.*` entries describing the architecture.
pub fn model_meta(cfg: &ModelConfig) -> Meta {
    [
        ("model.blocks", cfg.blocks),
        ("model.paths", cfg.paths),
        ("model.pathfinder_convs", cfg.pathfinder_convs),
        ("model.features", cfg.features),
        ("model.hidden", cfg.hidden),
        ("model.pathfinder_width", cfg.pathfinder_width),
        ("model.channels", cfg.channels),
        ("model.patch", cfg.patch),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn model_config_from_meta(meta: &Meta) -> Result<ModelConfig> {
    let get = |key: &str| -> Result<usize> {
        let full = format!("model.{key}");
        meta_get(meta, &full)
            .ok_or_else(|| Error::format("checkpoint", format!("missing `{full}`")))?
            .parse()
            .map_err(|_| Error::format("checkpoint", format!("`{full}` is not an integer")))
    };
    let cfg = ModelConfig {
        blocks: get("blocks")?,
        paths: get("paths")?,
        pathfinder_convs: get("pathfinder_convs")?,
        features: get("features")?,
        hidden: get("hidden")?,
        pathfinder_width: get("pathfinder_width")?,
        channels: get("channels")?,
        patch: get("patch")?,
    };
    cfg.validate()?;
    Ok(cfg)
}
