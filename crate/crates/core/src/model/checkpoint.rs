//! Checkpoint file: magic `IRNC`, `u32` version, length-prefixed config
//! record (`key=value` lines), then one tensor record per parameter in
//! enumeration order.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::irnet::IrnetModel;
use crate::error::{Error, Result};
use crate::tensor_io::{read_bytes, read_record, read_u32, write_bytes, write_record, write_u32};

pub const MAGIC: &[u8; 4] = b"IRNC";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(w: &mut W, model: &IrnetModel) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_bytes(w, model.config().to_record().as_bytes())?;
    for p in model.params().iter() {
        write_record(w, p.name(), p.dims(), p.value.data())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<IrnetModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for checkpoint header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected \"IRNC\""
        )));
    }
    let version = read_u32(r).map_err(|_| Error::Format("truncated header".into()))?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let record = read_bytes(r, 1 << 16)?;
    let text = String::from_utf8(record)
        .map_err(|_| Error::Format("config record is not UTF-8".into()))?;
    let config = ModelConfig::from_record(&text)?;
    let mut model = IrnetModel::zeroed(config)?;

    let mut seen = HashSet::new();
    while let Some(rec) = read_record(r)? {
        let id = model
            .params()
            .find(&rec.name)
            .ok_or_else(|| Error::Format(format!("unknown parameter {:?}", rec.name)))?;
        if !seen.insert(id) {
            return Err(Error::Format(format!("duplicate parameter {:?}", rec.name)));
        }
        let p = model.params_mut().get_mut(id);
        if rec.dims != p.dims() {
            return Err(Error::Format(format!(
                "parameter {:?} has dims {:?}, model expects {:?}",
                rec.name,
                rec.dims,
                p.dims()
            )));
        }
        p.value.data_mut().copy_from_slice(&rec.data);
    }
    if seen.len() != model.params().len() {
        let missing = model
            .params()
            .iter()
            .enumerate()
            .find(|(i, _)| !seen.iter().any(|id| id.index() == *i))
            .map(|(_, p)| p.name().to_string())
            .unwrap_or_default();
        return Err(Error::Format(format!(
            "truncated checkpoint: parameter {missing:?} missing"
        )));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &IrnetModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, model)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(IrnetModel, ModelConfig)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let model = read_checkpoint(&mut BufReader::new(file))?;
    let config = model.config().clone();
    Ok((model, config))
}

/// Loads and refuses a checkpoint whose config differs from `expected`.
pub fn load_checkpoint_as(path: &Path, expected: &ModelConfig) -> Result<IrnetModel> {
    let (model, config) = load_checkpoint(path)?;
    if &config != expected {
        return Err(Error::Config(format!(
            "checkpoint holds {config}, requested {expected}"
        )));
    }
    Ok(model)
}
