//! Model checkpoint files.
//!
//! Layout (little-endian):
//!
//! | bytes | content                                         |
//! |-------|-------------------------------------------------|
//! | 4     | magic `SQFM`                                    |
//! | 2     | format version (`1`)                            |
//! | 4     | header length `H`                               |
//! | H     | UTF-8 JSON header: config, seed, segment layout |
//! | 8·N   | `f64` parameters, segments in header order      |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, VelocityModel};
use crate::cli_io::binary::{push_f64s, Reader};
use crate::cli_io::write_atomic;
use crate::diffcore::{NdArray, ParamVector};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SQFM";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    segments: Vec<(String, Vec<usize>)>,
}

pub fn encode_model(model: &VelocityModel) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config().clone(),
        seed: model.seed(),
        segments: model.params().layout(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    push_f64s(&mut out, &model.params().flatten());
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<VelocityModel> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse { offset: 0, msg: "bad magic, expected SQFM".into() });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported model format version {version}")));
    }
    let len = r.u32("header length")? as usize;
    let at = r.offset();
    let header: Header = serde_json::from_slice(r.take(len, "header")?)
        .map_err(|e| Error::Parse { offset: at, msg: format!("header: {e}") })?;
    let mut params = ParamVector::new();
    for (name, shape) in header.segments {
        let n = shape.iter().product();
        let data = r.f64s(n, "parameters")?;
        params.push(name, NdArray::new(shape, data)?)?;
    }
    r.finish()?;
    VelocityModel::from_parts(header.config, params, header.seed)
}

pub fn save_model(model: &VelocityModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<VelocityModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
