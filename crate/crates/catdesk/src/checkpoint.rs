//! Model checkpoints: magic `CDCKPT01`, `u32` version, `u64` input width,
//! hidden width and output count, then the flat parameter vector as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use catdesk_core::am::{ModelDims, ModelParams};

use crate::{FormatError, FormatResult};

const MAGIC: &[u8; 8] = b"CDCKPT01";
const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 3 * 8;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let d = params.dims();
    let mut out = Vec::with_capacity(HEADER + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [d.d_in, d.d_h, d.num_outputs] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in params.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], source_name: &str) -> FormatResult<ModelParams> {
    let err = |offset: usize, msg: &str| FormatError::Byte {
        source_name: source_name.to_owned(),
        offset: offset as u64,
        msg: msg.to_owned(),
    };
    if bytes.len() < HEADER {
        return Err(err(bytes.len(), "truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(err(0, "bad magic"));
    }
    if u32::from_le_bytes(bytes[8..12].try_into().unwrap()) != VERSION {
        return Err(err(8, "unsupported version"));
    }
    let field = |i: usize| u64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().unwrap()) as usize;
    let dims = ModelDims {
        d_in: field(0),
        d_h: field(1),
        num_outputs: field(2),
    };
    let body = &bytes[HEADER..];
    let expected = ModelParams::zeros(dims).len();
    if body.len() != 8 * expected {
        return Err(err(
            HEADER + body.len().min(8 * expected),
            &format!("expected {expected} parameters, found {} bytes", body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(ModelParams::from_vec(dims, data)?)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> FormatResult<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| FormatError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> FormatResult<ModelParams> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}
