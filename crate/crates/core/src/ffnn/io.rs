//! Binary network format, little-endian throughout:
//!
//! ```text
//! magic    8 bytes  "PCNNMLP\0"
//! version  u32      1
//! act      u8       0 relu | 1 sigmoid | 2 tanh | 3 identity
//! ndims    u32
//! dims     ndims x u64
//! params   parameter_count x f64 (layer by layer, weights row-major then biases)
//! ```

use std::io::{Read, Write};

use crate::error::{PcnnError, Result};
use crate::ffnn::{parameter_count_for, Activation, Architecture, Mlp};

const MAGIC: &[u8; 8] = b"PCNNMLP\0";
const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> PcnnError {
    PcnnError::Format(e.to_string())
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub(crate) fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(b[0])
}

impl Mlp {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * (self.dims.len() + self.params.len()));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(self.activation.tag());
        buf.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Mlp> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(PcnnError::Format("not a network file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(PcnnError::Format(format!("unsupported network version {version}")));
        }
        let activation = Activation::from_tag(read_u8(r)?)?;
        let ndims = read_u32(r)? as usize;
        if !(2..=1024).contains(&ndims) {
            return Err(PcnnError::Format(format!("implausible layer count {ndims}")));
        }
        let dims = (0..ndims)
            .map(|_| read_u64(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = parameter_count_for(&dims);
        let params = (0..count).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        Mlp::from_params(&Architecture::new(dims, activation), params)
    }
}
