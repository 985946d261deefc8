//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "PCSN"
//! version      u32      1
//! point_layers u32
//! head_layers  u32
//! per layer, point MLP first then head:
//!   inputs     u32
//!   outputs    u32
//!   weight     inputs*outputs f64, row-major (inputs × outputs)
//!   bias       outputs f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{ClassifierParams, Layer, NetError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCSN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Refuse absurd layer sizes from corrupt files before allocating.
const MAX_WIDTH: u32 = 1 << 16;

pub fn write_checkpoint<W: Write>(params: &ClassifierParams, mut w: W) -> Result<()> {
    params.validate()?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.point_mlp.len() as u32).to_le_bytes())?;
    w.write_all(&(params.head.len() as u32).to_le_bytes())?;
    for l in params.point_mlp.iter().chain(&params.head) {
        w.write_all(&(l.inputs() as u32).to_le_bytes())?;
        w.write_all(&(l.outputs() as u32).to_le_bytes())?;
        for v in l.weight.iter().chain(l.bias.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn truncated(e: std::io::Error) -> NetError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        NetError::Checkpoint("truncated file".into())
    } else {
        NetError::Io(e)
    }
}

fn read_layer<R: Read>(r: &mut R) -> Result<Layer> {
    let inputs = read_u32(r)?;
    let outputs = read_u32(r)?;
    if inputs == 0 || outputs == 0 || inputs > MAX_WIDTH || outputs > MAX_WIDTH {
        return Err(NetError::Checkpoint(format!("bad layer shape {inputs}x{outputs}")));
    }
    let (i, o) = (inputs as usize, outputs as usize);
    let weight = Array2::from_shape_vec((i, o), read_f64s(r, i * o)?).expect("length checked");
    let bias = Array1::from_vec(read_f64s(r, o)?);
    Ok(Layer { weight, bias })
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ClassifierParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NetError::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(NetError::Checkpoint(format!("unsupported version {version}")));
    }
    let np = read_u32(&mut r)?;
    let nh = read_u32(&mut r)?;
    if np == 0 || nh == 0 || np > 64 || nh > 64 {
        return Err(NetError::Checkpoint(format!("bad layer counts {np}/{nh}")));
    }
    let point_mlp = (0..np).map(|_| read_layer(&mut r)).collect::<Result<Vec<_>>>()?;
    let head = (0..nh).map(|_| read_layer(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NetError::Checkpoint("trailing bytes".into()));
    }
    let params = ClassifierParams { point_mlp, head };
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint(params: &ClassifierParams, path: &Path) -> Result<()> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ClassifierParams {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        ClassifierParams::init(&Architecture::standard(4), &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut p = params();
        p.head[0].bias[3] = -1.0 / 3.0;
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 5 + 8 * p.num_parameters());
        let q = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), q.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(p, q);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = params();
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&params(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(read_checkpoint(bad.as_slice()).is_err());
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(long.as_slice()).is_err());
    }
}
