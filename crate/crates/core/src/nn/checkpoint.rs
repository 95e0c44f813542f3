//! Binary checkpoint format: a versioned header followed by named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//!   magic   8 bytes  b"MVTCKPT\0"
//!   version u32      currently 1
//!   count   u32      number of tensors
//!   tensor:
//!     name_len u32, name bytes (UTF-8)
//!     rows u64, cols u64
//!     rows*cols f64 values, row-major, IEEE-754 little-endian bit patterns
//! ```
//!
//! Writing the raw f64 bit patterns makes checkpoints bitwise reproducible:
//! two runs that compute identical parameters produce identical files.

use std::io::{Read, Write};

use ndarray::Array2;

use super::{NnError, Result};

const MAGIC: &[u8; 8] = b"MVTCKPT\0";

/// Current format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes named tensors in the order given.
pub fn write_checkpoint<W: Write>(
    writer: &mut W,
    tensors: &[(String, &Array2<f64>)],
) -> Result<()> {
    writer.write_all(MAGIC)?;
    writer.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    writer.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        let bytes = name.as_bytes();
        writer.write_all(&(bytes.len() as u32).to_le_bytes())?;
        writer.write_all(bytes)?;
        writer.write_all(&(tensor.nrows() as u64).to_le_bytes())?;
        writer.write_all(&(tensor.ncols() as u64).to_le_bytes())?;
        for &value in tensor.iter() {
            writer.write_all(&value.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads all tensors back in file order.
pub fn read_checkpoint<R: Read>(reader: &mut R) -> Result<Vec<(String, Array2<f64>)>> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::CorruptCheckpoint(format!(
            "bad magic {magic:02x?}"
        )));
    }
    let version = read_u32(reader)?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::CorruptCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = read_u32(reader)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(reader)? as usize;
        if name_len > 4096 {
            return Err(NnError::CorruptCheckpoint(format!(
                "unreasonable name length {name_len}"
            )));
        }
        let mut name_bytes = vec![0u8; name_len];
        reader.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| NnError::CorruptCheckpoint(format!("tensor name not UTF-8: {e}")))?;
        let rows = read_u64(reader)? as usize;
        let cols = read_u64(reader)? as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| NnError::CorruptCheckpoint("tensor shape overflows".into()))?;
        let mut values = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            reader.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        let tensor = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| NnError::CorruptCheckpoint(e.to_string()))?;
        tensors.push((name, tensor));
    }
    Ok(tensors)
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(reader: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
