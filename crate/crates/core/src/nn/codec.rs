//! Binary parameter blobs.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    b"PVEC"
//! version  u32 (= 1)
//! input    u32
//! hidden   u32 u32
//! output   u32
//! act      u8   (0 = scaled tanh, 1 = linear)
//! scale    f64  (0.0 for linear)
//! len      u64
//! values   len x f64
//! ```

use std::io::{Read, Write};

use super::{MlpArchitecture, NnError, OutputActivation, ParamVector};

const MAGIC: &[u8; 4] = b"PVEC";
const VERSION: u32 = 1;

pub fn write_params<W: Write>(w: &mut W, arch: &MlpArchitecture, params: &ParamVector) -> Result<(), NnError> {
    if params.len() != arch.param_count() {
        return Err(NnError::ParamCount { expected: arch.param_count(), got: params.len() });
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for n in [arch.input_size, arch.hidden[0], arch.hidden[1], arch.output_size] {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    let (tag, scale) = match arch.output {
        OutputActivation::ScaledTanh { scale } => (0u8, scale),
        OutputActivation::Linear => (1u8, 0.0),
    };
    w.write_all(&[tag])?;
    w.write_all(&scale.to_le_bytes())?;
    write_f64s(w, params.as_slice())
}

pub fn read_params<R: Read>(r: &mut R) -> Result<(MlpArchitecture, ParamVector), NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let input_size = read_u32(r)? as usize;
    let hidden = [read_u32(r)? as usize, read_u32(r)? as usize];
    let output_size = read_u32(r)? as usize;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let scale = read_f64(r)?;
    let output = match tag[0] {
        0 => OutputActivation::ScaledTanh { scale },
        1 => OutputActivation::Linear,
        t => return Err(NnError::Format(format!("unknown output activation {t}"))),
    };
    let arch = MlpArchitecture { input_size, hidden, output_size, output };
    arch.validate().map_err(NnError::Format)?;
    let values = read_f64s(r)?;
    if values.len() != arch.param_count() {
        return Err(NnError::ParamCount { expected: arch.param_count(), got: values.len() });
    }
    Ok((arch, ParamVector(values)))
}

/// Length-prefixed (u64) run of f64 values.
pub fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<(), NnError> {
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>, NnError> {
    let len = read_u64(r)?;
    if len > (1 << 32) {
        return Err(NnError::Format(format!("implausible length {len}")));
    }
    (0..len).map(|_| read_f64(r)).collect()
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f64<R: Read>(r: &mut R) -> Result<f64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blob_round_trip() {
        let arch = MlpArchitecture::policy(18, [4, 5], 0.785);
        let p = ParamVector::uniform(&arch, 2.0, &mut ChaCha8Rng::seed_from_u64(1));
        let mut buf = Vec::new();
        write_params(&mut buf, &arch, &p).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 16 + 1 + 8 + 8 + 8 * p.len());
        let (arch2, p2) = read_params(&mut buf.as_slice()).unwrap();
        assert_eq!(arch2, arch);
        assert_eq!(p2, p);

        let varch = MlpArchitecture::value(1, [2, 3]);
        let v = ParamVector::zeros(&varch);
        buf.clear();
        write_params(&mut buf, &varch, &v).unwrap();
        assert_eq!(read_params(&mut buf.as_slice()).unwrap().0, varch);
    }

    #[test]
    fn corrupt_blobs_rejected() {
        let arch = MlpArchitecture::policy(1, [2, 2], 0.5);
        let mut buf = Vec::new();
        write_params(&mut buf, &arch, &ParamVector::zeros(&arch)).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_params(&mut bad.as_slice()), Err(NnError::Format(_))));
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_params(&mut &truncated[..]), Err(NnError::Io(_))));
    }
}
