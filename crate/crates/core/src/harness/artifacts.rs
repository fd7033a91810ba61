//! Binary run artifacts.
//!
//! Both formats start with a magic, a `u32` version and the length-prefixed
//! UTF-8 text of the run configuration, so a single file is enough to
//! replay it. All integers and floats are little-endian.
//!
//! Archive dump (`MEAR`): `u8` base, `u64` count, then per elite in
//! ascending cell order `u64` cell, 6 `u8` buckets, `f64` fitness, `u64`
//! generation and the genome as a parameter blob.
//!
//! PPO checkpoint (`PPOC`): `f64` return of the mean policy when saved,
//! mean-net blob, `log_std` as a length-prefixed `f64` run, value-net blob,
//! then `u8` 1 followed by the normalizer mean, variance and count, or `u8` 0
//! without observation normalization.

use std::io::{Read, Write};

use super::HarnessError;
use crate::env::NUM_LEGS;
use crate::nn::codec::{read_f64, read_f64s, read_params, read_u32, read_u64, write_f64s, write_params};
use crate::qd::{Archive, Descriptor, Elite};
use crate::nn::GaussianPolicy;
use crate::rl::{ObsNormalizer, PpoModel};

const ARCHIVE_MAGIC: &[u8; 4] = b"MEAR";
const CHECKPOINT_MAGIC: &[u8; 4] = b"PPOC";
const VERSION: u32 = 1;

fn header<W: Write>(w: &mut W, magic: &[u8; 4], config: &str) -> Result<(), HarnessError> {
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(config.len() as u64).to_le_bytes())?;
    w.write_all(config.as_bytes())?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<String, HarnessError> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(HarnessError::Format(format!(
            "expected {} file, found magic {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(HarnessError::Format(format!("unsupported version {version}")));
    }
    let len = read_u64(r)?;
    if len > 1 << 24 {
        return Err(HarnessError::Format(format!("implausible config length {len}")));
    }
    let mut text = vec![0u8; len as usize];
    r.read_exact(&mut text)?;
    String::from_utf8(text).map_err(|_| HarnessError::Format("config text is not UTF-8".into()))
}

/// Peeks at the magic to tell the two artifact kinds apart.
pub fn sniff(bytes: &[u8]) -> Option<&'static str> {
    match bytes.get(..4) {
        Some(m) if m == ARCHIVE_MAGIC => Some("archive"),
        Some(m) if m == CHECKPOINT_MAGIC => Some("checkpoint"),
        _ => None,
    }
}

pub fn write_archive<W: Write>(
    w: &mut W,
    config: &str,
    archive: &Archive,
    arch: &crate::nn::MlpArchitecture,
) -> Result<(), HarnessError> {
    header(w, ARCHIVE_MAGIC, config)?;
    w.write_all(&[archive.base()])?;
    w.write_all(&(archive.occupancy() as u64).to_le_bytes())?;
    for (cell, elite) in archive.iter() {
        w.write_all(&(cell as u64).to_le_bytes())?;
        w.write_all(&elite.descriptor.buckets)?;
        w.write_all(&elite.fitness.to_le_bytes())?;
        w.write_all(&elite.generation_added.to_le_bytes())?;
        write_params(w, arch, &elite.genome)?;
    }
    Ok(())
}

/// Returns the embedded config text and the archive.
pub fn read_archive<R: Read>(r: &mut R) -> Result<(String, Archive), HarnessError> {
    let config = read_header(r, ARCHIVE_MAGIC)?;
    let mut base = [0u8; 1];
    r.read_exact(&mut base)?;
    let base = base[0];
    if !matches!(base, 4 | 5) {
        return Err(HarnessError::Format(format!("invalid descriptor base {base}")));
    }
    let mut archive = Archive::new(base);
    let count = read_u64(r)?;
    if count as usize > archive.capacity() {
        return Err(HarnessError::Format(format!("{count} elites exceed capacity")));
    }
    for _ in 0..count {
        let cell = read_u64(r)? as usize;
        let mut buckets = [0u8; NUM_LEGS];
        r.read_exact(&mut buckets)?;
        if buckets.iter().any(|&b| b >= base) {
            return Err(HarnessError::Format(format!("bucket out of range in cell {cell}")));
        }
        let descriptor = Descriptor { buckets, base };
        if descriptor.cell_index() != cell {
            return Err(HarnessError::Format(format!("cell {cell} does not match its descriptor")));
        }
        let fitness = read_f64(r)?;
        let generation_added = read_u64(r)?;
        let (_, genome) = read_params(r)?;
        archive.restore(Elite { genome, fitness, descriptor, generation_added });
    }
    Ok((config, archive))
}

pub fn write_checkpoint<W: Write>(
    w: &mut W,
    config: &str,
    model: &PpoModel,
    reference_return: f64,
) -> Result<(), HarnessError> {
    header(w, CHECKPOINT_MAGIC, config)?;
    w.write_all(&reference_return.to_le_bytes())?;
    write_params(w, &model.policy.arch, &model.policy.mean)?;
    write_f64s(w, &model.policy.log_std)?;
    write_params(w, &model.value_arch, &model.value)?;
    match &model.obs_norm {
        None => w.write_all(&[0])?,
        Some(n) => {
            w.write_all(&[1])?;
            write_f64s(w, &n.mean)?;
            write_f64s(w, &n.var)?;
            w.write_all(&n.count.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Returns the embedded config text, the model and the stored mean-policy return.
pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(String, PpoModel, f64), HarnessError> {
    let config = read_header(r, CHECKPOINT_MAGIC)?;
    let reference_return = read_f64(r)?;
    let (arch, mean) = read_params(r)?;
    let log_std = read_f64s(r)?;
    if log_std.len() != arch.output_size {
        return Err(HarnessError::Format("log_std width does not match the policy".into()));
    }
    let (value_arch, value) = read_params(r)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let obs_norm = match flag[0] {
        0 => None,
        1 => Some(ObsNormalizer { mean: read_f64s(r)?, var: read_f64s(r)?, count: read_f64(r)? }),
        f => return Err(HarnessError::Format(format!("bad normalizer flag {f}"))),
    };
    let model = PpoModel { policy: GaussianPolicy { arch, mean, log_std }, value_arch, value, obs_norm };
    Ok((config, model, reference_return))
}
