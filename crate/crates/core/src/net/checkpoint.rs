//! Model checkpoints: a JSON header describing the architecture and a
//! manifest of `(name, shape, offset)` entries, followed by the parameter
//! values as concatenated little-endian f32 blobs.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ModelHyper, SrpModel};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SRPCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob section.
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    hyper: ModelHyper,
    rng_seed: u64,
    update_count: u64,
    manifest: Vec<ManifestEntry>,
}

pub fn save_checkpoint(model: &SrpModel, path: &Path) -> Result<()> {
    let mut manifest = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    for p in model.params() {
        manifest.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            offset: blob.len() as u64,
        });
        for &v in &p.data {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        hyper: model.hyper().clone(),
        rng_seed: model.rng_seed(),
        update_count: model.update_count(),
        manifest,
    };
    let json = serde_json::to_vec(&header)?;

    let mut file = std::fs::File::create(path)?;
    file.write_all(&CHECKPOINT_MAGIC)?;
    file.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    file.write_all(&(json.len() as u64).to_le_bytes())?;
    file.write_all(&json)?;
    file.write_all(&blob)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SrpModel> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

pub fn from_bytes(bytes: &[u8]) -> Result<SrpModel> {
    let need = |n: usize, at: usize| -> Result<&[u8]> {
        if at + n > bytes.len() {
            return Err(Error::CorruptFile("checkpoint truncated".into()));
        }
        Ok(&bytes[at..at + n])
    };
    if need(8, 0)? != CHECKPOINT_MAGIC {
        return Err(Error::CorruptFile("bad checkpoint magic".into()));
    }
    let version = u32::from_le_bytes(need(4, 8)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let json_len = u64::from_le_bytes(need(8, 12)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(need(json_len, 20)?)
        .map_err(|e| Error::CorruptFile(format!("checkpoint header: {e}")))?;
    let blob = &bytes[20 + json_len..];

    let mut model = SrpModel::new(header.hyper, header.rng_seed)?;
    model.set_update_count(header.update_count);
    for p in model.params_mut() {
        let entry = header
            .manifest
            .iter()
            .find(|e| e.name == p.name)
            .ok_or_else(|| Error::CorruptFile(format!("missing parameter {}", p.name)))?;
        if entry.shape != p.shape {
            return Err(Error::CorruptFile(format!(
                "parameter {} has shape {:?}, expected {:?}",
                p.name, entry.shape, p.shape
            )));
        }
        let start = entry.offset as usize;
        let nbytes = p.data.len() * 4;
        if start + nbytes > blob.len() {
            return Err(Error::CorruptFile("checkpoint truncated".into()));
        }
        for (i, v) in p.data.iter_mut().enumerate() {
            let le: [u8; 4] = blob[start + 4 * i..start + 4 * i + 4].try_into().unwrap();
            *v = f32::from_le_bytes(le) as f64;
        }
        if !p.all_finite() {
            return Err(Error::CorruptFile(format!("parameter {} is non-finite", p.name)));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelHyper;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> SrpModel {
        SrpModel::new_with_random_head(
            ModelHyper { alpha: 3, channels: 4, n_blocks: 2, kernel_size: 3 },
            99,
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_preserves_forward_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.hyper(), m.hyper());
        assert_eq!(loaded.update_count(), m.update_count());
        for (a, b) in m.params().iter().zip(loaded.params()) {
            assert_eq!(a.data, b.data, "parameter {} changed", a.name);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(1, 1, 10, (0..10).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), loaded.forward(&x).unwrap().data());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [4usize, 15, bytes.len() / 2, bytes.len() - 3] {
            assert!(
                matches!(from_bytes(&bytes[..cut]), Err(Error::CorruptFile(_))),
                "cut at {cut} not detected"
            );
        }
    }

    #[test]
    fn wrong_magic_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&model(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'Z';
        assert!(matches!(from_bytes(&bytes), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn wrong_version_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&model(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 2;
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn missing_path_is_missing_checkpoint() {
        assert!(matches!(
            load_checkpoint(Path::new("/nonexistent/ckpt.bin")),
            Err(Error::MissingCheckpoint(_))
        ));
    }
}
