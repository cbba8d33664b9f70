//! TTWF transformer weight files.
//!
//! Little-endian layout: magic `TTWF`, format version (u32), the six config
//! fields as u32 in `TinyTransformerConfig` order, then every weight tensor as
//! raw f32 in canonical tensor order, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{LoadError, TinyTransformer, TinyTransformerConfig};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"TTWF";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn write_transformer<W: Write>(model: &TinyTransformer, mut w: W) -> std::io::Result<()> {
    w.write_all(&WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    for field in model.config().fields() {
        let field = u32::try_from(field).map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "config field exceeds u32")
        })?;
        w.write_all(&field.to_le_bytes())?;
    }
    for tensor in model.tensors() {
        for x in tensor {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_transformer<R: Read>(mut r: R) -> Result<TinyTransformer, LoadError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != WEIGHTS_MAGIC {
        return Err(LoadError::BadMagic { found: magic });
    }
    let version = read_u32(&mut r)?;
    if version != WEIGHTS_VERSION {
        return Err(LoadError::VersionMismatch {
            found: version,
            expected: WEIGHTS_VERSION,
        });
    }
    let mut fields = [0usize; 6];
    for f in &mut fields {
        *f = read_u32(&mut r)? as usize;
    }
    let config = TinyTransformerConfig::from_fields(fields);
    config
        .validate()
        .map_err(|e| LoadError::Invalid(e.to_string()))?;

    let expected = config.parameter_count() * 4;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(LoadError::SizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let flat: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    TinyTransformer::from_flat(config, &flat).map_err(|e| LoadError::Invalid(e.to_string()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, LoadError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save_transformer(model: &TinyTransformer, path: impl AsRef<Path>) -> Result<(), LoadError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LoadError::io(path, e))?;
    write_transformer(model, BufWriter::new(file)).map_err(|e| LoadError::io(path, e))
}

pub fn load_transformer(path: impl AsRef<Path>) -> Result<TinyTransformer, LoadError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LoadError::io(path, e))?;
    read_transformer(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TinyTransformer {
        TinyTransformer::init(TinyTransformerConfig::new(8, 2, 2, 16, 32), 9).unwrap()
    }

    fn bytes(m: &TinyTransformer) -> Vec<u8> {
        let mut out = Vec::new();
        write_transformer(m, &mut out).unwrap();
        out
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = model();
        let back = read_transformer(&bytes(&m)[..]).unwrap();
        assert!(m.bit_eq(&back));
    }

    #[test]
    fn header_layout() {
        let b = bytes(&model());
        assert_eq!(&b[..4], b"TTWF");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        let fields: Vec<u32> = b[8..32]
            .chunks(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(fields, vec![257, 8, 2, 2, 16, 32]);
        assert_eq!(b.len(), 32 + 4 * model().config().parameter_count());
    }

    #[test]
    fn bad_magic() {
        let mut b = bytes(&model());
        b[..4].copy_from_slice(b"GGUF");
        assert!(matches!(
            read_transformer(&b[..]),
            Err(LoadError::BadMagic { found }) if &found == b"GGUF"
        ));
    }

    #[test]
    fn version_mismatch() {
        let mut b = bytes(&model());
        b[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_transformer(&b[..]),
            Err(LoadError::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn short_and_long_payloads() {
        let b = bytes(&model());
        let short = &b[..b.len() - 4];
        assert!(matches!(
            read_transformer(short),
            Err(LoadError::SizeMismatch { .. })
        ));
        let mut long = b.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(
            read_transformer(&long[..]),
            Err(LoadError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn invalid_header_config() {
        let mut b = bytes(&model());
        // n_heads = 3 does not divide d_model = 8
        b[20..24].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(
            read_transformer(&b[..]),
            Err(LoadError::Invalid(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ttwf");
        let m = model();
        save_transformer(&m, &path).unwrap();
        assert!(load_transformer(&path).unwrap().bit_eq(&m));
        assert!(matches!(
            load_transformer(dir.path().join("missing.ttwf")),
            Err(LoadError::Io { .. })
        ));
    }
}
