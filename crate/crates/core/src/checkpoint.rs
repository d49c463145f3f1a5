//! Binary container for parameter vectors and Fisher diagonals.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"BCWI"  version:u8  header_len:u32  header:JSON  values:f64 × N  crc32:u32
//! ```
//!
//! The header lists the model spec, segment names and shapes (in payload
//! order), provenance, and for Fisher files the normalization and floor. The
//! CRC32 covers every byte before it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{FisherDiagonal, Normalization};
use crate::model::{ModelSpec, ParamVector};

pub const MAGIC: &[u8; 4] = b"BCWI";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub role: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherMeta {
    pub normalization: Normalization,
    pub epsilon_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SegmentHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u8,
    spec: ModelSpec,
    segments: Vec<SegmentHeader>,
    provenance: Provenance,
    fisher: Option<FisherMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamVector,
    pub provenance: Provenance,
    pub fisher: Option<FisherMeta>,
}

impl Checkpoint {
    pub fn from_params(params: ParamVector, provenance: Provenance) -> Self {
        Checkpoint {
            params,
            provenance,
            fisher: None,
        }
    }

    pub fn from_fisher(fisher: &FisherDiagonal, provenance: Provenance) -> Self {
        Checkpoint {
            params: fisher.values().clone(),
            provenance,
            fisher: Some(FisherMeta {
                normalization: fisher.normalization,
                epsilon_floor: fisher.epsilon_floor,
            }),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        self.params.spec()
    }

    pub fn to_fisher(&self) -> Result<FisherDiagonal> {
        let meta = self
            .fisher
            .ok_or_else(|| Error::Format("checkpoint holds parameters, not a Fisher diagonal".into()))?;
        FisherDiagonal::new(self.params.clone(), meta.normalization, meta.epsilon_floor)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            spec: *self.params.spec(),
            segments: self
                .params
                .segments()
                .iter()
                .map(|s| SegmentHeader {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                })
                .collect(),
            provenance: self.provenance.clone(),
            fisher: self.fisher,
        };
        let header = serde_json::to_vec(&header)?;
        let header_len = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
        let mut out = Vec::with_capacity(4 + 1 + 4 + header.len() + 8 * self.params.len() + 4);
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(m.to_string());
        if bytes.len() < 4 + 1 + 4 + 4 {
            return Err(fmt("truncated file"));
        }
        if &bytes[..4] != MAGIC {
            return Err(fmt("bad magic bytes"));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[4])));
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let payload_start = 9usize
            .checked_add(header_len)
            .filter(|&end| end <= body.len())
            .ok_or_else(|| fmt("truncated header"))?;
        if crc32fast::hash(body) != stored {
            return Err(fmt("checksum mismatch"));
        }
        let header: Header = serde_json::from_slice(&bytes[9..payload_start])?;
        if header.format_version != FORMAT_VERSION {
            return Err(fmt("header version mismatch"));
        }
        let payload = &body[payload_start..];
        if payload.len() % 8 != 0 || payload.len() / 8 != header.spec.param_count() {
            return Err(Error::Format(format!(
                "payload holds {} bytes, spec needs {} values",
                payload.len(),
                header.spec.param_count()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let params = ParamVector::from_values(header.spec, values)?;
        let layout_matches = params.segments().len() == header.segments.len()
            && params
                .segments()
                .iter()
                .zip(&header.segments)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if !layout_matches {
            return Err(fmt("segment table does not match the model spec"));
        }
        Ok(Checkpoint {
            params,
            provenance: header.provenance,
            fisher: header.fisher,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::compute_fisher;
    use crate::model::{init_params, Activation, SparseFeatures};

    fn ckpt() -> Checkpoint {
        let spec = ModelSpec::new(7, 3, 4, Activation::Relu).unwrap();
        Checkpoint::from_params(
            init_params(spec, 11),
            Provenance {
                role: "old".into(),
                seed: 3,
                config_hash: "abc".into(),
            },
        )
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let c = ckpt();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(&bytes[..4], b"BCWI");
    }

    #[test]
    fn fisher_roundtrip_keeps_metadata() {
        let spec = ModelSpec::new(3, 0, 2, Activation::Tanh).unwrap();
        let p = init_params(spec, 1);
        let data = vec![(SparseFeatures::new(vec![1], vec![1.0]).unwrap(), 1)];
        let f = compute_fisher(&p, &data, Normalization::MeanOne, 1e-8).unwrap();
        let c = Checkpoint::from_fisher(&f, Provenance::default());
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.to_fisher().unwrap(), f);
        assert!(ckpt().to_fisher().is_err());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = ckpt().to_bytes().unwrap();
        let truncated = &bytes[..bytes.len() - 9];
        assert!(matches!(Checkpoint::from_bytes(truncated), Err(Error::Format(_))));
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Format(_))));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Format(_))));
        assert!(Checkpoint::from_bytes(b"BC").is_err());
    }
}
