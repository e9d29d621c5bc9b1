//! Binary checkpoint: `MAXRR-FE`, version, JSON arch descriptor, little-endian
//! f64 weight blobs per layer, optional training IDs, seed.

use ndarray::{Array1, Array2};

use super::model::{Dense, FeatureExtractor};
use super::{ArchSpec, NnError};
use crate::codec::{CodecError, Reader, Writer};
use crate::data::IdSet;

const MAGIC: &str = "MAXRR-FE";
const VERSION: u32 = 1;

impl FeatureExtractor {
    pub fn write_to(&self, w: &mut Writer) {
        w.bytes(MAGIC.as_bytes());
        w.u32(VERSION);
        w.str(&serde_json::to_string(self.arch()).expect("arch serialises"));
        w.u64(self.params().len() as u64);
        for p in self.params() {
            match p {
                None => w.u8(0),
                Some(d) => {
                    w.u8(1);
                    w.u64(d.w.nrows() as u64);
                    w.u64(d.w.ncols() as u64);
                    w.f64s(d.w.as_slice().expect("standard layout"));
                    w.f64s(d.b.as_slice().expect("standard layout"));
                }
            }
        }
        match self.train_ids() {
            None => w.u8(0),
            Some(ids) => {
                w.u8(1);
                w.u64s(ids.as_slice());
            }
        }
        w.u64(self.seed());
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<FeatureExtractor, NnError> {
        r.expect_magic(MAGIC)?;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CodecError::Version(version).into());
        }
        let arch: ArchSpec = serde_json::from_str(&r.str("arch")?)
            .map_err(|e| CodecError::Malformed(e.to_string()))?;
        let n = r.u64("layer count")? as usize;
        let mut params = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            params.push(match r.u8("layer flag")? {
                0 => None,
                1 => {
                    let rows = r.u64("rows")? as usize;
                    let cols = r.u64("cols")? as usize;
                    let w = Array2::from_shape_vec((rows, cols), r.f64s("weights")?)
                        .map_err(|e| CodecError::Malformed(e.to_string()))?;
                    let b = Array1::from(r.f64s("biases")?);
                    Some(Dense { w, b })
                }
                f => return Err(CodecError::Malformed(format!("layer flag {f}")).into()),
            });
        }
        let train_ids = match r.u8("train id flag")? {
            0 => None,
            1 => Some(IdSet::from_sorted(r.u64s("train ids")?).map_err(|e| CodecError::Malformed(e.to_string()))?),
            f => return Err(CodecError::Malformed(format!("train id flag {f}")).into()),
        };
        let seed = r.u64("seed")?;
        FeatureExtractor::from_parts(arch, params, train_ids, seed)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_to(&mut w);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FeatureExtractor, NnError> {
        let mut r = Reader::new(bytes);
        let fe = Self::read_from(&mut r)?;
        if !r.is_at_end() {
            return Err(CodecError::Malformed("trailing bytes".into()).into());
        }
        Ok(fe)
    }
}
