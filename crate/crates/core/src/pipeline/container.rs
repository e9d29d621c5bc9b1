//! Model container: `MAXRR-MODEL`, version, JSON manifest, extractor
//! checkpoint, SVM checkpoint, corpus IDs and calibration pool.

use std::path::Path;

use super::{Manifest, PipelineError, SplitModel};
use crate::codec::{CodecError, Reader, Writer};
use crate::data::IdSet;
use crate::nn::FeatureExtractor;
use crate::svm::OvrSvm;

const MAGIC: &str = "MAXRR-MODEL";
const VERSION: u32 = 1;

impl SplitModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MAGIC.as_bytes());
        w.u32(VERSION);
        w.str(&serde_json::to_string(&self.manifest).expect("manifest serialises"));
        self.fe.write_to(&mut w);
        self.svm.write_to(&mut w);
        w.u64s(self.corpus_ids.as_slice());
        w.u64s(self.calib_pool.as_slice());
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SplitModel, PipelineError> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC)?;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CodecError::Version(version).into());
        }
        let manifest: Manifest =
            serde_json::from_str(&r.str("manifest")?).map_err(|e| CodecError::Malformed(e.to_string()))?;
        let fe = FeatureExtractor::read_from(&mut r)?;
        if fe.train_ids().is_none() {
            return Err(CodecError::Malformed("extractor has no training provenance".into()).into());
        }
        let svm = OvrSvm::read_from(&mut r)?;
        let ids = |v: Vec<u64>| IdSet::from_sorted(v).map_err(|e| CodecError::Malformed(e.to_string()));
        let corpus_ids = ids(r.u64s("corpus ids")?)?;
        let calib_pool = ids(r.u64s("calibration pool")?)?;
        if !r.is_at_end() {
            return Err(CodecError::Malformed("trailing bytes".into()).into());
        }
        Ok(SplitModel { fe, svm, corpus_ids, calib_pool, manifest })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<SplitModel, PipelineError> {
        let bytes = std::fs::read(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}
