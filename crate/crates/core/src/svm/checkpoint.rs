//! Binary SVM container: `MAXRR-SVM`, version, solver config, training IDs,
//! then per class the multipliers, labels, support IDs, bias, weights and C,
//! and finally the optional Platt parameters. All floats little-endian f64.

use ndarray::Array1;

use super::binary::BinarySvm;
use super::kernel::KernelKind;
use super::platt::PlattParams;
use super::{OvrSvm, SvmConfig, SvmError};
use crate::codec::{CodecError, Reader, Writer};
use crate::data::IdSet;

const MAGIC: &str = "MAXRR-SVM";
const VERSION: u32 = 1;

fn ids(v: Vec<u64>) -> Result<IdSet, CodecError> {
    IdSet::from_sorted(v).map_err(|e| CodecError::Malformed(e.to_string()))
}

impl OvrSvm {
    pub fn write_to(&self, w: &mut Writer) {
        w.bytes(MAGIC.as_bytes());
        w.u32(VERSION);
        w.f64(self.config.c);
        w.f64(self.config.tol);
        w.u64(self.config.max_passes as u64);
        w.f64(self.config.alpha_tol);
        w.u8(self.config.kernel.tag());
        w.u64s(self.train_ids.as_slice());
        w.u64(self.models.len() as u64);
        for m in &self.models {
            w.f64s(&m.alphas);
            w.u64(m.signs.len() as u64);
            w.bytes(&m.signs.iter().map(|&s| s as u8).collect::<Vec<_>>());
            w.u64s(m.support_ids.as_slice());
            w.f64(m.bias);
            w.f64s(m.w.as_slice().expect("contiguous"));
            w.f64(m.c);
            w.u8(m.kernel.tag());
            w.u64(m.iterations as u64);
        }
        match &self.platt {
            None => w.u8(0),
            Some(ps) => {
                w.u8(1);
                for p in ps {
                    w.f64(p.a);
                    w.f64(p.b);
                }
            }
        }
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<OvrSvm, SvmError> {
        r.expect_magic(MAGIC)?;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CodecError::Version(version).into());
        }
        let kernel_of = |t: u8| KernelKind::from_tag(t).ok_or_else(|| CodecError::Malformed(format!("kernel tag {t}")));
        let config = SvmConfig {
            c: r.f64("c")?,
            tol: r.f64("tol")?,
            max_passes: r.u64("max passes")? as usize,
            alpha_tol: r.f64("alpha tol")?,
            kernel: kernel_of(r.u8("kernel")?)?,
        };
        let train_ids = ids(r.u64s("train ids")?)?;
        let n = r.u64("class count")? as usize;
        if n < 2 || n > 1 << 16 {
            return Err(CodecError::Malformed(format!("{n} classes")).into());
        }
        let mut models = Vec::with_capacity(n);
        for _ in 0..n {
            let alphas = r.f64s("alphas")?;
            let ns = r.u64("sign count")? as usize;
            if ns != alphas.len() || ns != train_ids.len() {
                return Err(CodecError::Malformed("alpha/sign/id counts differ".into()).into());
            }
            let mut signs = Vec::with_capacity(ns);
            for _ in 0..ns {
                signs.push(match r.u8("sign")? as i8 {
                    s @ (1 | -1) => s,
                    s => return Err(CodecError::Malformed(format!("label sign {s}")).into()),
                });
            }
            let support_ids = ids(r.u64s("support ids")?)?;
            let bias = r.f64("bias")?;
            let w = Array1::from(r.f64s("weights")?);
            let c = r.f64("c")?;
            let kernel = kernel_of(r.u8("kernel")?)?;
            let iterations = r.u64("iterations")? as usize;
            models.push(BinarySvm {
                train_ids: train_ids.clone(),
                alphas,
                signs,
                support_ids,
                bias,
                w,
                c,
                kernel,
                iterations,
            });
        }
        let platt = match r.u8("platt flag")? {
            0 => None,
            1 => Some(
                (0..n)
                    .map(|_| Ok(PlattParams { a: r.f64("platt a")?, b: r.f64("platt b")? }))
                    .collect::<Result<Vec<_>, CodecError>>()?,
            ),
            f => return Err(CodecError::Malformed(format!("platt flag {f}")).into()),
        };
        Ok(OvrSvm { models, platt, train_ids, config })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_to(&mut w);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<OvrSvm, SvmError> {
        let mut r = Reader::new(bytes);
        let m = Self::read_from(&mut r)?;
        if !r.is_at_end() {
            return Err(CodecError::Malformed("trailing bytes".into()).into());
        }
        Ok(m)
    }
}
