use std::path::Path;

use crate::dataio::{read_file, verify_crc, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::features::RobustScalerParams;
use crate::model::arch::{ArchConfig, ARCH_FORMAT_VERSION};
use crate::model::network::AttentionBiGru;
use crate::nn::{Activation, Parameterized, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"HHIW";
pub const WEIGHTS_VERSION: u16 = 1;
pub const WEIGHTS_EXTENSION: &str = "weights";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// A trained fold: architecture snapshot, the scaler the model was trained
/// with, and every parameter at 32-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub fold: u32,
    pub arch: ArchConfig,
    pub scaler: Option<RobustScalerParams>,
    pub tensors: Vec<NamedArray>,
}

impl ModelWeights {
    pub fn from_model(model: &AttentionBiGru, fold: u32, scaler: Option<RobustScalerParams>) -> Self {
        let tensors = model
            .params()
            .iter()
            .map(|p| NamedArray {
                name: p.name.clone(),
                shape: p.value.shape.clone(),
                data: p.value.data.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Self {
            fold,
            arch: model.arch.clone(),
            scaler,
            tensors,
        }
    }

    /// Compare the stored tensors with the shapes `arch` requires, naming the
    /// first layer that differs.
    pub fn check_arch(&self, arch: &ArchConfig) -> Result<()> {
        let expected = arch.param_shapes()?;
        for (name, shape) in &expected {
            match self.tensors.iter().find(|t| &t.name == name) {
                None => return Err(Error::shape(format!("layer {name}: missing from weight file"))),
                Some(t) if &t.shape != shape => {
                    return Err(Error::shape(format!("layer {name}: expected {shape:?}, found {:?}", t.shape)))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self.tensors.iter().find(|t| !expected.iter().any(|(n, _)| n == &t.name)) {
            return Err(Error::shape(format!("layer {}: not part of the architecture", extra.name)));
        }
        Ok(())
    }

    pub fn to_model(&self) -> Result<AttentionBiGru> {
        self.check_arch(&self.arch)?;
        let mut model = AttentionBiGru::build(&self.arch, 0)?;
        let named: Vec<(String, Tensor)> = self
            .tensors
            .iter()
            .map(|t| {
                let data = t.data.iter().map(|&v| v as f64).collect();
                Tensor::from_vec(&t.shape, data).map(|x| (t.name.clone(), x))
            })
            .collect::<Result<_>>()?;
        model.load_params(&named)?;
        Ok(model)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let u32_of = |v: usize| u32::try_from(v).map_err(|_| Error::format(format!("{v} does not fit in u32")));
        let a = &self.arch;
        let mut w = ByteWriter::default();
        w.bytes(WEIGHTS_MAGIC);
        w.u16(WEIGHTS_VERSION);
        w.u32(self.fold);
        for v in [
            a.seq_len,
            a.feature_dim,
            a.bigru1_units,
            a.bigru2_units,
            a.heads,
            a.key_dim,
            a.dense_units,
            a.classes,
            a.scale_factor,
        ] {
            w.u32(u32_of(v)?);
        }
        a.dropouts.iter().for_each(|&d| w.f64(d));
        a.skip_weights.iter().for_each(|&s| w.f64(s));
        w.u8(match a.dense_activation {
            Activation::None => 0,
            Activation::Relu => 1,
            Activation::Softmax => 2,
        });
        match &self.scaler {
            None => w.u32(0),
            Some(s) => {
                w.u32(u32_of(s.len())?);
                s.median.iter().for_each(|&v| w.f64(v));
                s.iqr.iter().for_each(|&v| w.f64(v));
                s.degenerate.iter().for_each(|&d| w.u8(d as u8));
            }
        }
        w.u32(u32_of(self.tensors.len())?);
        for t in &self.tensors {
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(Error::shape(format!("layer {}: data does not match shape {:?}", t.name, t.shape)));
            }
            w.str16(&t.name)?;
            w.u8(u8::try_from(t.shape.len()).map_err(|_| Error::format("too many dimensions"))?);
            for &d in &t.shape {
                w.u32(u32_of(d)?);
            }
            t.data.iter().for_each(|&v| w.f32(v));
        }
        Ok(w.finish())
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        if r.take(4)? != WEIGHTS_MAGIC {
            return Err(Error::format("not a weight file (bad magic)"));
        }
        let version = r.u16()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Version { found: version, expected: WEIGHTS_VERSION });
        }
        verify_crc(buf)?;
        let fold = r.u32()?;
        let mut dims = [0usize; 9];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let dropouts = [r.f64()?, r.f64()?, r.f64()?];
        let skip_weights = [r.f64()?, r.f64()?];
        let dense_activation = match r.u8()? {
            0 => Activation::None,
            1 => Activation::Relu,
            2 => Activation::Softmax,
            c => return Err(Error::format(format!("unknown activation code {c}"))),
        };
        let arch = ArchConfig {
            version: ARCH_FORMAT_VERSION,
            seq_len: dims[0],
            feature_dim: dims[1],
            bigru1_units: dims[2],
            bigru2_units: dims[3],
            heads: dims[4],
            key_dim: dims[5],
            dense_units: dims[6],
            classes: dims[7],
            dropouts,
            skip_weights,
            dense_activation,
            scale_factor: dims[8],
        };
        let n = r.u32()? as usize;
        let scaler = if n == 0 {
            None
        } else {
            let median = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let iqr = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let degenerate = (0..n)
                .map(|_| match r.u8()? {
                    0 => Ok(false),
                    1 => Ok(true),
                    c => Err(Error::format(format!("invalid scaler flag {c}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            Some(RobustScalerParams { median, iqr, degenerate })
        };
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.str16()?;
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(len.checked_mul(4).ok_or_else(|| Error::format("tensor too large"))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            tensors.push(NamedArray { name, shape, data });
        }
        if r.pos() + 4 != buf.len() {
            return Err(Error::format("trailing data after the last tensor"));
        }
        Ok(Self { fold, arch, scaler, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?).map_err(|e| e.at(path))
    }
}

/// `*.weights` files of a directory in name order.
pub fn find_weight_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::from(e).at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == WEIGHTS_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}
