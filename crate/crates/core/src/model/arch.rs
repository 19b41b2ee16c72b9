use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::nn::Activation;

pub const ARCH_FORMAT_VERSION: u32 = 1;

/// Attention-BiGRU architecture. Unit counts are the full-scale values;
/// `scale_factor` shrinks them for desk-scale runs (see [`ArchConfig::effective`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub version: u32,
    pub seq_len: usize,
    pub feature_dim: usize,
    pub bigru1_units: usize,
    pub bigru2_units: usize,
    pub heads: usize,
    pub key_dim: usize,
    pub dense_units: usize,
    pub classes: usize,
    /// After BiGRU 1, after BiGRU 2, after the dense layer.
    pub dropouts: [f64; 3],
    /// (pre-attention, attention) weights of the skip addition.
    pub skip_weights: [f64; 2],
    pub dense_activation: Activation,
    pub scale_factor: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            version: ARCH_FORMAT_VERSION,
            seq_len: 1560,
            feature_dim: 366,
            bigru1_units: 1024,
            bigru2_units: 512,
            heads: 8,
            key_dim: 64,
            dense_units: 512,
            classes: NUM_CLASSES,
            dropouts: [0.3, 0.3, 0.2],
            skip_weights: [0.7, 0.3],
            dense_activation: Activation::Relu,
            scale_factor: 1,
        }
    }
}

/// Layer sizes after applying the scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectiveDims {
    pub seq_len: usize,
    pub feature_dim: usize,
    pub bigru1_units: usize,
    pub bigru2_units: usize,
    pub heads: usize,
    pub key_dim: usize,
    pub dense_units: usize,
    pub classes: usize,
}

impl EffectiveDims {
    pub fn bigru1_out(&self) -> usize {
        2 * self.bigru1_units
    }

    pub fn bigru2_out(&self) -> usize {
        2 * self.bigru2_units
    }

    pub fn concat_width(&self) -> usize {
        self.dense_units + self.bigru2_out()
    }
}

impl ArchConfig {
    pub fn full_scale() -> Self {
        Self::default()
    }

    /// 156-packet sequences with units divided by 16.
    pub fn desk() -> Self {
        Self {
            seq_len: 156,
            scale_factor: 16,
            ..Self::default()
        }
    }

    /// Units and dense width are divided by `scale_factor`; heads and key
    /// dimension by `⌊√scale_factor⌋`.
    pub fn effective(&self) -> Result<EffectiveDims> {
        self.validate()?;
        let sf = self.scale_factor;
        let root = ((sf as f64).sqrt().floor() as usize).max(1);
        let scaled = |name: &str, v: usize| -> Result<usize> {
            let s = v / sf;
            if s < 4 {
                return Err(Error::domain(format!("{name} {v} / scale factor {sf} = {s} is below 4")));
            }
            Ok(s)
        };
        Ok(EffectiveDims {
            seq_len: self.seq_len,
            feature_dim: self.feature_dim,
            bigru1_units: scaled("bigru1_units", self.bigru1_units)?,
            bigru2_units: scaled("bigru2_units", self.bigru2_units)?,
            heads: (self.heads / root).max(1),
            key_dim: (self.key_dim / root).max(1),
            dense_units: scaled("dense_units", self.dense_units)?,
            classes: self.classes,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != ARCH_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "architecture version {} (expected {ARCH_FORMAT_VERSION})",
                self.version
            )));
        }
        let counts = [
            ("seq_len", self.seq_len),
            ("feature_dim", self.feature_dim),
            ("bigru1_units", self.bigru1_units),
            ("bigru2_units", self.bigru2_units),
            ("heads", self.heads),
            ("key_dim", self.key_dim),
            ("dense_units", self.dense_units),
            ("scale_factor", self.scale_factor),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::domain(format!("{name} must be >= 1")));
        }
        if self.classes != NUM_CLASSES {
            return Err(Error::domain(format!("classes must be {NUM_CLASSES}, got {}", self.classes)));
        }
        if let Some(d) = self.dropouts.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(Error::domain(format!("dropout ratio {d} outside [0, 1)")));
        }
        if self.skip_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::domain("skip weights must be finite"));
        }
        if self.dense_activation == Activation::Softmax {
            return Err(Error::domain("the hidden dense layer cannot use softmax"));
        }
        Ok(())
    }

    /// Every parameter name and shape, in the canonical order used by the
    /// network and the weight bundle.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let d = self.effective()?;
        let mut out = Vec::new();
        let mut gru = |layer: &str, input: usize, units: usize| {
            for dir in ["fwd", "bwd"] {
                for gate in ["u", "r", "h"] {
                    out.push((format!("{layer}.{dir}.w1_{gate}"), vec![input, units]));
                    out.push((format!("{layer}.{dir}.w2_{gate}"), vec![units, units]));
                    out.push((format!("{layer}.{dir}.b_{gate}"), vec![units]));
                }
            }
        };
        gru("bigru1", d.feature_dim, d.bigru1_units);
        gru("bigru2", d.bigru1_out(), d.bigru2_units);
        let (m, hk) = (d.bigru2_out(), d.heads * d.key_dim);
        for w in ["w_query", "w_key", "w_value"] {
            out.push((format!("attention.{w}"), vec![m, hk]));
        }
        out.push(("attention.w_final".into(), vec![hk, m]));
        out.push(("dense.weight".into(), vec![m, d.dense_units]));
        out.push(("dense.bias".into(), vec![d.dense_units]));
        out.push(("output.weight".into(), vec![d.concat_width(), d.classes]));
        out.push(("output.bias".into(), vec![d.classes]));
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.param_shapes()?.iter().map(|(_, s)| s.iter().product::<usize>()).sum())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("architecture: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_toml(&text).map_err(|e| e.at(path))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("architecture serializes")
    }
}
