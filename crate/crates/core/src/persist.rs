//! Versioned weight documents for the VAE and PCA models.
//!
//! A document is a single JSON object:
//!
//! ```text
//! { "format": "entity-embed/vae", "version": 1, "seed": 7,
//!   "hyper": {...}, "meta": {...},
//!   "blocks": [ { "name": "enc_w", "shape": [256, 1600], "data": [...] }, ... ] }
//! ```
//!
//! Reals are written in shortest round-trip form and parsed with correct
//! rounding, so `load(save(m))` reproduces every weight bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::PcaModel;
use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::vae::{Dense, VaeHyper, VaeModel, VaeParams, BLOCK_NAMES};

pub const FORMAT_VERSION: u32 = 1;
pub const VAE_FORMAT: &str = "entity-embed/vae";
pub const PCA_FORMAT: &str = "entity-embed/pca";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDocument {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub hyper: Value,
    /// Free-form provenance (training settings, resolved run configuration).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
    pub blocks: Vec<WeightBlock>,
}

impl WeightDocument {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WeightDocument = serde_json::from_str(text)?;
        if doc.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported document version {} (expected {FORMAT_VERSION})",
                doc.version
            )));
        }
        for b in &doc.blocks {
            let expected: usize = b.shape.iter().product();
            if expected != b.data.len() {
                return Err(Error::Format(format!(
                    "block `{}` declares shape {:?} but holds {} values",
                    b.name,
                    b.shape,
                    b.data.len()
                )));
            }
            if b.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("block `{}` holds non-finite values", b.name)));
            }
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn expect_format(&self, format: &str) -> Result<()> {
        if self.format != format {
            return Err(Error::Format(format!(
                "expected a `{format}` document, found `{}`",
                self.format
            )));
        }
        Ok(())
    }

    fn take_block(&self, idx: usize, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let b = self
            .blocks
            .get(idx)
            .ok_or_else(|| Error::Format(format!("missing block `{name}`")))?;
        if b.name != name {
            return Err(Error::Format(format!("block {idx} is `{}`, expected `{name}`", b.name)));
        }
        if b.shape != shape {
            return Err(Error::Format(format!(
                "block `{name}` has shape {:?}, hyperparameters require {shape:?}",
                b.shape
            )));
        }
        Ok(&b.data)
    }
}

impl VaeModel {
    pub fn to_document(&self, meta: Option<Value>) -> Result<WeightDocument> {
        Ok(WeightDocument {
            format: VAE_FORMAT.into(),
            version: FORMAT_VERSION,
            seed: Some(self.seed),
            hyper: serde_json::to_value(self.hyper)?,
            meta,
            blocks: self
                .params
                .blocks()
                .into_iter()
                .map(|(name, shape, data)| WeightBlock { name: name.into(), shape, data: data.to_vec() })
                .collect(),
        })
    }

    pub fn from_document(doc: &WeightDocument) -> Result<Self> {
        doc.expect_format(VAE_FORMAT)?;
        let hyper: VaeHyper = serde_json::from_value(doc.hyper.clone())?;
        hyper.validate()?;
        if doc.blocks.len() != BLOCK_NAMES.len() {
            return Err(Error::Format(format!(
                "VAE document has {} blocks, expected {}",
                doc.blocks.len(),
                BLOCK_NAMES.len()
            )));
        }
        let VaeHyper { input_size: d, hidden_size: h, latent_size: l, .. } = hyper;
        let dims = [(h, d), (l, h), (l, h), (h, l), (d, h)];
        let mut layers = Vec::with_capacity(5);
        for (i, (out, inp)) in dims.into_iter().enumerate() {
            let w = doc.take_block(2 * i, BLOCK_NAMES[2 * i], &[out, inp])?;
            let b = doc.take_block(2 * i + 1, BLOCK_NAMES[2 * i + 1], &[out])?;
            layers.push(Dense { w: Matrix::from_vec(out, inp, w.to_vec())?, b: b.to_vec() });
        }
        let mut it = layers.into_iter();
        let mut next = || it.next().expect("five layers");
        let params = VaeParams {
            enc: next(),
            mu: next(),
            logvar: next(),
            dec_hidden: next(),
            dec_out: next(),
        };
        Ok(VaeModel { hyper, seed: doc.seed.unwrap_or(0), params })
    }

    pub fn save_json(&self, meta: Option<Value>) -> Result<String> {
        self.to_document(meta)?.to_json()
    }

    pub fn load_json(text: &str) -> Result<Self> {
        Self::from_document(&WeightDocument::from_json(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PcaHyper {
    components: usize,
    dim: usize,
}

impl PcaModel {
    pub fn to_document(&self, meta: Option<Value>) -> Result<WeightDocument> {
        let (k, d) = self.components.shape();
        Ok(WeightDocument {
            format: PCA_FORMAT.into(),
            version: FORMAT_VERSION,
            seed: None,
            hyper: serde_json::to_value(PcaHyper { components: k, dim: d })?,
            meta,
            blocks: vec![
                WeightBlock { name: "mean".into(), shape: vec![d], data: self.mean.clone() },
                WeightBlock {
                    name: "components".into(),
                    shape: vec![k, d],
                    data: self.components.data().to_vec(),
                },
                WeightBlock {
                    name: "explained_variance".into(),
                    shape: vec![k],
                    data: self.explained_variance.clone(),
                },
            ],
        })
    }

    pub fn from_document(doc: &WeightDocument) -> Result<Self> {
        doc.expect_format(PCA_FORMAT)?;
        let PcaHyper { components: k, dim: d } = serde_json::from_value(doc.hyper.clone())?;
        let mean = doc.take_block(0, "mean", &[d])?.to_vec();
        let comps = doc.take_block(1, "components", &[k, d])?.to_vec();
        let explained_variance = doc.take_block(2, "explained_variance", &[k])?.to_vec();
        Ok(PcaModel { mean, components: Matrix::from_vec(k, d, comps)?, explained_variance })
    }
}
