//! JSON model, dataset and vector files.
//!
//! Model: `{"format":{"bits":16,"frac":8}, "input_shape":[c,h,w]?, "layers":[...]}`
//! with layers `{"type":"fc","rows","cols","weights","bias"}`, `{"type":"relu"}`,
//! `{"type":"flatten"}` and `{"type":"conv2d","out_channels","in_channels",
//! "kernel_h","kernel_w","stride","padding","weights","bias"}`. All numbers
//! are raw integers in the model format. `input_shape` defaults to the
//! first fc layer's `cols`.
//!
//! Dataset: `[{"input":[...], "label":k}, ...]`. Vector: `[...]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Conv2d, Layer, LayerGraph, Sample, Shape};
use crate::error::{Error, Result};
use crate::fixedpoint::FixedFormat;
use crate::refmodel::{FixedVector, WeightMatrix};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatFile {
    pub bits: u32,
    pub frac: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerFile {
    Fc {
        rows: usize,
        cols: usize,
        weights: Vec<i32>,
        #[serde(default)]
        bias: Option<Vec<i32>>,
    },
    Relu,
    Flatten,
    Conv2d {
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        weights: Vec<i32>,
        #[serde(default)]
        bias: Option<Vec<i32>>,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: FormatFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_shape: Option<Vec<usize>>,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFile {
    pub input: Vec<i32>,
    pub label: usize,
}

impl ModelFile {
    pub fn into_graph(self) -> Result<LayerGraph> {
        let fmt = FixedFormat::new(self.format.bits, self.format.frac)?;
        let input_shape = match self.input_shape.as_deref() {
            Some([n]) => Shape::Flat(*n),
            Some([c, h, w]) => Shape::Chw { c: *c, h: *h, w: *w },
            Some(other) => {
                return Err(Error::Malformed(format!("input_shape must have 1 or 3 entries, got {}", other.len())))
            }
            None => match self.layers.first() {
                Some(LayerFile::Fc { cols, .. }) => Shape::Flat(*cols),
                _ => return Err(Error::Malformed("input_shape is required unless the first layer is fc".into())),
            },
        };
        let layers = self
            .layers
            .into_iter()
            .map(|l| {
                Ok(match l {
                    LayerFile::Fc { rows, cols, weights, bias } => Layer::FullyConnected {
                        weights: WeightMatrix::from_raw(rows, cols, weights, fmt)?,
                        bias: bias.map(|b| FixedVector::from_raw(b, fmt)).transpose()?,
                    },
                    LayerFile::Relu => Layer::Relu,
                    LayerFile::Flatten => Layer::Flatten,
                    LayerFile::Conv2d {
                        out_channels,
                        in_channels,
                        kernel_h,
                        kernel_w,
                        stride,
                        padding,
                        weights,
                        bias,
                    } => Layer::Conv2d(Conv2d {
                        out_channels,
                        in_channels,
                        kernel_h,
                        kernel_w,
                        stride,
                        padding,
                        weights,
                        bias,
                    }),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LayerGraph::new(fmt, input_shape, layers)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Malformed(m) => Error::Malformed(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_model(json: &str) -> Result<LayerGraph> {
    serde_json::from_str::<ModelFile>(json)?.into_graph()
}

pub fn load_model(path: &Path) -> Result<LayerGraph> {
    in_file(path, parse_model(&read(path)?))
}

pub fn parse_dataset(json: &str, fmt: FixedFormat) -> Result<Vec<Sample>> {
    serde_json::from_str::<Vec<SampleFile>>(json)?
        .into_iter()
        .map(|s| Ok(Sample { input: FixedVector::from_raw(s.input, fmt)?, label: s.label }))
        .collect()
}

pub fn load_dataset(path: &Path, fmt: FixedFormat) -> Result<Vec<Sample>> {
    in_file(path, parse_dataset(&read(path)?, fmt))
}

pub fn parse_vector(json: &str, fmt: FixedFormat) -> Result<FixedVector> {
    FixedVector::from_raw(serde_json::from_str::<Vec<i32>>(json)?, fmt)
}

pub fn load_vector(path: &Path, fmt: FixedFormat) -> Result<FixedVector> {
    in_file(path, parse_vector(&read(path)?, fmt))
}

pub fn vector_to_json(v: &FixedVector) -> String {
    serde_json::to_string(v.raw()).expect("integer arrays always serialize")
}
