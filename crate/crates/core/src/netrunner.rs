//! Toy network execution and threshold sweeps.
//!
//! Fully-connected and convolution layers run as filtered matvecs (conv via
//! im2col lowering), on either the reference model or the accelerator
//! simulator. Sparsity is measured per layer on the actual activations, so
//! zeros produced by earlier ReLUs show up in later layers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixedpoint::{relu_scalar, FixedFormat, WideAccumulator};
use crate::metrics::EventCounters;
use crate::nzacore::{threshold_from_magnitude, NzThreshold, SkipMode};
use crate::refmodel::{filtered_preactivations, measure_sparsity, FixedVector, SparsityStats, WeightMatrix};
use crate::sim::{run_matvec, AcceleratorConfig};

pub mod io;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Chw { c: usize, h: usize, w: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Chw { c, h, w } => c * h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conv2d {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    /// Raw weights laid out `[out][in][kh][kw]`.
    pub weights: Vec<i32>,
    pub bias: Option<Vec<i32>>,
}

impl Conv2d {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let Shape::Chw { c, h, w } = input else {
            return Err(Error::ShapeMismatch("conv2d needs a CxHxW input".into()));
        };
        if c != self.in_channels {
            return Err(Error::ShapeMismatch(format!("conv2d expects {} channels, got {c}", self.in_channels)));
        }
        if self.stride == 0 || self.kernel_h == 0 || self.kernel_w == 0 || self.out_channels == 0 {
            return Err(Error::ShapeMismatch("conv2d stride, kernel and channel counts must be positive".into()));
        }
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} kernel larger than padded {ph}x{pw} input",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok(Shape::Chw {
            c: self.out_channels,
            h: (ph - self.kernel_h) / self.stride + 1,
            w: (pw - self.kernel_w) / self.stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }
}

/// im2col gather plan: for each output position, the flat input index of
/// every patch element, `None` where the patch overlaps the padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Im2colPlan {
    pub out_h: usize,
    pub out_w: usize,
    pub patches: Vec<Vec<Option<usize>>>,
}

impl Im2colPlan {
    pub fn gather(&self, pos: usize, input: &FixedVector) -> FixedVector {
        let data = self.patches[pos].iter().map(|i| i.map_or(0, |i| input.raw()[i])).collect();
        FixedVector::from_raw(data, input.format()).expect("gathered values come from a valid vector")
    }
}

/// Lowers a convolution to one `out_channels x (in*kh*kw)` matvec per
/// output position.
pub fn lower_conv(conv: &Conv2d, input: Shape, fmt: FixedFormat) -> Result<(WeightMatrix, Im2colPlan)> {
    let Shape::Chw { c: out_c, h: out_h, w: out_w } = conv.output_shape(input)? else {
        unreachable!("conv output is always CxHxW")
    };
    let Shape::Chw { h, w, .. } = input else { unreachable!() };
    if conv.weights.len() != out_c * conv.patch_len() {
        return Err(Error::ShapeMismatch(format!(
            "conv2d needs {} weights, got {}",
            out_c * conv.patch_len(),
            conv.weights.len()
        )));
    }
    let matrix = WeightMatrix::from_raw(out_c, conv.patch_len(), conv.weights.clone(), fmt)?;
    let mut patches = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        for ox in 0..out_w {
            let mut patch = Vec::with_capacity(conv.patch_len());
            for ic in 0..conv.in_channels {
                for ky in 0..conv.kernel_h {
                    for kx in 0..conv.kernel_w {
                        let iy = (oy * conv.stride + ky).checked_sub(conv.padding).filter(|&y| y < h);
                        let ix = (ox * conv.stride + kx).checked_sub(conv.padding).filter(|&x| x < w);
                        patch.push(iy.zip(ix).map(|(y, x)| (ic * h + y) * w + x));
                    }
                }
            }
            patches.push(patch);
        }
    }
    Ok((matrix, Im2colPlan { out_h, out_w, patches }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    FullyConnected { weights: WeightMatrix, bias: Option<FixedVector> },
    Relu,
    Conv2d(Conv2d),
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::FullyConnected { .. } => "fc",
            Layer::Relu => "relu",
            Layer::Conv2d(_) => "conv",
            Layer::Flatten => "flatten",
        }
    }

    pub fn is_matvec(&self) -> bool {
        matches!(self, Layer::FullyConnected { .. } | Layer::Conv2d(_))
    }
}

/// A lowered layer ready to execute.
#[derive(Debug, Clone)]
enum Stage {
    Fc { weights: WeightMatrix, bias: Option<Vec<i32>> },
    Relu,
    Conv { weights: WeightMatrix, plan: Im2colPlan, bias: Option<Vec<i32>> },
    Reshape,
}

#[derive(Debug, Clone)]
pub struct LayerGraph {
    format: FixedFormat,
    input_shape: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    stages: Vec<Stage>,
}

impl LayerGraph {
    pub fn new(format: FixedFormat, input_shape: Shape, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("graph has no layers".into()));
        }
        let mut shape = input_shape;
        let mut shapes = Vec::with_capacity(layers.len());
        let mut stages = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let ctx = |e: Error| match e {
                Error::ShapeMismatch(m) => Error::ShapeMismatch(format!("layer {i} ({}): {m}", layer.kind())),
                other => other,
            };
            let (next, stage) = match layer {
                Layer::FullyConnected { weights, bias } => {
                    format.ensure_same(&weights.format())?;
                    if weights.cols() != shape.len() {
                        return Err(ctx(Error::ShapeMismatch(format!(
                            "expects {} inputs, previous layer yields {}",
                            weights.cols(),
                            shape.len()
                        ))));
                    }
                    let bias = match bias {
                        Some(b) if b.len() != weights.rows() => {
                            return Err(ctx(Error::ShapeMismatch(format!(
                                "bias has {} entries for {} rows",
                                b.len(),
                                weights.rows()
                            ))))
                        }
                        Some(b) => {
                            format.ensure_same(&b.format())?;
                            Some(b.raw().to_vec())
                        }
                        None => None,
                    };
                    (Shape::Flat(weights.rows()), Stage::Fc { weights: weights.clone(), bias })
                }
                Layer::Relu => (shape, Stage::Relu),
                Layer::Flatten => (Shape::Flat(shape.len()), Stage::Reshape),
                Layer::Conv2d(conv) => {
                    let (weights, plan) = lower_conv(conv, shape, format).map_err(ctx)?;
                    if let Some(b) = &conv.bias {
                        if b.len() != conv.out_channels {
                            return Err(ctx(Error::ShapeMismatch(format!(
                                "bias has {} entries for {} channels",
                                b.len(),
                                conv.out_channels
                            ))));
                        }
                        if let Some(&bad) = b.iter().find(|&&v| !format.contains(v as i64)) {
                            return Err(Error::RawOutOfRange { raw: bad as i64, bits: format.bits() });
                        }
                    }
                    let out = conv.output_shape(shape).map_err(ctx)?;
                    (out, Stage::Conv { weights, plan, bias: conv.bias.clone() })
                }
            };
            shapes.push(next);
            stages.push(stage);
            shape = next;
        }
        Ok(Self { format, input_shape, layers, shapes, stages })
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("graph is non-empty")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Report label of layer `i`, e.g. `fc2`.
    pub fn layer_name(&self, i: usize) -> String {
        format!("{}{i}", self.layers[i].kind())
    }

    /// Same weights reinterpreted in another format.
    pub fn with_format(&self, format: FixedFormat) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(match l {
                    Layer::FullyConnected { weights, bias } => Layer::FullyConnected {
                        weights: weights.with_format(format)?,
                        bias: bias.as_ref().map(|b| b.with_format(format)).transpose()?,
                    },
                    other => other.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(format, self.input_shape, layers)
    }

    /// Runs one input through the graph.
    pub fn forward(&self, input: &FixedVector, modes: &ModeSchedule, engine: Engine) -> Result<ForwardResult> {
        forward(self, input, modes, engine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Reference,
    Simulator,
    /// Runs both and fails on any difference.
    CrossCheck,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ref" | "reference" => Ok(Engine::Reference),
            "sim" | "simulator" => Ok(Engine::Simulator),
            "check" | "crosscheck" => Ok(Engine::CrossCheck),
            _ => Err(Error::InvalidInput(format!("unknown engine `{s}`"))),
        }
    }
}

/// One global skip mode with optional per-layer overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSchedule {
    pub default: SkipMode,
    pub overrides: BTreeMap<usize, SkipMode>,
}

impl ModeSchedule {
    pub fn mode_for(&self, layer: usize) -> SkipMode {
        self.overrides.get(&layer).copied().unwrap_or(self.default)
    }
}

impl From<SkipMode> for ModeSchedule {
    fn from(default: SkipMode) -> Self {
        Self { default, overrides: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub index: usize,
    pub name: String,
    pub stats: SparsityStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub output: FixedVector,
    pub layers: Vec<LayerStats>,
    /// Simulator events; zero on the reference engine.
    pub events: EventCounters,
    pub cycles: u64,
}

impl ForwardResult {
    pub fn total(&self) -> SparsityStats {
        self.layers.iter().fold(SparsityStats::default(), |a, l| a + l.stats)
    }
}

struct MatvecOut {
    accumulators: Vec<WideAccumulator>,
    events: EventCounters,
    cycles: u64,
}

fn run_engine(w: &WeightMatrix, x: &FixedVector, mode: SkipMode, engine: Engine) -> Result<MatvecOut> {
    let reference = || filtered_preactivations(w, x, mode);
    let simulate = || run_matvec(w, x, &AcceleratorConfig::new(mode, w.format()), false);
    match engine {
        Engine::Reference => Ok(MatvecOut { accumulators: reference()?, events: EventCounters::default(), cycles: 0 }),
        Engine::Simulator => {
            let run = simulate()?;
            Ok(MatvecOut { accumulators: run.accumulators, events: run.events, cycles: run.stats.total_cycles })
        }
        Engine::CrossCheck => {
            let run = simulate()?;
            let golden = reference()?;
            if run.accumulators != golden {
                return Err(Error::EngineMismatch(format!(
                    "simulator and reference disagree on a {}x{} matvec under {mode}",
                    w.rows(),
                    w.cols()
                )));
            }
            Ok(MatvecOut { accumulators: run.accumulators, events: run.events, cycles: run.stats.total_cycles })
        }
    }
}

fn finish_outputs(accs: Vec<WideAccumulator>, bias: Option<&[i32]>, fmt: FixedFormat) -> Result<Vec<i32>> {
    accs.into_iter()
        .enumerate()
        .map(|(i, acc)| {
            let acc = match bias {
                Some(b) => acc.add_raw((b[i] as i128) << fmt.frac())?,
                None => acc,
            };
            Ok(acc.to_fixed(fmt).raw())
        })
        .collect()
}

pub fn forward(graph: &LayerGraph, input: &FixedVector, modes: &ModeSchedule, engine: Engine) -> Result<ForwardResult> {
    let fmt = graph.format;
    fmt.ensure_same(&input.format())?;
    if input.len() != graph.input_shape.len() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} elements, graph expects {}",
            input.len(),
            graph.input_shape.len()
        )));
    }
    let mut act = input.clone();
    let mut layers = Vec::new();
    let mut events = EventCounters::default();
    let mut cycles = 0;
    for (i, stage) in graph.stages.iter().enumerate() {
        let mode = modes.mode_for(i);
        match stage {
            Stage::Fc { weights, bias } => {
                let stats = measure_sparsity(weights, &act, mode)?;
                let out = run_engine(weights, &act, mode, engine)?;
                events += out.events;
                cycles += out.cycles;
                act = FixedVector::from_raw(finish_outputs(out.accumulators, bias.as_deref(), fmt)?, fmt)?;
                layers.push(LayerStats { index: i, name: graph.layer_name(i), stats });
            }
            Stage::Conv { weights, plan, bias } => {
                let positions = plan.out_h * plan.out_w;
                let mut out = vec![0i32; weights.rows() * positions];
                let mut stats = SparsityStats::default();
                for pos in 0..positions {
                    let patch = plan.gather(pos, &act);
                    stats += measure_sparsity(weights, &patch, mode)?;
                    let r = run_engine(weights, &patch, mode, engine)?;
                    events += r.events;
                    cycles += r.cycles;
                    let accs = r.accumulators;
                    for (oc, acc) in accs.into_iter().enumerate() {
                        let acc = match bias {
                            Some(b) => acc.add_raw((b[oc] as i128) << fmt.frac())?,
                            None => acc,
                        };
                        out[oc * positions + pos] = acc.to_fixed(fmt).raw();
                    }
                }
                act = FixedVector::from_raw(out, fmt)?;
                layers.push(LayerStats { index: i, name: graph.layer_name(i), stats });
            }
            Stage::Relu => {
                let data = act.iter().map(|v| relu_scalar(v).raw()).collect();
                act = FixedVector::from_raw(data, fmt)?;
            }
            Stage::Reshape => {}
        }
    }
    Ok(ForwardResult { output: act, layers, events, cycles })
}

/// Direct (non-lowered) convolution; the oracle for [`lower_conv`].
pub fn direct_conv(conv: &Conv2d, input: Shape, x: &FixedVector) -> Result<Vec<WideAccumulator>> {
    let Shape::Chw { c: oc_n, h: oh, w: ow } = conv.output_shape(input)? else { unreachable!() };
    let Shape::Chw { h, w, .. } = input else { unreachable!() };
    let mut out = Vec::with_capacity(oc_n * oh * ow);
    for oc in 0..oc_n {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = WideAccumulator::new(x.format());
                for ic in 0..conv.in_channels {
                    for ky in 0..conv.kernel_h {
                        for kx in 0..conv.kernel_w {
                            let iy = (oy * conv.stride + ky) as isize - conv.padding as isize;
                            let ix = (ox * conv.stride + kx) as isize - conv.padding as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let wv = conv.weights[((oc * conv.in_channels + ic) * conv.kernel_h + ky) * conv.kernel_w + kx];
                            let xv = x.raw()[(ic * h + iy as usize) * w + ix as usize];
                            acc = acc.accumulate(wv as i64 * xv as i64)?;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: FixedVector,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Level(u32),
    /// Real product magnitude, mapped with [`threshold_from_magnitude`].
    Magnitude(f64),
}

impl ThresholdSpec {
    pub fn resolve(&self, fmt: FixedFormat) -> Result<NzThreshold> {
        match *self {
            ThresholdSpec::Level(l) => NzThreshold::new(l, fmt),
            ThresholdSpec::Magnitude(t) => threshold_from_magnitude(t, fmt),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub thresholds: Vec<ThresholdSpec>,
    pub engine: Engine,
}

impl SweepConfig {
    /// Every level from `2N` down to 0.
    pub fn full_range(fmt: FixedFormat, engine: Engine) -> Self {
        Self { thresholds: (0..=2 * fmt.bits()).rev().map(ThresholdSpec::Level).collect(), engine }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mode: SkipMode,
    /// Requested magnitude, when the threshold was given as one.
    pub magnitude: Option<f64>,
    pub layers: Vec<LayerStats>,
    pub total: SparsityStats,
    pub accuracy: f64,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        match self.mode {
            SkipMode::NzSkip(t) => t.level().to_string(),
            other => other.to_string(),
        }
    }
}

fn kept_ratio(baseline: u64, kept: u64) -> f64 {
    if kept == 0 {
        if baseline == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        baseline as f64 / kept as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    /// The ZeroSkip run every reduction factor is relative to.
    pub baseline: SweepPoint,
    pub points: Vec<SweepPoint>,
}

impl SparsityReport {
    /// `kept(ZeroSkip) / kept(point)` over the whole model.
    pub fn reduction_factor(&self, point: &SweepPoint) -> f64 {
        kept_ratio(self.baseline.total.kept_pairs(), point.total.kept_pairs())
    }

    pub fn layer_reduction_factor(&self, point: &SweepPoint, layer: usize) -> f64 {
        kept_ratio(self.baseline.layers[layer].stats.kept_pairs(), point.layers[layer].stats.kept_pairs())
    }

    /// Accuracy drop vs the baseline, in percentage points.
    pub fn accuracy_drop_pp(&self, point: &SweepPoint) -> f64 {
        100.0 * (self.baseline.accuracy - point.accuracy)
    }

    /// `threshold,layer,nz_sparsity,zero_sparsity,kept_mults,reduction_factor,accuracy`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,layer,nz_sparsity,zero_sparsity,kept_mults,reduction_factor,accuracy\n");
        for p in std::iter::once(&self.baseline).chain(&self.points) {
            let label = p.label();
            for (li, l) in p.layers.iter().enumerate() {
                let rf = self.layer_reduction_factor(p, li);
                row(&mut out, &label, &l.name, &l.stats, rf, p.accuracy);
            }
            row(&mut out, &label, "total", &p.total, self.reduction_factor(p), p.accuracy);
        }
        out
    }
}

fn row(out: &mut String, label: &str, layer: &str, s: &SparsityStats, rf: f64, acc: f64) {
    let rf = if rf.is_finite() { format!("{rf:.6}") } else { "inf".to_string() };
    let _ = writeln!(
        out,
        "{label},{layer},{:.6},{:.6},{},{rf},{:.6}",
        s.nz_sparsity(),
        s.zero_sparsity(),
        s.kept_pairs(),
        acc
    );
}

fn evaluate(graph: &LayerGraph, data: &[Sample], mode: SkipMode, engine: Engine) -> Result<SweepPoint> {
    let mut layers: Vec<LayerStats> = Vec::new();
    let mut correct = 0usize;
    let schedule = ModeSchedule::from(mode);
    for s in data {
        let r = forward(graph, &s.input, &schedule, engine)?;
        if r.output.argmax() == Some(s.label) {
            correct += 1;
        }
        if layers.is_empty() {
            layers = r.layers;
        } else {
            for (acc, l) in layers.iter_mut().zip(r.layers) {
                acc.stats += l.stats;
            }
        }
    }
    let total = layers.iter().fold(SparsityStats::default(), |a, l| a + l.stats);
    Ok(SweepPoint { mode, magnitude: None, layers, total, accuracy: correct as f64 / data.len() as f64 })
}

/// Runs the ZeroSkip baseline and every configured threshold over the
/// labeled dataset. Points are evaluated in parallel and reported in
/// configuration order.
pub fn sweep(graph: &LayerGraph, data: &[Sample], cfg: &SweepConfig) -> Result<SparsityReport> {
    if data.is_empty() {
        return Err(Error::InvalidInput("sweep needs a non-empty labeled dataset".into()));
    }
    if cfg.thresholds.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one threshold".into()));
    }
    let fmt = graph.format();
    let modes = cfg
        .thresholds
        .iter()
        .map(|t| Ok((SkipMode::NzSkip(t.resolve(fmt)?), t)))
        .collect::<Result<Vec<_>>>()?;
    let baseline = evaluate(graph, data, SkipMode::ZeroSkip, cfg.engine)?;
    let points = modes
        .par_iter()
        .map(|(mode, spec)| {
            let mut p = evaluate(graph, data, *mode, cfg.engine)?;
            if let ThresholdSpec::Magnitude(t) = spec {
                p.magnitude = Some(*t);
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparsityReport { baseline, points })
}

/// Top-1 accuracy of the graph under one schedule.
pub fn accuracy(graph: &LayerGraph, data: &[Sample], modes: &ModeSchedule, engine: Engine) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty dataset".into()));
    }
    let mut correct = 0;
    for s in data {
        if forward(graph, &s.input, modes, engine)?.output.argmax() == Some(s.label) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
