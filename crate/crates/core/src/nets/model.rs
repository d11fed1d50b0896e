use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{ConvRef, DenseRef, NodeId, NormRef, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Leaky-rectifier slope used by every hidden block.
pub const LEAK: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Instance,
    None,
}

/// Layer geometry shared by all model families.
///
/// `widths` has `levels + 1` entries: one per resolution from full size down
/// to `resolution / 2^levels`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub resolution: usize,
    pub widths: Vec<usize>,
    pub levels: usize,
    pub skips: bool,
    pub norm: NormKind,
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::contract("nets", m));
        if self.levels == 0 || self.levels > 8 {
            return bad(format!("levels {} outside 1..=8", self.levels));
        }
        if self.widths.len() != self.levels + 1 || self.widths.contains(&0) {
            return bad(format!(
                "need {} positive widths for {} levels, got {:?}",
                self.levels + 1,
                self.levels,
                self.widths
            ));
        }
        if self.resolution == 0 || !self.resolution.is_multiple_of(1 << self.levels) {
            return bad(format!(
                "resolution {} not divisible by 2^{}",
                self.resolution, self.levels
            ));
        }
        Ok(())
    }

    /// Desk-scale depth network: 4 encoder levels with skips.
    pub fn desk_depth() -> Self {
        Self {
            resolution: 64,
            widths: vec![8, 12, 16, 24, 32],
            levels: 4,
            skips: true,
            norm: NormKind::Instance,
        }
    }

    pub fn desk_translator() -> Self {
        Self {
            resolution: 64,
            widths: vec![8, 12, 16, 24],
            levels: 3,
            skips: true,
            norm: NormKind::Instance,
        }
    }

    /// Patch discriminator; 64×64 input gives an 8×8 score grid.
    pub fn desk_discriminator() -> Self {
        Self {
            resolution: 64,
            widths: vec![8, 16, 24, 32],
            levels: 3,
            skips: false,
            norm: NormKind::Instance,
        }
    }

    pub fn desk_classifier() -> Self {
        Self {
            resolution: 64,
            widths: vec![32, 32, 32, 32],
            levels: 3,
            skips: false,
            norm: NormKind::Instance,
        }
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    /// Image → normalized depth in [0, 1].
    Depth,
    /// Image → image in [0, 1].
    Translator,
    /// Image → grid of realness scores.
    Discriminator,
    /// `inputs`-channel image → class logits.
    Classifier { inputs: usize, classes: usize },
}

impl ModelKind {
    fn inputs(&self) -> usize {
        match self {
            ModelKind::Classifier { inputs, .. } => *inputs,
            _ => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Copy, Debug)]
struct Block {
    conv: ConvRef,
    norm: Option<NormRef>,
}

#[derive(Clone, Debug)]
enum Plan {
    Unet {
        enc: Vec<Block>,
        dec: Vec<Block>,
        head: ConvRef,
    },
    Patch {
        body: Vec<Block>,
        head: ConvRef,
    },
    Classifier {
        body: Vec<Block>,
        head: DenseRef,
    },
}

struct Layout {
    model: usize,
    norm: NormKind,
    specs: Vec<ParamSpec>,
    len: usize,
}

impl Layout {
    fn alloc(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.len;
        self.len += shape.iter().product::<usize>();
        self.specs.push(ParamSpec { name, shape, offset });
        offset
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, stride: usize) -> ConvRef {
        let weight = self.alloc(format!("{name}.weight"), vec![cout, cin, 3, 3]);
        let bias = self.alloc(format!("{name}.bias"), vec![cout]);
        ConvRef {
            model: self.model,
            weight,
            bias,
            cin,
            cout,
            stride,
        }
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, stride: usize, normed: bool) -> Block {
        let conv = self.conv(&format!("{name}.conv"), cin, cout, stride);
        let norm = (normed && self.norm == NormKind::Instance).then(|| {
            let gamma = self.alloc(format!("{name}.norm.scale"), vec![cout]);
            let beta = self.alloc(format!("{name}.norm.offset"), vec![cout]);
            NormRef {
                model: self.model,
                gamma,
                beta,
                channels: cout,
            }
        });
        Block { conv, norm }
    }

    fn dense(&mut self, name: &str, inputs: usize, outputs: usize) -> DenseRef {
        let weight = self.alloc(format!("{name}.weight"), vec![outputs, inputs]);
        let bias = self.alloc(format!("{name}.bias"), vec![outputs]);
        DenseRef {
            model: self.model,
            weight,
            bias,
            inputs,
            outputs,
        }
    }
}

fn plan(kind: ModelKind, arch: &ArchConfig, model: usize) -> (Plan, Vec<ParamSpec>, usize) {
    let mut lay = Layout {
        model,
        norm: arch.norm,
        specs: Vec::new(),
        len: 0,
    };
    let w = &arch.widths;
    let l = arch.levels;
    let plan = match kind {
        ModelKind::Depth | ModelKind::Translator => {
            let mut enc = vec![lay.block("enc0", kind.inputs(), w[0], 1, true)];
            for i in 1..=l {
                enc.push(lay.block(&format!("enc{i}"), w[i - 1], w[i], 2, true));
            }
            let mut dec = Vec::new();
            for i in (0..l).rev() {
                let cin = w[i + 1] + if arch.skips { w[i] } else { 0 };
                dec.push(lay.block(&format!("dec{i}"), cin, w[i], 1, true));
            }
            let out = if kind == ModelKind::Depth { 1 } else { 3 };
            let head = lay.conv("head", w[0], out, 1);
            Plan::Unet { enc, dec, head }
        }
        ModelKind::Discriminator | ModelKind::Classifier { .. } => {
            let mut body = Vec::new();
            let mut cin = kind.inputs();
            for (i, &wi) in w.iter().enumerate().take(l) {
                body.push(lay.block(&format!("down{i}"), cin, wi, 2, i > 0));
                cin = wi;
            }
            body.push(lay.block("mid", cin, w[l], 1, true));
            match kind {
                ModelKind::Classifier { classes, .. } => Plan::Classifier {
                    body,
                    head: lay.dense("head", w[l], classes),
                },
                _ => Plan::Patch {
                    body,
                    head: lay.conv("head", w[l], 1, 1),
                },
            }
        }
    };
    let len = lay.len;
    (plan, lay.specs, len)
}

fn run_block(tape: &mut Tape, x: NodeId, b: &Block) -> Result<NodeId> {
    let mut y = tape.conv(x, b.conv)?;
    if let Some(n) = b.norm {
        y = tape.norm(y, n)?;
    }
    Ok(tape.leaky(y, LEAK))
}

/// Named parameter tensors of one network, stored as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub seed: u64,
    pub specs: Vec<ParamSpec>,
    pub values: Vec<f64>,
}

impl ModelParams {
    /// Seeded initialization: He-normal convolution and dense weights, zero
    /// biases, unit norm scales, zero norm offsets.
    pub fn build(kind: ModelKind, arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        if let ModelKind::Classifier { inputs, classes } = kind {
            if inputs == 0 || classes < 2 {
                return Err(Error::contract("nets", "classifier needs inputs ≥ 1 and classes ≥ 2"));
            }
        }
        let (_, specs, len) = plan(kind, &arch, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; len];
        for s in &specs {
            let n: usize = s.shape.iter().product();
            let dst = &mut values[s.offset..s.offset + n];
            if s.name.ends_with(".weight") {
                let fan_in: usize = s.shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                dst.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            } else if s.name.ends_with(".scale") {
                dst.fill(1.0);
            }
        }
        Ok(Self {
            kind,
            arch,
            seed,
            specs,
            values,
        })
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let s = self.specs.iter().find(|s| s.name == name)?;
        let n: usize = s.shape.iter().product();
        Some(&self.values[s.offset..s.offset + n])
    }

    /// Shape `(channels, side, side)` the network accepts.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.kind.inputs(), self.arch.resolution, self.arch.resolution)
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = self.input_shape();
        if x.shape() != want {
            return Err(Error::contract(
                "nets",
                format!("{:?} input for a network expecting {:?}", x.shape(), want),
            ));
        }
        Ok(())
    }

    /// Records this network's forward pass on `tape`, reading parameters from
    /// the tape's parameter vector `model`.
    pub fn forward(&self, tape: &mut Tape, model: usize, x: NodeId) -> Result<NodeId> {
        self.check_input(tape.value(x))?;
        let (plan, _, _) = plan(self.kind, &self.arch, model);
        match plan {
            Plan::Unet { enc, dec, head } => {
                let mut skips = Vec::with_capacity(enc.len());
                let mut h = x;
                for b in &enc {
                    h = run_block(tape, h, b)?;
                    skips.push(h);
                }
                for (k, b) in dec.iter().enumerate() {
                    let level = self.arch.levels - 1 - k;
                    let up = tape.upsample(h);
                    let inp = if self.arch.skips {
                        tape.concat(up, skips[level])?
                    } else {
                        up
                    };
                    h = run_block(tape, inp, b)?;
                }
                let y = tape.conv(h, head)?;
                Ok(match self.kind {
                    ModelKind::Depth => tape.sigmoid(y),
                    _ => {
                        let t = tape.tanh(y);
                        tape.affine(t, 0.5, 0.5)
                    }
                })
            }
            Plan::Patch { body, head } => {
                let mut h = x;
                for b in &body {
                    h = run_block(tape, h, b)?;
                }
                tape.conv(h, head)
            }
            Plan::Classifier { body, head } => {
                let mut h = x;
                for b in &body {
                    h = run_block(tape, h, b)?;
                }
                let pooled = tape.mean(h);
                tape.dense(pooled, head)
            }
        }
    }

    /// Inference on one input.
    pub fn run(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new(vec![&self.values]);
        let input = tape.input(x.clone());
        let out = self.forward(&mut tape, 0, input)?;
        Ok(tape.value(out).clone())
    }

    /// Rounds every parameter to the nearest 32-bit float, the checkpoint
    /// precision, so a saved and reloaded model matches the in-memory one.
    pub fn quantize(&mut self) {
        self.values.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub fn build_depth_net(arch: ArchConfig, seed: u64) -> Result<ModelParams> {
    ModelParams::build(ModelKind::Depth, arch, seed)
}

pub fn build_translator(arch: ArchConfig, seed: u64) -> Result<ModelParams> {
    ModelParams::build(ModelKind::Translator, arch, seed)
}

pub fn build_discriminator(arch: ArchConfig, seed: u64) -> Result<ModelParams> {
    ModelParams::build(ModelKind::Discriminator, arch, seed)
}

pub fn build_classifier(arch: ArchConfig, inputs: usize, classes: usize, seed: u64) -> Result<ModelParams> {
    ModelParams::build(ModelKind::Classifier { inputs, classes }, arch, seed)
}
