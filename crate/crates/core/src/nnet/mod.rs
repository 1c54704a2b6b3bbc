//! Small convolutional networks with hand-written gradients.
//!
//! Three architectures share one parameter container:
//!
//! * **Enhancer**: reflection-padded 3×3 conv stem, `blocks` residual blocks
//!   (conv, instance norm, ReLU, conv, instance norm, plus skip) and a 3×3 conv
//!   head whose output is added to the input image.
//! * **Denoiser**: a four-conv U shape (full res, stride-2 down, half res,
//!   nearest upsample with skip, head) predicting noise; each of the first
//!   three convs receives a per-channel bias projected from a sinusoidal
//!   embedding of the timestep.
//! * **Discriminator**: patch critic of three 4×4 stride-2 convs with
//!   leaky ReLU and a final valid 3×3 conv producing a one-channel score map.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod train;

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;
use layers::{ConvCache, ConvSpec, NormCache, Padding, LEAKY_SLOPE};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_against, GradCheckOptions, GradCheckReport};
pub use train::denoiser_train_step;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Denoiser,
    Enhancer,
    Discriminator,
}

impl fmt::Display for NetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetKind::Denoiser => "denoiser",
            NetKind::Enhancer => "enhancer",
            NetKind::Discriminator => "discriminator",
        })
    }
}

/// Architecture descriptor; fully determines every parameter shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Enhancer { in_channels: usize, channels: usize, blocks: usize },
    Denoiser { in_channels: usize, channels: usize, emb_dim: usize },
    Discriminator { in_channels: usize, channels: usize },
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Normal with std `gain·sqrt(2 / fan_in)`.
    Kaiming {
        fan_in: usize,
        gain: f64,
    },
    Zeros,
    Ones,
}

struct Slot {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn slot(name: impl Into<String>, shape: &[usize], init: Init) -> Slot {
    Slot { name: name.into(), shape: shape.to_vec(), init }
}

fn conv_slots(out: &mut Vec<Slot>, prefix: &str, spec: &ConvSpec, gain: f64) {
    let k = spec.kernel;
    out.push(slot(
        format!("{prefix}.weight"),
        &[spec.out_ch, spec.in_ch, k, k],
        Init::Kaiming { fan_in: spec.in_ch * k * k, gain },
    ));
    out.push(slot(format!("{prefix}.bias"), &[spec.out_ch], Init::Zeros));
}

/// Gain on the enhancer head so a fresh enhancer starts close to identity.
const ENHANCER_HEAD_GAIN: f64 = 0.1;

impl Arch {
    pub fn kind(&self) -> NetKind {
        match self {
            Arch::Enhancer { .. } => NetKind::Enhancer,
            Arch::Denoiser { .. } => NetKind::Denoiser,
            Arch::Discriminator { .. } => NetKind::Discriminator,
        }
    }

    pub fn in_channels(&self) -> usize {
        match *self {
            Arch::Enhancer { in_channels, .. }
            | Arch::Denoiser { in_channels, .. }
            | Arch::Discriminator { in_channels, .. } => in_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("{self:?}: {m}")));
        if self.in_channels() == 0 {
            return bad("in_channels must be positive");
        }
        match *self {
            Arch::Enhancer { channels, .. } | Arch::Discriminator { channels, .. } if channels == 0 => {
                bad("channels must be positive")
            }
            Arch::Denoiser { channels, emb_dim, .. } if channels == 0 || emb_dim < 2 || emb_dim % 2 != 0 => {
                bad("channels must be positive and emb_dim a positive even number")
            }
            _ => Ok(()),
        }
    }

    /// Numeric encoding used by checkpoints: `[kind, in_channels, a, b]`.
    pub fn encode(&self) -> [usize; 4] {
        match *self {
            Arch::Enhancer { in_channels, channels, blocks } => [0, in_channels, channels, blocks],
            Arch::Denoiser { in_channels, channels, emb_dim } => [1, in_channels, channels, emb_dim],
            Arch::Discriminator { in_channels, channels } => [2, in_channels, channels, 0],
        }
    }

    pub fn decode(v: &[usize]) -> Result<Self> {
        let arch = match v {
            [0, i, c, b] => Arch::Enhancer { in_channels: *i, channels: *c, blocks: *b },
            [1, i, c, e] => Arch::Denoiser { in_channels: *i, channels: *c, emb_dim: *e },
            [2, i, c, _] => Arch::Discriminator { in_channels: *i, channels: *c },
            _ => return Err(Error::Checkpoint(format!("unknown architecture code {v:?}"))),
        };
        arch.validate()?;
        Ok(arch)
    }

    fn enhancer_specs(in_ch: usize, ch: usize) -> (ConvSpec, ConvSpec, ConvSpec) {
        (ConvSpec::same3x3(in_ch, ch), ConvSpec::same3x3(ch, ch), ConvSpec::same3x3(ch, in_ch))
    }

    fn denoiser_specs(in_ch: usize, ch: usize) -> [ConvSpec; 4] {
        [
            ConvSpec::same3x3(in_ch, ch),
            ConvSpec { stride: 2, ..ConvSpec::same3x3(ch, ch) },
            ConvSpec::same3x3(ch, ch),
            ConvSpec::same3x3(ch, in_ch),
        ]
    }

    fn discriminator_specs(in_ch: usize, ch: usize) -> [ConvSpec; 4] {
        let down = |i, o| ConvSpec { in_ch: i, out_ch: o, kernel: 4, stride: 2, pad: 1, padding: Padding::Zero };
        [
            down(in_ch, ch),
            down(ch, 2 * ch),
            down(2 * ch, 4 * ch),
            ConvSpec { in_ch: 4 * ch, out_ch: 1, kernel: 3, stride: 1, pad: 0, padding: Padding::Zero },
        ]
    }

    fn layout(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        match *self {
            Arch::Enhancer { in_channels, channels, blocks } => {
                let (stem, body, head) = Self::enhancer_specs(in_channels, channels);
                conv_slots(&mut out, "stem", &stem, 1.0);
                for b in 0..blocks {
                    for j in 1..=2 {
                        conv_slots(&mut out, &format!("block{b}.conv{j}"), &body, 1.0);
                        out.push(slot(format!("block{b}.norm{j}.scale"), &[channels], Init::Ones));
                        out.push(slot(format!("block{b}.norm{j}.shift"), &[channels], Init::Zeros));
                    }
                }
                conv_slots(&mut out, "head", &head, ENHANCER_HEAD_GAIN);
            }
            Arch::Denoiser { in_channels, channels, emb_dim } => {
                let specs = Self::denoiser_specs(in_channels, channels);
                for (i, spec) in specs.iter().enumerate() {
                    conv_slots(&mut out, &format!("conv{}", i + 1), spec, 1.0);
                    if i < 3 {
                        out.push(slot(
                            format!("temb{}.weight", i + 1),
                            &[channels, emb_dim],
                            Init::Kaiming { fan_in: emb_dim, gain: 0.5 },
                        ));
                    }
                }
            }
            Arch::Discriminator { in_channels, channels } => {
                let specs = Self::discriminator_specs(in_channels, channels);
                for (i, spec) in specs.iter().enumerate() {
                    let name = if i == 3 { "head".to_string() } else { format!("conv{}", i + 1) };
                    conv_slots(&mut out, &name, spec, 1.0);
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match *self {
            Arch::Enhancer { .. } => {
                if h < 2 || w < 2 {
                    return Err(Error::InvalidShape(format!("enhancer input {h}x{w} too small")));
                }
                Ok((h, w))
            }
            Arch::Denoiser { .. } => {
                if !h.is_multiple_of(2) || !w.is_multiple_of(2) || h < 4 || w < 4 {
                    return Err(Error::InvalidShape(format!("denoiser input {h}x{w} must be even and at least 4x4")));
                }
                Ok((h, w))
            }
            Arch::Discriminator { in_channels, channels } => {
                let mut dims = (h, w);
                for spec in Self::discriminator_specs(in_channels, channels) {
                    dims = spec.output_dims(dims.0, dims.1)?;
                }
                Ok(dims)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Parameters of one network, in the fixed order given by its architecture.
#[derive(Debug, Clone)]
pub struct NetworkParams<T> {
    arch: Arch,
    tensors: Vec<ParamTensor<T>>,
    /// Bumped on every mutation so tapes from older parameters are rejected.
    generation: u64,
}

impl<T: Scalar> PartialEq for NetworkParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.tensors == other.tensors
    }
}

/// Per-parameter gradients aligned with [`NetworkParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_for(net: &NetworkParams<T>) -> Self {
        Self { tensors: net.tensors.iter().map(|p| vec![T::zero(); p.data.len()]).collect() }
    }

    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for v in self.tensors.iter_mut().flatten() {
            *v *= k;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|v| *v == T::zero())
    }
}

/// Activations cached by [`forward`] for an exact [`backward`].
#[derive(Debug, Clone)]
pub struct GradTape<T> {
    arch: Arch,
    generation: u64,
    out_shape: (usize, usize, usize),
    data: TapeData<T>,
}

#[derive(Debug, Clone)]
enum TapeData<T> {
    Enhancer { stem: ConvCache<T>, stem_pre: ImageTensor<T>, blocks: Vec<BlockTape<T>>, head: ConvCache<T> },
    Denoiser { emb: Vec<T>, convs: [ConvCache<T>; 4], pre: [ImageTensor<T>; 3] },
    Discriminator { convs: [ConvCache<T>; 4], pre: [ImageTensor<T>; 3] },
}

#[derive(Debug, Clone)]
struct BlockTape<T> {
    conv1: ConvCache<T>,
    norm1: NormCache<T>,
    act_pre: ImageTensor<T>,
    conv2: ConvCache<T>,
    norm2: NormCache<T>,
}

/// Parameter indices for an enhancer residual block, in layout order.
struct BlockIdx {
    c1w: usize,
    c1b: usize,
    n1s: usize,
    n1b: usize,
    c2w: usize,
    c2b: usize,
    n2s: usize,
    n2b: usize,
}

impl BlockIdx {
    fn new(block: usize) -> Self {
        let base = 2 + 8 * block;
        Self {
            c1w: base,
            c1b: base + 1,
            n1s: base + 2,
            n1b: base + 3,
            c2w: base + 4,
            c2b: base + 5,
            n2s: base + 6,
            n2b: base + 7,
        }
    }
}

impl<T: Scalar> NetworkParams<T> {
    /// Fresh parameters: Kaiming-normal kernels, zero biases, unit norm scales.
    pub fn init(arch: Arch, rng: &mut SeededRng) -> Result<Self> {
        arch.validate()?;
        let tensors = arch
            .layout()
            .into_iter()
            .map(|s| {
                let n: usize = s.shape.iter().product();
                let data = match s.init {
                    Init::Zeros => vec![T::zero(); n],
                    Init::Ones => vec![T::one(); n],
                    Init::Kaiming { fan_in, gain } => {
                        let std = gain * (2.0 / fan_in as f64).sqrt();
                        (0..n).map(|_| T::lit(std * rng.gaussian())).collect()
                    }
                };
                ParamTensor { name: s.name, shape: s.shape, data }
            })
            .collect();
        Ok(Self { arch, tensors, generation: 0 })
    }

    /// Builds parameters from named tensors, validating names and shapes
    /// against the architecture.
    pub fn from_tensors(arch: Arch, tensors: Vec<ParamTensor<T>>) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if layout.len() != tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} expects {} parameter tensors, got {}",
                arch.kind(),
                layout.len(),
                tensors.len()
            )));
        }
        for (s, t) in layout.iter().zip(&tensors) {
            if s.name != t.name || s.shape != t.shape || t.data.len() != s.shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    t.name, t.shape, s.name, s.shape
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("parameter `{}` has non-finite values", t.name)));
            }
        }
        Ok(Self { arch, tensors, generation: 0 })
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn kind(&self) -> NetKind {
        self.arch.kind()
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    /// Mutable access; invalidates outstanding tapes.
    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        self.generation += 1;
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|p| p.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|p| p.name == name)
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            arch: self.arch,
            tensors: self
                .tensors
                .iter()
                .map(|p| ParamTensor {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
            generation: 0,
        }
    }

    /// Forward pass. The denoiser requires a timestep; the others ignore it.
    pub fn forward(&self, input: &ImageTensor<T>, t: Option<usize>) -> Result<(ImageTensor<T>, GradTape<T>)> {
        forward(self, input, t)
    }

    /// Forward pass without keeping a tape.
    pub fn infer(&self, input: &ImageTensor<T>, t: Option<usize>) -> Result<ImageTensor<T>> {
        Ok(forward(self, input, t)?.0)
    }

    fn w(&self, i: usize) -> &[T] {
        &self.tensors[i].data
    }
}

fn check_input<T: Scalar>(net: &NetworkParams<T>, input: &ImageTensor<T>) -> Result<()> {
    if input.channels() != net.arch.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} expects {} input channels, got {}",
            net.kind(),
            net.arch.in_channels(),
            input.channels()
        )));
    }
    net.arch.output_dims(input.height(), input.width())?;
    Ok(())
}

fn relu<T: Scalar>(x: &ImageTensor<T>) -> ImageTensor<T> {
    layers::leaky_relu_forward(x, 0.0)
}

fn relu_back<T: Scalar>(pre: &ImageTensor<T>, g: &ImageTensor<T>) -> ImageTensor<T> {
    layers::leaky_relu_backward(pre, g, 0.0)
}

/// Runs the network and records a tape for [`backward`].
pub fn forward<T: Scalar>(
    net: &NetworkParams<T>,
    input: &ImageTensor<T>,
    t: Option<usize>,
) -> Result<(ImageTensor<T>, GradTape<T>)> {
    check_input(net, input)?;
    let (out, data) = match net.arch {
        Arch::Enhancer { in_channels, channels, blocks } => {
            let (stem_s, body_s, head_s) = Arch::enhancer_specs(in_channels, channels);
            let (stem_pre, stem) = layers::conv2d_forward(&stem_s, net.w(0), net.w(1), input)?;
            let mut h = relu(&stem_pre);
            let mut tapes = Vec::with_capacity(blocks);
            for b in 0..blocks {
                let ix = BlockIdx::new(b);
                let (z1, conv1) = layers::conv2d_forward(&body_s, net.w(ix.c1w), net.w(ix.c1b), &h)?;
                let (n1, norm1) = layers::instance_norm_forward(&z1, net.w(ix.n1s), net.w(ix.n1b));
                let a = relu(&n1);
                let (z2, conv2) = layers::conv2d_forward(&body_s, net.w(ix.c2w), net.w(ix.c2b), &a)?;
                let (n2, norm2) = layers::instance_norm_forward(&z2, net.w(ix.n2s), net.w(ix.n2b));
                h.add_assign(&n2)?;
                tapes.push(BlockTape { conv1, norm1, act_pre: n1, conv2, norm2 });
            }
            let hw = 2 + 8 * blocks;
            let (mut out, head) = layers::conv2d_forward(&head_s, net.w(hw), net.w(hw + 1), &h)?;
            out.add_assign(input)?;
            (out, TapeData::Enhancer { stem, stem_pre, blocks: tapes, head })
        }
        Arch::Denoiser { in_channels, channels, emb_dim } => {
            let t = t.ok_or_else(|| Error::InvalidParameter("denoiser forward requires a timestep".into()))?;
            let emb = layers::time_embedding::<T>(t, emb_dim);
            let specs = Arch::denoiser_specs(in_channels, channels);
            // params: conv1 w,b temb1 | conv2 w,b temb2 | conv3 w,b temb3 | conv4 w,b
            let (mut z1, c1) = layers::conv2d_forward(&specs[0], net.w(0), net.w(1), input)?;
            layers::time_bias_forward(&mut z1, net.w(2), &emb);
            let h1 = relu(&z1);
            let (mut z2, c2) = layers::conv2d_forward(&specs[1], net.w(3), net.w(4), &h1)?;
            layers::time_bias_forward(&mut z2, net.w(5), &emb);
            let h2 = relu(&z2);
            let (mut z3, c3) = layers::conv2d_forward(&specs[2], net.w(6), net.w(7), &h2)?;
            layers::time_bias_forward(&mut z3, net.w(8), &emb);
            let h3 = relu(&z3);
            let mut u = layers::upsample2_forward(&h3);
            u.add_assign(&h1)?;
            let (out, c4) = layers::conv2d_forward(&specs[3], net.w(9), net.w(10), &u)?;
            (out, TapeData::Denoiser { emb, convs: [c1, c2, c3, c4], pre: [z1, z2, z3] })
        }
        Arch::Discriminator { in_channels, channels } => {
            let specs = Arch::discriminator_specs(in_channels, channels);
            let (z1, c1) = layers::conv2d_forward(&specs[0], net.w(0), net.w(1), input)?;
            let a1 = layers::leaky_relu_forward(&z1, LEAKY_SLOPE);
            let (z2, c2) = layers::conv2d_forward(&specs[1], net.w(2), net.w(3), &a1)?;
            let a2 = layers::leaky_relu_forward(&z2, LEAKY_SLOPE);
            let (z3, c3) = layers::conv2d_forward(&specs[2], net.w(4), net.w(5), &a2)?;
            let a3 = layers::leaky_relu_forward(&z3, LEAKY_SLOPE);
            let (out, c4) = layers::conv2d_forward(&specs[3], net.w(6), net.w(7), &a3)?;
            (out, TapeData::Discriminator { convs: [c1, c2, c3, c4], pre: [z1, z2, z3] })
        }
    };
    let tape = GradTape { arch: net.arch, generation: net.generation, out_shape: out.shape(), data };
    Ok((out, tape))
}

/// Exact gradients of the scalar whose output gradient is `grad_out`.
/// Returns parameter gradients and the gradient with respect to the input.
pub fn backward<T: Scalar>(
    net: &NetworkParams<T>,
    tape: &GradTape<T>,
    grad_out: &ImageTensor<T>,
) -> Result<(Gradients<T>, ImageTensor<T>)> {
    if tape.arch != net.arch || tape.generation != net.generation {
        return Err(Error::StaleTape(format!(
            "tape for {:?} (generation {}) used with {:?} (generation {})",
            tape.arch, tape.generation, net.arch, net.generation
        )));
    }
    if grad_out.shape() != tape.out_shape {
        return Err(Error::ShapeMismatch(format!(
            "output gradient {:?} vs output {:?}",
            grad_out.shape(),
            tape.out_shape
        )));
    }
    let mut grads = Gradients::zeros_for(net);
    let grad_in = match (&net.arch, &tape.data) {
        (
            &Arch::Enhancer { in_channels, channels, blocks },
            TapeData::Enhancer { stem, stem_pre, blocks: btapes, head },
        ) => {
            let (stem_s, body_s, head_s) = Arch::enhancer_specs(in_channels, channels);
            let hw = 2 + 8 * blocks;
            let (mut gh, gw, gb) = layers::conv2d_backward(&head_s, net.w(hw), head, grad_out)?;
            grads.tensors[hw] = gw;
            grads.tensors[hw + 1] = gb;
            for b in (0..blocks).rev() {
                let ix = BlockIdx::new(b);
                let bt = &btapes[b];
                let (gz2, gs, gsh) = layers::instance_norm_backward(net.w(ix.n2s), &bt.norm2, &gh);
                grads.tensors[ix.n2s] = gs;
                grads.tensors[ix.n2b] = gsh;
                let (ga, gw, gb) = layers::conv2d_backward(&body_s, net.w(ix.c2w), &bt.conv2, &gz2)?;
                grads.tensors[ix.c2w] = gw;
                grads.tensors[ix.c2b] = gb;
                let gn1 = relu_back(&bt.act_pre, &ga);
                let (gz1, gs, gsh) = layers::instance_norm_backward(net.w(ix.n1s), &bt.norm1, &gn1);
                grads.tensors[ix.n1s] = gs;
                grads.tensors[ix.n1b] = gsh;
                let (gin, gw, gb) = layers::conv2d_backward(&body_s, net.w(ix.c1w), &bt.conv1, &gz1)?;
                grads.tensors[ix.c1w] = gw;
                grads.tensors[ix.c1b] = gb;
                gh.add_assign(&gin)?;
            }
            let gz = relu_back(stem_pre, &gh);
            let (mut gx, gw, gb) = layers::conv2d_backward(&stem_s, net.w(0), stem, &gz)?;
            grads.tensors[0] = gw;
            grads.tensors[1] = gb;
            gx.add_assign(grad_out)?;
            gx
        }
        (&Arch::Denoiser { in_channels, channels, .. }, TapeData::Denoiser { emb, convs, pre }) => {
            let specs = Arch::denoiser_specs(in_channels, channels);
            let (gu, gw, gb) = layers::conv2d_backward(&specs[3], net.w(9), &convs[3], grad_out)?;
            grads.tensors[9] = gw;
            grads.tensors[10] = gb;
            let gh3 = layers::upsample2_backward(&gu);
            let gz3 = relu_back(&pre[2], &gh3);
            grads.tensors[8] = layers::time_bias_backward(&gz3, emb);
            let (gh2, gw, gb) = layers::conv2d_backward(&specs[2], net.w(6), &convs[2], &gz3)?;
            grads.tensors[6] = gw;
            grads.tensors[7] = gb;
            let gz2 = relu_back(&pre[1], &gh2);
            grads.tensors[5] = layers::time_bias_backward(&gz2, emb);
            let (mut gh1, gw, gb) = layers::conv2d_backward(&specs[1], net.w(3), &convs[1], &gz2)?;
            grads.tensors[3] = gw;
            grads.tensors[4] = gb;
            gh1.add_assign(&gu)?;
            let gz1 = relu_back(&pre[0], &gh1);
            grads.tensors[2] = layers::time_bias_backward(&gz1, emb);
            let (gx, gw, gb) = layers::conv2d_backward(&specs[0], net.w(0), &convs[0], &gz1)?;
            grads.tensors[0] = gw;
            grads.tensors[1] = gb;
            gx
        }
        (&Arch::Discriminator { in_channels, channels }, TapeData::Discriminator { convs, pre }) => {
            let specs = Arch::discriminator_specs(in_channels, channels);
            let mut g = grad_out.clone();
            for i in (0..4).rev() {
                if i < 3 {
                    g = layers::leaky_relu_backward(&pre[i], &g, LEAKY_SLOPE);
                }
                let (gi, gw, gb) = layers::conv2d_backward(&specs[i], net.w(2 * i), &convs[i], &g)?;
                grads.tensors[2 * i] = gw;
                grads.tensors[2 * i + 1] = gb;
                g = gi;
            }
            g
        }
        _ => return Err(Error::StaleTape("tape layout does not match architecture".into())),
    };
    Ok((grads, grad_in))
}

/// Adapter exposing a denoiser network as a noise predictor.
impl<T: Scalar> crate::diffusion::NoisePredictor<T> for NetworkParams<T> {
    fn predict(&self, x_t: &ImageTensor<T>, t: usize) -> Result<ImageTensor<T>> {
        if self.kind() != NetKind::Denoiser {
            return Err(Error::InvalidParameter(format!("a {} cannot predict noise", self.kind())));
        }
        self.infer(x_t, Some(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enhancer(ch: usize, blocks: usize) -> Arch {
        Arch::Enhancer { in_channels: 3, channels: ch, blocks }
    }

    #[test]
    fn enhancer_param_count_closed_form() {
        let (c, b) = (16usize, 3usize);
        let stem = 3 * c * 9 + c;
        let block = 2 * (c * c * 9 + c) + 2 * 2 * c;
        let head = c * 3 * 9 + 3;
        let want = stem + b * block + head;
        assert_eq!(want, 14_995);
        let net = NetworkParams::<f32>::init(enhancer(c, b), &mut SeededRng::new(0)).unwrap();
        assert_eq!(net.param_count(), want);
        assert_eq!(enhancer(c, b).param_count(), want);
    }

    #[test]
    fn discriminator_map_size() {
        let arch = Arch::Discriminator { in_channels: 3, channels: 8 };
        assert_eq!(arch.output_dims(64, 64).unwrap(), (6, 6));
        let net = NetworkParams::<f32>::init(arch, &mut SeededRng::new(1)).unwrap();
        let x = ImageTensor::filled(3, 64, 64, 0.5);
        assert_eq!(net.infer(&x, None).unwrap().shape(), (1, 6, 6));
    }

    #[test]
    fn init_is_seeded() {
        let arch = Arch::Denoiser { in_channels: 3, channels: 8, emb_dim: 8 };
        let a = NetworkParams::<f32>::init(arch, &mut SeededRng::new(5)).unwrap();
        let b = NetworkParams::<f32>::init(arch, &mut SeededRng::new(5)).unwrap();
        let c = NetworkParams::<f32>::init(arch, &mut SeededRng::new(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_descriptors() {
        let mut rng = SeededRng::new(0);
        assert!(NetworkParams::<f32>::init(enhancer(0, 1), &mut rng).is_err());
        let bad = Arch::Denoiser { in_channels: 3, channels: 4, emb_dim: 3 };
        assert!(NetworkParams::<f32>::init(bad, &mut rng).is_err());
    }

    #[test]
    fn zero_branch_enhancer_is_identity() {
        let mut net = NetworkParams::<f32>::init(enhancer(8, 2), &mut SeededRng::new(3)).unwrap();
        for p in net.tensors_mut() {
            if p.name.starts_with("head") {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut rng = SeededRng::new(4);
        let x = ImageTensor::from_vec(3, 8, 8, (0..192).map(|_| rng.uniform() as f32).collect()).unwrap();
        assert_eq!(net.infer(&x, None).unwrap(), x);
    }

    #[test]
    fn enhancer_shape_preserving() {
        let net = NetworkParams::<f32>::init(enhancer(4, 1), &mut SeededRng::new(3)).unwrap();
        for (h, w) in [(4, 4), (8, 12), (16, 20)] {
            let x = ImageTensor::filled(3, h, w, 0.3);
            let y = net.infer(&x, None).unwrap();
            assert_eq!(y.shape(), (3, h, w));
            assert!(y.is_finite());
        }
    }

    #[test]
    fn denoiser_time_conditioning() {
        let arch = Arch::Denoiser { in_channels: 3, channels: 8, emb_dim: 16 };
        let net = NetworkParams::<f32>::init(arch, &mut SeededRng::new(9)).unwrap();
        let x = ImageTensor::filled(3, 8, 8, 0.4);
        let a = net.infer(&x, Some(5)).unwrap();
        let b = net.infer(&x, Some(50)).unwrap();
        assert_ne!(a, b);
        assert!(a.is_finite() && b.is_finite());
        assert!(net.infer(&x, None).is_err());
    }

    #[test]
    fn stale_tape_rejected() {
        let arch = Arch::Discriminator { in_channels: 3, channels: 4 };
        let mut net = NetworkParams::<f64>::init(arch, &mut SeededRng::new(1)).unwrap();
        let x = ImageTensor::filled(3, 32, 32, 0.5);
        let (out, tape) = net.forward(&x, None).unwrap();
        net.tensors_mut()[0].data[0] += 1.0;
        assert!(matches!(backward(&net, &tape, &out), Err(Error::StaleTape(_))));
        let other = NetworkParams::<f64>::init(enhancer(2, 0), &mut SeededRng::new(1)).unwrap();
        assert!(backward(&other, &tape, &out).is_err());
    }

    #[test]
    fn backward_is_linear_in_grad_out() {
        let arch = Arch::Denoiser { in_channels: 3, channels: 4, emb_dim: 4 };
        let net = NetworkParams::<f64>::init(arch, &mut SeededRng::new(2)).unwrap();
        let mut rng = SeededRng::new(3);
        let x = ImageTensor::from_vec(3, 8, 8, (0..192).map(|_| rng.uniform()).collect()).unwrap();
        let (out, tape) = net.forward(&x, Some(7)).unwrap();
        let (g0, gi0) = backward(&net, &tape, &out.zeros_like()).unwrap();
        assert!(g0.is_zero());
        assert!(gi0.data().iter().all(|v| *v == 0.0));
        let (c, h, w) = out.shape();
        let r = crate::rng::sample_gaussian(&mut rng, c, h, w).unwrap();
        let (g1, gi1) = backward(&net, &tape, &r).unwrap();
        let (mut g2, gi2) = backward(&net, &tape, &r.scale(2.0)).unwrap();
        g2.scale(0.5);
        assert_eq!(g1, g2);
        assert_eq!(gi1.scale(2.0), gi2);
    }

    #[test]
    fn arch_encoding_roundtrip() {
        for arch in [
            enhancer(16, 3),
            Arch::Denoiser { in_channels: 3, channels: 32, emb_dim: 32 },
            Arch::Discriminator { in_channels: 3, channels: 16 },
        ] {
            assert_eq!(Arch::decode(&arch.encode()).unwrap(), arch);
        }
    }
}
