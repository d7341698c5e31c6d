//! Dense-block fusion network.
//!
//! A DenseNet backbone (stem with overall stride 4, four dense blocks
//! separated by halving transitions) exposes one tap per block at strides
//! 4, 8, 16 and 32. Each tap is the block output after BatchNorm + ReLU.
//! A prediction branch reduces a tap to one channel with a 1×1 conv and
//! brings it to stride 4 with a transposed conv (kernel `2f`, stride `f`,
//! padding `f/2` for upsampling factor `f`; the stride-4 tap needs none).
//! The branch maps are combined by a fixed weighted sum, upsampled ×4 by a
//! final transposed conv (kernel 8, stride 4, padding 2) and squashed with
//! the logistic function into a per-pixel iris confidence.
//!
//! Branches attach to the deepest taps first: one branch uses only the
//! stride-32 tap, four branches use all of them. Fusion weight `i` applies
//! to branch `i` in that deepest-first order.

mod checkpoint;
mod densenet;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, load_state_file, save_checkpoint};

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use segdense_nn::{init, join, sigmoid, Conv2d, ConvTranspose2d, Layer, MaxPool2d, Param, Tensor};

use crate::data::IrisImage;
use crate::error::{Result, SegError};
use densenet::{conv, DenseBlock, NormRelu, TransitionDown};

/// Spatial stride of each block tap relative to the input.
pub const TAP_STRIDES: [usize; 4] = [4, 8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Tiny,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub variant: Variant,
    pub growth_rate: usize,
    pub block_layer_counts: [usize; 4],
    pub stem_channels: usize,
    /// Bottleneck width multiplier inside dense layers.
    pub bn_size: usize,
    pub pretrained_init: bool,
    /// Weights file (same container as checkpoints, torchvision key names).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_path: Option<PathBuf>,
}

impl BackboneConfig {
    /// DenseNet-121.
    pub fn full() -> Self {
        Self {
            variant: Variant::Full,
            growth_rate: 32,
            block_layer_counts: [6, 12, 24, 16],
            stem_channels: 64,
            bn_size: 4,
            pretrained_init: false,
            pretrained_path: None,
        }
    }

    /// Same block and stride schedule with a handful of channels.
    pub fn tiny() -> Self {
        Self {
            variant: Variant::Tiny,
            growth_rate: 4,
            block_layer_counts: [2, 2, 2, 2],
            stem_channels: 8,
            bn_size: 4,
            pretrained_init: false,
            pretrained_path: None,
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Full => Self::full(),
            Variant::Tiny => Self::tiny(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.growth_rate == 0 || self.stem_channels == 0 || self.bn_size == 0 {
            return Err(SegError::Config("backbone widths must be positive".into()));
        }
        if self.block_layer_counts.contains(&0) {
            return Err(SegError::Config("every dense block needs at least one layer".into()));
        }
        if self.variant == Variant::Full && (self.block_layer_counts != [6, 12, 24, 16] || self.growth_rate != 32) {
            return Err(SegError::Config(
                "full variant is DenseNet-121: blocks (6, 12, 24, 16), growth rate 32".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights(pub [f64; 4]);

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights([1.0; 4])
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(SegError::Config(format!("fusion weights must be finite: {:?}", self.0)))
        }
    }
}

/// Grayscale → 3 replicated channels in `[0, 1]`, then per-channel standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preprocess {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl Preprocess {
    /// Stacks equally sized images into a `[N, 3, H, W]` tensor.
    pub fn batch(&self, images: &[&IrisImage]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| SegError::Invalid("empty image batch".into()))?;
        let (w, h) = first.dims();
        let plane = w * h;
        let mut data = Vec::with_capacity(images.len() * 3 * plane);
        for img in images {
            if img.dims() != (w, h) {
                return Err(SegError::Shape(format!(
                    "batch mixes {:?} and {:?} images",
                    (w, h),
                    img.dims()
                )));
            }
            for c in 0..3 {
                let (m, s) = (self.mean[c], self.std[c]);
                data.extend(img.pixels().iter().map(|&v| (v as f64 / 255.0 - m) / s));
            }
        }
        Ok(Tensor::from_vec(&[images.len(), 3, h, w], data)?)
    }
}

/// Everything needed to rebuild a network's structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backbone: BackboneConfig,
    pub branches: usize,
    pub fusion: FusionWeights,
    pub preprocess: Preprocess,
}

impl ModelSpec {
    pub fn new(backbone: BackboneConfig, branches: usize) -> Self {
        Self {
            backbone,
            branches,
            fusion: FusionWeights::default(),
            preprocess: Preprocess::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.fusion.validate()?;
        if !(1..=4).contains(&self.branches) {
            return Err(SegError::Config(format!(
                "branch count must be 1..=4, got {}",
                self.branches
            )));
        }
        Ok(())
    }
}

/// Per-pixel iris probability at network input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(SegError::Shape(format!(
                "{width}x{height} confidence map needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SegError::Invalid(format!("confidence {v} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Splits a `[N, 1, H, W]` probability tensor into per-image maps.
    pub fn from_batch(probs: &Tensor) -> Result<Vec<Self>> {
        let (n, c, h, w) = probs.dims4();
        if c != 1 {
            return Err(SegError::Shape(format!("confidence tensor has {c} channels")));
        }
        (0..n).map(|s| Self::new(w, h, probs.sample(s).to_vec())).collect()
    }
}

/// The four backbone taps, shallowest (stride 4) first.
#[derive(Debug, Clone)]
pub struct BlockTapSet {
    pub taps: [Tensor; 4],
}

impl BlockTapSet {
    pub fn stride(index: usize) -> usize {
        TAP_STRIDES[index]
    }
}

/// Intermediate maps of one inference pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub taps: BlockTapSet,
    /// Branch outputs at stride 4, deepest-first.
    pub branch_maps: Vec<Tensor>,
    pub fused: Tensor,
    pub logits: Tensor,
}

/// Prediction branch on one tap.
#[derive(Debug, Clone)]
pub struct Branch {
    tap: usize,
    conv: Conv2d,
    up: Option<ConvTranspose2d>,
}

impl Branch {
    fn new(tap: usize, channels: usize) -> Self {
        let factor = TAP_STRIDES[tap] / 4;
        let up = (factor > 1).then(|| {
            let mut d = ConvTranspose2d::upsampling(1, factor);
            init::bilinear(&mut d.weight.value);
            d
        });
        Self {
            tap,
            conv: Conv2d::new(channels, 1, 1, 1, 0, true),
            up,
        }
    }

    pub fn tap(&self) -> usize {
        self.tap
    }

    pub fn upsampling_factor(&self) -> usize {
        TAP_STRIDES[self.tap] / 4
    }

    fn name(&self) -> String {
        format!("branches.stride{}", TAP_STRIDES[self.tap])
    }

    fn predict(&self, tap: &Tensor) -> Result<Tensor> {
        let y = self.conv.try_forward(tap)?;
        Ok(match &self.up {
            Some(up) => up.try_forward(&y)?,
            None => y,
        })
    }

    fn predict_train(&mut self, tap: &Tensor) -> Tensor {
        let y = self.conv.forward_train(tap);
        match &mut self.up {
            Some(up) => up.forward_train(&y),
            None => y,
        }
    }

    fn backward(&mut self, g: &Tensor) -> Tensor {
        let g = match &mut self.up {
            Some(up) => up.backward(g),
            None => g.clone(),
        };
        self.conv.backward(&g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        let name = self.name();
        self.conv.visit_params(&join(&name, "conv"), f);
        if let Some(up) = &mut self.up {
            up.visit_params(&join(&name, "up"), f);
        }
    }

    fn visit_state(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        let name = self.name();
        self.conv.visit_state(&join(&name, "conv"), f);
        if let Some(up) = &self.up {
            up.visit_state(&join(&name, "up"), f);
        }
    }

    pub fn conv_mut(&mut self) -> &mut Conv2d {
        &mut self.conv
    }

    pub fn conv(&self) -> &Conv2d {
        &self.conv
    }
}

/// Elementwise weighted sum of equally shaped maps.
pub fn fuse(maps: &[&Tensor], weights: &[f64]) -> Result<Tensor> {
    let first = maps
        .first()
        .ok_or_else(|| SegError::Invalid("nothing to fuse".into()))?;
    if maps.len() != weights.len() {
        return Err(SegError::Shape(format!(
            "{} maps but {} fusion weights",
            maps.len(),
            weights.len()
        )));
    }
    let mut out = Tensor::zeros(first.shape());
    for (m, &w) in maps.iter().zip(weights) {
        if m.shape() != first.shape() {
            return Err(SegError::Shape(format!(
                "cannot fuse {:?} with {:?}",
                first.shape(),
                m.shape()
            )));
        }
        out.axpy(w, m);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct IrisSegmenter {
    spec: ModelSpec,
    conv0: Conv2d,
    norm0: NormRelu,
    pool0: MaxPool2d,
    blocks: Vec<DenseBlock>,
    taps: Vec<NormRelu>,
    transitions: Vec<TransitionDown>,
    branches: Vec<Branch>,
    upsample: ConvTranspose2d,
}

fn tap_name(index: usize) -> String {
    if index == 3 {
        "features.norm5".to_string()
    } else {
        format!("features.transition{}.norm", index + 1)
    }
}

/// Builds a network with deterministic initialization from `seed`: He-normal
/// backbone convs, unit/zero BatchNorm, zero 1×1 branch convs and bilinear
/// transposed convs. With `pretrained_init` the backbone state is then
/// replaced from `pretrained_path`.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<IrisSegmenter> {
    spec.validate()?;
    let cfg = &spec.backbone;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv0 = conv(3, cfg.stem_channels, 7, 2, 3, &mut rng);
    conv0.input_grad = false;
    let mut channels = cfg.stem_channels;
    let mut blocks = Vec::with_capacity(4);
    let mut taps = Vec::with_capacity(4);
    let mut transitions = Vec::with_capacity(3);
    let mut tap_channels = [0; 4];
    for (i, &layers) in cfg.block_layer_counts.iter().enumerate() {
        let block = DenseBlock::new(channels, layers, cfg.bn_size, cfg.growth_rate, &mut rng);
        channels = block.out_channels();
        blocks.push(block);
        taps.push(NormRelu::new(channels));
        tap_channels[i] = channels;
        if i < 3 {
            let t = TransitionDown::new(channels, channels / 2, &mut rng);
            channels = t.out_channels();
            transitions.push(t);
        }
    }
    let branches = (0..spec.branches).map(|i| {
        let tap = 3 - i;
        Branch::new(tap, tap_channels[tap])
    });
    let mut upsample = ConvTranspose2d::upsampling(1, 4);
    init::bilinear(&mut upsample.weight.value);
    let mut model = IrisSegmenter {
        spec: spec.clone(),
        conv0,
        norm0: NormRelu::new(cfg.stem_channels),
        pool0: MaxPool2d::new(3, 2, 1),
        blocks,
        taps,
        transitions,
        branches: branches.collect(),
        upsample,
    };
    if cfg.pretrained_init {
        let path = cfg
            .pretrained_path
            .as_deref()
            .ok_or_else(|| SegError::Pretrained("pretrained_init is set but no pretrained_path was given".into()))?;
        model.load_backbone(path)?;
    }
    Ok(model)
}

impl IrisSegmenter {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branches_mut(&mut self) -> &mut [Branch] {
        &mut self.branches
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 4 || x.shape()[1] != 3 {
            return Err(SegError::Shape(format!(
                "expected [N, 3, H, W] input, got {:?}",
                x.shape()
            )));
        }
        let (_, _, h, w) = x.dims4();
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(SegError::Shape(format!(
                "input {w}x{h} must have both sides divisible by 32"
            )));
        }
        Ok(())
    }

    pub fn backbone_forward(&self, x: &Tensor) -> Result<BlockTapSet> {
        self.check_input(x)?;
        let mut h = self.pool0.forward(&self.norm0.forward(&self.conv0.try_forward(x)?));
        let mut taps = Vec::with_capacity(4);
        for i in 0..4 {
            let block_out = self.blocks[i].forward(&h);
            let tap = self.taps[i].forward(&block_out);
            if i < 3 {
                h = self.transitions[i].forward(&tap);
            }
            taps.push(tap);
        }
        Ok(BlockTapSet {
            taps: taps.try_into().expect("four taps"),
        })
    }

    /// Output of branch `index` (deepest-first) for a tap of the matching stride.
    pub fn branch_predict(&self, index: usize, tap: &Tensor) -> Result<Tensor> {
        let branch = self
            .branches
            .get(index)
            .ok_or_else(|| SegError::Invalid(format!("no branch {index}")))?;
        branch.predict(tap)
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<ForwardTrace> {
        let taps = self.backbone_forward(x)?;
        let branch_maps = self
            .branches
            .iter()
            .map(|b| b.predict(&taps.taps[b.tap]))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = branch_maps.iter().collect();
        let fused = fuse(&refs, &self.spec.fusion.0[..refs.len()])?;
        let logits = self.upsample.try_forward(&fused)?;
        Ok(ForwardTrace {
            taps,
            branch_maps,
            fused,
            logits,
        })
    }

    pub fn forward_logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(x)?.logits)
    }

    /// Iris probabilities `[N, 1, H, W]` for a preprocessed batch.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_logits(x)?.map(sigmoid))
    }

    pub fn predict_confidence(&self, images: &[&IrisImage]) -> Result<Vec<ConfidenceMap>> {
        let x = self.spec.preprocess.batch(images)?;
        ConfidenceMap::from_batch(&self.forward(&x)?)
    }

    /// Training-mode pass (batch statistics, cached activations); returns logits.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let h = self.conv0.forward_train(x);
        let h = self.norm0.forward_train(&h);
        let mut h = self.pool0.forward_train(&h);
        let mut taps = Vec::with_capacity(4);
        for i in 0..4 {
            let block_out = self.blocks[i].forward_train(&h);
            let tap = self.taps[i].forward_train(&block_out);
            if i < 3 {
                h = self.transitions[i].forward_train(&tap);
            }
            taps.push(tap);
        }
        let mut maps = Vec::with_capacity(self.branches.len());
        for b in &mut self.branches {
            maps.push(b.predict_train(&taps[b.tap]));
        }
        let refs: Vec<&Tensor> = maps.iter().collect();
        let fused = fuse(&refs, &self.spec.fusion.0[..refs.len()])?;
        Ok(self.upsample.forward_train(&fused))
    }

    /// Backpropagates a logit gradient, accumulating into every parameter's `grad`.
    pub fn backward(&mut self, grad_logits: &Tensor) {
        let g_fused = self.upsample.backward(grad_logits);
        let mut tap_grads: [Option<Tensor>; 4] = Default::default();
        for (i, b) in self.branches.iter_mut().enumerate() {
            let mut g = g_fused.clone();
            g.scale(self.spec.fusion.0[i]);
            tap_grads[b.tap] = Some(b.backward(&g));
        }
        let mut downstream: Option<Tensor> = None;
        for i in (0..4).rev() {
            let g_tap = match (tap_grads[i].take(), downstream.take()) {
                (Some(mut a), Some(b)) => {
                    a.add_assign(&b);
                    Some(a)
                }
                (a, b) => a.or(b),
            };
            // branch 0 sits on the deepest tap, so every tap receives a gradient
            let g_tap = g_tap.expect("deepest tap feeds a branch");
            let g_block = self.taps[i].backward(&g_tap);
            let g_in = self.blocks[i].backward(&g_block);
            if i > 0 {
                downstream = Some(self.transitions[i - 1].backward(&g_in));
            } else {
                let g = self.pool0.backward(&g_in);
                let g = self.norm0.backward(&g);
                self.conv0.backward(&g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv0.visit_params("features.conv0", f);
        self.norm0.visit_params("features.norm0", f);
        for i in 0..4 {
            self.blocks[i].visit_params(&format!("features.denseblock{}", i + 1), f);
            self.taps[i].visit_params(&tap_name(i), f);
            if i < 3 {
                self.transitions[i].visit_params(&format!("features.transition{}", i + 1), f);
            }
        }
        for b in &mut self.branches {
            b.visit_params(f);
        }
        self.upsample.visit_params("upsample", f);
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.norm0.visit_buffers("features.norm0", f);
        for i in 0..4 {
            self.blocks[i].visit_buffers(&format!("features.denseblock{}", i + 1), f);
            self.taps[i].visit_buffers(&tap_name(i), f);
        }
    }

    /// Every parameter value and buffer in a fixed order.
    pub fn visit_state(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv0.visit_state("features.conv0", f);
        self.norm0.visit_state("features.norm0", f);
        for i in 0..4 {
            self.blocks[i].visit_state(&format!("features.denseblock{}", i + 1), f);
            self.taps[i].visit_state(&tap_name(i), f);
            if i < 3 {
                self.transitions[i].visit_state(&format!("features.transition{}", i + 1), f);
            }
        }
        for b in &self.branches {
            b.visit_state(f);
        }
        self.upsample.visit_state("upsample", f);
    }

    /// Named copies of the full state, in [`Self::visit_state`] order.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_state(&mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    pub fn num_parameters(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.value.len());
        n
    }

    /// Zeroes the 1×1 branch convs and their biases, giving a constant 0.5 output.
    pub fn zero_branches(&mut self) {
        for b in &mut self.branches {
            b.conv.weight.value.fill(0.0);
            if let Some(bias) = &mut b.conv.bias {
                bias.value.fill(0.0);
            }
        }
    }

    fn load_backbone(&mut self, path: &std::path::Path) -> Result<()> {
        let tensors = load_state_file(path)?;
        let mut missing = Vec::new();
        let mut mismatched = Vec::new();
        let mut assign = |name: &str, target: &mut Tensor| {
            if !name.starts_with("features.") {
                return;
            }
            match tensors.get(name) {
                None => missing.push(name.to_string()),
                Some(t) if t.shape() != target.shape() => {
                    mismatched.push(format!("{name}: expected {:?}, found {:?}", target.shape(), t.shape()))
                }
                Some(t) => *target = t.clone(),
            }
        };
        self.visit_params(&mut |name, p| assign(name, &mut p.value));
        self.visit_buffers(&mut |name, t| assign(name, t));
        if !missing.is_empty() {
            return Err(SegError::Pretrained(format!(
                "{}: {} backbone tensors missing, first {}",
                path.display(),
                missing.len(),
                missing[0]
            )));
        }
        if !mismatched.is_empty() {
            return Err(SegError::Pretrained(format!(
                "{}: shape mismatch for {}",
                path.display(),
                mismatched[0]
            )));
        }
        Ok(())
    }
}
