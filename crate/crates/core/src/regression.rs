//! Regression heads, the full model state, and the three-branch pipeline.
//!
//! Each head maps a correlation map to an offset from the identity parameters
//! of its transform family. The pipeline runs three branches on shared
//! features:
//!
//! * affine: source vs affine target
//! * perspective: affine target vs homography target
//! * homography: source vs homography target
//!
//! and combines the regressed homography with the guide (affine ⊕ perspective)
//! by a weighted mean.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{correlation_map, extract_normalized_cached, CorrelationMap, ExtractorWeights, FeatureMap, DOWNSAMPLE};
use crate::geometry::{concat_affine_perspective, AffineParams, HomographyParams, PerspectiveParams};
use crate::imaging::{warp_image, Image};
use crate::nn::{relu_backward, relu_inplace, Conv2d, ConvCache, Linear, Tensor};

pub const HEAD_CONV1_CHANNELS: usize = 128;
pub const HEAD_CONV2_CHANNELS: usize = 64;
/// Extra hidden layers of the homography head.
pub const HOMOGRAPHY_HIDDEN: [usize; 2] = [128, 64];
/// Default weight of the regressed homography in the ensemble mean.
pub const DEFAULT_ENSEMBLE_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    Affine,
    Perspective,
    Homography,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::Affine, HeadKind::Perspective, HeadKind::Homography];

    pub fn dof(self) -> usize {
        match self {
            HeadKind::Affine => 6,
            HeadKind::Perspective => 2,
            HeadKind::Homography => 8,
        }
    }

    pub fn identity(self) -> &'static [f64] {
        match self {
            HeadKind::Affine => &AffineParams::IDENTITY.0,
            HeadKind::Perspective => &PerspectiveParams::ZERO.0,
            HeadKind::Homography => &HomographyParams::IDENTITY.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Affine => "affine",
            HeadKind::Perspective => "perspective",
            HeadKind::Homography => "homography",
        }
    }
}

/// `conv7x7/2 → ReLU → conv5x5 → ReLU → FC…` regressor.
///
/// The first convolution uses stride 2 with padding 3 and the second keeps
/// resolution with padding 2, so an 8x8 correlation map flattens to 4x4x64.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionHead {
    pub kind: HeadKind,
    pub feature_hw: (usize, usize),
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc: Vec<Linear>,
}

pub(crate) struct HeadCache {
    conv1: ConvCache,
    act1: Tensor,
    conv2: ConvCache,
    act2: Tensor,
    /// Input of each FC layer; hidden entries are post-ReLU.
    fc_inputs: Vec<Vec<f64>>,
}

impl RegressionHead {
    fn layout(kind: HeadKind, feature_hw: (usize, usize)) -> (Conv2d, Conv2d, Vec<(usize, usize)>) {
        let (h, w) = feature_hw;
        let conv1 = Conv2d::zeros(h * w, HEAD_CONV1_CHANNELS, 7, 2, 3);
        let (h1, w1) = conv1.output_hw(h, w);
        let conv2 = Conv2d::zeros(HEAD_CONV1_CHANNELS, HEAD_CONV2_CHANNELS, 5, 1, 2);
        let (h2, w2) = conv2.output_hw(h1, w1);
        let flat = HEAD_CONV2_CHANNELS * h2 * w2;
        let dims = match kind {
            HeadKind::Homography => {
                let [a, b] = HOMOGRAPHY_HIDDEN;
                vec![(flat, a), (a, b), (b, kind.dof())]
            }
            _ => vec![(flat, kind.dof())],
        };
        (conv1, conv2, dims)
    }

    pub fn zeros(kind: HeadKind, feature_hw: (usize, usize)) -> Self {
        let (conv1, conv2, dims) = Self::layout(kind, feature_hw);
        Self { kind, feature_hw, conv1, conv2, fc: dims.into_iter().map(|(i, o)| Linear::zeros(i, o)).collect() }
    }

    /// Glorot-uniform weights everywhere except the output layer, which starts
    /// at zero so a fresh head regresses the identity.
    pub fn new<R: Rng + ?Sized>(kind: HeadKind, feature_hw: (usize, usize), rng: &mut R) -> Self {
        let mut head = Self::glorot(kind, feature_hw, rng);
        let last = head.fc.last_mut().expect("head has an output layer");
        *last = Linear::zeros(last.inputs, last.outputs);
        head
    }

    /// Glorot-uniform weights in every layer (zero biases).
    pub fn glorot<R: Rng + ?Sized>(kind: HeadKind, feature_hw: (usize, usize), rng: &mut R) -> Self {
        let (c1, c2, dims) = Self::layout(kind, feature_hw);
        let conv1 = Conv2d::glorot(c1.in_channels, c1.out_channels, c1.kernel, c1.stride, c1.pad, rng);
        let conv2 = Conv2d::glorot(c2.in_channels, c2.out_channels, c2.kernel, c2.stride, c2.pad, rng);
        let fc = dims.into_iter().map(|(i, o)| Linear::glorot(i, o, rng)).collect();
        Self { kind, feature_hw, conv1, conv2, fc }
    }

    pub fn dof(&self) -> usize {
        self.kind.dof()
    }

    fn check_input(&self, c: &CorrelationMap) -> Result<()> {
        let t = c.tensor();
        let (h, w) = self.feature_hw;
        if t.shape() != (h * w, h, w) {
            return Err(Error::DimensionMismatch(format!(
                "{} head expects a {h}x{w}x{} correlation map, got {}x{}x{}",
                self.kind.name(),
                h * w,
                t.h,
                t.w,
                t.c
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, c: &CorrelationMap) -> Result<(Vec<f64>, HeadCache)> {
        self.check_input(c)?;
        let (mut act1, conv1) = self.conv1.forward(c.tensor());
        relu_inplace(&mut act1);
        let (mut act2, conv2) = self.conv2.forward(&act1);
        relu_inplace(&mut act2);
        let mut x = act2.data.clone();
        let mut fc_inputs = Vec::with_capacity(self.fc.len());
        let last = self.fc.len() - 1;
        for (i, layer) in self.fc.iter().enumerate() {
            let mut y = layer.forward(&x);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            fc_inputs.push(std::mem::replace(&mut x, y));
        }
        for (v, id) in x.iter_mut().zip(self.kind.identity()) {
            *v += id;
        }
        Ok((x, HeadCache { conv1, act1, conv2, act2, fc_inputs }))
    }

    /// Accumulates parameter gradients into `grad`; returns `d loss / d c`
    /// when `need_input` is set. The identity offset has unit Jacobian.
    pub(crate) fn backward(&self, cache: &HeadCache, dout: &[f64], grad: &mut RegressionHead, need_input: bool) -> Option<Tensor> {
        let mut g = dout.to_vec();
        for (i, layer) in self.fc.iter().enumerate().rev() {
            let x = &cache.fc_inputs[i];
            let dx = layer.backward(x, &g, &mut grad.fc[i], true).expect("input gradient requested");
            g = dx;
            if i > 0 {
                // x is the ReLU output of the previous FC layer
                relu_backward(x, &mut g);
            }
        }
        let mut d2 = Tensor::from_vec(cache.act2.c, cache.act2.h, cache.act2.w, g);
        relu_backward(&cache.act2.data, &mut d2.data);
        let mut d1 = self.conv2.backward(&cache.conv2, &d2, &mut grad.conv2, true).expect("input gradient requested");
        relu_backward(&cache.act1.data, &mut d1.data);
        self.conv1.backward(&cache.conv1, &d1, &mut grad.conv1, need_input)
    }
}

/// Runs `head` on `c`: raw network output added to the identity parameters.
pub fn regress(c: &CorrelationMap, head: &RegressionHead) -> Result<Vec<f64>> {
    head.forward_cached(c).map(|(v, _)| v)
}

/// Which components are excluded from training updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrozenSet {
    pub extractor: bool,
    pub affine_head: bool,
    pub perspective_head: bool,
    pub homography_head: bool,
}

impl FrozenSet {
    pub const NONE: Self = Self { extractor: false, affine_head: false, perspective_head: false, homography_head: false };
    pub const ALL: Self = Self { extractor: true, affine_head: true, perspective_head: true, homography_head: true };

    pub fn head(&self, kind: HeadKind) -> bool {
        match kind {
            HeadKind::Affine => self.affine_head,
            HeadKind::Perspective => self.perspective_head,
            HeadKind::Homography => self.homography_head,
        }
    }

    pub fn union(self, other: Self) -> Self {
        Self {
            extractor: self.extractor || other.extractor,
            affine_head: self.affine_head || other.affine_head,
            perspective_head: self.perspective_head || other.perspective_head,
            homography_head: self.homography_head || other.homography_head,
        }
    }

    pub fn to_flags(self) -> [bool; 4] {
        [self.extractor, self.affine_head, self.perspective_head, self.homography_head]
    }

    pub fn from_flags(f: [bool; 4]) -> Self {
        Self { extractor: f[0], affine_head: f[1], perspective_head: f[2], homography_head: f[3] }
    }
}

/// All trainable weights: shared extractor plus the three heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub extractor: ExtractorWeights,
    pub affine_head: RegressionHead,
    pub perspective_head: RegressionHead,
    pub homography_head: RegressionHead,
    pub frozen: FrozenSet,
}

impl ModelState {
    /// Fresh model for `h x w x channels` images. Seeded Glorot
    /// initialization; output layers start at zero.
    pub fn new(channels: usize, h: usize, w: usize, seed: u64) -> Result<Self> {
        let feature_hw = Self::feature_hw_for(h, w)?;
        let mut rng = crate::rng_from_seed(seed);
        Ok(Self {
            extractor: ExtractorWeights::glorot(channels, &mut rng),
            affine_head: RegressionHead::new(HeadKind::Affine, feature_hw, &mut rng),
            perspective_head: RegressionHead::new(HeadKind::Perspective, feature_hw, &mut rng),
            homography_head: RegressionHead::new(HeadKind::Homography, feature_hw, &mut rng),
            frozen: FrozenSet::NONE,
        })
    }

    /// Glorot weights in every layer, including output layers.
    pub fn glorot(channels: usize, h: usize, w: usize, seed: u64) -> Result<Self> {
        let feature_hw = Self::feature_hw_for(h, w)?;
        let mut rng = crate::rng_from_seed(seed);
        Ok(Self {
            extractor: ExtractorWeights::glorot(channels, &mut rng),
            affine_head: RegressionHead::glorot(HeadKind::Affine, feature_hw, &mut rng),
            perspective_head: RegressionHead::glorot(HeadKind::Perspective, feature_hw, &mut rng),
            homography_head: RegressionHead::glorot(HeadKind::Homography, feature_hw, &mut rng),
            frozen: FrozenSet::NONE,
        })
    }

    pub fn zeros(channels: usize, h: usize, w: usize) -> Result<Self> {
        let feature_hw = Self::feature_hw_for(h, w)?;
        Ok(Self::zeros_for_features(channels, feature_hw))
    }

    pub(crate) fn zeros_for_features(channels: usize, feature_hw: (usize, usize)) -> Self {
        Self {
            extractor: ExtractorWeights::zeros(channels),
            affine_head: RegressionHead::zeros(HeadKind::Affine, feature_hw),
            perspective_head: RegressionHead::zeros(HeadKind::Perspective, feature_hw),
            homography_head: RegressionHead::zeros(HeadKind::Homography, feature_hw),
            frozen: FrozenSet::NONE,
        }
    }

    /// Zero-valued buffer with this model's shapes (used for gradients).
    pub fn zeros_like(&self) -> Self {
        Self::zeros_for_features(self.extractor.in_channels(), self.feature_hw())
    }

    fn feature_hw_for(h: usize, w: usize) -> Result<(usize, usize)> {
        if h == 0 || w == 0 || h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 {
            return Err(Error::DimensionNotDivisible { h, w, factor: DOWNSAMPLE });
        }
        Ok((h / DOWNSAMPLE, w / DOWNSAMPLE))
    }

    pub fn feature_hw(&self) -> (usize, usize) {
        self.affine_head.feature_hw
    }

    pub fn image_hw(&self) -> (usize, usize) {
        let (h, w) = self.feature_hw();
        (h * DOWNSAMPLE, w * DOWNSAMPLE)
    }

    pub fn channels(&self) -> usize {
        self.extractor.in_channels()
    }

    pub fn head(&self, kind: HeadKind) -> &RegressionHead {
        match kind {
            HeadKind::Affine => &self.affine_head,
            HeadKind::Perspective => &self.perspective_head,
            HeadKind::Homography => &self.homography_head,
        }
    }

    pub fn head_mut(&mut self, kind: HeadKind) -> &mut RegressionHead {
        match kind {
            HeadKind::Affine => &mut self.affine_head,
            HeadKind::Perspective => &mut self.perspective_head,
            HeadKind::Homography => &mut self.homography_head,
        }
    }

    /// Every weight tensor with a stable name and its logical dims.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (i, conv) in self.extractor.blocks.iter().enumerate() {
            push_conv(&mut out, &format!("extractor.block{}", i + 1), conv);
        }
        for kind in HeadKind::ALL {
            let head = self.head(kind);
            push_conv(&mut out, &format!("{}.conv1", kind.name()), &head.conv1);
            push_conv(&mut out, &format!("{}.conv2", kind.name()), &head.conv2);
            for (i, l) in head.fc.iter().enumerate() {
                out.push((format!("{}.fc{}.weight", kind.name(), i + 1), vec![l.outputs, l.inputs], &l.weight[..]));
                out.push((format!("{}.fc{}.bias", kind.name(), i + 1), vec![l.outputs], &l.bias[..]));
            }
        }
        out
    }

    /// Mutable views in the same order as [`named_tensors`](Self::named_tensors),
    /// each tagged with whether its component is frozen.
    pub fn tensors_mut(&mut self) -> Vec<(bool, &mut Vec<f64>)> {
        let frozen = self.frozen;
        let mut out: Vec<(bool, &mut Vec<f64>)> = Vec::new();
        for conv in self.extractor.blocks.iter_mut() {
            out.push((frozen.extractor, &mut conv.weight));
            out.push((frozen.extractor, &mut conv.bias));
        }
        for (kind, head) in [
            (HeadKind::Affine, &mut self.affine_head),
            (HeadKind::Perspective, &mut self.perspective_head),
            (HeadKind::Homography, &mut self.homography_head),
        ] {
            let f = frozen.head(kind);
            out.push((f, &mut head.conv1.weight));
            out.push((f, &mut head.conv1.bias));
            out.push((f, &mut head.conv2.weight));
            out.push((f, &mut head.conv2.bias));
            for l in head.fc.iter_mut() {
                out.push((f, &mut l.weight));
                out.push((f, &mut l.bias));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, v)| v.len()).sum()
    }
}

fn push_conv<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, prefix: &str, conv: &'a Conv2d) {
    out.push((
        format!("{prefix}.weight"),
        vec![conv.out_channels, conv.in_channels, conv.kernel, conv.kernel],
        &conv.weight[..],
    ));
    out.push((format!("{prefix}.bias"), vec![conv.out_channels], &conv.bias[..]));
}

/// Parameter estimates of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOutput {
    pub theta_aff: AffineParams,
    pub theta_pers: PerspectiveParams,
    pub theta_hom: HomographyParams,
    pub theta_guide: HomographyParams,
    pub theta_en: HomographyParams,
}

impl PipelineOutput {
    pub fn assemble(aff: &[f64], pers: &[f64], hom: &[f64], ensemble_weight: f64) -> Self {
        let theta_aff = AffineParams(aff.try_into().expect("6 affine outputs"));
        let theta_pers = PerspectiveParams(pers.try_into().expect("2 perspective outputs"));
        let theta_hom = HomographyParams(hom.try_into().expect("8 homography outputs"));
        let theta_guide = concat_affine_perspective(&theta_aff, &theta_pers);
        let theta_en = ensemble_weighted(&theta_hom, &theta_guide, ensemble_weight);
        Self { theta_aff, theta_pers, theta_hom, theta_guide, theta_en }
    }
}

/// Elementwise mean of two homographies.
pub fn ensemble(a: &HomographyParams, b: &HomographyParams) -> HomographyParams {
    ensemble_weighted(a, b, DEFAULT_ENSEMBLE_WEIGHT)
}

/// `λ·a + (1-λ)·b`, elementwise.
pub fn ensemble_weighted(a: &HomographyParams, b: &HomographyParams, lambda: f64) -> HomographyParams {
    let mut out = [0.0; 8];
    for (o, (x, y)) in out.iter_mut().zip(a.0.iter().zip(&b.0)) {
        *o = lambda * x + (1.0 - lambda) * y;
    }
    HomographyParams(out)
}

fn check_same_dims(images: &[&Image]) -> Result<()> {
    let d0 = images[0].dims();
    if let Some(other) = images.iter().find(|i| i.dims() != d0) {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", d0, other.dims())));
    }
    Ok(())
}

fn features(img: &Image, m: &ModelState) -> Result<FeatureMap> {
    extract_normalized_cached(img, &m.extractor).map(|(f, _)| f)
}

/// Training-time pipeline on a labelled triplet with the default mean ensemble.
pub fn forward_pipeline(source: &Image, affine_target: &Image, hom_target: &Image, m: &ModelState) -> Result<PipelineOutput> {
    forward_pipeline_weighted(source, affine_target, hom_target, m, DEFAULT_ENSEMBLE_WEIGHT)
}

pub fn forward_pipeline_weighted(
    source: &Image,
    affine_target: &Image,
    hom_target: &Image,
    m: &ModelState,
    ensemble_weight: f64,
) -> Result<PipelineOutput> {
    check_same_dims(&[source, affine_target, hom_target])?;
    let fs = features(source, m)?;
    let fa = features(affine_target, m)?;
    let fh = features(hom_target, m)?;
    let aff = regress(&correlation_map(&fs, &fa)?, &m.affine_head)?;
    let pers = regress(&correlation_map(&fa, &fh)?, &m.perspective_head)?;
    let hom = regress(&correlation_map(&fs, &fh)?, &m.homography_head)?;
    Ok(PipelineOutput::assemble(&aff, &pers, &hom, ensemble_weight))
}

/// Inference on an unlabelled pair: the affine target is synthesized by
/// warping `source` with the regressed affine parameters.
pub fn align(source: &Image, target: &Image, m: &ModelState, ensemble_weight: f64) -> Result<PipelineOutput> {
    check_same_dims(&[source, target])?;
    let fs = features(source, m)?;
    let ft = features(target, m)?;
    let aff = regress(&correlation_map(&fs, &ft)?, &m.affine_head)?;
    let theta_aff = AffineParams(aff.as_slice().try_into().expect("6 affine outputs"));
    let warped = warp_image(source, &theta_aff.lift())?;
    let fw = features(&warped, m)?;
    let pers = regress(&correlation_map(&fw, &ft)?, &m.perspective_head)?;
    let hom = regress(&correlation_map(&fs, &ft)?, &m.homography_head)?;
    Ok(PipelineOutput::assemble(&aff, &pers, &hom, ensemble_weight))
}
