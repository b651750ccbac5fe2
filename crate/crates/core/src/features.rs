//! Convolutional feature extractor and the dense correlation layer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::nn::{gemm, maxpool2_backward, maxpool2_forward, relu_backward, relu_inplace, Conv2d, ConvCache, MaxPoolCache, Tensor};

/// Channel widths of the three extractor blocks.
pub const EXTRACTOR_CHANNELS: [usize; 3] = [16, 32, 64];
/// Spatial downsampling of the extractor (three 2x2 pools).
pub const DOWNSAMPLE: usize = 8;

/// `h' x w' x d'` feature volume, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(pub(crate) Tensor);

impl FeatureMap {
    pub fn from_tensor(t: Tensor) -> Self {
        Self(t)
    }

    pub fn height(&self) -> usize {
        self.0.h
    }

    pub fn width(&self) -> usize {
        self.0.w
    }

    pub fn depth(&self) -> usize {
        self.0.c
    }

    /// Feature `ch` at location `(i, j)`.
    pub fn get(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.0.data[(ch * self.0.h + i) * self.0.w + j]
    }

    pub fn vector_at(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.depth()).map(|ch| self.get(i, j, ch)).collect()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// `h' x w' x (h'·w')` similarity volume. Channel `k` scores source location
/// `k = i_k·w' + j_k` against each target location `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap(pub(crate) Tensor);

impl CorrelationMap {
    pub fn height(&self) -> usize {
        self.0.h
    }

    pub fn width(&self) -> usize {
        self.0.w
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0.data[(k * self.0.h + i) * self.0.w + j]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Three `conv3x3 → ReLU → maxpool2x2` blocks, channels `d → 16 → 32 → 64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorWeights {
    pub blocks: [Conv2d; 3],
}

impl ExtractorWeights {
    pub fn zeros(in_channels: usize) -> Self {
        let [c1, c2, c3] = EXTRACTOR_CHANNELS;
        Self {
            blocks: [
                Conv2d::zeros(in_channels, c1, 3, 1, 1),
                Conv2d::zeros(c1, c2, 3, 1, 1),
                Conv2d::zeros(c2, c3, 3, 1, 1),
            ],
        }
    }

    pub fn glorot<R: Rng + ?Sized>(in_channels: usize, rng: &mut R) -> Self {
        let [c1, c2, c3] = EXTRACTOR_CHANNELS;
        Self {
            blocks: [
                Conv2d::glorot(in_channels, c1, 3, 1, 1, rng),
                Conv2d::glorot(c1, c2, 3, 1, 1, rng),
                Conv2d::glorot(c2, c3, 3, 1, 1, rng),
            ],
        }
    }

    pub fn in_channels(&self) -> usize {
        self.blocks[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.blocks[2].out_channels
    }
}

/// Per-image activations retained for the backward pass.
pub struct ExtractorCache {
    blocks: Vec<(ConvCache, Tensor, MaxPoolCache)>,
    raw: Tensor,
    normalized: Tensor,
}

pub(crate) fn image_to_tensor(img: &Image) -> Tensor {
    let (h, w, d) = img.dims();
    let mut t = Tensor::zeros(d, h, w);
    for (idx, v) in img.data().iter().enumerate() {
        let (pix, k) = (idx / d, idx % d);
        t.data[k * h * w + pix] = *v;
    }
    t
}

fn check_input(img: &Image, w: &ExtractorWeights) -> Result<()> {
    let (h, wd, d) = img.dims();
    if h % DOWNSAMPLE != 0 || wd % DOWNSAMPLE != 0 {
        return Err(Error::DimensionNotDivisible { h, w: wd, factor: DOWNSAMPLE });
    }
    if d != w.in_channels() {
        return Err(Error::DimensionMismatch(format!(
            "image has {d} channels, extractor expects {}",
            w.in_channels()
        )));
    }
    Ok(())
}

/// Unnormalized extractor output (after the last ReLU + pool).
pub fn extract_features(img: &Image, w: &ExtractorWeights) -> Result<FeatureMap> {
    check_input(img, w)?;
    let mut x = image_to_tensor(img);
    for conv in &w.blocks {
        let (mut y, _) = conv.forward(&x);
        relu_inplace(&mut y);
        x = maxpool2_forward(&y).0;
    }
    Ok(FeatureMap(x))
}

/// Extractor followed by per-location L2 normalization, keeping the cache.
pub(crate) fn extract_normalized_cached(img: &Image, w: &ExtractorWeights) -> Result<(FeatureMap, ExtractorCache)> {
    check_input(img, w)?;
    let mut x = image_to_tensor(img);
    let mut blocks = Vec::with_capacity(3);
    for conv in &w.blocks {
        let (mut y, conv_cache) = conv.forward(&x);
        relu_inplace(&mut y);
        let (pooled, pool_cache) = maxpool2_forward(&y);
        blocks.push((conv_cache, y, pool_cache));
        x = pooled;
    }
    let normalized = normalize_features(&FeatureMap(x.clone())).0;
    Ok((FeatureMap(normalized.clone()), ExtractorCache { blocks, raw: x, normalized }))
}

/// Extractor gradient accumulation given `d loss / d normalized features`.
pub(crate) fn extractor_backward(w: &ExtractorWeights, cache: &ExtractorCache, dfeat: &Tensor, grad: &mut ExtractorWeights) {
    let mut g = normalize_backward(&cache.raw, &cache.normalized, dfeat);
    for (i, conv) in w.blocks.iter().enumerate().rev() {
        let (conv_cache, relu_out, pool_cache) = &cache.blocks[i];
        let mut dy = maxpool2_backward(pool_cache, &g);
        relu_backward(&relu_out.data, &mut dy.data);
        match conv.backward(conv_cache, &dy, &mut grad.blocks[i], i > 0) {
            Some(dx) => g = dx,
            None => break,
        }
    }
}

/// Divides each location's `d'`-vector by its L2 norm; zero vectors stay zero.
pub fn normalize_features(f: &FeatureMap) -> FeatureMap {
    let t = &f.0;
    let plane = t.plane();
    let mut out = t.clone();
    for p in 0..plane {
        let norm = (0..t.c).map(|c| t.data[c * plane + p].powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for c in 0..t.c {
                out.data[c * plane + p] /= norm;
            }
        }
    }
    FeatureMap(out)
}

/// `dx = (dy - y·(y·dy)) / |x|`; zero where the forward vector was zero.
pub(crate) fn normalize_backward(raw: &Tensor, normalized: &Tensor, dy: &Tensor) -> Tensor {
    let plane = raw.plane();
    let mut dx = Tensor::zeros(raw.c, raw.h, raw.w);
    for p in 0..plane {
        let norm = (0..raw.c).map(|c| raw.data[c * plane + p].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let dot: f64 = (0..raw.c).map(|c| normalized.data[c * plane + p] * dy.data[c * plane + p]).sum();
        for c in 0..raw.c {
            let i = c * plane + p;
            dx.data[i] = (dy.data[i] - normalized.data[i] * dot) / norm;
        }
    }
    dx
}

/// Dense dot-product correlation between source and target features.
pub fn correlation_map(fs: &FeatureMap, ft: &FeatureMap) -> Result<CorrelationMap> {
    if fs.0.shape() != ft.0.shape() {
        return Err(Error::DimensionMismatch(format!(
            "feature maps {:?} vs {:?}",
            fs.0.shape(),
            ft.0.shape()
        )));
    }
    let (d, h, w) = fs.0.shape();
    let n = h * w;
    let mut out = Tensor::zeros(n, h, w);
    // C (n x n) = FSᵀ (n x d) · FT (d x n)
    gemm(n, d, n, &fs.0.data, (1, n), &ft.0.data, (n, 1), 0.0, &mut out.data, (n, 1));
    Ok(CorrelationMap(out))
}

/// Gradients of a correlation map with respect to its source and target features.
pub(crate) fn correlation_backward(fs: &FeatureMap, ft: &FeatureMap, dc: &Tensor) -> (Tensor, Tensor) {
    let (d, h, w) = fs.0.shape();
    let n = h * w;
    let mut dfs = Tensor::zeros(d, h, w);
    let mut dft = Tensor::zeros(d, h, w);
    // dFS (d x n) = FT (d x n) · dCᵀ (n x n)
    gemm(d, n, n, &ft.0.data, (n, 1), &dc.data, (1, n), 0.0, &mut dfs.data, (n, 1));
    // dFT (d x n) = FS (d x n) · dC (n x n)
    gemm(d, n, n, &fs.0.data, (n, 1), &dc.data, (n, 1), 0.0, &mut dft.data, (n, 1));
    (dfs, dft)
}
