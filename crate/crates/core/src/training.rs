//! Reverse-mode gradients of the pipeline objective, SGD with momentum, and
//! the staged training schedule.
//!
//! Stages:
//!
//! * [`Stage::Affine`]: extractor + affine head, objective `α·ℓ(aff)`.
//! * [`Stage::PerspectiveHom`]: extractor and affine head frozen, perspective
//!   and homography heads trained on the full four-term objective.
//! * [`Stage::FullEnsemble`]: additionally freezes the perspective head and
//!   fine-tunes the homography head.
//!
//! Loss terms with zero weight are not evaluated and appear as zero in the
//! history; branches that feed no active term are skipped entirely.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::checkpoint;
use crate::datagen::TrainingPair;
use crate::error::{Error, Result};
use crate::features::{correlation_backward, correlation_map, extract_normalized_cached, extractor_backward, CorrelationMap, ExtractorCache, FeatureMap};
use crate::geometry::Grid;
use crate::loss::{total_loss, total_loss_with_grads, ActiveTerms, LossBreakdown, LossWeights, OutputGrads, DEFAULT_GRID_N};
use crate::nn::Tensor;
use crate::regression::{forward_pipeline_weighted, FrozenSet, HeadCache, HeadKind, ModelState, PipelineOutput, DEFAULT_ENSEMBLE_WEIGHT};

pub const MOMENTUM: f64 = 0.9;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Affine,
    PerspectiveHom,
    FullEnsemble,
}

impl Stage {
    /// Components a stage freezes unless [`TrainConfig::freeze`] overrides
    /// it; [`TrainConfig::train_extractor`] lifts the extractor freeze.
    pub fn implied_freeze(self) -> FrozenSet {
        match self {
            Stage::Affine => FrozenSet { perspective_head: true, homography_head: true, ..FrozenSet::NONE },
            Stage::PerspectiveHom => FrozenSet { extractor: true, affine_head: true, ..FrozenSet::NONE },
            Stage::FullEnsemble => FrozenSet { homography_head: false, ..FrozenSet::ALL },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Affine => "affine",
            Stage::PerspectiveHom => "persp-hom",
            Stage::FullEnsemble => "full",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(Stage::Affine),
            "persp-hom" => Ok(Stage::PerspectiveHom),
            "full" => Ok(Stage::FullEnsemble),
            other => Err(Error::InvalidConfig(format!("unknown stage {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub grid_n: usize,
    pub ensemble_weight: f64,
    /// Replaces the stage's implied freeze set when present.
    pub freeze: Option<FrozenSet>,
    /// Keep the extractor trainable in the stages that freeze it by default.
    pub train_extractor: bool,
}

impl TrainConfig {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            epochs: 10,
            batch_size: 16,
            learning_rate: DEFAULT_LEARNING_RATE,
            momentum: MOMENTUM,
            seed: 0,
            loss_weights: LossWeights::default(),
            grid_n: DEFAULT_GRID_N,
            ensemble_weight: DEFAULT_ENSEMBLE_WEIGHT,
            freeze: None,
            train_extractor: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(0.0..=1.0).contains(&self.ensemble_weight) {
            return Err(Error::InvalidConfig(format!("ensemble weight must be in [0, 1], got {}", self.ensemble_weight)));
        }
        LossWeights::new(self.loss_weights.alpha, self.loss_weights.beta, self.loss_weights.gamma, self.loss_weights.delta)?;
        Grid::new(self.grid_n)?;
        Ok(())
    }

    pub fn effective_freeze(&self) -> FrozenSet {
        if let Some(f) = self.freeze {
            return f;
        }
        let mut f = self.stage.implied_freeze();
        if self.train_extractor {
            f.extractor = false;
        }
        f
    }

    /// The objective actually optimized in this stage.
    pub fn effective_weights(&self) -> LossWeights {
        match self.stage {
            Stage::Affine => LossWeights { alpha: self.loss_weights.alpha, beta: 0.0, gamma: 0.0, delta: 0.0 },
            _ => self.loss_weights,
        }
    }
}

/// Per-tensor gradients, ordered like [`ModelState::named_tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    buffer: ModelState,
    frozen: FrozenSet,
}

impl Gradients {
    /// Gradients of unfrozen tensors only.
    pub fn named(&self) -> Vec<(String, &[f64])> {
        let frozen: Vec<bool> = frozen_mask(&self.buffer, self.frozen);
        self.buffer
            .named_tensors()
            .into_iter()
            .zip(frozen)
            .filter(|(_, f)| !f)
            .map(|((name, _, v), _)| (name, v))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.named().is_empty()
    }

    /// Flat view in the order of [`ModelState::tensors_mut`], frozen tensors included.
    pub fn all(&self) -> Vec<&[f64]> {
        self.buffer.named_tensors().into_iter().map(|(_, _, v)| v).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.all().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn frozen_mask(m: &ModelState, frozen: FrozenSet) -> Vec<bool> {
    let mut probe = m.zeros_like();
    probe.frozen = frozen;
    probe.tensors_mut().into_iter().map(|(f, _)| f).collect()
}

/// Images a stage actually needs, derived from the active loss terms.
#[derive(Debug, Clone, Copy)]
struct Plan {
    active: ActiveTerms,
    affine: bool,
    perspective: bool,
    homography: bool,
}

impl Plan {
    fn new(w: &LossWeights) -> Self {
        let active = ActiveTerms::from_weights(w);
        Self {
            active,
            affine: active.needs_affine(),
            perspective: active.needs_perspective(),
            homography: active.needs_homography(),
        }
    }

    fn uses(&self, kind: HeadKind) -> bool {
        match kind {
            HeadKind::Affine => self.affine,
            HeadKind::Perspective => self.perspective,
            HeadKind::Homography => self.homography,
        }
    }

    /// (source, affine target, homography target)
    fn images(&self) -> [bool; 3] {
        [self.affine || self.homography, self.affine || self.perspective, self.perspective || self.homography]
    }
}

/// Image indices `(source side, target side)` of each branch's correlation.
fn branch_images(kind: HeadKind) -> (usize, usize) {
    match kind {
        HeadKind::Affine => (0, 1),
        HeadKind::Perspective => (1, 2),
        HeadKind::Homography => (0, 2),
    }
}

fn pair_images(p: &TrainingPair) -> [&crate::Image; 3] {
    [&p.source, &p.affine_target, &p.homography_target]
}

/// Forward values reusable across epochs when the extractor is frozen.
struct Precomputed {
    corr: [Option<CorrelationMap>; 3],
    /// Head outputs for heads that are frozen as well.
    outputs: [Option<Vec<f64>>; 3],
}

fn head_index(kind: HeadKind) -> usize {
    match kind {
        HeadKind::Affine => 0,
        HeadKind::Perspective => 1,
        HeadKind::Homography => 2,
    }
}

fn precompute(model: &ModelState, pair: &TrainingPair, plan: &Plan) -> Result<Precomputed> {
    let images = pair_images(pair);
    let mut feats: [Option<FeatureMap>; 3] = [None, None, None];
    for (i, needed) in plan.images().into_iter().enumerate() {
        if needed {
            feats[i] = Some(extract_normalized_cached(images[i], &model.extractor)?.0);
        }
    }
    let mut pre = Precomputed { corr: [None, None, None], outputs: [None, None, None] };
    for kind in HeadKind::ALL {
        if !plan.uses(kind) {
            continue;
        }
        let (a, b) = branch_images(kind);
        let c = correlation_map(feats[a].as_ref().expect("feature"), feats[b].as_ref().expect("feature"))?;
        if model.frozen.head(kind) {
            pre.outputs[head_index(kind)] = Some(model.head(kind).forward_cached(&c)?.0);
        }
        pre.corr[head_index(kind)] = Some(c);
    }
    Ok(pre)
}

/// One sample: forward, loss, and gradient accumulation into `grads`.
/// `scratch` absorbs weight gradients of frozen heads that must still be
/// traversed to reach a trainable extractor.
#[allow(clippy::too_many_arguments)]
fn accumulate_sample(
    model: &ModelState,
    pair: &TrainingPair,
    pre: Option<&Precomputed>,
    plan: &Plan,
    weights: &LossWeights,
    ensemble_weight: f64,
    grid: &Grid,
    grads: &mut ModelState,
    scratch: &mut ModelState,
) -> Result<LossBreakdown> {
    let frozen = model.frozen;
    let train_extractor = !frozen.extractor;

    let mut feats: [Option<(FeatureMap, ExtractorCache)>; 3] = [None, None, None];
    let mut corr_owned: [Option<CorrelationMap>; 3] = [None, None, None];
    if pre.is_none() {
        let images = pair_images(pair);
        for (i, needed) in plan.images().into_iter().enumerate() {
            if needed {
                feats[i] = Some(extract_normalized_cached(images[i], &model.extractor)?);
            }
        }
        for kind in HeadKind::ALL {
            if plan.uses(kind) {
                let (a, b) = branch_images(kind);
                let fa = &feats[a].as_ref().expect("feature").0;
                let fb = &feats[b].as_ref().expect("feature").0;
                corr_owned[head_index(kind)] = Some(correlation_map(fa, fb)?);
            }
        }
    }

    let mut outputs: [Vec<f64>; 3] = HeadKind::ALL.map(|k| k.identity().to_vec());
    let mut caches: [Option<HeadCache>; 3] = [None, None, None];
    for kind in HeadKind::ALL {
        if !plan.uses(kind) {
            continue;
        }
        let i = head_index(kind);
        if let Some(out) = pre.and_then(|p| p.outputs[i].clone()) {
            outputs[i] = out;
            continue;
        }
        let c = match pre {
            Some(p) => p.corr[i].as_ref().expect("precomputed correlation"),
            None => corr_owned[i].as_ref().expect("correlation"),
        };
        let (out, cache) = model.head(kind).forward_cached(c)?;
        outputs[i] = out;
        caches[i] = Some(cache);
    }

    let out = PipelineOutput::assemble(&outputs[0], &outputs[1], &outputs[2], ensemble_weight);
    let (breakdown, og): (LossBreakdown, OutputGrads) =
        total_loss_with_grads(&out, &pair.labels(), grid, weights, plan.active, ensemble_weight)?;

    let mut dfeat: [Option<Tensor>; 3] = [None, None, None];
    for kind in HeadKind::ALL {
        let i = head_index(kind);
        let Some(cache) = caches[i].as_ref() else { continue };
        let head_frozen = frozen.head(kind);
        if head_frozen && !train_extractor {
            continue;
        }
        let dout: &[f64] = match kind {
            HeadKind::Affine => &og.affine,
            HeadKind::Perspective => &og.perspective,
            HeadKind::Homography => &og.homography,
        };
        let target = if head_frozen { scratch.head_mut(kind) } else { grads.head_mut(kind) };
        let dcorr = model.head(kind).backward(cache, dout, target, train_extractor);
        if let Some(dc) = dcorr {
            let (a, b) = branch_images(kind);
            let fa = &feats[a].as_ref().expect("feature").0;
            let fb = &feats[b].as_ref().expect("feature").0;
            let (dfa, dfb) = correlation_backward(fa, fb, &dc);
            add_into(&mut dfeat[a], dfa);
            add_into(&mut dfeat[b], dfb);
        }
    }
    if train_extractor {
        for (i, d) in dfeat.iter().enumerate() {
            if let (Some(d), Some((_, cache))) = (d, feats[i].as_ref()) {
                extractor_backward(&model.extractor, cache, d, &mut grads.extractor);
            }
        }
    }
    Ok(breakdown)
}

fn add_into(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(acc) => acc.data.iter_mut().zip(&t.data).for_each(|(a, b)| *a += b),
        None => *slot = Some(t),
    }
}

fn zero_all(m: &mut ModelState) {
    for (_, t) in m.tensors_mut() {
        t.fill(0.0);
    }
}

/// `dst += src`; summing whole per-sample gradients keeps the batch reduction
/// order fixed.
fn add_all(dst: &mut ModelState, src: &mut ModelState) {
    for ((_, d), (_, s)) in dst.tensors_mut().into_iter().zip(src.tensors_mut()) {
        d.iter_mut().zip(s.iter()).for_each(|(a, b)| *a += b);
    }
}

fn scale_all(m: &mut ModelState, s: f64) {
    for (_, t) in m.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= s);
    }
}

/// Mean objective and its exact gradient over `batch` for the weights and
/// freezes of `cfg`. Frozen tensors receive no gradient.
pub fn batch_gradients(model: &ModelState, batch: &[&TrainingPair], cfg: &TrainConfig) -> Result<(LossBreakdown, Gradients)> {
    cfg.validate()?;
    let mut model = model.clone();
    model.frozen = cfg.effective_freeze().union(model.frozen);
    let weights = cfg.effective_weights();
    let plan = Plan::new(&weights);
    let grid = Grid::new(cfg.grid_n)?;
    let mut grads = model.zeros_like();
    let mut sample = model.zeros_like();
    let mut scratch = model.zeros_like();
    let mut losses = Vec::with_capacity(batch.len());
    for p in batch {
        zero_all(&mut sample);
        losses.push(accumulate_sample(&model, p, None, &plan, &weights, cfg.ensemble_weight, &grid, &mut sample, &mut scratch)?);
        add_all(&mut grads, &mut sample);
    }
    scale_all(&mut grads, 1.0 / batch.len().max(1) as f64);
    let g = Gradients { buffer: grads, frozen: model.frozen };
    if !g.is_finite() {
        return Err(Error::NumericalOverflow);
    }
    Ok((LossBreakdown::mean(&losses), g))
}

/// Mean objective over `batch` via the plain inference path (no caches).
pub fn batch_objective(model: &ModelState, batch: &[&TrainingPair], weights: &LossWeights, ensemble_weight: f64, grid: &Grid) -> Result<f64> {
    let mut acc = 0.0;
    for p in batch {
        let out = forward_pipeline_weighted(&p.source, &p.affine_target, &p.homography_target, model, ensemble_weight)?;
        acc += total_loss(&out, &p.labels(), grid, weights)?.total;
    }
    Ok(acc / batch.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Batch-mean losses, one entry per executed step.
    pub history: Vec<LossBreakdown>,
    /// Step indices whose update was skipped for non-finite values.
    pub skipped_steps: Vec<usize>,
    pub steps_per_epoch: usize,
    pub wall_time: Duration,
    /// CRC32 of the serialized final model.
    pub checksum: u32,
}

impl TrainReport {
    pub fn epoch(&self, e: usize) -> &[LossBreakdown] {
        let start = e * self.steps_per_epoch;
        &self.history[start.min(self.history.len())..((e + 1) * self.steps_per_epoch).min(self.history.len())]
    }

    pub fn epochs(&self) -> usize {
        if self.steps_per_epoch == 0 {
            0
        } else {
            self.history.len() / self.steps_per_epoch
        }
    }

    pub fn epoch_mean(&self, e: usize) -> LossBreakdown {
        LossBreakdown::mean(self.epoch(e))
    }
}

/// Trains with SGD + momentum. `on_epoch(epoch, mean_breakdown)` runs after
/// each epoch.
///
/// Freeze flags stored in `init` are honoured on top of the stage's set and
/// are returned unchanged; stage freezes are not written back.
pub fn train_with_progress(
    data: &[TrainingPair],
    cfg: &TrainConfig,
    init: ModelState,
    mut on_epoch: impl FnMut(usize, &LossBreakdown),
) -> Result<(ModelState, TrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    let start = Instant::now();
    let mut model = init;
    let persistent_freeze = model.frozen;
    model.frozen = cfg.effective_freeze().union(persistent_freeze);
    let weights = cfg.effective_weights();
    let plan = Plan::new(&weights);
    let grid = Grid::new(cfg.grid_n)?;

    let pre: Option<Vec<Precomputed>> = if model.frozen.extractor {
        Some(data.iter().map(|p| precompute(&model, p, &plan)).collect::<Result<_>>()?)
    } else {
        None
    };

    let frozen_mask = frozen_mask(&model, model.frozen);
    let mut velocity = model.zeros_like();
    let mut grads = model.zeros_like();
    let mut sample = model.zeros_like();
    let mut scratch = model.zeros_like();
    let mut rng = crate::rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let steps_per_epoch = data.len().div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut skipped_steps = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let epoch_start = history.len();
        for batch in order.chunks(cfg.batch_size) {
            let step = history.len();
            zero_all(&mut grads);
            let mut losses = Vec::with_capacity(batch.len());
            let mut failed = false;
            for &i in batch {
                let p = pre.as_ref().map(|v| &v[i]);
                zero_all(&mut sample);
                match accumulate_sample(&model, &data[i], p, &plan, &weights, cfg.ensemble_weight, &grid, &mut sample, &mut scratch) {
                    Ok(b) => {
                        losses.push(b);
                        add_all(&mut grads, &mut sample);
                    }
                    Err(Error::DegenerateDenominator { .. }) | Err(Error::NumericalOverflow) => {
                        failed = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            let mean = LossBreakdown::mean(&losses);
            let inv = 1.0 / batch.len() as f64;
            let grads_finite = grads.named_tensors().iter().all(|(_, _, t)| t.iter().all(|v| v.is_finite()));
            if failed || !grads_finite || !mean.is_finite() {
                skipped_steps.push(step);
                history.push(mean);
                continue;
            }
            let lr = cfg.learning_rate;
            let mu = cfg.momentum;
            for (((_, w), (_, v)), ((_, g), frozen)) in model
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grads.tensors_mut().into_iter().zip(&frozen_mask))
            {
                if *frozen {
                    continue;
                }
                for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
                    *vi = mu * *vi + gi * inv;
                    *wi -= lr * *vi;
                }
            }
            history.push(mean);
        }
        on_epoch(epoch, &LossBreakdown::mean(&history[epoch_start..]));
    }

    model.frozen = persistent_freeze;
    let checksum = checkpoint::checksum(&model);
    let report = TrainReport { history, skipped_steps, steps_per_epoch, wall_time: start.elapsed(), checksum };
    Ok((model, report))
}

pub fn train(data: &[TrainingPair], cfg: &TrainConfig, init: ModelState) -> Result<(ModelState, TrainReport)> {
    train_with_progress(data, cfg, init, |_, _| {})
}
