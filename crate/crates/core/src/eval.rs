//! Percentage of correct keypoints (PCK), synthetic test sets, and report
//! tables.
//!
//! A keypoint counts as correct when the pixel distance between its
//! predicted and ground-truth images is strictly below `τ·max(h, w)`.

use std::fmt::Write as _;

use rand::Rng;

use crate::datagen::{generate_pair, record_rng, TrainingPair};
use crate::error::{Error, Result};
use crate::geometry::{HomographyParams, Point, TransformRanges};
use crate::imaging::normalized_to_pixel;
use crate::regression::{align, ModelState};

pub const DEFAULT_TAUS: [f64; 3] = [0.05, 0.03, 0.01];
pub const DEFAULT_KEYPOINTS: usize = 20;
/// Keypoints are drawn from `[-KEYPOINT_EXTENT, KEYPOINT_EXTENT]²`.
pub const KEYPOINT_EXTENT: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    points: Vec<Point>,
}

impl KeypointSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("a keypoint set needs at least one point".into()));
        }
        if points.iter().any(|p| !(p.x.abs() <= 1.0 && p.y.abs() <= 1.0)) {
            return Err(Error::InvalidConfig("keypoints must lie in [-1, 1]^2".into()));
        }
        Ok(Self { points })
    }

    /// `n` points uniform in the central 80% of the normalized square.
    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let pts = (0..n)
            .map(|_| Point::new(rng.gen_range(-KEYPOINT_EXTENT..=KEYPOINT_EXTENT), rng.gen_range(-KEYPOINT_EXTENT..=KEYPOINT_EXTENT)))
            .collect();
        Self::new(pts)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PckConfig {
    pub taus: Vec<f64>,
    pub h: usize,
    pub w: usize,
    /// Mean of per-pair PCK instead of pooling all keypoints.
    pub macro_average: bool,
}

impl PckConfig {
    pub fn new(h: usize, w: usize) -> Self {
        Self { taus: DEFAULT_TAUS.to_vec(), h, w, macro_average: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::InvalidConfig(format!("every tau must lie in (0, 1), got {:?}", self.taus)));
        }
        if self.h < 2 || self.w < 2 {
            return Err(Error::InvalidConfig(format!("image size {}x{} too small", self.h, self.w)));
        }
        Ok(())
    }

    pub fn tolerance_px(&self, tau: f64) -> f64 {
        tau * self.h.max(self.w) as f64
    }
}

/// Number of keypoints whose transformed pixel positions agree within the
/// tolerance for `tau`.
pub fn pck_count(kp: &KeypointSet, theta_hat: &HomographyParams, theta_gt: &HomographyParams, cfg: &PckConfig, tau: f64) -> Result<usize> {
    let tol = cfg.tolerance_px(tau);
    let mut correct = 0;
    for (i, p) in kp.points.iter().enumerate() {
        let reindex = |e: Error| match e {
            Error::DegenerateDenominator { denominator, .. } => Error::DegenerateDenominator { index: i, denominator },
            other => other,
        };
        let a = theta_hat.apply(*p).map_err(reindex)?;
        let b = theta_gt.apply(*p).map_err(reindex)?;
        let (ra, ca) = normalized_to_pixel(a, cfg.h, cfg.w);
        let (rb, cb) = normalized_to_pixel(b, cfg.h, cfg.w);
        if (ra - rb).hypot(ca - cb) < tol {
            correct += 1;
        }
    }
    Ok(correct)
}

pub fn pck(kp: &KeypointSet, theta_hat: &HomographyParams, theta_gt: &HomographyParams, cfg: &PckConfig, tau: f64) -> Result<f64> {
    Ok(pck_count(kp, theta_hat, theta_gt, cfg, tau)? as f64 / kp.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRecord {
    pub pair: TrainingPair,
    pub keypoints: KeypointSet,
}

/// One record per source image, with ranges widened by `scale_up` (then
/// capped to what the sampler can satisfy).
pub fn make_test_set(sources: &[crate::Image], train_ranges: &TransformRanges, scale_up: f64, n_keypoints: usize, seed: u64) -> Result<Vec<TestRecord>> {
    if !(scale_up >= 1.0 && scale_up.is_finite()) {
        return Err(Error::InvalidConfig(format!("scale_up must be >= 1, got {scale_up}")));
    }
    let ranges = test_ranges(train_ranges, scale_up);
    sources
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let mut rng = record_rng(seed, i);
            let pair = generate_pair(src, &ranges, &mut rng)?;
            let keypoints = KeypointSet::sample(n_keypoints, &mut rng)?;
            Ok(TestRecord { pair, keypoints })
        })
        .collect()
}

pub fn test_ranges(train_ranges: &TransformRanges, scale_up: f64) -> TransformRanges {
    if scale_up == 1.0 {
        *train_ranges
    } else {
        train_ranges.scaled(scale_up).capped()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Identity,
    Affine,
    Homography,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Identity, Method::Affine, Method::Homography, Method::Ensemble];

    pub fn name(self) -> &'static str {
        match self {
            Method::Identity => "identity",
            Method::Affine => "affine",
            Method::Homography => "homography",
            Method::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PckRow {
    pub method: Method,
    pub tau: f64,
    pub pck: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PckReport {
    pub rows: Vec<PckRow>,
}

impl PckReport {
    pub fn get(&self, method: Method, tau: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method && r.tau == tau).map(|r| r.pck)
    }

    /// `method\ttau\tpck` with one row per (method, τ).
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("method\ttau\tpck\n");
        for r in &self.rows {
            writeln!(s, "{}\t{}\t{:.6}", r.method.name(), r.tau, r.pck).expect("write to string");
        }
        s
    }

    /// Methods as rows, τ as columns, PCK in percent.
    pub fn render_aligned(&self) -> String {
        let mut taus: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !taus.contains(&r.tau) {
                taus.push(r.tau);
            }
        }
        let mut s = format!("{:<12}", "method");
        for t in &taus {
            s.push_str(&format!("{:>12}", format!("tau={t}")));
        }
        s.push('\n');
        for m in Method::ALL {
            if !self.rows.iter().any(|r| r.method == m) {
                continue;
            }
            s.push_str(&format!("{:<12}", m.name()));
            for t in &taus {
                match self.get(m, *t) {
                    Some(v) => s.push_str(&format!("{:>11.1}%", 100.0 * v)),
                    None => s.push_str(&format!("{:>12}", "-")),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Scores predictions against each record's ground truth. `predict` returns
/// one homography per method in [`Method::ALL`] order, or `None` when the
/// model failed on that record; failed or degenerate predictions count as
/// zero correct keypoints.
pub fn evaluate_predictions(
    records: &[TestRecord],
    cfg: &PckConfig,
    mut predict: impl FnMut(&TestRecord) -> Option<[HomographyParams; 4]>,
) -> Result<PckReport> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let nm = Method::ALL.len();
    let nt = cfg.taus.len();
    let mut correct = vec![0usize; nm * nt];
    let mut per_pair = vec![0.0f64; nm * nt];
    let mut total = 0usize;
    for rec in records {
        let preds = predict(rec);
        let gt = rec.pair.gt_homography;
        let n = rec.keypoints.len();
        total += n;
        for (mi, _) in Method::ALL.iter().enumerate() {
            for (ti, &tau) in cfg.taus.iter().enumerate() {
                let c = match &preds {
                    Some(p) => match pck_count(&rec.keypoints, &p[mi], &gt, cfg, tau) {
                        Ok(c) => c,
                        Err(Error::DegenerateDenominator { .. }) => 0,
                        Err(e) => return Err(e),
                    },
                    None => 0,
                };
                correct[mi * nt + ti] += c;
                per_pair[mi * nt + ti] += c as f64 / n as f64;
            }
        }
    }
    let mut rows = Vec::with_capacity(nm * nt);
    for (mi, m) in Method::ALL.iter().enumerate() {
        for (ti, &tau) in cfg.taus.iter().enumerate() {
            let v = if cfg.macro_average {
                per_pair[mi * nt + ti] / records.len() as f64
            } else {
                correct[mi * nt + ti] as f64 / total as f64
            };
            rows.push(PckRow { method: *m, tau, pck: v });
        }
    }
    Ok(PckReport { rows })
}

/// Runs inference on every `(source, homography target)` pair and reports
/// PCK for the identity baseline, the lifted affine estimate, the direct
/// homography estimate and the ensemble.
pub fn evaluate_model(m: &ModelState, records: &[TestRecord], cfg: &PckConfig, ensemble_weight: f64) -> Result<PckReport> {
    let mut err = None;
    let report = evaluate_predictions(records, cfg, |rec| match align(&rec.pair.source, &rec.pair.homography_target, m, ensemble_weight) {
        Ok(out) => Some([HomographyParams::IDENTITY, out.theta_aff.lift(), out.theta_hom, out.theta_en]),
        Err(Error::DegenerateDenominator { .. }) | Err(Error::SingularMatrix { .. }) => None,
        Err(e) => {
            err.get_or_insert(e);
            None
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use crate::texture::{generate_texture, TextureConfig};

    fn kp(seed: u64) -> KeypointSet {
        KeypointSet::sample(20, &mut rng_from_seed(seed)).unwrap()
    }

    #[test]
    fn identical_transforms_score_one() {
        let cfg = PckConfig::new(64, 64);
        let ranges = TransformRanges::standard().scaled(0.25).for_image_size(64);
        let (_, _, h) = crate::geometry::sample_random_homography(&ranges, &mut rng_from_seed(3)).unwrap();
        for tau in DEFAULT_TAUS {
            assert_eq!(pck(&kp(1), &h, &h, &cfg, tau).unwrap(), 1.0);
        }
    }

    #[test]
    fn ten_pixel_translation_on_256() {
        let cfg = PckConfig::new(256, 256);
        let shift = HomographyParams::translation(10.0 * 2.0 / 255.0, 0.0);
        let gt = HomographyParams::IDENTITY;
        assert_eq!(cfg.tolerance_px(0.05), 12.8);
        assert_eq!(pck(&kp(2), &shift, &gt, &cfg, 0.05).unwrap(), 1.0);
        assert_eq!(pck(&kp(2), &shift, &gt, &cfg, 0.03).unwrap(), 0.0);
    }

    #[test]
    fn boundary_is_strict() {
        // exactly 12.8 px apart is not within the 12.8 px tolerance
        let cfg = PckConfig::new(256, 256);
        let shift = HomographyParams::translation(12.8 * 2.0 / 255.0, 0.0);
        let set = KeypointSet::new(vec![Point::new(0.0, 0.0)]).unwrap();
        let d = {
            let a = shift.apply(Point::new(0.0, 0.0)).unwrap();
            normalized_to_pixel(a, 256, 256).1 - 127.5
        };
        let expected = if d < 12.8 { 1.0 } else { 0.0 };
        assert_eq!(pck(&set, &shift, &HomographyParams::IDENTITY, &cfg, 0.05).unwrap(), expected);
    }

    #[test]
    fn invalid_inputs() {
        assert!(KeypointSet::new(vec![]).is_err());
        assert!(KeypointSet::new(vec![Point::new(1.5, 0.0)]).is_err());
        let mut cfg = PckConfig::new(64, 64);
        cfg.taus = vec![0.0];
        assert!(cfg.validate().is_err());
        let singular = HomographyParams([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let set = KeypointSet::new(vec![Point::new(0.5, 0.0), Point::new(-1.0, 0.0)]).unwrap();
        match pck(&set, &singular, &HomographyParams::IDENTITY, &PckConfig::new(64, 64), 0.05) {
            Err(Error::DegenerateDenominator { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected degenerate denominator, got {other:?}"),
        }
    }

    fn sources(n: usize, size: usize) -> Vec<crate::Image> {
        (0..n).map(|i| generate_texture(&TextureConfig::new(size), &mut rng_from_seed(100 + i as u64)).unwrap()).collect()
    }

    #[test]
    fn test_set_shape_and_determinism() {
        let r = TransformRanges::standard().scaled(0.25).for_image_size(32);
        let src = sources(3, 32);
        let a = make_test_set(&src, &r, 1.5, 20, 7).unwrap();
        let b = make_test_set(&src, &r, 1.5, 20, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.keypoints.len() == 20));
        assert!(a.iter().all(|t| t.keypoints.points().iter().all(|p| p.x.abs() <= 0.8 && p.y.abs() <= 0.8)));
        assert_eq!(test_ranges(&r, 1.0), r);
        assert!(make_test_set(&src, &r, 0.5, 20, 7).is_err());
    }

    #[test]
    fn oracle_and_identity_reports() {
        let r = TransformRanges::standard().scaled(0.25).for_image_size(32);
        let recs = make_test_set(&sources(4, 32), &r, 1.5, 20, 8).unwrap();
        let cfg = PckConfig::new(32, 32);
        let oracle = evaluate_predictions(&recs, &cfg, |rec| Some([rec.pair.gt_homography; 4])).unwrap();
        assert!(oracle.rows.iter().all(|row| row.pck == 1.0));
        assert_eq!(oracle.rows.len(), 12);

        let zero = ModelState::zeros(1, 32, 32).unwrap();
        let ident_recs = make_test_set(&sources(2, 32), &TransformRanges::zero(32), 1.0, 20, 9).unwrap();
        let rep = evaluate_model(&zero, &ident_recs, &cfg, 0.5).unwrap();
        assert!(rep.rows.iter().all(|row| row.pck == 1.0), "{rep:?}");

        let rep = evaluate_model(&zero, &recs, &cfg, 0.5).unwrap();
        for m in Method::ALL {
            let v: Vec<f64> = cfg.taus.iter().map(|t| rep.get(m, *t).unwrap()).collect();
            assert!(v[2] <= v[1] && v[1] <= v[0]);
        }
        let tsv = rep.to_tsv();
        assert!(tsv.starts_with("method\ttau\tpck\n"));
        assert_eq!(tsv.lines().count(), 13);
        assert!(rep.render_aligned().contains("ensemble"));
    }

    #[test]
    fn micro_and_macro_agree_with_equal_counts() {
        let r = TransformRanges::standard().scaled(0.5).for_image_size(32);
        let recs = make_test_set(&sources(5, 32), &r, 1.0, 20, 10).unwrap();
        let mut cfg = PckConfig::new(32, 32);
        let shift = HomographyParams::translation(0.05, 0.0);
        let predict = |rec: &TestRecord| {
            let mut p = rec.pair.gt_homography;
            p.0[2] += shift.0[2];
            Some([HomographyParams::IDENTITY, p, p, p])
        };
        let micro = evaluate_predictions(&recs, &cfg, predict).unwrap();
        cfg.macro_average = true;
        let macro_ = evaluate_predictions(&recs, &cfg, predict).unwrap();
        for (a, b) in micro.rows.iter().zip(&macro_.rows) {
            assert!((a.pck - b.pck).abs() < 1e-12);
        }
    }
}
