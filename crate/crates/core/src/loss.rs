//! Transformed-grid losses and the weighted training objective.

use crate::error::{Error, Result};
use crate::geometry::{AffineParams, Grid, HomographyParams, PerspectiveParams, DENOM_EPS};
use crate::regression::PipelineOutput;

/// Default grid side (20 x 20 points over `[-1,1]²`).
pub const DEFAULT_GRID_N: usize = 20;

/// Weights of the affine, perspective, homography and ensemble terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.3, beta: 0.4, gamma: 0.1, delta: 0.2 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma, delta };
        if [alpha, beta, gamma, delta].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(format!("loss weights must be finite and >= 0: {w:?}")));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_aff: f64,
    pub l_pers: f64,
    pub l_hom: f64,
    pub l_en: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(l_aff: f64, l_pers: f64, l_hom: f64, l_en: f64, w: &LossWeights) -> Self {
        let total = w.alpha * l_aff + w.beta * l_pers + w.gamma * l_hom + w.delta * l_en;
        Self { l_aff, l_pers, l_hom, l_en, total }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_aff, self.l_pers, self.l_hom, self.l_en, self.total].iter().all(|v| v.is_finite())
    }

    /// Componentwise mean.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut acc = LossBreakdown::default();
        for b in items {
            acc.l_aff += b.l_aff;
            acc.l_pers += b.l_pers;
            acc.l_hom += b.l_hom;
            acc.l_en += b.l_en;
            acc.total += b.total;
        }
        LossBreakdown {
            l_aff: acc.l_aff / n,
            l_pers: acc.l_pers / n,
            l_hom: acc.l_hom / n,
            l_en: acc.l_en / n,
            total: acc.total / n,
        }
    }
}

/// Ground-truth parameters of one training triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub affine: AffineParams,
    pub perspective: PerspectiveParams,
    pub homography: HomographyParams,
}

fn project(h: &[f64; 8], x: f64, y: f64, index: usize) -> Result<(f64, f64, f64)> {
    let z = h[6] * x + h[7] * y + 1.0;
    if !(z > DENOM_EPS) {
        return Err(Error::DegenerateDenominator { index, denominator: z });
    }
    Ok(((h[0] * x + h[1] * y + h[2]) / z, (h[3] * x + h[4] * y + h[5]) / z, z))
}

/// Mean squared Euclidean distance between the grid mapped by `theta_hat`
/// and by `theta_gt`.
pub fn grid_loss(theta_hat: &HomographyParams, theta_gt: &HomographyParams, g: &Grid) -> Result<f64> {
    grid_loss_with_grad(theta_hat, theta_gt, g).map(|(l, _)| l)
}

/// Grid loss and its gradient with respect to the eight entries of `theta_hat`.
pub fn grid_loss_with_grad(theta_hat: &HomographyParams, theta_gt: &HomographyParams, g: &Grid) -> Result<(f64, [f64; 8])> {
    let n = g.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; 8];
    for (index, p) in g.points().iter().enumerate() {
        let (xh, yh, z) = project(&theta_hat.0, p.x, p.y, index)?;
        let (xg, yg, _) = project(&theta_gt.0, p.x, p.y, index)?;
        let (dx, dy) = (xh - xg, yh - yg);
        loss += dx * dx + dy * dy;
        // ∂x'/∂(h1,h2,tx) = (x,y,1)/z, ∂x'/∂(h5,h6) = -x'·(x,y)/z; same for y'
        let s = 2.0 / (n * z);
        let (gx, gy) = (s * dx, s * dy);
        grad[0] += gx * p.x;
        grad[1] += gx * p.y;
        grad[2] += gx;
        grad[3] += gy * p.x;
        grad[4] += gy * p.y;
        grad[5] += gy;
        let back = gx * xh + gy * yh;
        grad[6] -= back * p.x;
        grad[7] -= back * p.y;
    }
    Ok((loss / n, grad))
}

/// `((h5̂ - h5)² + (h6̂ - h6)²) / 2`.
pub fn perspective_mse(p_hat: &PerspectiveParams, p_gt: &PerspectiveParams) -> f64 {
    let d0 = p_hat.0[0] - p_gt.0[0];
    let d1 = p_hat.0[1] - p_gt.0[1];
    (d0 * d0 + d1 * d1) / 2.0
}

pub(crate) fn perspective_mse_grad(p_hat: &PerspectiveParams, p_gt: &PerspectiveParams) -> [f64; 2] {
    [p_hat.0[0] - p_gt.0[0], p_hat.0[1] - p_gt.0[1]]
}

/// All four terms and their weighted sum.
pub fn total_loss(out: &PipelineOutput, gt: &GroundTruth, g: &Grid, w: &LossWeights) -> Result<LossBreakdown> {
    let l_aff = grid_loss(&out.theta_aff.lift(), &gt.affine.lift(), g)?;
    let l_pers = perspective_mse(&out.theta_pers, &gt.perspective);
    let l_hom = grid_loss(&out.theta_hom, &gt.homography, g)?;
    let l_en = grid_loss(&out.theta_en, &gt.homography, g)?;
    Ok(LossBreakdown::from_terms(l_aff, l_pers, l_hom, l_en, w))
}

/// Gradients of the weighted objective with respect to the three head outputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutputGrads {
    pub affine: [f64; 6],
    pub perspective: [f64; 2],
    pub homography: [f64; 8],
}

/// Which loss terms are evaluated; inactive terms are reported as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveTerms {
    pub aff: bool,
    pub pers: bool,
    pub hom: bool,
    pub en: bool,
}

impl ActiveTerms {
    pub fn from_weights(w: &LossWeights) -> Self {
        Self { aff: w.alpha > 0.0, pers: w.beta > 0.0, hom: w.gamma > 0.0, en: w.delta > 0.0 }
    }

    pub fn needs_affine(&self) -> bool {
        self.aff || self.en
    }

    pub fn needs_perspective(&self) -> bool {
        self.pers || self.en
    }

    pub fn needs_homography(&self) -> bool {
        self.hom || self.en
    }
}

/// Weighted objective restricted to `active` terms plus its gradient with
/// respect to each head's output. The ensemble term back-propagates into
/// both the homography output and the guide (affine ⊕ perspective).
pub fn total_loss_with_grads(
    out: &PipelineOutput,
    gt: &GroundTruth,
    g: &Grid,
    w: &LossWeights,
    active: ActiveTerms,
    ensemble_weight: f64,
) -> Result<(LossBreakdown, OutputGrads)> {
    let mut grads = OutputGrads::default();
    let (mut l_aff, mut l_pers, mut l_hom, mut l_en) = (0.0, 0.0, 0.0, 0.0);
    if active.aff {
        let (l, gr) = grid_loss_with_grad(&out.theta_aff.lift(), &gt.affine.lift(), g)?;
        l_aff = l;
        for i in 0..6 {
            grads.affine[i] += w.alpha * gr[i];
        }
    }
    if active.pers {
        l_pers = perspective_mse(&out.theta_pers, &gt.perspective);
        let gr = perspective_mse_grad(&out.theta_pers, &gt.perspective);
        for i in 0..2 {
            grads.perspective[i] += w.beta * gr[i];
        }
    }
    if active.hom {
        let (l, gr) = grid_loss_with_grad(&out.theta_hom, &gt.homography, g)?;
        l_hom = l;
        for i in 0..8 {
            grads.homography[i] += w.gamma * gr[i];
        }
    }
    if active.en {
        let (l, gr) = grid_loss_with_grad(&out.theta_en, &gt.homography, g)?;
        l_en = l;
        for i in 0..8 {
            let ge = w.delta * gr[i];
            grads.homography[i] += ensemble_weight * ge;
            let guide = (1.0 - ensemble_weight) * ge;
            if i < 6 {
                grads.affine[i] += guide;
            } else {
                grads.perspective[i - 6] += guide;
            }
        }
    }
    Ok((LossBreakdown::from_terms(l_aff, l_pers, l_hom, l_en, w), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_h(rng: &mut ChaCha8Rng, spread: f64) -> HomographyParams {
        let mut h = HomographyParams::IDENTITY.0;
        for (i, v) in h.iter_mut().enumerate() {
            let s = if i >= 6 { spread * 0.3 } else { spread };
            *v += rng.gen_range(-s..s);
        }
        HomographyParams(h)
    }

    /// Independent per-point evaluation through the matrix form.
    fn oracle(a: &HomographyParams, b: &HomographyParams, g: &Grid) -> f64 {
        let (ma, mb) = (a.to_matrix(), b.to_matrix());
        let map = |m: &[[f64; 3]; 3], p: &Point| {
            let v = [p.x, p.y, 1.0];
            let r: Vec<f64> = m.iter().map(|row| row.iter().zip(&v).map(|(x, y)| x * y).sum()).collect();
            (r[0] / r[2], r[1] / r[2])
        };
        let mut acc = 0.0;
        for p in g.points() {
            let (ax, ay) = map(&ma, p);
            let (bx, by) = map(&mb, p);
            acc += (ax - bx).hypot(ay - by).powi(2);
        }
        acc / g.len() as f64
    }

    #[test]
    fn grid_loss_examples() {
        let g = Grid::new(DEFAULT_GRID_N).unwrap();
        let t = HomographyParams([1.1, 0.1, 0.2, -0.1, 0.9, 0.0, 0.1, 0.05]);
        assert_eq!(grid_loss(&t, &t, &g).unwrap(), 0.0);
        let l = grid_loss(&HomographyParams::IDENTITY, &HomographyParams::translation(0.2, 0.0), &g).unwrap();
        assert!((l - 0.04).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (a, b) = (random_h(&mut rng, 0.3), random_h(&mut rng, 0.3));
            assert!((grid_loss(&a, &b, &g).unwrap() - oracle(&a, &b, &g)).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_loss_degenerate() {
        let g = Grid::new(3).unwrap();
        let bad = HomographyParams([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(grid_loss(&bad, &HomographyParams::IDENTITY, &g), Err(Error::DegenerateDenominator { .. })));
    }

    #[test]
    fn grid_loss_gradient_matches_central_differences() {
        let g = Grid::new(DEFAULT_GRID_N).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let (a, b) = (random_h(&mut rng, 0.3), random_h(&mut rng, 0.3));
            let (_, grad) = grid_loss_with_grad(&a, &b, &g).unwrap();
            for i in 0..8 {
                let step = 1e-6;
                let (mut p, mut m) = (a, a);
                p.0[i] += step;
                m.0[i] -= step;
                let num = (grid_loss(&p, &b, &g).unwrap() - grid_loss(&m, &b, &g).unwrap()) / (2.0 * step);
                let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-8);
                assert!(rel < 1e-5, "param {i}: analytic {} numeric {num}", grad[i]);
            }
        }
    }

    #[test]
    fn perspective_mse_examples() {
        let a = PerspectiveParams([0.1, -0.2]);
        assert_eq!(perspective_mse(&a, &a), 0.0);
        let v = perspective_mse(&PerspectiveParams::ZERO, &PerspectiveParams([0.2, 0.0]));
        assert!((v - 0.02).abs() < 1e-15);
        let b = PerspectiveParams([0.3, 0.05]);
        assert_eq!(perspective_mse(&a, &b), perspective_mse(&b, &a));
    }

    fn perfect_output(gt: &GroundTruth) -> PipelineOutput {
        PipelineOutput::assemble(&gt.affine.0, &gt.perspective.0, &gt.homography.0, 0.5)
    }

    #[test]
    fn total_loss_examples() {
        let g = Grid::new(DEFAULT_GRID_N).unwrap();
        let gt = GroundTruth {
            affine: AffineParams([1.0, 0.1, 0.2, -0.1, 1.0, 0.0]),
            perspective: PerspectiveParams([0.05, -0.02]),
            homography: HomographyParams([1.0, 0.1, 0.2, -0.1, 1.0, 0.0, 0.05, -0.02]),
        };
        let b = total_loss(&perfect_output(&gt), &gt, &g, &LossWeights::default()).unwrap();
        assert_eq!(b, LossBreakdown::default());

        let w = LossWeights::default();
        let equal = LossBreakdown::from_terms(0.7, 0.7, 0.7, 0.7, &w);
        assert!((equal.total - 0.7).abs() < 1e-12);

        // only l_en nonzero: identity truth, homography and guide both regress translation 0.2
        let id = GroundTruth {
            affine: AffineParams::IDENTITY,
            perspective: PerspectiveParams::ZERO,
            homography: HomographyParams::IDENTITY,
        };
        let out = PipelineOutput {
            theta_aff: AffineParams::IDENTITY,
            theta_pers: PerspectiveParams::ZERO,
            theta_hom: HomographyParams::IDENTITY,
            theta_guide: HomographyParams::IDENTITY,
            theta_en: HomographyParams::translation(0.2, 0.0),
        };
        let b = total_loss(&out, &id, &g, &w).unwrap();
        assert_eq!((b.l_aff, b.l_pers, b.l_hom), (0.0, 0.0, 0.0));
        assert!((b.l_en - 0.04).abs() < 1e-15);
        assert!((b.total - 0.008).abs() < 1e-15);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.3, -0.1, 0.1, 0.2).is_err());
        assert!(LossWeights::new(0.3, 0.4, 0.1, 0.2).is_ok());
    }
}
