//! Parameter vectors, matrix forms and point transformation.
//!
//! All coordinates are normalized: an image spans `[-1, 1]` on both axes,
//! pixel column `c` of a `w`-wide image maps to `x = 2c/(w-1) - 1` and row
//! `r` of an `h`-high image to `y = 2r/(h-1) - 1`.

use rand::Rng;

use crate::error::{Error, Result};

/// Below this magnitude a 2x2 or 3x3 determinant is treated as singular.
pub const DET_EPS: f64 = 1e-8;
/// Smallest denominator accepted by [`apply_homography`].
pub const DENOM_EPS: f64 = 1e-6;
/// Smallest denominator over `[-1,1]²` for a homography to be warpable.
pub const WARP_DENOM_FLOOR: f64 = 0.05;
/// Rejection budget of [`sample_random_homography`].
pub const MAX_SAMPLE_ATTEMPTS: usize = 100;

/// `[a1, a2, tx, a3, a4, ty]`, the rows of a 2x3 affine matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams(pub [f64; 6]);

/// `[h5, h6]`, the projective row of a homography.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveParams(pub [f64; 2]);

/// `[h1, h2, tx, h3, h4, ty, h5, h6]`; the ninth matrix entry is fixed to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyParams(pub [f64; 8]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl AffineParams {
    pub const IDENTITY: Self = Self([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn det(&self) -> f64 {
        let [a1, a2, _, a3, a4, _] = self.0;
        a1 * a4 - a2 * a3
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 2] {
        affine_to_matrix(self)
    }

    /// The same map as a homography with zero perspective.
    pub fn lift(&self) -> HomographyParams {
        concat_affine_perspective(self, &PerspectiveParams::ZERO)
    }
}

impl PerspectiveParams {
    pub const ZERO: Self = Self([0.0, 0.0]);

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl HomographyParams {
    pub const IDENTITY: Self = Self([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self([1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn affine_part(&self) -> AffineParams {
        let h = self.0;
        AffineParams([h[0], h[1], h[2], h[3], h[4], h[5]])
    }

    pub fn perspective_part(&self) -> PerspectiveParams {
        PerspectiveParams([self.0[6], self.0[7]])
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        homography_to_matrix(self)
    }

    pub fn det(&self) -> f64 {
        det3(&self.to_matrix())
    }

    /// Minimum of `h5·x + h6·y + 1` over `[-1,1]²` (attained at a corner).
    pub fn min_denominator(&self) -> f64 {
        1.0 - self.0[6].abs() - self.0[7].abs()
    }

    /// Finite, invertible and with denominator above [`WARP_DENOM_FLOOR`]
    /// everywhere on the normalized image square.
    pub fn is_warpable(&self) -> bool {
        self.is_finite() && self.det().abs() > DET_EPS && self.min_denominator() > WARP_DENOM_FLOOR
    }

    pub fn apply(&self, pt: Point) -> Result<Point> {
        apply_homography(self, pt)
    }
}

pub fn affine_to_matrix(p: &AffineParams) -> [[f64; 3]; 2] {
    let [a1, a2, tx, a3, a4, ty] = p.0;
    [[a1, a2, tx], [a3, a4, ty]]
}

pub fn homography_to_matrix(p: &HomographyParams) -> [[f64; 3]; 3] {
    let [h1, h2, tx, h3, h4, ty, h5, h6] = p.0;
    [[h1, h2, tx], [h3, h4, ty], [h5, h6, 1.0]]
}

pub fn concat_affine_perspective(a: &AffineParams, p: &PerspectiveParams) -> HomographyParams {
    let [a1, a2, tx, a3, a4, ty] = a.0;
    let [h5, h6] = p.0;
    HomographyParams([a1, a2, tx, a3, a4, ty, h5, h6])
}

pub fn apply_homography(p: &HomographyParams, pt: Point) -> Result<Point> {
    let [h1, h2, tx, h3, h4, ty, h5, h6] = p.0;
    let z = h5 * pt.x + h6 * pt.y + 1.0;
    if !(z > DENOM_EPS) {
        return Err(Error::DegenerateDenominator { index: 0, denominator: z });
    }
    Ok(Point {
        x: (h1 * pt.x + h2 * pt.y + tx) / z,
        y: (h3 * pt.x + h4 * pt.y + ty) / z,
    })
}

/// Uniform `n x n` lattice over `[-1,1]²`, rows top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    points: Vec<Point>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("grid side must be >= 2, got {n}")));
        }
        let step = 2.0 / (n - 1) as f64;
        let coord = |k: usize| if k == n - 1 { 1.0 } else { -1.0 + step * k as f64 };
        let points = (0..n)
            .flat_map(|i| (0..n).map(move |j| Point::new(coord(j), coord(i))))
            .collect();
        Ok(Self { n, points })
    }

    pub fn side(&self) -> usize {
        self.n
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

pub fn transform_grid(p: &HomographyParams, g: &Grid) -> Result<Vec<Point>> {
    transform_points(p, g.points())
}

/// Pointwise [`apply_homography`]; errors carry the offending index.
pub fn transform_points(p: &HomographyParams, pts: &[Point]) -> Result<Vec<Point>> {
    pts.iter()
        .enumerate()
        .map(|(index, &pt)| {
            apply_homography(p, pt).map_err(|e| match e {
                Error::DegenerateDenominator { denominator, .. } => {
                    Error::DegenerateDenominator { index, denominator }
                }
                other => other,
            })
        })
        .collect()
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn invert_homography(p: &HomographyParams) -> Result<HomographyParams> {
    let m = p.to_matrix();
    let det = det3(&m);
    if !(det.abs() > DET_EPS) {
        return Err(Error::SingularMatrix { det });
    }
    // adjugate; the 1/det factor cancels in the rescaling below
    let adj = [
        [
            m[1][1] * m[2][2] - m[1][2] * m[2][1],
            m[0][2] * m[2][1] - m[0][1] * m[2][2],
            m[0][1] * m[1][2] - m[0][2] * m[1][1],
        ],
        [
            m[1][2] * m[2][0] - m[1][0] * m[2][2],
            m[0][0] * m[2][2] - m[0][2] * m[2][0],
            m[0][2] * m[1][0] - m[0][0] * m[1][2],
        ],
        [
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
            m[0][1] * m[2][0] - m[0][0] * m[2][1],
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
        ],
    ];
    let s = adj[2][2];
    // the inverse maps some finite point to infinity inside the fixed-scale chart
    if !(s.abs() > DET_EPS * det.abs().max(1.0)) {
        return Err(Error::SingularMatrix { det });
    }
    Ok(HomographyParams([
        adj[0][0] / s,
        adj[0][1] / s,
        adj[0][2] / s,
        adj[1][0] / s,
        adj[1][1] / s,
        adj[1][2] / s,
        adj[2][0] / s,
        adj[2][1] / s,
    ]))
}

/// Bounds of the random homographies used to build training pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformRanges {
    pub max_rotation_deg: f64,
    pub max_shear_deg: f64,
    pub max_perspective_deg: f64,
    pub max_translation_px: f64,
    pub image_size_px: usize,
    pub scale_lo: f64,
    pub scale_hi: f64,
}

impl TransformRanges {
    /// Rotation 180°, shear 60°, perspective tilt 20°, translation 100 px,
    /// quoted for 256 px images; no scale change.
    pub fn standard() -> Self {
        Self {
            max_rotation_deg: 180.0,
            max_shear_deg: 60.0,
            max_perspective_deg: 20.0,
            max_translation_px: 100.0,
            image_size_px: 256,
            scale_lo: 1.0,
            scale_hi: 1.0,
        }
    }

    pub fn zero(image_size_px: usize) -> Self {
        Self {
            max_rotation_deg: 0.0,
            max_shear_deg: 0.0,
            max_perspective_deg: 0.0,
            max_translation_px: 0.0,
            image_size_px,
            scale_lo: 1.0,
            scale_hi: 1.0,
        }
    }

    /// Multiplies every angular and translational maximum by `factor`.
    /// The scale interval is left untouched.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            max_rotation_deg: self.max_rotation_deg * factor,
            max_shear_deg: self.max_shear_deg * factor,
            max_perspective_deg: self.max_perspective_deg * factor,
            max_translation_px: self.max_translation_px * factor,
            ..*self
        }
    }

    /// Same normalized translation bound expressed for another image size.
    pub fn for_image_size(&self, image_size_px: usize) -> Self {
        Self {
            max_translation_px: self.max_translation_px * image_size_px as f64 / self.image_size_px as f64,
            image_size_px,
            ..*self
        }
    }

    /// Caps maxima so that samples can still satisfy the warpability
    /// invariants: rotation ≤ 180°, shear ≤ 80°, and a perspective bound with
    /// `2·tan(φ) ≤ 0.9` so the denominator stays above the floor.
    pub fn capped(&self) -> Self {
        Self {
            max_rotation_deg: self.max_rotation_deg.min(180.0),
            max_shear_deg: self.max_shear_deg.min(80.0),
            max_perspective_deg: self.max_perspective_deg.min(0.45f64.atan().to_degrees()),
            ..*self
        }
    }

    pub fn max_translation_normalized(&self) -> f64 {
        2.0 * self.max_translation_px / self.image_size_px as f64
    }

    pub fn validate(&self) -> Result<()> {
        let maxima = [
            self.max_rotation_deg,
            self.max_shear_deg,
            self.max_perspective_deg,
            self.max_translation_px,
        ];
        if maxima.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidRanges("maxima must be finite and non-negative".into()));
        }
        if !(self.scale_lo > 0.0 && self.scale_lo <= self.scale_hi && self.scale_hi.is_finite()) {
            return Err(Error::InvalidRanges(format!(
                "scale interval [{}, {}] must satisfy 0 < lo <= hi",
                self.scale_lo, self.scale_hi
            )));
        }
        if self.image_size_px < 2 {
            return Err(Error::InvalidRanges("image_size_px must be >= 2".into()));
        }
        Ok(())
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, max: f64) -> f64 {
    max * (2.0 * rng.gen::<f64>() - 1.0)
}

/// Draws `(affine, perspective, homography)` within `r`.
///
/// The linear part is `R(θ)·Sh(φ)·s·I` (scale first, then shear, then
/// rotation) followed by translation; `h5, h6` are uniform in `±tan(tilt)`.
/// Samples violating the warpability invariants are rejected.
pub fn sample_random_homography<R: Rng + ?Sized>(
    r: &TransformRanges,
    rng: &mut R,
) -> Result<(AffineParams, PerspectiveParams, HomographyParams)> {
    r.validate()?;
    let t_max = r.max_translation_normalized();
    let p_max = r.max_perspective_deg.to_radians().tan();
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let theta = symmetric(rng, r.max_rotation_deg).to_radians();
        let phi = symmetric(rng, r.max_shear_deg).to_radians();
        let s = r.scale_lo + (r.scale_hi - r.scale_lo) * rng.gen::<f64>();
        let tx = symmetric(rng, t_max);
        let ty = symmetric(rng, t_max);
        let h5 = symmetric(rng, p_max);
        let h6 = symmetric(rng, p_max);

        let (sin, cos) = theta.sin_cos();
        let k = phi.tan();
        // R · [[1, k], [0, 1]] · s
        let a1 = s * cos;
        let a2 = s * (cos * k - sin);
        let a3 = s * sin;
        let a4 = s * (sin * k + cos);

        let affine = AffineParams([a1, a2, tx, a3, a4, ty]);
        let persp = PerspectiveParams([h5, h6]);
        let hom = concat_affine_perspective(&affine, &persp);
        if affine.is_finite() && affine.det().abs() > DET_EPS && persp.0[0].abs() + persp.0[1].abs() < 1.0 && hom.is_warpable()
        {
            return Ok((affine, persp, hom));
        }
    }
    Err(Error::RangeUnsatisfiable { attempts: MAX_SAMPLE_ATTEMPTS })
}
