//! Homography parameters, point transforms, inversion and the grid loss.
//!
//! ```text
//! cargo run --example geometry_basics
//! ```

use homalign::geometry::{concat_affine_perspective, invert_homography, sample_random_homography, transform_grid};
use homalign::loss::grid_loss;
use homalign::{rng_from_seed, AffineParams, Grid, HomographyParams, PerspectiveParams, Point, TransformRanges};

fn main() -> homalign::Result<()> {
    // 30° rotation plus a small perspective tilt, assembled from its parts
    let (s, c) = 30f64.to_radians().sin_cos();
    let affine = AffineParams([c, -s, 0.1, s, c, -0.05]);
    let persp = PerspectiveParams([0.05, -0.02]);
    let h = concat_affine_perspective(&affine, &persp);
    println!("theta = {:?}", h.0);

    let p = Point::new(0.5, -0.25);
    let q = h.apply(p)?;
    let back = invert_homography(&h)?.apply(q)?;
    println!("{p:?} -> {q:?} -> {back:?}");

    let grid = Grid::new(20)?;
    let warped = transform_grid(&h, &grid)?;
    println!("grid corner {:?} maps to {:?}", grid.points()[0], warped[0]);
    println!("grid loss vs identity: {:.6}", grid_loss(&h, &HomographyParams::IDENTITY, &grid)?);

    let ranges = TransformRanges::standard();
    let mut rng = rng_from_seed(7);
    for _ in 0..3 {
        let (_, _, h) = sample_random_homography(&ranges, &mut rng)?;
        println!("sample: det {:.3}, min denominator {:.3}", h.det(), h.min_denominator());
    }
    Ok(())
}
