//! Aligns a warped image back onto its source with a model, writing the
//! aligned image and a checkerboard overlay.
//!
//! ```text
//! cargo run --release --example align_pair -- /tmp/homalign.ckpt /tmp/align
//! ```
//!
//! Without a checkpoint a zero-initialized model is used, which regresses
//! the identity.

use homalign::checkpoint::load_checkpoint;
use homalign::datagen::generate_pair;
use homalign::imaging::{checkerboard_overlay, save_png, warp_image};
use homalign::regression::align;
use homalign::texture::{generate_texture, TextureConfig};
use homalign::{rng_from_seed, ModelState, TransformRanges};

fn main() -> homalign::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = match args.next() {
        Some(path) => load_checkpoint(path)?,
        None => ModelState::zeros(1, 64, 64)?,
    };
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| std::env::temp_dir().join("homalign-align").display().to_string()));
    std::fs::create_dir_all(&out).map_err(|e| homalign::Error::Io { path: out.clone(), source: e })?;
    let (h, _) = model.image_hw();

    let mut rng = rng_from_seed(99);
    let src = generate_texture(&TextureConfig::new(h), &mut rng)?;
    let ranges = TransformRanges::standard().scaled(0.25).for_image_size(h);
    let pair = generate_pair(&src, &ranges, &mut rng)?;

    let est = align(&pair.source, &pair.homography_target, &model, 0.5)?;
    println!("ground truth {:?}", pair.gt_homography.0);
    println!("ensemble     {:?}", est.theta_en.0);
    let aligned = warp_image(&pair.source, &est.theta_en)?;
    save_png(&pair.source, out.join("source.png"))?;
    save_png(&pair.homography_target, out.join("target.png"))?;
    save_png(&aligned, out.join("aligned.png"))?;
    save_png(&checkerboard_overlay(&aligned, &pair.homography_target, 8)?, out.join("overlay.png"))?;
    println!("wrote images to {}", out.display());
    Ok(())
}
