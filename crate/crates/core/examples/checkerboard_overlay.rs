//! Checkerboard overlay of an image and its warped copy.
//!
//! ```text
//! cargo run --example checkerboard_overlay -- /tmp/overlay.png
//! ```

use homalign::imaging::{checkerboard_overlay, save_png, warp_image};
use homalign::texture::{generate_texture, TextureConfig};
use homalign::{rng_from_seed, HomographyParams};

fn main() -> homalign::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("overlay.png").display().to_string());
    let img = generate_texture(&TextureConfig { channels: 3, ..TextureConfig::new(128) }, &mut rng_from_seed(3))?;
    let moved = warp_image(&img, &HomographyParams([0.98, -0.1, 0.05, 0.1, 0.98, 0.0, 0.05, 0.0]))?;
    save_png(&checkerboard_overlay(&img, &moved, 8)?, &out)?;
    println!("wrote {out}");
    Ok(())
}
