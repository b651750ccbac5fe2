//! PCK of a model on a held-out synthetic test set with widened ranges.
//!
//! ```text
//! cargo run --release --example evaluate_pck -- /tmp/homalign.ckpt
//! ```

use homalign::checkpoint::load_checkpoint;
use homalign::eval::{evaluate_model, make_test_set, PckConfig};
use homalign::texture::{generate_texture, TextureConfig};
use homalign::{rng_from_seed, ModelState, TransformRanges};

fn main() -> homalign::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => load_checkpoint(path)?,
        None => ModelState::zeros(1, 64, 64)?,
    };
    let (h, w) = model.image_hw();
    // sources disjoint from the training textures (seeds from 1_000_000)
    let sources = (0..100)
        .map(|i| generate_texture(&TextureConfig::new(h), &mut rng_from_seed(1_000_000 + i)))
        .collect::<homalign::Result<Vec<_>>>()?;
    let train_ranges = TransformRanges::standard().scaled(0.25).for_image_size(h);
    for scale_up in [1.0, 1.5] {
        let test = make_test_set(&sources, &train_ranges, scale_up, 20, 5)?;
        let report = evaluate_model(&model, &test, &PckConfig::new(h, w), 0.5)?;
        println!("scale-up {scale_up}\n{}", report.render_aligned());
    }
    Ok(())
}
