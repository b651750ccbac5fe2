//! The staged schedule: the affine block first, then the perspective and
//! homography heads against the frozen affine block. Saves a checkpoint.
//!
//! ```text
//! cargo run --release --example train_staged -- 200 20 /tmp/homalign.ckpt
//! ```

use homalign::checkpoint::{load_checkpoint, save_checkpoint};
use homalign::datagen::synthetic_pairs;
use homalign::texture::TextureConfig;
use homalign::training::train_with_progress;
use homalign::{ModelState, Stage, TrainConfig, TransformRanges};

fn main() -> homalign::Result<()> {
    let mut args = std::env::args().skip(1);
    let pairs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let out = args.next().unwrap_or_else(|| std::env::temp_dir().join("homalign.ckpt").display().to_string());
    let size = 64;

    let ranges = TransformRanges::standard().scaled(0.25).for_image_size(size);
    let data = synthetic_pairs(pairs, &TextureConfig::new(size), &ranges, 1)?;
    let model = ModelState::new(1, size, size, 1)?;
    println!("{} parameters", model.parameter_count());

    let cfg = TrainConfig { epochs, learning_rate: 1e-2, ..TrainConfig::new(Stage::Affine) };
    println!("stage\tepoch\tl_aff\tl_pers\tl_hom\tl_en\ttotal");
    let log = |stage: &'static str| {
        move |e: usize, b: &homalign::LossBreakdown| {
            println!("{stage}\t{}\t{:.5}\t{:.5}\t{:.5}\t{:.5}\t{:.5}", e + 1, b.l_aff, b.l_pers, b.l_hom, b.l_en, b.total)
        }
    };
    let (model, a) = train_with_progress(&data, &cfg, model, log("affine"))?;
    let cfg = TrainConfig { stage: Stage::PerspectiveHom, ..cfg };
    let (model, b) = train_with_progress(&data, &cfg, model, log("persp-hom"))?;
    println!("wall time {:.1?} + {:.1?}", a.wall_time, b.wall_time);

    save_checkpoint(&model, &out)?;
    assert_eq!(load_checkpoint(&out)?, model);
    println!("saved {out} (crc32 {:#010x})", b.checksum);
    Ok(())
}
