//! Generates procedural training triplets, writes them as a dataset
//! directory and reads the manifest back.
//!
//! ```text
//! cargo run --release --example generate_dataset -- /tmp/homalign-data 20
//! ```

use homalign::datagen::{read_dataset, synthetic_pairs, write_dataset, DatasetMeta};
use homalign::texture::TextureConfig;
use homalign::TransformRanges;

fn main() -> homalign::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| std::env::temp_dir().join("homalign-data").display().to_string());
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let size = 64;
    let seed = 1;

    let ranges = TransformRanges::standard().scaled(0.25).for_image_size(size);
    let pairs = synthetic_pairs(count, &TextureConfig::new(size), &ranges, seed)?;
    let manifest = write_dataset(&pairs, &dir, &DatasetMeta { image_size_px: size, seed, ranges: Some(ranges) })?;
    println!("wrote {} triplets to {dir}", manifest.records.len());

    let ds = read_dataset(&dir)?;
    let first = ds.load_pair(0)?;
    println!("record 0: {} / {} / {}", ds.manifest.records[0].source, ds.manifest.records[0].affine_target, ds.manifest.records[0].homography_target);
    println!("ground truth: {:?}", first.gt_homography.0);
    Ok(())
}
