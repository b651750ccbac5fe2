//! Self-supervised training triplets and their on-disk dataset format.
//!
//! A dataset directory holds PNG images plus `manifest.tsv`:
//!
//! ```text
//! # homalign-dataset v1  size=<px>  seed=<u64>
//! # ranges rotation=<deg> shear=<deg> perspective=<deg> translation=<px> scale=<lo>,<hi>
//! <src.png>\t<affine.png>\t<hom.png>\t<h1>\t<h2>\t<tx>\t<h3>\t<h4>\t<ty>\t<h5>\t<h6>
//! ```
//!
//! Parameters are written with 17 significant digits so they parse back to
//! the identical `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{sample_random_homography, AffineParams, HomographyParams, PerspectiveParams, TransformRanges};
use crate::imaging::{load_png, save_png, warp_image, Image};
use crate::loss::GroundTruth;
use crate::texture::{generate_texture, TextureConfig};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub source: Image,
    pub affine_target: Image,
    pub homography_target: Image,
    pub gt_affine: AffineParams,
    pub gt_perspective: PerspectiveParams,
    pub gt_homography: HomographyParams,
}

impl TrainingPair {
    pub fn labels(&self) -> GroundTruth {
        GroundTruth { affine: self.gt_affine, perspective: self.gt_perspective, homography: self.gt_homography }
    }
}

/// Samples a random homography within `ranges` and renders both targets.
pub fn generate_pair<R: Rng + ?Sized>(src: &Image, ranges: &TransformRanges, rng: &mut R) -> Result<TrainingPair> {
    let (affine, perspective, homography) = sample_random_homography(ranges, rng)?;
    Ok(TrainingPair {
        source: src.clone(),
        affine_target: warp_image(src, &affine.lift())?,
        homography_target: warp_image(src, &homography)?,
        gt_affine: affine,
        gt_perspective: perspective,
        gt_homography: homography,
    })
}

/// Per-record random source, `seed + index`, so records can be produced in
/// any order or in parallel with identical results.
pub fn record_rng(seed: u64, index: usize) -> crate::Rng {
    crate::rng_from_seed(seed.wrapping_add(index as u64))
}

/// `count` pairs cycling through `sources`.
pub fn generate_pairs(sources: &[Image], count: usize, ranges: &TransformRanges, seed: u64) -> Result<Vec<TrainingPair>> {
    if sources.is_empty() && count > 0 {
        return Err(Error::EmptyDataset);
    }
    (0..count)
        .map(|i| generate_pair(&sources[i % sources.len()], ranges, &mut record_rng(seed, i)))
        .collect()
}

/// `count` pairs, each built from its own procedural texture.
pub fn synthetic_pairs(count: usize, tex: &TextureConfig, ranges: &TransformRanges, seed: u64) -> Result<Vec<TrainingPair>> {
    (0..count)
        .map(|i| {
            let mut rng = record_rng(seed, i);
            let src = generate_texture(tex, &mut rng)?;
            generate_pair(&src, ranges, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub source: String,
    pub affine_target: String,
    pub homography_target: String,
    pub params: [f64; 8],
}

impl ManifestRecord {
    pub fn homography(&self) -> HomographyParams {
        HomographyParams(self.params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub image_size_px: usize,
    pub seed: u64,
    pub ranges: Option<TransformRanges>,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut s = format!("# homalign-dataset v{}  size={}  seed={}\n", self.version, self.image_size_px, self.seed);
        if let Some(r) = &self.ranges {
            s.push_str(&format!(
                "# ranges rotation={} shear={} perspective={} translation={} scale={},{}\n",
                r.max_rotation_deg, r.max_shear_deg, r.max_perspective_deg, r.max_translation_px, r.scale_lo, r.scale_hi
            ));
        }
        for rec in &self.records {
            s.push_str(&format!("{}\t{}\t{}", rec.source, rec.affine_target, rec.homography_target));
            for v in &rec.params {
                s.push_str(&format!("\t{v:.16e}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::ManifestParse { line: 1, reason: "empty manifest".into() })?;
        let bad_header = |reason: String| Error::ManifestParse { line: 1, reason };
        let mut fields = header.split_whitespace();
        if fields.next() != Some("#") || fields.next() != Some("homalign-dataset") {
            return Err(bad_header(format!("unrecognized header {header:?}")));
        }
        let version = fields
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| bad_header("missing version".into()))?;
        if version != MANIFEST_VERSION {
            return Err(bad_header(format!("unsupported manifest version v{version}")));
        }
        let mut size = None;
        let mut seed = None;
        for f in fields {
            if let Some(v) = f.strip_prefix("size=") {
                size = v.parse::<usize>().ok();
            } else if let Some(v) = f.strip_prefix("seed=") {
                seed = v.parse::<u64>().ok();
            }
        }
        let image_size_px = size.ok_or_else(|| bad_header("missing or invalid size=".into()))?;
        let seed = seed.ok_or_else(|| bad_header("missing or invalid seed=".into()))?;

        let mut ranges = None;
        let mut records = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(r) = rest.trim().strip_prefix("ranges") {
                    ranges = Some(parse_ranges(r, image_size_px, lineno)?);
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 11 {
                return Err(Error::ManifestParse { line: lineno, reason: format!("expected 11 columns, got {}", cols.len()) });
            }
            let mut params = [0.0; 8];
            for (p, text) in params.iter_mut().zip(&cols[3..]) {
                *p = text.parse().map_err(|_| Error::ManifestParse {
                    line: lineno,
                    reason: format!("invalid parameter {text:?}"),
                })?;
            }
            records.push(ManifestRecord {
                source: cols[0].to_string(),
                affine_target: cols[1].to_string(),
                homography_target: cols[2].to_string(),
                params,
            });
        }
        Ok(Self { version, image_size_px, seed, ranges, records })
    }
}

fn parse_ranges(text: &str, image_size_px: usize, line: usize) -> Result<TransformRanges> {
    let err = |reason: String| Error::ManifestParse { line, reason };
    let mut r = TransformRanges::zero(image_size_px);
    for kv in text.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected key=value, got {kv:?}")))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("invalid number {s:?}")));
        match k {
            "rotation" => r.max_rotation_deg = num(v)?,
            "shear" => r.max_shear_deg = num(v)?,
            "perspective" => r.max_perspective_deg = num(v)?,
            "translation" => r.max_translation_px = num(v)?,
            "scale" => {
                let (lo, hi) = v.split_once(',').ok_or_else(|| err("scale expects lo,hi".into()))?;
                r.scale_lo = num(lo)?;
                r.scale_hi = num(hi)?;
            }
            other => return Err(err(format!("unknown range key {other:?}"))),
        }
    }
    Ok(r)
}

/// Dataset-level metadata written into the manifest header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetMeta {
    pub image_size_px: usize,
    pub seed: u64,
    pub ranges: Option<TransformRanges>,
}

pub fn write_dataset(pairs: &[TrainingPair], dir: impl AsRef<Path>, meta: &DatasetMeta) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let names = [format!("{i:06}_src.png"), format!("{i:06}_aff.png"), format!("{i:06}_hom.png")];
        for (name, img) in names.iter().zip([&pair.source, &pair.affine_target, &pair.homography_target]) {
            save_png(img, dir.join(name))?;
        }
        let [source, affine_target, homography_target] = names;
        records.push(ManifestRecord { source, affine_target, homography_target, params: pair.gt_homography.0 });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        image_size_px: meta.image_size_px,
        seed: meta.seed,
        ranges: meta.ranges,
        records,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A parsed manifest whose images are loaded on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub dir: PathBuf,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    pub fn load_pair(&self, index: usize) -> Result<TrainingPair> {
        let rec = &self.manifest.records[index];
        let h = rec.homography();
        Ok(TrainingPair {
            source: load_png(self.dir.join(&rec.source))?,
            affine_target: load_png(self.dir.join(&rec.affine_target))?,
            homography_target: load_png(self.dir.join(&rec.homography_target))?,
            gt_affine: h.affine_part(),
            gt_perspective: h.perspective_part(),
            gt_homography: h,
        })
    }

    pub fn load_all(&self) -> Result<Vec<TrainingPair>> {
        (0..self.len()).map(|i| self.load_pair(i)).collect()
    }
}

/// Parses `dir/manifest.tsv` and checks that every referenced image exists.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = DatasetManifest::parse(&text)?;
    for rec in &manifest.records {
        for name in [&rec.source, &rec.affine_target, &rec.homography_target] {
            let p = dir.join(name);
            if !p.is_file() {
                return Err(Error::MissingFile(p));
            }
        }
    }
    Ok(Dataset { manifest, dir: dir.to_path_buf() })
}
