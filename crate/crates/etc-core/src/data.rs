//! Two-domain dataset construction: Gaussian blob generators, domain
//! shifts (rotation + translation + noise), a glyph-based digit task with
//! image-space rotation, train/val/test splitting, mixed test sets with
//! ground-truth origin tags, and IDX/CSV ingestion.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::Source => write!(f, "source"),
            Domain::Target => write!(f, "target"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::MisalignedLengths {
                left: samples.len(),
                right: labels.len(),
            });
        }
        if class_count == 0 {
            return Err(Error::InvalidParameter(
                "class_count must be >= 1".to_string(),
            ));
        }
        if let Some(first) = samples.first() {
            let dim = first.len();
            for s in &samples {
                if s.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: s.len(),
                    });
                }
            }
        }
        for (row, &label) in labels.iter().enumerate() {
            if label >= class_count {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    class_count,
                });
            }
        }
        Ok(LabeledDataset {
            samples,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

/// Record of the transform that produced a target domain from a source
/// domain. For image datasets the rotation is applied in image space;
/// otherwise it acts on the first two feature dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub rotation_deg: f64,
    pub translation: Vec<f64>,
    pub noise_sigma: f64,
}

impl ShiftSpec {
    /// The identity transform, for pairs loaded from files where the
    /// gap between domains is whatever the files contain.
    pub fn none() -> Self {
        ShiftSpec {
            rotation_deg: 0.0,
            translation: Vec::new(),
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainPair {
    pub source: LabeledDataset,
    pub target: LabeledDataset,
    pub shift_spec: ShiftSpec,
}

impl DomainPair {
    pub fn new(
        source: LabeledDataset,
        target: LabeledDataset,
        shift_spec: ShiftSpec,
    ) -> Result<Self> {
        if source.class_count != target.class_count {
            return Err(Error::InvalidParameter(format!(
                "source has {} classes but target has {}",
                source.class_count, target.class_count
            )));
        }
        Ok(DomainPair {
            source,
            target,
            shift_spec,
        })
    }
}

/// Test mix drawn from both held-out pools with per-sample ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedTestSet {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub origin: Vec<Domain>,
    pub class_count: usize,
    pub contamination: f64,
}

impl MixedTestSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn source_fraction(&self) -> f64 {
        if self.origin.is_empty() {
            return 0.0;
        }
        let s = self
            .origin
            .iter()
            .filter(|&&o| o == Domain::Source)
            .count();
        s as f64 / self.origin.len() as f64
    }
}

/// Gaussian class clusters. With `dim >= 2` the centroids sit on a ring
/// in the first two dimensions with adjacent spacing exactly `separation`;
/// with `dim == 1` they sit on a line. Unit covariance throughout.
pub fn gen_blobs(
    class_count: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if class_count == 0 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidParameter(
            "class_count, per_class, and dim must be >= 1".to_string(),
        ));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "separation {separation} must be >= 0"
        )));
    }
    let mut centroids = vec![vec![0.0; dim]; class_count];
    if class_count > 1 {
        if dim == 1 {
            for (k, c) in centroids.iter_mut().enumerate() {
                c[0] = k as f64 * separation;
            }
        } else {
            // Ring radius giving adjacent chord length = separation.
            let radius = separation / (2.0 * (std::f64::consts::PI / class_count as f64).sin());
            for (k, c) in centroids.iter_mut().enumerate() {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / class_count as f64;
                c[0] = radius * angle.cos();
                c[1] = radius * angle.sin();
            }
        }
    }
    let mut r = rng::substream(seed, "blobs");
    let noise = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut samples = Vec::with_capacity(class_count * per_class);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for (k, centroid) in centroids.iter().enumerate() {
        for _ in 0..per_class {
            samples.push(centroid.iter().map(|&c| c + noise.sample(&mut r)).collect());
            labels.push(k);
        }
    }
    LabeledDataset::new(samples, labels, class_count)
}

/// Rotates the first two dimensions, translates, then adds Gaussian
/// noise. Labels carry over unchanged.
pub fn shift_domain(
    d: &LabeledDataset,
    rotation_deg: f64,
    translation: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if rotation_deg != 0.0 && d.dim() < 2 {
        return Err(Error::InvalidParameter(
            "rotation requires at least 2 dimensions".to_string(),
        ));
    }
    if !translation.is_empty() && translation.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            got: translation.len(),
        });
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise_sigma {noise_sigma} must be >= 0"
        )));
    }
    let theta = rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut r = rng::substream(seed, "domain-shift");
    let noise = Normal::new(0.0, 1.0).expect("valid sigma");
    let samples = d
        .samples
        .iter()
        .map(|s| {
            let mut v = s.clone();
            if rotation_deg != 0.0 {
                let (x, y) = (v[0], v[1]);
                v[0] = cos * x - sin * y;
                v[1] = sin * x + cos * y;
            }
            if !translation.is_empty() {
                for (a, t) in v.iter_mut().zip(translation) {
                    *a += *t;
                }
            }
            if noise_sigma > 0.0 {
                for a in v.iter_mut() {
                    *a += noise_sigma * noise.sample(&mut r);
                }
            }
            v
        })
        .collect();
    LabeledDataset::new(samples, d.labels.clone(), d.class_count)
}

/// Blob source plus its shifted counterpart (fresh draw, same generator
/// parameters, then transformed), as one construction.
#[allow(clippy::too_many_arguments)]
pub fn gen_blob_pair(
    class_count: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    rotation_deg: f64,
    translation: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<DomainPair> {
    let source = gen_blobs(
        class_count,
        per_class,
        dim,
        separation,
        rng::child_seed(seed, "pair-source", 0),
    )?;
    let pre_target = gen_blobs(
        class_count,
        per_class,
        dim,
        separation,
        rng::child_seed(seed, "pair-target", 0),
    )?;
    let target = shift_domain(
        &pre_target,
        rotation_deg,
        translation,
        noise_sigma,
        rng::child_seed(seed, "pair-shift", 0),
    )?;
    DomainPair::new(
        source,
        target,
        ShiftSpec {
            rotation_deg,
            translation: translation.to_vec(),
            noise_sigma,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidParameter(format!(
                    "{name} fraction {f} must be in [0, 1]"
                )));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

/// Seeded shuffle, then contiguous partition into train/val/test.
pub fn split_dataset(
    d: &LabeledDataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitDataset> {
    fractions.validate()?;
    if d.is_empty() {
        return Err(Error::NoSamples);
    }
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, "dataset-split"));
    let n_train = ((fractions.train * n as f64).round() as usize).min(n);
    let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_train);
    Ok(SplitDataset {
        train: d.subset(&order[..n_train]),
        val: d.subset(&order[n_train..n_train + n_val]),
        test: d.subset(&order[n_train + n_val..]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    pub source: SplitDataset,
    pub target: SplitDataset,
}

/// Splits both domains with seeds derived from one root, so any code
/// holding the same pair, fractions, and seed sees identical pools.
pub fn split_domain_pair(
    pair: &DomainPair,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitPair> {
    Ok(SplitPair {
        source: split_dataset(&pair.source, fractions, rng::child_seed(seed, "split-source", 0))?,
        target: split_dataset(&pair.target, fractions, rng::child_seed(seed, "split-target", 0))?,
    })
}

/// Draws `round(rho·n)` samples from the held-out source test pool and
/// the rest from the held-out target test pool, shuffles, and keeps the
/// ground-truth origin of every sample. The pools are carved with
/// [`split_domain_pair`] under the same `seed`, so training code using
/// that split never sees these samples.
pub fn make_mixed_test(
    pair: &DomainPair,
    fractions: SplitFractions,
    n: usize,
    rho: f64,
    seed: u64,
) -> Result<MixedTestSet> {
    let split = split_domain_pair(pair, fractions, seed)?;
    mix_from_pools(&split.source.test, &split.target.test, n, rho, seed)
}

/// Draws a mixed set from two explicit pools — the building block behind
/// [`make_mixed_test`], also usable on validation pools for model
/// selection that must not touch the test pools.
pub fn mix_from_pools(
    source_pool: &LabeledDataset,
    target_pool: &LabeledDataset,
    n: usize,
    rho: f64,
    seed: u64,
) -> Result<MixedTestSet> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "contamination {rho} must be in [0, 1]"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("mixed test size must be >= 1".to_string()));
    }
    if source_pool.class_count != target_pool.class_count {
        return Err(Error::DimensionMismatch {
            expected: source_pool.class_count,
            got: target_pool.class_count,
        });
    }
    let n_source = (rho * n as f64).round() as usize;
    let n_target = n - n_source;
    if n_source > source_pool.len() {
        return Err(Error::InsufficientSamples {
            needed: n_source,
            available: source_pool.len(),
        });
    }
    if n_target > target_pool.len() {
        return Err(Error::InsufficientSamples {
            needed: n_target,
            available: target_pool.len(),
        });
    }
    let mut r = rng::substream(seed, "mix-draw");
    let mut src_idx: Vec<usize> = (0..source_pool.len()).collect();
    let mut tgt_idx: Vec<usize> = (0..target_pool.len()).collect();
    src_idx.shuffle(&mut r);
    tgt_idx.shuffle(&mut r);

    let mut entries: Vec<(Vec<f64>, usize, Domain)> = Vec::with_capacity(n);
    for &i in &src_idx[..n_source] {
        entries.push((
            source_pool.samples[i].clone(),
            source_pool.labels[i],
            Domain::Source,
        ));
    }
    for &i in &tgt_idx[..n_target] {
        entries.push((
            target_pool.samples[i].clone(),
            target_pool.labels[i],
            Domain::Target,
        ));
    }
    entries.shuffle(&mut r);

    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut origin = Vec::with_capacity(n);
    for (s, l, o) in entries {
        samples.push(s);
        labels.push(l);
        origin.push(o);
    }
    Ok(MixedTestSet {
        samples,
        labels,
        origin,
        class_count: source_pool.class_count,
        contamination: rho,
    })
}

/// 8×8 bitmap glyphs for the digits 0–9, one byte per row, MSB leftmost.
const DIGIT_GLYPHS: [[u8; 8]; 10] = [
    [0x3C, 0x66, 0x6E, 0x76, 0x66, 0x66, 0x3C, 0x00],
    [0x18, 0x38, 0x18, 0x18, 0x18, 0x18, 0x7E, 0x00],
    [0x3C, 0x66, 0x06, 0x0C, 0x18, 0x30, 0x7E, 0x00],
    [0x3C, 0x66, 0x06, 0x1C, 0x06, 0x66, 0x3C, 0x00],
    [0x0C, 0x1C, 0x3C, 0x6C, 0x7E, 0x0C, 0x0C, 0x00],
    [0x7E, 0x60, 0x7C, 0x06, 0x06, 0x66, 0x3C, 0x00],
    [0x1C, 0x30, 0x60, 0x7C, 0x66, 0x66, 0x3C, 0x00],
    [0x7E, 0x06, 0x0C, 0x18, 0x30, 0x30, 0x30, 0x00],
    [0x3C, 0x66, 0x66, 0x3C, 0x66, 0x66, 0x3C, 0x00],
    [0x3C, 0x66, 0x66, 0x3E, 0x06, 0x0C, 0x38, 0x00],
];

pub const DIGIT_SIDE: usize = 8;
pub const DIGIT_DIM: usize = DIGIT_SIDE * DIGIT_SIDE;

fn glyph_pixels(digit: usize) -> Vec<f64> {
    let mut px = Vec::with_capacity(DIGIT_DIM);
    for row in DIGIT_GLYPHS[digit] {
        for bit in (0..8).rev() {
            px.push(if (row >> bit) & 1 == 1 { 1.0 } else { 0.0 });
        }
    }
    px
}

/// Noisy copies of the ten glyphs, pixels clamped to [0, 1].
pub fn gen_digits(per_class: usize, noise_sigma: f64, seed: u64) -> Result<LabeledDataset> {
    if per_class == 0 {
        return Err(Error::InvalidParameter("per_class must be >= 1".to_string()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise_sigma {noise_sigma} must be >= 0"
        )));
    }
    let mut r = rng::substream(seed, "digits");
    let noise = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut samples = Vec::with_capacity(10 * per_class);
    let mut labels = Vec::with_capacity(10 * per_class);
    for digit in 0..10 {
        let clean = glyph_pixels(digit);
        for _ in 0..per_class {
            samples.push(
                clean
                    .iter()
                    .map(|&p| (p + noise_sigma * noise.sample(&mut r)).clamp(0.0, 1.0))
                    .collect(),
            );
            labels.push(digit);
        }
    }
    LabeledDataset::new(samples, labels, 10)
}

/// Rotates each square image about its center by `angle_deg`
/// (counter-clockwise) with bilinear interpolation; out-of-frame reads
/// are zero.
pub fn rotate_images(images: &[Vec<f64>], side: usize, angle_deg: f64) -> Result<Vec<Vec<f64>>> {
    let dim = side * side;
    for img in images {
        if img.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: img.len(),
            });
        }
    }
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let center = (side as f64 - 1.0) / 2.0;
    let sample = |img: &[f64], y: f64, x: f64| -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let mut acc = 0.0;
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let (yi, xi) = (y0 + dy, x0 + dx);
                if yi >= 0.0 && xi >= 0.0 && (yi as usize) < side && (xi as usize) < side {
                    acc += wy * wx * img[yi as usize * side + xi as usize];
                }
            }
        }
        acc
    };
    Ok(images
        .iter()
        .map(|img| {
            let mut out = vec![0.0; dim];
            for r in 0..side {
                for c in 0..side {
                    // Inverse-map the output pixel back into the input.
                    let dy = r as f64 - center;
                    let dx = c as f64 - center;
                    let sx = cos * dx - sin * dy + center;
                    let sy = sin * dx + cos * dy + center;
                    out[r * side + c] = sample(img, sy, sx);
                }
            }
            out
        })
        .collect())
}

/// Clean glyph digits as the source domain; freshly drawn digits rotated
/// in image space plus pixel noise as the target domain.
pub fn gen_digit_pair(
    per_class: usize,
    rotation_deg: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<DomainPair> {
    let source = gen_digits(per_class, noise_sigma, rng::child_seed(seed, "digit-source", 0))?;
    let clean_target = gen_digits(per_class, 0.0, rng::child_seed(seed, "digit-target", 0))?;
    let rotated = rotate_images(&clean_target.samples, DIGIT_SIDE, rotation_deg)?;
    let mut r = rng::substream(rng::child_seed(seed, "digit-target-noise", 0), "digits");
    let noise = Normal::new(0.0, 1.0).expect("valid sigma");
    let noisy: Vec<Vec<f64>> = rotated
        .iter()
        .map(|img| {
            img.iter()
                .map(|&p| (p + noise_sigma * noise.sample(&mut r)).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    let target = LabeledDataset::new(noisy, clean_target.labels.clone(), 10)?;
    DomainPair::new(
        source,
        target,
        ShiftSpec {
            rotation_deg,
            translation: Vec::new(),
            noise_sigma,
        },
    )
}

fn read_be_u32(buf: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let bytes: [u8; 4] = buf
        .get(offset..offset + 4)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| Error::IdxFormat {
            path: path.to_path_buf(),
            offset: offset as u64,
            detail: "truncated header".to_string(),
        })?;
    Ok(u32::from_be_bytes(bytes))
}

/// Reads the standard big-endian digit-image container: an image file
/// (magic 2051) and a label file (magic 2049). Pixels are scaled to
/// [0, 1]; the class count is the largest label + 1.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let read_all = |path: &Path| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
            .read_to_end(&mut buf)
            .map_err(|e| Error::io(path, e))?;
        Ok(buf)
    };

    let img_buf = read_all(images_path)?;
    let magic = read_be_u32(&img_buf, 0, images_path)?;
    if magic != 2051 {
        return Err(Error::IdxFormat {
            path: images_path.to_path_buf(),
            offset: 0,
            detail: format!("bad magic {magic}, expected 2051"),
        });
    }
    let n = read_be_u32(&img_buf, 4, images_path)? as usize;
    let rows = read_be_u32(&img_buf, 8, images_path)? as usize;
    let cols = read_be_u32(&img_buf, 12, images_path)? as usize;
    let expected = 16 + n * rows * cols;
    if img_buf.len() != expected {
        return Err(Error::IdxFormat {
            path: images_path.to_path_buf(),
            offset: img_buf.len().min(expected) as u64,
            detail: format!("payload is {} bytes, expected {expected}", img_buf.len()),
        });
    }

    let lbl_buf = read_all(labels_path)?;
    let magic = read_be_u32(&lbl_buf, 0, labels_path)?;
    if magic != 2049 {
        return Err(Error::IdxFormat {
            path: labels_path.to_path_buf(),
            offset: 0,
            detail: format!("bad magic {magic}, expected 2049"),
        });
    }
    let n_labels = read_be_u32(&lbl_buf, 4, labels_path)? as usize;
    if lbl_buf.len() != 8 + n_labels {
        return Err(Error::IdxFormat {
            path: labels_path.to_path_buf(),
            offset: lbl_buf.len().min(8 + n_labels) as u64,
            detail: format!("payload is {} bytes, expected {}", lbl_buf.len(), 8 + n_labels),
        });
    }
    if n != n_labels {
        return Err(Error::MisalignedLengths {
            left: n,
            right: n_labels,
        });
    }

    let dim = rows * cols;
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            img_buf[16 + i * dim..16 + (i + 1) * dim]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect()
        })
        .collect();
    let labels: Vec<usize> = lbl_buf[8..].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(1, |&m| m + 1);
    LabeledDataset::new(samples, labels, class_count)
}

/// Comma-separated rows, features first and the class label in the last
/// column. `class_count: None` infers it as max label + 1.
pub fn load_csv(
    path: &Path,
    has_header: bool,
    class_count: Option<usize>,
) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::CsvFormat {
            path: path.to_path_buf(),
            detail: format!("row {row}: {e}"),
        })?;
        if record.len() < 2 {
            return Err(Error::CsvFormat {
                path: path.to_path_buf(),
                detail: format!("row {row}: need at least one feature and a label"),
            });
        }
        let mut values = Vec::with_capacity(record.len() - 1);
        for (col, field) in record.iter().take(record.len() - 1).enumerate() {
            values.push(field.parse::<f64>().map_err(|_| Error::CsvFormat {
                path: path.to_path_buf(),
                detail: format!("row {row}, column {col}: {field:?} is not a number"),
            })?);
        }
        let label_field = record.get(record.len() - 1).expect("len checked");
        let label = label_field.parse::<usize>().map_err(|_| Error::CsvFormat {
            path: path.to_path_buf(),
            detail: format!(
                "row {row}, column {}: label {label_field:?} is not a class index",
                record.len() - 1
            ),
        })?;
        samples.push(values);
        labels.push(label);
    }
    if samples.is_empty() {
        return Err(Error::CsvFormat {
            path: path.to_path_buf(),
            detail: "no rows".to_string(),
        });
    }
    let count = match class_count {
        Some(c) => c,
        None => labels.iter().max().map_or(1, |&m| m + 1),
    };
    LabeledDataset::new(samples, labels, count)
}

/// Comma-separated feature rows with no label column, for classifying
/// unlabeled samples.
pub fn load_unlabeled_csv(path: &Path, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::CsvFormat {
            path: path.to_path_buf(),
            detail: format!("row {row}: {e}"),
        })?;
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            values.push(field.parse::<f64>().map_err(|_| Error::CsvFormat {
                path: path.to_path_buf(),
                detail: format!("row {row}, column {col}: {field:?} is not a number"),
            })?);
        }
        samples.push(values);
    }
    if samples.is_empty() {
        return Err(Error::CsvFormat {
            path: path.to_path_buf(),
            detail: "no rows".to_string(),
        });
    }
    Ok(samples)
}

/// Writes features then the label per row; column header is `f0..fN,label`.
pub fn write_csv(d: &LabeledDataset, path: &Path, header: bool) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    if header {
        let cols: Vec<String> = (0..d.dim()).map(|i| format!("f{i}")).collect();
        writeln!(w, "{},label", cols.join(",")).map_err(|e| Error::io(path, e))?;
    }
    for (s, l) in d.samples.iter().zip(&d.labels) {
        let cells: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{},{l}", cells.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
