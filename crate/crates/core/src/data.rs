//! Dataset ingestion (IDX image/label files), synthetic generators, and the
//! congealed-replacement construction.

use crate::congeal::{congeal_set, CongealSpec};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Grayscale intensity grid, row-major, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    h: usize,
    w: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(h: usize, w: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != h * w {
            return Err(Error::ShapeMismatch {
                context: "image pixel count",
                expected: h * w,
                found: pixels.len(),
            });
        }
        Ok(Self { h, w, pixels })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self { h, w, pixels: vec![0.0; h * w] }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.pixels[y * self.w + x] = v;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }
}

/// Vector layout of a dataset: image grid or raw dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Grid { h: usize, w: usize },
    Flat { dim: usize },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match *self {
            Shape::Grid { h, w } => h * w,
            Shape::Flat { dim } => dim,
        }
    }
}

/// One dataset instance. `vec` holds intensities in [0,1] for image data;
/// synthetic point clouds may stray slightly outside.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub id: usize,
    pub vec: Vec<f64>,
    pub label: Option<u8>,
    pub is_congealed: bool,
}

/// An ordered collection of items whose ids form a permutation of 0..n−1.
/// Reordering permutes items but never rewrites ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<DatasetItem>,
    shape: Shape,
}

impl Dataset {
    pub fn new(items: Vec<DatasetItem>, shape: Shape) -> Result<Self> {
        let n = items.len();
        let dim = shape.dim();
        let mut seen = vec![false; n];
        for item in &items {
            if item.id >= n || seen[item.id] {
                return Err(Error::InvalidSpec(format!(
                    "dataset ids must be unique and dense over 0..{n}"
                )));
            }
            seen[item.id] = true;
            if item.vec.len() != dim {
                return Err(Error::ShapeMismatch {
                    context: "item vector length",
                    expected: dim,
                    found: item.vec.len(),
                });
            }
        }
        Ok(Self { items, shape })
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    /// Item with a given id, independent of current order.
    pub fn by_id(&self, id: usize) -> &DatasetItem {
        if self.items[id].id == id {
            return &self.items[id]; // common case: storage order == id order
        }
        self.items.iter().find(|it| it.id == id).expect("dense ids")
    }

    pub fn congealed_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> =
            self.items.iter().filter(|it| it.is_congealed).map(|it| it.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn to_images(&self) -> Result<Vec<Image>> {
        let Shape::Grid { h, w } = self.shape else {
            return Err(Error::InvalidSpec("dataset has no image shape".into()));
        };
        self.items.iter().map(|it| Image::new(h, w, it.vec.clone())).collect()
    }
}

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let end = at + 4;
    if bytes.len() < end {
        return Err(Error::TruncatedIdx { expected: end, found: bytes.len() });
    }
    Ok(u32::from_be_bytes(bytes[at..end].try_into().unwrap()))
}

fn check_exact_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::TruncatedIdx { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::BadDocument {
            path: path.display().to_string(),
            reason: format!("{} trailing bytes after payload", bytes.len() - expected),
        });
    }
    Ok(())
}

/// Parses big-endian IDX files: image magic 0x00000803 with dims
/// (count, rows, cols), optional label magic 0x00000801 with (count).
/// Pixel bytes scale to [0,1] by /255.
pub fn read_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let bytes = std::fs::read(images_path)?;
    let magic = be_u32(&bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic { expected: IMAGE_MAGIC, found: magic });
    }
    let count = be_u32(&bytes, 4)? as usize;
    let h = be_u32(&bytes, 8)? as usize;
    let w = be_u32(&bytes, 12)? as usize;
    check_exact_len(&bytes, 16 + count * h * w, images_path)?;

    let labels = match labels_path {
        None => None,
        Some(lp) => {
            let lb = std::fs::read(lp)?;
            let lmagic = be_u32(&lb, 0)?;
            if lmagic != LABEL_MAGIC {
                return Err(Error::BadMagic { expected: LABEL_MAGIC, found: lmagic });
            }
            let lcount = be_u32(&lb, 4)? as usize;
            if lcount != count {
                return Err(Error::CountMismatch { images: count, labels: lcount });
            }
            check_exact_len(&lb, 8 + lcount, lp)?;
            Some(lb[8..8 + lcount].to_vec())
        }
    };

    let px = h * w;
    let items = (0..count)
        .map(|i| DatasetItem {
            id: i,
            vec: bytes[16 + i * px..16 + (i + 1) * px]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect(),
            label: labels.as_ref().map(|l| l[i]),
            is_congealed: false,
        })
        .collect();
    Dataset::new(items, Shape::Grid { h, w })
}

/// Writes the dataset back out as IDX, quantizing each intensity to
/// round(v·255). Items are emitted in id order so a read→write round trip
/// reproduces the source file byte-for-byte.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: Option<&Path>) -> Result<()> {
    let Shape::Grid { h, w } = ds.shape() else {
        return Err(Error::InvalidSpec("cannot write a flat dataset as IDX images".into()));
    };
    let n = ds.n();
    let mut bytes = Vec::with_capacity(16 + n * h * w);
    bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(n as u32).to_be_bytes());
    bytes.extend_from_slice(&(h as u32).to_be_bytes());
    bytes.extend_from_slice(&(w as u32).to_be_bytes());
    for id in 0..n {
        for &v in &ds.by_id(id).vec {
            bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    std::fs::write(images_path, bytes)?;

    if let Some(lp) = labels_path {
        let mut lb = Vec::with_capacity(8 + n);
        lb.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lb.extend_from_slice(&(n as u32).to_be_bytes());
        for id in 0..n {
            lb.push(ds.by_id(id).label.ok_or_else(|| {
                Error::InvalidSpec("cannot write labels: dataset has unlabeled items".into())
            })?);
        }
        std::fs::write(lp, lb)?;
    }
    Ok(())
}

/// Runs congealing over the whole class, then replaces a seeded random subset
/// of `m` originals with their congealed versions, flagging them.
pub fn make_congealed_dataset(
    class_images: &Dataset,
    m: usize,
    spec: &CongealSpec,
    seed: u64,
) -> Result<Dataset> {
    let n = class_images.n();
    if m > n {
        return Err(Error::InvalidSpec(format!("m = {m} exceeds class size {n}")));
    }
    if m == 0 {
        let mut copy = class_images.clone();
        for item in &mut copy.items {
            item.is_congealed = false;
        }
        return Ok(copy);
    }
    let images = class_images.to_images()?;
    let outcome = congeal_set(&images, spec)?;

    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut chosen = vec![false; n];
    for &id in ids.iter().take(m) {
        chosen[id] = true;
    }

    let items = class_images
        .items()
        .iter()
        .map(|it| {
            // congeal_set output is ordered like its input: items() order.
            if chosen[it.id] {
                let pos = class_images.items().iter().position(|x| x.id == it.id).unwrap();
                DatasetItem {
                    id: it.id,
                    vec: outcome.images[pos].pixels().to_vec(),
                    label: it.label,
                    is_congealed: true,
                }
            } else {
                DatasetItem { is_congealed: false, ..it.clone() }
            }
        })
        .collect();
    Dataset::new(items, class_images.shape())
}

/// Isotropic Gaussian blobs; labels are cluster indices. `n` total samples are
/// split as evenly as possible across centers (earlier clusters get the
/// remainder).
pub fn synth_clusters(
    n: usize,
    centers: &[Vec<f64>],
    sigmas: &[f64],
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidSpec("need at least one sample".into()));
    }
    if centers.is_empty() || centers.len() != sigmas.len() {
        return Err(Error::InvalidSpec(
            "centers and sigmas must be nonempty and equally long".into(),
        ));
    }
    let dim = centers[0].len();
    if centers.iter().any(|c| c.len() != dim) {
        return Err(Error::InvalidSpec("all centers must share one dimension".into()));
    }
    let k = centers.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n);
    let mut id = 0;
    for (c, (center, &sigma)) in centers.iter().zip(sigmas).enumerate() {
        let quota = n / k + usize::from(c < n % k);
        for _ in 0..quota {
            let vec = center
                .iter()
                .map(|&mu| mu + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            items.push(DatasetItem {
                id,
                vec,
                label: Some(c as u8),
                is_congealed: false,
            });
            id += 1;
        }
    }
    Dataset::new(items, Shape::Flat { dim })
}

/// Canonical shape for a synthetic image class, drawn with strokes placed by
/// relative coordinates so any grid ≥ 8×8 works.
pub fn class_pattern(class_id: usize, h: usize, w: usize) -> Result<Image> {
    if h < 8 || w < 8 {
        return Err(Error::InvalidSpec("patterns need at least an 8×8 grid".into()));
    }
    let mut img = Image::zeros(h, w);
    let ry = |f: f64| (f * h as f64).round() as usize;
    let rx = |f: f64| (f * w as f64).round() as usize;
    let mut fill = |y0: usize, y1: usize, x0: usize, x1: usize, v: f64| {
        for y in y0..y1.min(h) {
            for x in x0..x1.min(w) {
                img.set(y, x, v);
            }
        }
    };
    match class_id % 3 {
        // T with an off-axis blob for rotational asymmetry
        0 => {
            fill(ry(0.17), ry(0.33), rx(0.17), rx(0.83), 1.0);
            fill(ry(0.17), ry(0.83), rx(0.42), rx(0.58), 1.0);
            fill(ry(0.67), ry(0.83), rx(0.67), rx(0.83), 0.6);
        }
        // L with a dot
        1 => {
            fill(ry(0.17), ry(0.83), rx(0.25), rx(0.42), 1.0);
            fill(ry(0.67), ry(0.83), rx(0.25), rx(0.75), 1.0);
            fill(ry(0.25), ry(0.42), rx(0.58), rx(0.75), 0.6);
        }
        // plus
        _ => {
            fill(ry(0.42), ry(0.58), rx(0.17), rx(0.83), 1.0);
            fill(ry(0.17), ry(0.83), rx(0.42), rx(0.58), 1.0);
        }
    }
    Ok(img)
}

/// How per-image affine jitter is drawn when synthesizing an image class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterKind {
    /// Every image gets full-strength jitter: rotation ±10°, translation
    /// ±2 px, scale ±8%, pixel noise σ = 0.03.
    Uniform,
    /// A per-image amplitude a ~ U[0,1] scales the jitter (rotation up to
    /// ±12°·a, translation ±3·a px, scale ±12%·a, noise σ = 0.05), so
    /// small-amplitude images are near-canonical — natural prototypes —
    /// while a ≈ 1 images are heavily distorted.
    Amplitude,
}

/// One synthetic image class: the canonical pattern under per-image affine
/// jitter, plus Gaussian pixel noise, clamped and quantized to the 8-bit grid
/// like file-borne images.
pub fn synth_image_class(
    n: usize,
    h: usize,
    w: usize,
    class_id: usize,
    jitter: JitterKind,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidSpec("need at least one image".into()));
    }
    let pattern = class_pattern(class_id, h, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rot_max, t_max, s_max, noise_sd) = match jitter {
        JitterKind::Uniform => (10.0, 2.0, 0.08, 0.03),
        JitterKind::Amplitude => (12.0, 3.0, 0.12, 0.05),
    };
    let items = (0..n)
        .map(|id| {
            let a: f64 = match jitter {
                JitterKind::Uniform => 1.0,
                JitterKind::Amplitude => rng.gen(),
            };
            let rot = a * rng.gen_range(-rot_max..rot_max);
            let tx = a * rng.gen_range(-t_max..t_max);
            let ty = a * rng.gen_range(-t_max..t_max);
            let scale = 1.0 + a * rng.gen_range(-s_max..s_max);
            let warped = crate::congeal::warp_continuous(&pattern, tx, ty, rot, scale);
            let vec = warped
                .pixels()
                .iter()
                .map(|&v| {
                    let noisy = v + noise_sd * rng.sample::<f64, _>(StandardNormal);
                    (noisy.clamp(0.0, 1.0) * 255.0).round() / 255.0
                })
                .collect();
            DatasetItem { id, vec, label: Some(class_id as u8), is_congealed: false }
        })
        .collect();
    Dataset::new(items, Shape::Grid { h, w })
}

pub const MANIFEST_VERSION: u32 = 1;

/// Sidecar JSON describing a stored dataset:
/// {version, source, n, shape, congealed_ids}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub source: String,
    pub n: usize,
    pub shape: Shape,
    pub congealed_ids: Vec<usize>,
}

impl DatasetManifest {
    pub fn describe(ds: &Dataset, source: &str) -> Self {
        Self {
            version: MANIFEST_VERSION,
            source: source.to_string(),
            n: ds.n(),
            shape: ds.shape(),
            congealed_ids: ds.congealed_ids(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = serde_json::to_vec_pretty(self)?;
        body.push(b'\n');
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let doc: Self = serde_json::from_slice(&bytes)?;
        if doc.version != MANIFEST_VERSION {
            return Err(Error::BadDocument {
                path: path.display().to_string(),
                reason: format!("unsupported version {}", doc.version),
            });
        }
        Ok(doc)
    }
}

/// Applies manifest congealed flags to a freshly read dataset (IDX files do
/// not carry the partition).
pub fn apply_manifest_flags(ds: &mut Dataset, manifest: &DatasetManifest) -> Result<()> {
    if manifest.n != ds.n() {
        return Err(Error::ShapeMismatch {
            context: "manifest item count",
            expected: manifest.n,
            found: ds.n(),
        });
    }
    let n = ds.n();
    for &id in &manifest.congealed_ids {
        if id >= n {
            return Err(Error::InvalidSpec(format!("manifest flags unknown id {id}")));
        }
    }
    let flagged: std::collections::HashSet<usize> =
        manifest.congealed_ids.iter().copied().collect();
    for item in &mut ds.items {
        item.is_congealed = flagged.contains(&item.id);
    }
    Ok(())
}

/// Flat datasets persist as CSV (id, label, coordinates…) next to a manifest;
/// the IDX container only fits image grids.
pub fn write_vectors_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = ds.dim();
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for id in 0..ds.n() {
        let item = ds.by_id(id);
        let mut rec = vec![
            item.id.to_string(),
            item.label.map(|l| l.to_string()).unwrap_or_default(),
        ];
        rec.extend(item.vec.iter().map(|v| format!("{v:.17e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vectors_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let dim = rdr.headers()?.len().saturating_sub(2);
    if dim == 0 {
        return Err(Error::BadDocument {
            path: path.display().to_string(),
            reason: "vector CSV needs id, label and coordinate columns".into(),
        });
    }
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |reason: String| Error::BadDocument {
            path: path.display().to_string(),
            reason,
        };
        let id: usize =
            rec.get(0).unwrap_or("").parse().map_err(|_| bad("unparseable id".into()))?;
        let label_field = rec.get(1).unwrap_or("");
        let label = if label_field.is_empty() {
            None
        } else {
            Some(label_field.parse().map_err(|_| bad("unparseable label".into()))?)
        };
        let mut vec = Vec::with_capacity(dim);
        for j in 0..dim {
            vec.push(
                rec.get(2 + j)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| bad(format!("unparseable coordinate {j}")))?,
            );
        }
        items.push(DatasetItem { id, vec, label, is_congealed: false });
    }
    Dataset::new(items, Shape::Flat { dim })
}
