//! Datasets: Gaussian-blob synthesis, the IDX byte codec, non-IID
//! partitioning rules, public (unlabeled) distillation sets, and the
//! bridge from partitions to grid measures.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::float;
use crate::funcspace::{FuncSpaceError, MeasureSet, SampleGrid};
use crate::rng::{tag, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("inputs ({inputs}) and labels ({labels}) have different lengths")]
    LengthMismatch { inputs: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("need at least {want} samples of class {class}, found {have}")]
    InsufficientClass {
        class: usize,
        want: usize,
        have: usize,
    },
    #[error("blob synthesis needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("the modular rule needs the device count to divide the class count ({classes} % {devices} != 0)")]
    RuleMismatch { classes: usize, devices: usize },
    #[error("per-device count {per_device} not divisible by {labels_per_device} labels")]
    UnevenSplit {
        per_device: usize,
        labels_per_device: usize,
    },
    #[error("requested {want} samples from a pool of {have}")]
    PoolTooSmall { want: usize, have: usize },
    #[error("bad magic 0x{got:08x} at byte {offset}, expected 0x{want:08x}")]
    BadMagic { got: u32, want: u32, offset: usize },
    #[error("file truncated at byte {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("measure construction failed: {0}")]
    Measure(#[from] FuncSpaceError),
    #[error("empty dataset")]
    Empty,
}

/// Labeled inputs in `R^N`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(
        inputs: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self, DataError> {
        if dim == 0 || inputs.len() != labels.len() * dim {
            return Err(DataError::LengthMismatch {
                inputs: inputs.len() / dim.max(1),
                labels: labels.len(),
            });
        }
        for &l in &labels {
            if l >= classes {
                return Err(DataError::LabelOutOfRange { label: l, classes });
            }
        }
        Ok(Self {
            inputs,
            dim,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs_flat(&self) -> &[f64] {
        &self.inputs
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            inputs,
            dim: self.dim,
            labels,
            classes: self.classes,
        }
    }

    fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }
}

/// Unlabeled inputs shared for distillation; there is no label field, so
/// nothing downstream can depend on one.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicSet {
    inputs: Vec<f64>,
    dim: usize,
}

impl PublicSet {
    pub fn len(&self) -> usize {
        self.inputs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs_flat(&self) -> &[f64] {
        &self.inputs
    }
}

/// Gaussian clusters in `R²` with class means on the unit circle;
/// `per_class` samples per class, standard deviation `spread`.
pub fn synth_blobs(
    classes: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    if classes < 2 {
        return Err(DataError::TooFewClasses(classes));
    }
    let mut rng = Rng::derive(seed, &[tag::DATASET]);
    let mut inputs = Vec::with_capacity(classes * per_class * 2);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let angle = 2.0 * core::f64::consts::PI * c as f64 / classes as f64;
        let (mx, my) = (float::cos(angle), float::sin(angle));
        for _ in 0..per_class {
            inputs.push(mx + spread * rng.gaussian());
            inputs.push(my + spread * rng.gaussian());
            labels.push(c);
        }
    }
    LabeledDataset::new(inputs, 2, labels, classes)
}

/// Class mean positions used by [`synth_blobs`].
pub fn blob_means(classes: usize) -> Vec<[f64; 2]> {
    (0..classes)
        .map(|c| {
            let angle = 2.0 * core::f64::consts::PI * c as f64 / classes as f64;
            [float::cos(angle), float::sin(angle)]
        })
        .collect()
}

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

/// Raw IDX image payload.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols)
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::Truncated {
            offset: bytes.len(),
            needed: end - bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses an IDX image file (magic 2051, big-endian dimensions, raw bytes).
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, DataError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            got: magic,
            want: IDX_IMAGES_MAGIC,
            offset: 0,
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(DataError::Truncated {
            offset: bytes.len(),
            needed: need - body.len(),
        });
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: body[..need].to_vec(),
    })
}

/// Parses an IDX label file (magic 2049).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            got: magic,
            want: IDX_LABELS_MAGIC,
            offset: 0,
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(DataError::Truncated {
            offset: bytes.len(),
            needed: count - body.len(),
        });
    }
    Ok(body[..count].to_vec())
}

/// Bit-exact IDX image encoding.
pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

/// Bit-exact IDX label encoding.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Pairs parsed IDX images and labels into a dataset: pixels scaled to
/// `[0, 1]` and flattened to `rows·cols` features.
pub fn dataset_from_idx(
    images: &IdxImages,
    labels: &[u8],
    classes: usize,
) -> Result<LabeledDataset, DataError> {
    if images.count() != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count(),
            labels: labels.len(),
        });
    }
    let inputs = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    LabeledDataset::new(
        inputs,
        images.rows * images.cols,
        labels.iter().map(|&l| l as usize).collect(),
        classes,
    )
}

/// Modular label assignment: device `i` holds classes
/// `{(i·stride + j) mod C : j < labels_per_device}` with
/// `stride = C / n`, drawing `per_device / labels_per_device` samples per
/// class without replacement (per device) from that class's pool.
pub fn partition_ring(
    ds: &LabeledDataset,
    devices: usize,
    labels_per_device: usize,
    per_device: usize,
    seed: u64,
) -> Result<Vec<LabeledDataset>, DataError> {
    if !ds.classes().is_multiple_of(devices) {
        return Err(DataError::RuleMismatch {
            classes: ds.classes(),
            devices,
        });
    }
    let stride = ds.classes() / devices;
    let assignment: Vec<Vec<usize>> = (0..devices)
        .map(|i| {
            (0..labels_per_device)
                .map(|j| (i * stride + j) % ds.classes())
                .collect()
        })
        .collect();
    partition_by_assignment(ds, &assignment, per_device, seed)
}

/// Random label assignment: each device draws `labels_per_device`
/// distinct classes uniformly.
pub fn partition_random_pairs(
    ds: &LabeledDataset,
    devices: usize,
    labels_per_device: usize,
    per_device: usize,
    seed: u64,
) -> Result<Vec<LabeledDataset>, DataError> {
    let assignment: Vec<Vec<usize>> = (0..devices)
        .map(|i| {
            let mut rng = Rng::derive(seed, &[tag::PARTITION, i as u64]);
            rng.sample_indices(ds.classes(), labels_per_device)
        })
        .collect();
    partition_by_assignment(ds, &assignment, per_device, seed)
}

fn partition_by_assignment(
    ds: &LabeledDataset,
    assignment: &[Vec<usize>],
    per_device: usize,
    seed: u64,
) -> Result<Vec<LabeledDataset>, DataError> {
    let labels_per_device = assignment.first().map_or(0, Vec::len);
    if labels_per_device == 0 || !per_device.is_multiple_of(labels_per_device) {
        return Err(DataError::UnevenSplit {
            per_device,
            labels_per_device,
        });
    }
    let per_label = per_device / labels_per_device;
    let mut out = Vec::with_capacity(assignment.len());
    for (device, classes) in assignment.iter().enumerate() {
        let mut picked = Vec::with_capacity(per_device);
        for &class in classes {
            let pool = ds.class_indices(class);
            if pool.len() < per_label {
                return Err(DataError::InsufficientClass {
                    class,
                    want: per_label,
                    have: pool.len(),
                });
            }
            let mut rng = Rng::derive(seed, &[tag::PARTITION, device as u64, class as u64]);
            let sample = rng.sample_indices(pool.len(), per_label);
            picked.extend(sample.into_iter().map(|k| pool[k]));
        }
        out.push(ds.subset(&picked));
    }
    Ok(out)
}

/// Uniform unlabeled sample of `size` inputs from the source pool,
/// without replacement; overlap with local datasets is allowed.
pub fn make_public(ds: &LabeledDataset, size: usize, seed: u64) -> Result<PublicSet, DataError> {
    if size == 0 || ds.is_empty() {
        return Err(DataError::Empty);
    }
    if size > ds.len() {
        return Err(DataError::PoolTooSmall {
            want: size,
            have: ds.len(),
        });
    }
    let mut rng = Rng::derive(seed, &[tag::PUBLIC_SET]);
    let indices = rng.sample_indices(ds.len(), size);
    let mut inputs = Vec::with_capacity(size * ds.dim());
    for i in indices {
        inputs.extend_from_slice(ds.input(i));
    }
    Ok(PublicSet {
        inputs,
        dim: ds.dim(),
    })
}

/// Deterministic grid from pooled device data: seeded shuffle of the
/// pooled indices, then a strided pick of `grid_size` points.
pub fn grid_from_partitions(
    partitions: &[LabeledDataset],
    grid_size: usize,
    dim_out: usize,
    seed: u64,
) -> Result<SampleGrid, DataError> {
    let total: usize = partitions.iter().map(LabeledDataset::len).sum();
    if total < grid_size || grid_size == 0 {
        return Err(DataError::PoolTooSmall {
            want: grid_size,
            have: total,
        });
    }
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = Rng::derive(seed, &[tag::GRID]);
    rng.shuffle(&mut order);
    let stride = total / grid_size;
    let mut points = Vec::with_capacity(grid_size);
    for k in 0..grid_size {
        let flat = order[k * stride];
        let (mut device, mut idx) = (0, flat);
        while idx >= partitions[device].len() {
            idx -= partitions[device].len();
            device += 1;
        }
        points.push(partitions[device].input(idx).to_vec());
    }
    Ok(SampleGrid::new(&points, dim_out)?)
}

/// Per-device measures from a nearest-grid-point histogram of each
/// device's data; the global measure is the device average, and the
/// density ratios and their suprema come with it.
pub fn measures_from_partition(
    partitions: &[LabeledDataset],
    grid: &SampleGrid,
) -> Result<MeasureSet, DataError> {
    let s = grid.len();
    let mut locals = Vec::with_capacity(partitions.len());
    for part in partitions {
        if part.is_empty() {
            return Err(DataError::Empty);
        }
        let mut counts = vec![0usize; s];
        for i in 0..part.len() {
            counts[nearest_grid_point(grid, part.input(i))] += 1;
        }
        let total = part.len() as f64;
        locals.push(counts.into_iter().map(|c| c as f64 / total).collect());
    }
    Ok(MeasureSet::from_locals(locals)?)
}

fn nearest_grid_point(grid: &SampleGrid, x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for s in 0..grid.len() {
        let mut d = 0.0;
        for (a, b) in grid.point(s).iter().zip(x) {
            let diff = a - b;
            d += diff * diff;
        }
        if d < best_d {
            best_d = d;
            best = s;
        }
    }
    best
}
