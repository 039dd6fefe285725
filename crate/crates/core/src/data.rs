//! MNIST ingestion: IDX parsing, pixel normalization, one-hot targets and
//! seeded minibatch ordering.
//!
//! IDX layout (all header integers big-endian `u32`):
//!
//! ```text
//! images: 0x00000803, count, rows, cols, then count*rows*cols u8 pixels
//! labels: 0x00000801, count, then count u8 labels
//! ```

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::seeded_rng;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// Standard file names of the four pre-decompressed MNIST files.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Images with pixels scaled into `[0, 1]`, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Array2<f64>,
}

impl ImageSet {
    pub fn count(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub labels: Vec<u8>,
}

impl LabelSet {
    pub fn count(&self) -> usize {
        self.labels.len()
    }
}

/// Images, labels and the matching one-hot target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: ImageSet,
    pub labels: LabelSet,
    pub targets: Array2<f64>,
}

fn read_u32<R: Read>(src: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    src.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated {
            expected: 4,
            available: 0,
        },
        _ => Error::Io(e),
    })?;
    Ok(u32::from_be_bytes(buf))
}

/// Reads exactly `len` payload bytes, reporting how many were actually present.
fn read_payload<R: Read>(src: &mut R, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(len);
    src.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() < len {
        return Err(Error::Truncated {
            expected: len,
            available: buf.len(),
        });
    }
    Ok(buf)
}

pub fn load_idx_images<R: Read>(mut src: R) -> Result<ImageSet> {
    let magic = read_u32(&mut src)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(&mut src)? as usize;
    let rows = read_u32(&mut src)? as usize;
    let cols = read_u32(&mut src)? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .ok_or_else(|| invalid("IDX image dimensions overflow"))?;
    let raw = read_payload(&mut src, len)?;
    let pixels = Array2::from_shape_vec(
        (count, rows * cols),
        raw.into_iter().map(|b| f64::from(b) / 255.0).collect(),
    )
    .expect("payload length checked against header");
    Ok(ImageSet { rows, cols, pixels })
}

pub fn load_idx_labels<R: Read>(mut src: R) -> Result<LabelSet> {
    let magic = read_u32(&mut src)?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(&mut src)? as usize;
    let labels = read_payload(&mut src, count)?;
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= NUM_CLASSES) {
        return Err(Error::LabelOutOfRange(u32::from(bad)));
    }
    Ok(LabelSet { labels })
}

/// Writes images back to IDX, quantizing each pixel to `round(p * 255)`.
pub fn write_idx_images<W: Write>(images: &ImageSet, mut dst: W) -> Result<()> {
    dst.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    for n in [images.count(), images.rows, images.cols] {
        let n = u32::try_from(n).map_err(|_| invalid("IDX dimension exceeds u32"))?;
        dst.write_all(&n.to_be_bytes())?;
    }
    let bytes: Vec<u8> = images
        .pixels
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    dst.write_all(&bytes)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(labels: &LabelSet, mut dst: W) -> Result<()> {
    dst.write_all(&LABEL_MAGIC.to_be_bytes())?;
    let n = u32::try_from(labels.count()).map_err(|_| invalid("label count exceeds u32"))?;
    dst.write_all(&n.to_be_bytes())?;
    dst.write_all(&labels.labels)?;
    Ok(())
}

pub fn one_hot(label: usize) -> Result<[f64; NUM_CLASSES]> {
    if label >= NUM_CLASSES {
        return Err(Error::LabelOutOfRange(label as u32));
    }
    let mut v = [0.0; NUM_CLASSES];
    v[label] = 1.0;
    Ok(v)
}

impl Dataset {
    pub fn new(images: ImageSet, labels: LabelSet) -> Result<Self> {
        if images.count() != labels.count() {
            return Err(invalid(format!(
                "{} images but {} labels",
                images.count(),
                labels.count()
            )));
        }
        let mut targets = Array2::zeros((labels.count(), NUM_CLASSES));
        for (n, &l) in labels.labels.iter().enumerate() {
            targets[[n, usize::from(l)]] = 1.0;
        }
        Ok(Self {
            images,
            labels,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.images.dim()
    }

    pub fn image(&self, n: usize) -> ArrayView1<'_, f64> {
        self.images.pixels.row(n)
    }

    /// First `n` samples (or all of them if fewer exist).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let images = ImageSet {
            rows: self.images.rows,
            cols: self.images.cols,
            pixels: self.images.pixels.slice(ndarray::s![..n, ..]).to_owned(),
        };
        let labels = LabelSet {
            labels: self.labels.labels[..n].to_vec(),
        };
        Dataset::new(images, labels).expect("prefix keeps counts aligned")
    }

    pub fn from_files(images: &Path, labels: &Path) -> Result<Self> {
        let open = |p: &Path| {
            File::open(p).map(BufReader::new).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {}", p.display(), e),
                ))
            })
        };
        let images = load_idx_images(open(images)?)?;
        let labels = load_idx_labels(open(labels)?)?;
        Self::new(images, labels)
    }
}

/// Locations of the four MNIST files.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            train_images: dir.join(TRAIN_IMAGES),
            train_labels: dir.join(TRAIN_LABELS),
            test_images: dir.join(TEST_IMAGES),
            test_labels: dir.join(TEST_LABELS),
        }
    }

    /// First path that does not exist, if any.
    pub fn missing(&self) -> Option<&Path> {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
        .into_iter()
        .map(PathBuf::as_path)
        .find(|p| !p.is_file())
    }

    pub fn load(&self) -> Result<Splits> {
        Ok(Splits {
            train: Dataset::from_files(&self.train_images, &self.train_labels)?,
            test: Dataset::from_files(&self.test_images, &self.test_labels)?,
        })
    }
}

/// Training and test data for one experiment.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Seeded visiting order for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub order: Vec<usize>,
}

impl BatchPlan {
    /// Permutation of `0..count` drawn from the stream `epoch_index` of `seed`.
    pub fn new(count: usize, batch_size: usize, seed: u64, epoch_index: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        let mut order: Vec<usize> = (0..count).collect();
        let mut rng = seeded_rng(seed, epoch_stream(epoch_index));
        order.shuffle(&mut rng);
        Ok(Self {
            batch_size,
            seed,
            order,
        })
    }

    pub fn batches(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }
}

/// Stream 0 is reserved for weight initialization.
pub(crate) fn epoch_stream(epoch_index: u64) -> u64 {
    epoch_index.wrapping_add(1)
}

pub fn make_batches(
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch_index: u64,
) -> Result<Vec<Vec<usize>>> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let plan = BatchPlan::new(dataset.len(), batch_size, seed, epoch_index)?;
    Ok(plan.batches().map(<[usize]>::to_vec).collect())
}
