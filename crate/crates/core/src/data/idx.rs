//! IDX container reader (big-endian headers, unsigned byte payloads).

use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use ndarray::Array2;

use super::{DataError, LabeledDataset};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn header(path: &Path, bytes: &[u8], words: usize, expected_magic: u32) -> Result<Vec<u32>, DataError> {
    let truncated = || DataError::TruncatedFile {
        path: path.to_path_buf(),
        detail: format!("{} header bytes, need {}", bytes.len(), 4 * words),
    };
    if bytes.len() < 4 {
        return Err(truncated());
    }
    let magic = BigEndian::read_u32(&bytes[0..4]);
    if magic != expected_magic {
        return Err(DataError::MagicMismatch {
            path: path.to_path_buf(),
            expected: expected_magic,
            found: magic,
        });
    }
    if bytes.len() < 4 * words {
        return Err(truncated());
    }
    Ok((0..words).map(|w| BigEndian::read_u32(&bytes[4 * w..4 * w + 4])).collect())
}

/// Reads an image file; returns (count, rows, cols, raw pixel bytes).
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let bytes = read_file(path)?;
    let h = header(path, &bytes, 4, IMAGE_MAGIC)?;
    let (n, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    let need = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| DataError::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("header dimensions {n}x{rows}x{cols} overflow"),
        })?;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(DataError::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("{} pixel bytes, header promises {need}", payload.len()),
        });
    }
    Ok((n, rows, cols, payload[..need].to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let bytes = read_file(path)?;
    let h = header(path, &bytes, 2, LABEL_MAGIC)?;
    let n = h[1] as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(DataError::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("{} label bytes, header promises {n}", payload.len()),
        });
    }
    Ok(payload[..n].to_vec())
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]` by `/255`,
/// IDs are `0..m` in file order and the class count is `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset, DataError> {
    let (n, rows, cols, pixels) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != n {
        return Err(DataError::CountMismatch {
            images: images_path.to_path_buf(),
            labels: labels_path.to_path_buf(),
            image_count: n,
            label_count: labels.len(),
        });
    }
    let d = rows * cols;
    let features = Array2::from_shape_vec((n, d), pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("pixel buffer length checked against header");
    let num_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    LabeledDataset::new(
        features,
        labels.into_iter().map(usize::from).collect(),
        (0..n as u64).collect(),
        num_classes,
    )
}

impl LabeledDataset {
    /// Widens the declared class count (e.g. to align train and test corpora).
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self, DataError> {
        if num_classes < self.num_classes {
            return Err(DataError::InvalidParam(format!(
                "cannot shrink class count from {} to {num_classes}",
                self.num_classes
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}
