//! IDX-format ingestion: big-endian magic, counts and dims, unsigned-byte
//! payload in row-major order.

use std::path::Path;

use crate::data::{RawDigit, DIGIT_PIXELS, DIGIT_SIDE};
use crate::error::DataError;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            got: bytes.len(),
            needed: end,
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an image/label IDX pair into normalized digits. Magic mismatches,
/// truncation, and image/label count disagreement are distinct failures.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Vec<RawDigit>, DataError> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let img = read_file(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::MagicMismatch {
            path: images_path.display().to_string(),
            got: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let n_images = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)?;
    let cols = be_u32(&img, 12, images_path)?;
    if rows as usize != DIGIT_SIDE || cols as usize != DIGIT_SIDE {
        return Err(DataError::BadDimensions {
            path: images_path.display().to_string(),
            dims: vec![rows, cols],
        });
    }
    let needed = 16 + n_images * DIGIT_PIXELS;
    if img.len() < needed {
        return Err(DataError::Truncated {
            path: images_path.display().to_string(),
            got: img.len(),
            needed,
        });
    }

    let lab = read_file(labels_path)?;
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::MagicMismatch {
            path: labels_path.display().to_string(),
            got: magic,
            expected: LABELS_MAGIC,
        });
    }
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;
    if n_labels != n_images {
        return Err(DataError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let needed = 8 + n_labels;
    if lab.len() < needed {
        return Err(DataError::Truncated {
            path: labels_path.display().to_string(),
            got: lab.len(),
            needed,
        });
    }

    let mut digits = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let digit = lab[8 + i];
        if digit > 9 {
            return Err(DataError::BadDigit { digit });
        }
        let start = 16 + i * DIGIT_PIXELS;
        let pixels = img[start..start + DIGIT_PIXELS]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        digits.push(RawDigit { pixels, digit });
    }
    Ok(digits)
}
