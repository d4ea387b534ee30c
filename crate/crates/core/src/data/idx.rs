//! IDX container format used by the MNIST family of datasets.
//!
//! Header: two zero bytes, a type code (0x08 = unsigned byte), the number of
//! dimensions, then one big-endian u32 per dimension. The payload follows in
//! row-major order. Images use magic 2051 (`00 00 08 03`), labels 2049
//! (`00 00 08 01`).

use std::path::Path;

use super::read_maybe_gz;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::data("idx: truncated header"));
        }
        if bytes[0] != 0 || bytes[1] != 0 {
            return Err(Error::data(format!("idx: bad magic {:02x}{:02x}{:02x}{:02x}", bytes[0], bytes[1], bytes[2], bytes[3])));
        }
        if bytes[2] != 0x08 {
            return Err(Error::data(format!("idx: unsupported element type 0x{:02x}", bytes[2])));
        }
        let n_dims = bytes[3] as usize;
        let header = 4 + 4 * n_dims;
        if bytes.len() < header {
            return Err(Error::data("idx: truncated header"));
        }
        let dims: Vec<u32> = (0..n_dims)
            .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()))
            .collect();
        let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        let len = len.ok_or_else(|| Error::data("idx: dimensions overflow"))?;
        if bytes.len() - header != len {
            return Err(Error::data(format!(
                "idx: payload is {} bytes, header declares {len}",
                bytes.len() - header
            )));
        }
        Ok(Self {
            dims,
            data: bytes[header..].to_vec(),
        })
    }

    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_maybe_gz(path)?).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// One grayscale image with its class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticImage {
    pub rows: usize,
    pub cols: usize,
    /// Row-major intensities in `0..=255`.
    pub pixels: Vec<u8>,
    pub label: u8,
}

impl StaticImage {
    pub fn transposed(&self) -> Self {
        let mut pixels = vec![0; self.pixels.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                pixels[c * self.rows + r] = self.pixels[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            pixels,
            label: self.label,
        }
    }
}

/// Pairs an image file with a label file.
///
/// EMNIST stores images transposed relative to MNIST; pass `transpose` to
/// bring them into the usual orientation.
pub fn load_idx(images_path: &Path, labels_path: &Path, transpose: bool) -> Result<Vec<StaticImage>> {
    let images = IdxArray::read(images_path)?;
    let labels = IdxArray::read(labels_path)?;
    images_from_arrays(&images, &labels, transpose)
}

pub fn images_from_arrays(images: &IdxArray, labels: &IdxArray, transpose: bool) -> Result<Vec<StaticImage>> {
    if images.magic() != IMAGE_MAGIC {
        return Err(Error::data(format!("idx: image magic {} is not 2051", images.magic())));
    }
    if labels.magic() != LABEL_MAGIC {
        return Err(Error::data(format!("idx: label magic {} is not 2049", labels.magic())));
    }
    let (n, rows, cols) = (images.dims[0] as usize, images.dims[1] as usize, images.dims[2] as usize);
    if labels.dims[0] as usize != n {
        return Err(Error::data(format!(
            "idx: {n} images but {} labels",
            labels.dims[0]
        )));
    }
    let size = rows * cols;
    Ok((0..n)
        .map(|i| {
            let img = StaticImage {
                rows,
                cols,
                pixels: images.data[i * size..(i + 1) * size].to_vec(),
                label: labels.data[i],
            };
            if transpose {
                img.transposed()
            } else {
                img
            }
        })
        .collect())
}

/// Writes images and labels as an IDX pair.
pub fn save_idx(images: &[StaticImage], images_path: &Path, labels_path: &Path) -> Result<()> {
    let (rows, cols) = images.first().map_or((0, 0), |i| (i.rows, i.cols));
    let img = IdxArray {
        dims: vec![images.len() as u32, rows as u32, cols as u32],
        data: images.iter().flat_map(|i| i.pixels.iter().copied()).collect(),
    };
    let lab = IdxArray {
        dims: vec![images.len() as u32],
        data: images.iter().map(|i| i.label).collect(),
    };
    img.write(images_path)?;
    lab.write(labels_path)
}
