//! IDX image/label files (big-endian headers, optionally gzip-compressed).

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::bufread::GzDecoder;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Dataset;

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut sniff = [0u8; 2];
    reader
        .read_exact(&mut sniff)
        .map_err(|_| Error::Data(format!("{}: file too short", path.display())))?;
    // rebuild the stream with the sniffed bytes in front
    let rest = sniff.to_vec();
    let chained = std::io::Read::chain(std::io::Cursor::new(rest), reader);
    if sniff == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(BufReader::new(chained))))
    } else {
        Ok(Box::new(chained))
    }
}

fn read_u32_be(reader: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| Error::Data(format!("{}: truncated header", path.display())))?;
    Ok(u32::from_be_bytes(buf))
}

fn read_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut reader = open_maybe_gz(path)?;
    let magic = read_u32_be(&mut reader, path)?;
    if magic != MAGIC_IMAGES {
        return Err(Error::Data(format!(
            "{}: bad image magic number {magic:#010x}, expected {MAGIC_IMAGES:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut reader, path)? as usize;
    let rows = read_u32_be(&mut reader, path)? as usize;
    let cols = read_u32_be(&mut reader, path)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    reader
        .read_exact(&mut pixels)
        .map_err(|_| Error::Data(format!("{}: truncated image data", path.display())))?;
    Ok((count, rows * cols, pixels))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut reader = open_maybe_gz(path)?;
    let magic = read_u32_be(&mut reader, path)?;
    if magic != MAGIC_LABELS {
        return Err(Error::Data(format!(
            "{}: bad label magic number {magic:#010x}, expected {MAGIC_LABELS:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut reader, path)? as usize;
    let mut labels = vec![0u8; count];
    reader
        .read_exact(&mut labels)
        .map_err(|_| Error::Data(format!("{}: truncated label data", path.display())))?;
    Ok(labels)
}

/// Clothing-image classification set in IDX format: pixels scaled to
/// [0, 1], 10 classes.
pub fn load_fashion_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (count, pixels_per_image, pixels) = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if labels.len() != count {
        return Err(Error::Data(format!(
            "{} has {count} images but {} has {} labels",
            images_path.display(),
            labels_path.display(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Data(format!(
            "{}: label {bad} outside 0..10",
            labels_path.display()
        )));
    }
    let features: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Dataset::new(
        "fashion_mnist",
        Tensor::new(vec![count, pixels_per_image], features)?,
        labels.iter().map(|&l| l as usize).collect(),
        10,
    )
}
