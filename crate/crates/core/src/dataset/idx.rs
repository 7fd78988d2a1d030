//! Raw IDX files: big-endian magic `00 00 <type> <ndim>`, `ndim` u32 sizes,
//! then the payload. Only unsigned-byte payloads (type 0x08) are accepted.

use std::path::Path;

use super::{Dataset, Example, Split};
use crate::error::{Error, Result};

const UBYTE: u8 = 0x08;

#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    /// Item count declared in the header, before any limit.
    pub declared_count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Pixels scaled to [0, 1], one vector per image.
    pub images: Vec<Vec<f64>>,
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Ingestion {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(
                self.bytes.len(),
                format!("truncated file while reading {what} ({n} bytes needed at offset {})", self.pos),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads the magic number and dimension sizes, checking the expected rank.
    fn header(&mut self, ndim: u8) -> Result<Vec<usize>> {
        let magic = self.take(4, "magic number")?;
        if magic[0] != 0 || magic[1] != 0 {
            return Err(self.err(0, format!("bad magic number {magic:02x?}")));
        }
        if magic[2] != UBYTE {
            return Err(self.err(2, format!("unsupported element type 0x{:02x}", magic[2])));
        }
        if magic[3] != ndim {
            return Err(self.err(
                3,
                format!("expected {ndim} dimensions, header declares {}", magic[3]),
            ));
        }
        (0..ndim)
            .map(|i| self.u32(&format!("dimension {i}")).map(|d| d as usize))
            .collect()
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        offset: 0,
        reason: e.to_string(),
    })
}

/// Reads up to `limit` images from an IDX3 ubyte file.
pub fn load_idx_images(path: impl AsRef<Path>, limit: usize) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    let dims = r.header(3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    if rows == 0 || cols == 0 {
        return Err(r.err(8, "zero-sized image dimensions"));
    }
    let n = count.min(limit);
    let mut images = Vec::with_capacity(n);
    for i in 0..n {
        let px = r.take(rows * cols, &format!("image {i}"))?;
        images.push(px.iter().map(|&p| f64::from(p) / 255.0).collect());
    }
    Ok(IdxImages {
        declared_count: count,
        rows,
        cols,
        images,
    })
}

/// Reads up to `limit` labels from an IDX1 ubyte file. Also returns the item
/// count the header declares.
pub fn load_idx_labels(path: impl AsRef<Path>, limit: usize) -> Result<(Vec<usize>, usize)> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    let count = r.header(1)?[0];
    let n = count.min(limit);
    let labels = r.take(n, "labels")?.iter().map(|&l| l as usize).collect();
    Ok((labels, count))
}

/// Loads an image/label IDX pair into a dataset with `D = rows * cols` and
/// `K = max label + 1` (at least 2). `limit` is clamped to the file count.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: usize,
    split: Split,
) -> Result<Dataset> {
    if limit == 0 {
        return Err(Error::config("IDX limit must be at least 1"));
    }
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let imgs = load_idx_images(images_path, limit)?;
    let image_count = imgs.declared_count;
    let (labels, label_count) = load_idx_labels(labels_path, limit)?;
    if label_count != image_count {
        return Err(Error::Ingestion {
            path: labels_path.to_path_buf(),
            offset: 4,
            reason: format!("label count {label_count} does not match image count {image_count}"),
        });
    }
    let num_classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
    let dim = imgs.rows * imgs.cols;
    let examples = imgs
        .images
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (features, label))| Example::new(i as u64, features, label))
        .collect();
    Dataset::new(examples, num_classes, dim, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_images(count: u32, rows: u32, cols: u32, payload_len: usize) -> Vec<u8> {
        let mut b = vec![0, 0, 0x08, 3];
        for d in [count, rows, cols] {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend((0..payload_len).map(|i| (i % 256) as u8));
        b
    }

    fn idx_labels(count: u32, k: u8) -> Vec<u8> {
        let mut b = vec![0, 0, 0x08, 1];
        b.extend_from_slice(&count.to_be_bytes());
        b.extend((0..count).map(|i| (i % u32::from(k)) as u8));
        b
    }

    fn write(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    #[test]
    fn loads_limited_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(&dir, "img", &idx_images(100, 28, 28, 100 * 784));
        let lbl = write(&dir, "lbl", &idx_labels(100, 10));
        let ds = load_idx(&img, &lbl, 50, Split::Train).unwrap();
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.feature_dim(), 784);
        assert_eq!(ds.num_classes(), 10);
        let px = &ds.examples()[0].features;
        assert!(px.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert_eq!(px[255], 1.0);
    }

    #[test]
    fn limit_clamps_to_file_count() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(&dir, "img", &idx_images(12, 4, 4, 12 * 16));
        let lbl = write(&dir, "lbl", &idx_labels(12, 3));
        assert_eq!(load_idx(&img, &lbl, 1000, Split::Test).unwrap().len(), 12);
    }

    #[test]
    fn wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = idx_images(2, 2, 2, 8);
        bytes[0] = 0x12;
        let img = write(&dir, "img", &bytes);
        let err = load_idx_images(&img, 10).unwrap_err();
        assert!(matches!(err, Error::Ingestion { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncated_payload_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(&dir, "img", &idx_images(3, 2, 2, 10));
        match load_idx_images(&img, 10).unwrap_err() {
            Error::Ingestion { offset, reason, .. } => {
                assert_eq!(offset, 26);
                assert!(reason.contains("image 2"), "{reason}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(&dir, "img", &idx_images(4, 2, 2, 16));
        let lbl = write(&dir, "lbl", &idx_labels(5, 2));
        let err = load_idx(&img, &lbl, 4, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Ingestion { offset: 4, .. }), "{err}");
    }
}
