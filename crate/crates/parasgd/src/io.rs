//! Dataset files: IDX (MNIST-style) and header-less `label,p0,p1,...` CSV.
//!
//! Pixels are unsigned bytes and are rescaled to `p / 255` on load.

use std::fs;
use std::path::Path;

use parasgd_core::data::Dataset;
use parasgd_core::NDArray;

use crate::error::{CliError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| CliError::format(path, "truncated header"))
}

fn rescale(p: u8) -> f64 {
    f64::from(p) / 255.0
}

/// Number of classes inferred as `max(label) + 1` unless given.
pub fn load_idx(images: &Path, labels: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let img = read(images)?;
    let magic = be_u32(&img, 0, images)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(CliError::format(images, format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let n = be_u32(&img, 4, images)? as usize;
    let rows = be_u32(&img, 8, images)? as usize;
    let cols = be_u32(&img, 12, images)? as usize;
    let body = &img[16..];
    if body.len() != n * rows * cols {
        return Err(CliError::format(
            images,
            format!("truncated or oversized: {} pixel bytes for {n} images of {rows}x{cols}", body.len()),
        ));
    }

    let lab = read(labels)?;
    let magic = be_u32(&lab, 0, labels)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(CliError::format(labels, format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let m = be_u32(&lab, 4, labels)? as usize;
    let lbody = &lab[8..];
    if lbody.len() != m {
        return Err(CliError::format(labels, format!("header says {m} labels, file holds {}", lbody.len())));
    }
    if m != n {
        return Err(CliError::format(labels, format!("{m} labels for {n} images")));
    }

    let labels_vec: Vec<usize> = lbody.iter().map(|&l| usize::from(l)).collect();
    let classes = num_classes.unwrap_or_else(|| labels_vec.iter().max().map_or(1, |m| m + 1));
    let data = body.iter().copied().map(rescale).collect();
    Ok(Dataset::new(NDArray::new(&[n, 1, rows, cols], data)?, labels_vec, classes)?)
}

/// Writes an IDX image/label pair; used for fixtures and exports.
pub fn write_idx(images: &Path, labels: &Path, pixels: &[u8], dims: (usize, usize), label_bytes: &[u8]) -> Result<()> {
    let (rows, cols) = dims;
    let n = label_bytes.len();
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    fs::write(images, img).map_err(|e| CliError::io(images, e))?;
    let mut lab = Vec::with_capacity(8 + n);
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend_from_slice(label_bytes);
    fs::write(labels, lab).map_err(|e| CliError::io(labels, e))
}

/// Rows are `label,p0,...,p{c*h*w-1}` with integer pixels in `0..=255`.
pub fn load_csv(path: &Path, layout: [usize; 3], num_classes: usize) -> Result<Dataset> {
    let per = layout.iter().product::<usize>();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::format(path, e.to_string()))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::format(path, e.to_string()))?;
        let line = row + 1;
        if record.len() != per + 1 {
            return Err(CliError::format(
                path,
                format!("line {line}: {} fields, expected 1 label + {per} pixels", record.len()),
            ));
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| CliError::format(path, format!("line {line}: bad label {:?}", &record[0])))?;
        if label >= num_classes {
            return Err(CliError::format(path, format!("line {line}: label {label} outside [0, {num_classes})")));
        }
        labels.push(label);
        for field in record.iter().skip(1) {
            let p: u8 = field
                .parse()
                .map_err(|_| CliError::format(path, format!("line {line}: bad pixel {field:?}")))?;
            data.push(rescale(p));
        }
    }
    if labels.is_empty() {
        return Err(CliError::format(path, "no rows"));
    }
    let [c, h, w] = layout;
    Ok(Dataset::new(NDArray::new(&[labels.len(), c, h, w], data)?, labels, num_classes)?)
}

/// Maps a real-valued synthetic sample to a byte: `clamp(round(128 + 32 v), 0, 255)`.
pub fn quantize(v: f64) -> u8 {
    (128.0 + 32.0 * v).round().clamp(0.0, 255.0) as u8
}

/// Writes `dataset` in the CSV layout [`load_csv`] reads, quantizing pixels.
pub fn write_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let per = dataset.dims().iter().product::<usize>();
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::format(path, e.to_string()))?;
    let mut fields: Vec<String> = Vec::with_capacity(per + 1);
    for (i, &label) in dataset.labels().iter().enumerate() {
        fields.clear();
        fields.push(label.to_string());
        fields.extend(dataset.images().data()[i * per..][..per].iter().map(|&v| quantize(v).to_string()));
        writer.write_record(&fields).map_err(|e| CliError::format(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_clamps() {
        assert_eq!(quantize(0.0), 128);
        assert_eq!(quantize(1.0), 160);
        assert_eq!(quantize(-10.0), 0);
        assert_eq!(quantize(10.0), 255);
        assert_eq!(quantize(-0.5 / 32.0), 128);
    }

    #[test]
    fn idx_fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let pixels: Vec<u8> = (0..2 * 28 * 28).map(|i| (i % 256) as u8).collect();
        write_idx(&ip, &lp, &pixels, (28, 28), &[3, 7]).unwrap();
        let bytes = fs::read(&ip).unwrap();
        assert_eq!(&bytes[..16], &[0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28]);
        let ds = load_idx(&ip, &lp, Some(10)).unwrap();
        assert_eq!(ds.images().shape(), &[2, 1, 28, 28]);
        assert_eq!(ds.labels(), &[3, 7]);
        assert_eq!(ds.images().data()[255], 1.0);
        assert_eq!(ds.images().data()[1], 1.0 / 255.0);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&ip, &lp, &[0; 8], (2, 2), &[1, 2, 3]).unwrap();
        let err = load_idx(&ip, &lp, None).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");

        write_idx(&ip, &lp, &[0; 8], (2, 2), &[1, 2]).unwrap();
        let mut lab = fs::read(&lp).unwrap();
        lab[3] = 0x03;
        fs::write(&lp, &lab).unwrap();
        assert!(load_idx(&ip, &lp, None).unwrap_err().to_string().contains("bad magic"));

        write_idx(&ip, &lp, &[0; 12], (2, 2), &[1, 2]).unwrap();
        let mut img = fs::read(&ip).unwrap();
        img[7] = 3;
        fs::write(&ip, &img).unwrap();
        assert!(load_idx(&ip, &lp, None).unwrap_err().to_string().contains("2 labels for 3 images"));
    }

    #[test]
    fn csv_layout_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "1,0,255,51,102\n0,1,2,3,4\n").unwrap();
        let ds = load_csv(&p, [1, 2, 2], 2).unwrap();
        assert_eq!(ds.images().shape(), &[2, 1, 2, 2]);
        assert_eq!(&ds.images().data()[..4], &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels(), &[1, 0]);

        fs::write(&p, "10,0,0,0,0\n").unwrap();
        assert!(load_csv(&p, [1, 2, 2], 10).unwrap_err().to_string().contains("label 10"));
        fs::write(&p, "1,0,0,0\n").unwrap();
        assert!(load_csv(&p, [1, 2, 2], 10).is_err());
        fs::write(&p, "1,0,0,0,256\n").unwrap();
        assert!(load_csv(&p, [1, 2, 2], 10).is_err());
    }
}
