//! On-disk scene format: a JSON header describing a raw little-endian payload.
//!
//! The header names the payload file (path resolved relative to the header's
//! directory), its dimensions, and optionally a ground-truth raster and a list
//! of band indices to drop at load time. Sample payloads are band-sequential
//! `f32le`; label payloads are row-major `u16le`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cube::{GroundTruth, HyperspectralCube};
use crate::error::{io_err, Error, Result};

/// JSON header describing a cube payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Sample type; only `"f32le"` is supported.
    pub dtype: String,
    /// Payload layout; only `"bsq"` (band-sequential) is supported.
    pub layout: String,
    /// Payload path, relative to the header file.
    pub data_file: String,
    /// Optional `u16le` row-major label raster, relative to the header file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_file: Option<String>,
    /// Declared class count for the label raster.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<u16>,
    /// 0-based band indices dropped at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude_bands: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_names: Option<Vec<String>>,
}

/// JSON header describing a per-pixel label raster (`u16le`, row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelMapHeader {
    pub width: usize,
    pub height: usize,
    /// Sample type; only `"u16le"` is supported.
    pub dtype: String,
    pub num_classes: u16,
    /// Payload path, relative to the header file.
    pub data_file: String,
}

/// A loaded cube together with its optional ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub cube: HyperspectralCube,
    pub ground_truth: Option<GroundTruth>,
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn header_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Header {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_payload(path: &Path, expected: u64) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::PayloadLength {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

/// Load a scene from its JSON header, applying any `exclude_bands` list.
pub fn load_cube(header_path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(header_path).map_err(|e| io_err(header_path, e))?;
    let header: CubeHeader =
        serde_json::from_str(&text).map_err(|e| header_err(header_path, e.to_string()))?;
    if header.dtype != "f32le" {
        return Err(header_err(
            header_path,
            format!("unsupported dtype {:?} (expected \"f32le\")", header.dtype),
        ));
    }
    if header.layout != "bsq" {
        return Err(header_err(
            header_path,
            format!("unsupported layout {:?} (expected \"bsq\")", header.layout),
        ));
    }
    let (w, h, b) = (header.width, header.height, header.bands);
    if w == 0 || h == 0 || b == 0 {
        return Err(header_err(
            header_path,
            format!("dimensions must be positive, got {w}x{h}x{b}"),
        ));
    }

    let dir = parent_dir(header_path);
    let data_path = dir.join(&header.data_file);
    let n = w * h;
    let bytes = read_payload(&data_path, (n * b * 4) as u64)?;

    // Band-sequential on disk -> pixel-interleaved in memory.
    let mut samples = vec![0.0f32; n * b];
    for band in 0..b {
        let plane = &bytes[band * n * 4..(band + 1) * n * 4];
        for (pixel, chunk) in plane.chunks_exact(4).enumerate() {
            samples[pixel * b + band] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    let mut cube = HyperspectralCube::from_samples(w, h, b, samples)?;
    if let Some(names) = &header.band_names {
        cube = cube.with_band_names(names.clone())?;
    }
    if let Some(exclude) = &header.exclude_bands {
        cube = cube.drop_bands(exclude)?;
    }

    let ground_truth = match &header.gt_file {
        Some(gt_file) => {
            let gt_path = dir.join(gt_file);
            let bytes = read_payload(&gt_path, (n * 2) as u64)?;
            let labels: Vec<u16> = bytes
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Some(GroundTruth::new(w, h, labels, header.num_classes)?)
        }
        None => None,
    };

    Ok(Scene { cube, ground_truth })
}

/// Save a cube (and optional ground truth) next to `header_path`.
///
/// Payload files are named after the header's file stem: `<stem>.f32` and
/// `<stem>.gt.u16`. The cube is written band-sequentially.
pub fn save_cube(
    cube: &HyperspectralCube,
    ground_truth: Option<&GroundTruth>,
    header_path: &Path,
) -> Result<()> {
    let stem = header_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| header_err(header_path, "header path has no usable file stem"))?
        .to_string();
    let dir = parent_dir(header_path);

    if let Some(gt) = ground_truth {
        if gt.width() != cube.width() || gt.height() != cube.height() {
            return Err(Error::Dimension(format!(
                "ground truth {}x{} does not match cube {}x{}",
                gt.width(),
                gt.height(),
                cube.width(),
                cube.height()
            )));
        }
    }

    let data_file = format!("{stem}.f32");
    let n = cube.num_pixels();
    let b = cube.bands();
    let mut bytes = Vec::with_capacity(n * b * 4);
    for band in 0..b {
        for pixel in 0..n {
            bytes.extend_from_slice(&cube.spectrum_at(pixel)[band].to_le_bytes());
        }
    }
    let data_path = dir.join(&data_file);
    fs::write(&data_path, &bytes).map_err(|e| io_err(&data_path, e))?;

    let gt_file = match ground_truth {
        Some(gt) => {
            let name = format!("{stem}.gt.u16");
            let mut bytes = Vec::with_capacity(n * 2);
            for &label in gt.labels() {
                bytes.extend_from_slice(&label.to_le_bytes());
            }
            let gt_path = dir.join(&name);
            fs::write(&gt_path, &bytes).map_err(|e| io_err(&gt_path, e))?;
            Some(name)
        }
        None => None,
    };

    let header = CubeHeader {
        width: cube.width(),
        height: cube.height(),
        bands: b,
        dtype: "f32le".to_string(),
        layout: "bsq".to_string(),
        data_file,
        gt_file,
        num_classes: ground_truth.map(GroundTruth::num_classes),
        exclude_bands: None,
        band_names: cube.band_names().map(<[String]>::to_vec),
    };
    write_json(&header, header_path)
}

/// Save a per-pixel label raster (`u16le`) with a JSON header.
pub fn save_label_map(
    labels: &[u16],
    width: usize,
    height: usize,
    num_classes: u16,
    header_path: &Path,
) -> Result<()> {
    if labels.len() != width * height {
        return Err(Error::Dimension(format!(
            "label raster of {width}x{height} needs {} entries, got {}",
            width * height,
            labels.len()
        )));
    }
    let stem = header_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| header_err(header_path, "header path has no usable file stem"))?;
    let data_file = format!("{stem}.u16");
    let data_path = parent_dir(header_path).join(&data_file);
    let mut bytes = Vec::with_capacity(labels.len() * 2);
    for &label in labels {
        bytes.extend_from_slice(&label.to_le_bytes());
    }
    fs::write(&data_path, &bytes).map_err(|e| io_err(&data_path, e))?;
    let header = LabelMapHeader {
        width,
        height,
        dtype: "u16le".to_string(),
        num_classes,
        data_file,
    };
    write_json(&header, header_path)
}

/// Load a label raster saved by [`save_label_map`].
pub fn load_label_map(header_path: &Path) -> Result<(Vec<u16>, LabelMapHeader)> {
    let text = fs::read_to_string(header_path).map_err(|e| io_err(header_path, e))?;
    let header: LabelMapHeader =
        serde_json::from_str(&text).map_err(|e| header_err(header_path, e.to_string()))?;
    if header.dtype != "u16le" {
        return Err(header_err(
            header_path,
            format!("unsupported dtype {:?} (expected \"u16le\")", header.dtype),
        ));
    }
    let data_path = parent_dir(header_path).join(&header.data_file);
    let bytes = read_payload(&data_path, (header.width * header.height * 2) as u64)?;
    let labels = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((labels, header))
}

/// Write a row-major `u32le` raster (used for superpixel assignments).
pub fn write_raw_u32le(path: &Path, values: &[u32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, &bytes).map_err(|e| io_err(path, e))
}

/// Serialize a value as pretty JSON to `path`.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("JSON serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}
