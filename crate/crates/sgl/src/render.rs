//! Rendering of classification and segmentation rasters to image files.
//!
//! Class maps are painted with a deterministic palette: class `0` (unlabeled
//! or unclassified) is always black, and classes `1..=c` get golden-angle hue
//! steps so that neighboring class indices land on well-separated colors. The
//! portable pixmap (P6) writer has no optional dependencies and round-trips
//! bit-exactly; PNG output is available for viewers that prefer it.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{io_err, Error, Result};

/// Reciprocal golden ratio; successive multiples spread hues evenly.
const HUE_STEP: f64 = 0.618033988749895;

/// Per-class colors for map rendering. Entry `j - 1` colors class `j`;
/// class `0` is implicitly black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

impl Palette {
    /// Deterministic palette of `num_classes` mutually distinct colors, none
    /// of them black.
    pub fn distinct(num_classes: u16) -> Self {
        let mut colors = Vec::with_capacity(num_classes as usize);
        let mut used: HashSet<[u8; 3]> = HashSet::new();
        used.insert([0, 0, 0]);
        for j in 1..=u32::from(num_classes) {
            let hue = (f64::from(j) * HUE_STEP).fract();
            let mut color = hsv_to_rgb(hue, 0.85, 0.95);
            // Hue spacing only collapses once classes number in the hundreds;
            // nudge brightness, then fall back to a scan of the color cube.
            let mut value = 0.95;
            let mut tries = 0;
            while used.contains(&color) {
                tries += 1;
                if tries > 64 {
                    color = next_free_color(&used);
                    break;
                }
                value = if value > 0.15 { value - 0.035 } else { 0.95 };
                color = hsv_to_rgb(hue, 0.85 - 0.1 * f64::from(tries / 24), value);
            }
            used.insert(color);
            colors.push(color);
        }
        Self { colors }
    }

    /// Palette from explicit colors; entry `j - 1` colors class `j`.
    pub fn from_colors(colors: Vec<[u8; 3]>) -> Self {
        Self { colors }
    }

    /// Number of classes covered (class `0` not counted).
    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Color of `class`; `0` is black. Panics beyond [`len`](Self::len).
    pub fn color(&self, class: u16) -> [u8; 3] {
        if class == 0 {
            [0, 0, 0]
        } else {
            self.colors[class as usize - 1]
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = ((h % 1.0) + 1.0) % 1.0 * 6.0;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match h6.floor() as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [channel(r), channel(g), channel(b)]
}

fn channel(x: f64) -> u8 {
    (x * 255.0).round().clamp(0.0, 255.0) as u8
}

fn next_free_color(used: &HashSet<[u8; 3]>) -> [u8; 3] {
    for r in 0..=255u8 {
        for g in 0..=255u8 {
            for b in 0..=255u8 {
                if !used.contains(&[r, g, b]) {
                    return [r, g, b];
                }
            }
        }
    }
    unreachable!("color cube exhausted");
}

/// Paint a per-pixel class raster as an RGB buffer, three bytes per pixel.
pub fn render_map(pred: &[u16], width: usize, height: usize, palette: &Palette) -> Result<Vec<u8>> {
    if pred.len() != width * height {
        return Err(Error::Dimension(format!(
            "class raster has {} entries for a {width}x{height} image",
            pred.len()
        )));
    }
    if let Some(&max) = pred.iter().max() {
        if max as usize > palette.len() {
            return Err(Error::Config(format!(
                "class {max} has no palette entry (palette covers {} classes)",
                palette.len()
            )));
        }
    }
    let mut rgb = Vec::with_capacity(pred.len() * 3);
    for &p in pred {
        rgb.extend_from_slice(&palette.color(p));
    }
    Ok(rgb)
}

/// Paint region boundaries onto an RGB buffer. A pixel is on a boundary when
/// its right or lower neighbor carries a different label, which draws a
/// one-pixel line between every pair of adjacent regions.
pub fn overlay_boundaries(
    rgb: &mut [u8],
    width: usize,
    height: usize,
    labels: &[u32],
    color: [u8; 3],
) -> Result<()> {
    if labels.len() != width * height || rgb.len() != width * height * 3 {
        return Err(Error::Dimension(format!(
            "overlay needs {} labels and {} bytes for a {width}x{height} image, got {} and {}",
            width * height,
            width * height * 3,
            labels.len(),
            rgb.len()
        )));
    }
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let right_differs = x + 1 < width && labels[i + 1] != labels[i];
            let down_differs = y + 1 < height && labels[i + width] != labels[i];
            if right_differs || down_differs {
                rgb[i * 3..i * 3 + 3].copy_from_slice(&color);
            }
        }
    }
    Ok(())
}

fn check_buffer(width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::Dimension(format!(
            "RGB buffer has {} bytes for a {width}x{height} image",
            rgb.len()
        )));
    }
    Ok(())
}

/// Write an RGB buffer as a binary portable pixmap (P6, maxval 255).
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    check_buffer(width, height, rgb)?;
    let mut out = Vec::with_capacity(rgb.len() + 32);
    out.extend_from_slice(format!("P6\n{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(rgb);
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a binary portable pixmap (P6, maxval 255) back into an RGB buffer.
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let header_err = |message: String| Error::Header {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(header_err("not a binary portable pixmap".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(header_err("missing integer header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("digits are valid utf-8")
            .parse()
            .map_err(|_| header_err("header field out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(header_err(format!("unsupported maxval {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(header_err("missing separator before payload".into()));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = width * height * 3;
    if payload.len() != expected {
        return Err(Error::PayloadLength {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: payload.len() as u64,
        });
    }
    Ok((width, height, payload.to_vec()))
}

/// Write an RGB buffer as a PNG file.
pub fn write_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    check_buffer(width, height, rgb)?;
    image::save_buffer(
        path,
        rgb,
        width as u32,
        height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(source) => io_err(path, source),
        other => Error::Data(format!(
            "image encode failed for {}: {other}",
            path.display()
        )),
    })
}

/// Write an RGB buffer, picking the format by extension: `.png` encodes PNG,
/// anything else a portable pixmap.
pub fn write_map_image(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => write_png(path, width, height, rgb),
        _ => write_ppm(path, width, height, rgb),
    }
}
