//! Binary PPM (P6) reading and writing, plus a black/white mask writer.
//! P6 keeps the image tests bit-exact without an image decoder dependency.

use std::fs;
use std::path::Path;

use gasmil_core::preprocess::{RasterImage, TissueMask};

use crate::error::{CliError, Result};

fn parse_p6(bytes: &[u8]) -> std::result::Result<RasterImage, String> {
    let mut pos = 0usize;
    let mut token = |skip_single_ws: bool| -> std::result::Result<String, String> {
        // skip whitespace and '#' comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("unexpected end of header".to_string());
        }
        let out = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| "non-ascii header".to_string())?
            .to_string();
        if skip_single_ws {
            // exactly one whitespace byte separates the header from the payload
            if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
                return Err("missing separator after maxval".to_string());
            }
            pos += 1;
        }
        Ok(out)
    };
    if token(false)? != "P6" {
        return Err("not a binary PPM (expected magic P6)".to_string());
    }
    let width: usize = token(false)?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token(false)?.parse().map_err(|_| "bad height".to_string())?;
    let maxval: usize = token(true)?.parse().map_err(|_| "bad maxval".to_string())?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, expected 255"));
    }
    let expected = width * height * 3;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(format!(
            "payload of {} bytes, expected {expected} for {width}x{height}",
            payload.len()
        ));
    }
    RasterImage::new(width, height, payload.to_vec()).map_err(|e| e.to_string())
}

pub fn read_ppm(path: &Path) -> Result<RasterImage> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    parse_p6(&bytes).map_err(|m| CliError::malformed(path, m))
}

pub fn write_ppm(path: &Path, image: &RasterImage) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, out).map_err(CliError::io(path))
}

/// Writes the mask as a black/white PPM for visual inspection.
pub fn write_mask_ppm(path: &Path, mask: &TissueMask) -> Result<()> {
    let image = RasterImage::from_fn(mask.width, mask.height, |x, y| {
        if mask.get(x, y) {
            (255, 255, 255)
        } else {
            (0, 0, 0)
        }
    });
    write_ppm(path, &image)
}
