//! File formats: PGM (P2/P5) and grayscale PNG input, 16-bit PGM output,
//! raw 32-bit float rasters with text sidecars, and CSV for radial spectra.
//!
//! Pixel size is never read from image metadata; callers must supply it.
//! Multi-channel images are rejected rather than silently converted, since
//! transmission images are monochrome by construction. Float rasters are
//! row-major little-endian f32 with a `<name>.txt` sidecar holding
//! `key = value` lines (at least `width_px` and `height_px`).

use crate::grammage::{GrammageError, GrayImage};
use crate::spectral::{PowerSpectrum2D, RadialSpectrum, SpectralError};
use std::fs;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: unsupported color type {color}; only 8/16-bit single-channel grayscale is accepted")]
    UnsupportedColor { path: String, color: String },
    #[error(transparent)]
    Grammage(#[from] GrammageError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Read a grayscale image (PGM P2/P5 or PNG, 8/16-bit) with the given
/// physical pixel size. The format is detected from the file content.
pub fn read_gray_image(path: &Path, pixel_size_um: f64) -> Result<GrayImage, IoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        read_pgm(path, &bytes, pixel_size_um)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        read_png(path, &bytes, pixel_size_um)
    } else {
        Err(format_err(
            path,
            "unrecognized format (expected PGM P2/P5 or PNG)",
        ))
    }
}

fn read_png(path: &Path, bytes: &[u8], pixel_size_um: f64) -> Result<GrayImage, IoError> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| format_err(path, format!("PNG decode failed: {e}")))?;
    let (values, max_value, width, height) = match decoded {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            (
                img.into_raw()
                    .into_iter()
                    .map(f64::from)
                    .collect::<Vec<_>>(),
                255.0,
                w,
                h,
            )
        }
        image::DynamicImage::ImageLuma16(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            (
                img.into_raw()
                    .into_iter()
                    .map(f64::from)
                    .collect::<Vec<_>>(),
                65535.0,
                w,
                h,
            )
        }
        other => {
            return Err(IoError::UnsupportedColor {
                path: path.display().to_string(),
                color: format!("{:?}", other.color()),
            })
        }
    };
    Ok(GrayImage::new(
        width,
        height,
        pixel_size_um,
        values,
        max_value,
    )?)
}

/// Incremental PGM header/ASCII tokenizer that skips whitespace and
/// `#` comments.
struct PnmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmTokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn next_token(&mut self) -> Option<&'a [u8]> {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn next_number(&mut self) -> Option<u64> {
        let tok = self.next_token()?;
        std::str::from_utf8(tok).ok()?.parse().ok()
    }
}

fn read_pgm(path: &Path, bytes: &[u8], pixel_size_um: f64) -> Result<GrayImage, IoError> {
    let binary = bytes.starts_with(b"P5");
    let mut tokens = PnmTokens::new(&bytes[2..]);
    let width = tokens
        .next_number()
        .ok_or_else(|| format_err(path, "missing width"))? as usize;
    let height = tokens
        .next_number()
        .ok_or_else(|| format_err(path, "missing height"))? as usize;
    let maxval = tokens
        .next_number()
        .ok_or_else(|| format_err(path, "missing maxval"))?;
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(
            path,
            format!("maxval {maxval} out of range 1..=65535"),
        ));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| format_err(path, "image dimensions overflow"))?;
    let mut values = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte after maxval, then raster data
        let data = &bytes[2 + tokens.pos + 1..];
        if maxval < 256 {
            if data.len() < n {
                return Err(format_err(path, "truncated P5 raster"));
            }
            values.extend(data[..n].iter().map(|&b| f64::from(b)));
        } else {
            if data.len() < 2 * n {
                return Err(format_err(path, "truncated P5 raster"));
            }
            values.extend(
                data[..2 * n]
                    .chunks_exact(2)
                    .map(|p| f64::from(u16::from_be_bytes([p[0], p[1]]))),
            );
        }
    } else {
        for _ in 0..n {
            let v = tokens
                .next_number()
                .ok_or_else(|| format_err(path, "truncated P2 raster"))?;
            if v > maxval {
                return Err(format_err(
                    path,
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            values.push(v as f64);
        }
    }
    Ok(GrayImage::new(
        width,
        height,
        pixel_size_um,
        values,
        maxval as f64,
    )?)
}

/// Write a 16-bit binary PGM (P5, maxval 65535).
pub fn write_pgm16(
    path: &Path,
    width: usize,
    height: usize,
    values: &[u16],
) -> Result<(), IoError> {
    assert_eq!(values.len(), width * height);
    let mut out = Vec::with_capacity(width * height * 2 + 32);
    out.extend_from_slice(format!("P5\n{width} {height}\n65535\n").as_bytes());
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// A raw float raster with its sidecar metadata.
#[derive(Debug, Clone)]
pub struct F32Raster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub meta: Vec<(String, String)>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".txt");
    std::path::PathBuf::from(name)
}

/// Write a row-major little-endian f32 raster plus its text sidecar.
pub fn write_f32_raster(
    path: &Path,
    width: usize,
    height: usize,
    values: &[f32],
    extra_meta: &[(&str, String)],
) -> Result<(), IoError> {
    assert_eq!(values.len(), width * height);
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| io_err(path, e))?;
    let mut sidecar = fs::File::create(sidecar_path(path)).map_err(|e| io_err(path, e))?;
    writeln!(sidecar, "width_px = {width}").map_err(|e| io_err(path, e))?;
    writeln!(sidecar, "height_px = {height}").map_err(|e| io_err(path, e))?;
    for (k, v) in extra_meta {
        writeln!(sidecar, "{k} = {v}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Read a raster written by [`write_f32_raster`], using the sidecar for the
/// dimensions.
pub fn read_f32_raster(path: &Path) -> Result<F32Raster, IoError> {
    let sidecar = sidecar_path(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| io_err(&sidecar, e))?;
    let mut meta = Vec::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            meta.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let lookup = |key: &str| -> Result<usize, IoError> {
        meta.iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| format_err(&sidecar, format!("missing or invalid {key}")))
    };
    let width = lookup("width_px")?;
    let height = lookup("height_px")?;
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != width * height * 4 {
        return Err(format_err(
            path,
            format!(
                "expected {} bytes, found {}",
                width * height * 4,
                bytes.len()
            ),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(F32Raster {
        width,
        height,
        values,
        meta,
    })
}

/// Export the 2D spectrum as an f32 raster with frequency metadata.
pub fn write_spectrum_raster(path: &Path, ps: &PowerSpectrum2D) -> Result<(), IoError> {
    let values: Vec<f32> = ps.values().iter().map(|&v| v as f32).collect();
    write_f32_raster(
        path,
        ps.width(),
        ps.height(),
        &values,
        &[
            ("freq_step_xi1_per_um", format!("{}", ps.freq_step().0)),
            ("freq_step_xi2_per_um", format!("{}", ps.freq_step().1)),
            ("unit", "um^2".to_string()),
            ("dc_zeroed", format!("{}", ps.dc_zeroed())),
        ],
    )
}

/// Write a radial spectrum as CSV: `rho_per_um,k1_um2,count`, plain decimal
/// formatting.
pub fn write_radial_csv(path: &Path, rs: &RadialSpectrum) -> Result<(), IoError> {
    let mut out = String::from("rho_per_um,k1_um2,count\n");
    for i in 0..rs.bin_centers().len() {
        out.push_str(&format!(
            "{},{},{}\n",
            rs.bin_centers()[i],
            rs.values()[i],
            rs.counts()[i]
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a radial spectrum CSV written by [`write_radial_csv`].
pub fn read_radial_csv(path: &Path) -> Result<RadialSpectrum, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == "rho_per_um,k1_um2,count" => {}
        other => {
            return Err(format_err(
                path,
                format!("bad header {other:?}, expected rho_per_um,k1_um2,count"),
            ))
        }
    }
    let mut centers = Vec::new();
    let mut values = Vec::new();
    let mut counts = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse_f = |s: Option<&str>| -> Option<f64> { s?.trim().parse().ok() };
        let rho = parse_f(fields.next());
        let k1 = parse_f(fields.next());
        let count: Option<usize> = fields.next().and_then(|s| s.trim().parse().ok());
        match (rho, k1, count) {
            (Some(r), Some(k), Some(c)) => {
                centers.push(r);
                values.push(k);
                counts.push(c);
            }
            _ => {
                return Err(format_err(
                    path,
                    format!("bad record on line {}", lineno + 2),
                ))
            }
        }
    }
    Ok(RadialSpectrum::from_parts(centers, values, counts, None)?)
}
