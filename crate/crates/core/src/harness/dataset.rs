//! On-disk dataset layout.
//!
//! Raw files start with one ASCII header line and continue with little-endian
//! `f64` samples:
//!
//! * `*.raw`: `FPMRAW1 rows cols leds`, then `leds * rows * cols` intensities.
//! * `*.cfld`: `FPMCFLD1 rows cols 1`, then interleaved `re, im` pairs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::noise::{NoiseSpec, PupilErrorSpec};
use crate::optics::{MeasurementSet, SystemGeometry};

pub const RAW_MAGIC: &str = "FPMRAW1";
pub const CFLD_MAGIC: &str = "FPMCFLD1";

fn write_with_header(
    path: &Path,
    header: String,
    samples: impl Iterator<Item = f64>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let go = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        w.write_all(header.as_bytes())?;
        w.write_all(b"\n")?;
        for v in samples {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}

fn read_with_header(path: &Path, magic: &str) -> Result<([usize; 3], Vec<f64>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != magic {
        return Err(Error::format(
            path,
            format!("expected header '{magic} rows cols n'"),
        ));
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(&parts[1..]) {
        *d = p
            .parse()
            .map_err(|_| Error::format(path, format!("bad header field '{p}'")))?;
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(
            path,
            "payload is not a whole number of f64 samples",
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((dims, values))
}

pub fn write_measurements(path: &Path, m: &MeasurementSet) -> Result<()> {
    let header = format!("{RAW_MAGIC} {} {} {}", m.size(), m.size(), m.led_count());
    write_with_header(path, header, m.data().iter().copied())
}

pub fn read_measurements(path: &Path) -> Result<MeasurementSet> {
    let ([rows, cols, leds], data) = read_with_header(path, RAW_MAGIC)?;
    if rows != cols {
        return Err(Error::format(
            path,
            format!("images must be square, got {rows}x{cols}"),
        ));
    }
    if data.len() != rows * cols * leds {
        return Err(Error::format(
            path,
            format!(
                "header promises {} samples, found {}",
                rows * cols * leds,
                data.len()
            ),
        ));
    }
    MeasurementSet::new(rows, leds, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_field(path: &Path, f: &ComplexField) -> Result<()> {
    let header = format!("{CFLD_MAGIC} {} {} 1", f.rows(), f.cols());
    write_with_header(path, header, f.data().iter().flat_map(|z| [z.re, z.im]))
}

pub fn read_field(path: &Path) -> Result<ComplexField> {
    let ([rows, cols, count], data) = read_with_header(path, CFLD_MAGIC)?;
    if count != 1 || data.len() != 2 * rows * cols {
        return Err(Error::format(path, "payload does not match header"));
    }
    let values = data
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    ComplexField::new(rows, cols, values).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes a map as a 16-bit grayscale PNG, stretched to the full range.
pub fn write_preview(path: &Path, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u16> = values
        .iter()
        .map(|&v| {
            let t = if v.is_finite() { (v - lo) / span } else { 0.0 };
            (t.clamp(0.0, 1.0) * 65535.0).round() as u16
        })
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(cols as u32, rows as u32, pixels)
        .ok_or_else(|| Error::format(path, "preview buffer size mismatch"))?;
    img.save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Contents of `geometry.meta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Nominal geometry; reconstruction always uses this one.
    pub geometry: SystemGeometry,
    pub noise: NoiseSpec,
    pub pupil_error: PupilErrorSpec,
    pub sample_seed: u64,
    pub amplitude_range: [f64; 2],
    pub phase_range: [f64; 2],
    pub bandlimited: bool,
    pub led_count: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Paths of the files inside a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub dir: PathBuf,
}

impl DatasetPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
    pub fn meta(&self) -> PathBuf {
        self.dir.join("geometry.meta")
    }
    pub fn clean(&self) -> PathBuf {
        self.dir.join("b.raw")
    }
    pub fn measured(&self) -> PathBuf {
        self.dir.join("c.raw")
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.dir.join("ground_truth.cfld")
    }
}

pub fn write_meta(path: &Path, meta: &DatasetMeta) -> Result<()> {
    let text = toml::to_string(meta).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}
