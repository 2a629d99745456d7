//! On-disk formats: binary PGM/PPM, the LRMF float raster, CSV tables and JSON.
//!
//! LRMF layout: the magic `LRMF`, width and height as little-endian `u32`, then
//! `width * height` little-endian `f64` values in row-major order.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::grid::{Grid, Point};
use crate::localize::{Prediction, PredictionSet};
use crate::sampling::{Sample, SampleSet, SamplingMeta};
use crate::separation::{Component, Labeling};

const LRMF_MAGIC: &[u8; 4] = b"LRMF";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes`, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn at(path: &Path) -> impl FnOnce(FormatError) -> Error + '_ {
    move |source| Error::Format {
        path: path.to_path_buf(),
        source,
    }
}

// ---- PGM -----------------------------------------------------------------------------

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn header_err(offset: usize, message: impl Into<String>) -> FormatError {
    FormatError::Header {
        offset,
        message: message.into(),
    }
}

/// Reads one decimal header field, skipping whitespace and `#` comments first.
fn header_field(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64, FormatError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(header_err(start, format!("expected {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .expect("ascii digits")
        .parse()
        .map_err(|_| header_err(start, format!("{what} out of range")))
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(header_err(
            0,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let width = header_field(bytes, &mut pos, "width")? as usize;
    let height = header_field(bytes, &mut pos, "height")? as usize;
    let maxval_at = pos;
    let maxval = header_field(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(header_err(maxval_at, format!("maxval {maxval} not in 1..=65535")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(header_err(pos, "expected one whitespace byte after maxval")),
    }
    if width == 0 || height == 0 {
        return Err(header_err(2, "zero-sized image"));
    }
    Ok(Header {
        width,
        height,
        maxval: maxval as u32,
        data_offset: pos,
    })
}

/// The raster after the header, which must be exactly `expected` bytes long.
fn raster(bytes: &[u8], offset: usize, expected: usize) -> Result<&[u8], FormatError> {
    let actual = bytes.len() - offset;
    if actual < expected {
        return Err(FormatError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(header_err(
            offset + expected,
            format!("{} trailing bytes after the raster", actual - expected),
        ));
    }
    Ok(&bytes[offset..])
}

pub fn encode_pgm8(grid: &Grid<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend_from_slice(grid.as_slice());
    out
}

pub fn decode_pgm8(bytes: &[u8]) -> Result<Grid<u8>, FormatError> {
    let h = parse_header(bytes, b"P5")?;
    if h.maxval != 255 {
        return Err(FormatError::Maxval {
            expected: 255,
            found: h.maxval,
        });
    }
    let data = raster(bytes, h.data_offset, h.width * h.height)?;
    Ok(Grid::from_vec(h.width, h.height, data.to_vec()))
}

/// 16-bit PGM, big-endian samples, maxval 65535.
pub fn encode_pgm16(grid: &Grid<u16>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", grid.width(), grid.height()).into_bytes();
    for v in grid.as_slice() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<Grid<u16>, FormatError> {
    let h = parse_header(bytes, b"P5")?;
    if h.maxval != 65535 {
        return Err(FormatError::Maxval {
            expected: 65535,
            found: h.maxval,
        });
    }
    let data = raster(bytes, h.data_offset, 2 * h.width * h.height)?;
    let values = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Grid::from_vec(h.width, h.height, values))
}

pub fn write_pgm8(path: &Path, grid: &Grid<u8>) -> Result<()> {
    write_bytes(path, &encode_pgm8(grid))
}

pub fn read_pgm8(path: &Path) -> Result<Grid<u8>> {
    decode_pgm8(&read_bytes(path)?).map_err(at(path))
}

pub fn write_pgm16(path: &Path, grid: &Grid<u16>) -> Result<()> {
    write_bytes(path, &encode_pgm16(grid))
}

pub fn read_pgm16(path: &Path) -> Result<Grid<u16>> {
    decode_pgm16(&read_bytes(path)?).map_err(at(path))
}

// ---- PPM -----------------------------------------------------------------------------

/// Binary PPM (P6) from row-major RGB triples.
pub fn encode_ppm(grid: &Grid<[u8; 3]>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    for px in grid.as_slice() {
        out.extend_from_slice(px);
    }
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Grid<[u8; 3]>, FormatError> {
    let h = parse_header(bytes, b"P6")?;
    if h.maxval != 255 {
        return Err(FormatError::Maxval {
            expected: 255,
            found: h.maxval,
        });
    }
    let data = raster(bytes, h.data_offset, 3 * h.width * h.height)?;
    let px = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(Grid::from_vec(h.width, h.height, px))
}

// ---- LRMF ----------------------------------------------------------------------------

pub fn encode_lrmf(grid: &Grid<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * grid.as_slice().len());
    out.extend_from_slice(LRMF_MAGIC);
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    for v in grid.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_lrmf(bytes: &[u8]) -> Result<Grid<f64>, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != LRMF_MAGIC {
        return Err(header_err(0, "expected magic LRMF"));
    }
    if bytes.len() < 12 {
        return Err(FormatError::Truncated {
            expected: 12,
            actual: bytes.len(),
        });
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes")) as usize;
    let (width, height) = (word(4), word(8));
    if width == 0 || height == 0 {
        return Err(header_err(4, "zero-sized raster"));
    }
    let data = raster(bytes, 12, 8 * width * height)?;
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Grid::from_vec(width, height, values))
}

pub fn write_lrmf(path: &Path, grid: &Grid<f64>) -> Result<()> {
    write_bytes(path, &encode_lrmf(grid))
}

pub fn read_lrmf(path: &Path) -> Result<Grid<f64>> {
    decode_lrmf(&read_bytes(path)?).map_err(at(path))
}

// ---- CSV -----------------------------------------------------------------------------

fn csv_err(e: csv::Error) -> FormatError {
    FormatError::Csv {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

fn to_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn from_csv<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, FormatError> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_err)
}

#[derive(Deserialize)]
struct SampleRow {
    x_m: f64,
    y_m: f64,
    rss_dbm: f64,
}

/// `x_m,y_m,rss_dbm`, six decimals.
pub fn encode_samples_csv(set: &SampleSet) -> Vec<u8> {
    to_csv(
        &["x_m", "y_m", "rss_dbm"],
        set.samples().iter().map(|s| {
            vec![
                format!("{:.6}", s.position.x),
                format!("{:.6}", s.position.y),
                format!("{:.6}", s.rss),
            ]
        }),
    )
}

pub fn decode_samples_csv(bytes: &[u8], meta: SamplingMeta) -> Result<SampleSet> {
    let rows: Vec<SampleRow> = from_csv(bytes)?;
    let samples = rows
        .into_iter()
        .map(|r| Sample {
            position: Point::new(r.x_m, r.y_m),
            rss: r.rss_dbm,
        })
        .collect();
    SampleSet::new(samples, meta)
}

pub fn write_samples_csv(path: &Path, set: &SampleSet) -> Result<()> {
    write_bytes(path, &encode_samples_csv(set))
}

pub fn read_samples_csv(path: &Path, meta: SamplingMeta) -> Result<SampleSet> {
    let bytes = read_bytes(path)?;
    match decode_samples_csv(&bytes, meta) {
        Err(Error::Parse(e)) => Err(at(path)(e)),
        other => other,
    }
}

#[derive(Deserialize)]
struct PredictionRow {
    component_id: u32,
    x_m: f64,
    y_m: f64,
    flagged: bool,
}

/// `component_id,x_m,y_m,flagged`, six decimals.
pub fn encode_predictions_csv(preds: &PredictionSet) -> Vec<u8> {
    to_csv(
        &["component_id", "x_m", "y_m", "flagged"],
        preds.predictions.iter().map(|p| {
            vec![
                p.component_id.to_string(),
                format!("{:.6}", p.position.x),
                format!("{:.6}", p.position.y),
                p.flagged.to_string(),
            ]
        }),
    )
}

pub fn decode_predictions_csv(bytes: &[u8]) -> Result<PredictionSet, FormatError> {
    let rows: Vec<PredictionRow> = from_csv(bytes)?;
    Ok(PredictionSet {
        predictions: rows
            .into_iter()
            .map(|r| Prediction {
                component_id: r.component_id,
                position: Point::new(r.x_m, r.y_m),
                flagged: r.flagged,
            })
            .collect(),
    })
}

pub fn write_predictions_csv(path: &Path, preds: &PredictionSet) -> Result<()> {
    write_bytes(path, &encode_predictions_csv(preds))
}

pub fn read_predictions_csv(path: &Path) -> Result<PredictionSet> {
    decode_predictions_csv(&read_bytes(path)?).map_err(at(path))
}

// ---- JSON ----------------------------------------------------------------------------

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_bytes(path)?)?)
}

// ---- labelings -----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingStats {
    pub width: usize,
    pub height: usize,
    pub components: Vec<Component>,
}

/// Label image as 16-bit PGM at `path` plus a `.json` stats sidecar.
pub fn write_labeling(path: &Path, labeling: &Labeling) -> Result<()> {
    let mut labels = Vec::with_capacity(labeling.labels.as_slice().len());
    for &l in labeling.labels.as_slice() {
        labels.push(u16::try_from(l).map_err(|_| Error::invalid("more than 65535 components"))?);
    }
    let (w, h) = labeling.labels.dims();
    write_pgm16(path, &Grid::from_vec(w, h, labels))?;
    let stats = LabelingStats {
        width: w,
        height: h,
        components: labeling.components.clone(),
    };
    write_json(&path.with_extension("json"), &stats)
}

pub fn read_labeling(path: &Path) -> Result<Labeling> {
    let labels = read_pgm16(path)?.map(|&v| u32::from(v));
    let stats: LabelingStats = read_json(&path.with_extension("json"))?;
    if (stats.width, stats.height) != labels.dims() {
        return Err(Error::invalid(format!(
            "{}: sidecar dimensions do not match the label image",
            path.display()
        )));
    }
    Ok(Labeling {
        labels,
        components: stats.components,
    })
}
