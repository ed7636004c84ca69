//! File formats. Every write goes to a temporary sibling first and is then
//! renamed over the target, so readers never see a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cjs_core::{Image, MultiVector, SamplingMode, SamplingPlan, Scheme, C64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// A plan is a bare JSON array of measurement records.
pub fn write_plan(path: &Path, plan: &SamplingPlan) -> Result<()> {
    write_json(path, plan)
}

pub fn read_plan(path: &Path) -> Result<SamplingPlan> {
    read_json(path)
}

fn with_suffix(dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{stem}{suffix}"))
}

fn plane_csv(img: &Image, part: fn(&C64) -> f64) -> Result<Vec<u8>> {
    let q = img.side();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for p1 in 0..q {
        w.write_record(img.values()[p1 * q..(p1 + 1) * q].iter().map(|z| part(z).to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn read_plane(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// 8-bit binary PGM of `|v|`, scaled so the largest modulus maps to 255.
pub fn magnitude_pgm(img: &Image) -> Vec<u8> {
    let q = img.side();
    let peak = img.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out = format!("P5\n{q} {q}\n255\n").into_bytes();
    out.extend(img.values().iter().map(|z| {
        if peak > 0.0 {
            (z.norm() / peak * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

/// Writes `<stem>_re.csv`, `<stem>_im.csv` (one grid row per line, `p1`
/// down) and `<stem>.pgm`.
pub fn write_image(dir: &Path, stem: &str, img: &Image) -> Result<()> {
    atomic_write(&with_suffix(dir, stem, "_re.csv"), &plane_csv(img, |z| z.re)?)?;
    atomic_write(&with_suffix(dir, stem, "_im.csv"), &plane_csv(img, |z| z.im)?)?;
    atomic_write(&with_suffix(dir, stem, ".pgm"), &magnitude_pgm(img))
}

pub fn read_image(dir: &Path, stem: &str, spacing: f64) -> Result<Image> {
    let re = read_plane(&with_suffix(dir, stem, "_re.csv"))?;
    let im = read_plane(&with_suffix(dir, stem, "_im.csv"))?;
    let q = re.len();
    if im.len() != q || re.iter().chain(&im).any(|r| r.len() != q) {
        return Err(Error::Format(format!("{stem}: planes are not both {q} x {q}")));
    }
    let values = re.iter().flatten().zip(im.iter().flatten()).map(|(a, b)| C64::new(*a, *b)).collect();
    Ok(Image::from_values(q, spacing, values)?)
}

/// Self-description of a measurement set. The numbers live in `data_file`,
/// a CSV next to the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementHeader {
    pub n: usize,
    pub q: usize,
    pub spacing: f64,
    pub scheme: Scheme,
    pub mode: SamplingMode,
    pub gamma: f64,
    pub omega: f64,
    pub seed: u64,
    pub noise_seed: u64,
    pub noise_level: f64,
    pub epsilon_object: f64,
    pub epsilon_gradient: f64,
    pub epsilon_channel_sum: f64,
    /// Plan file, relative to the header.
    pub plan_file: String,
    pub data_file: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub header: MeasurementHeader,
    pub y: Vec<C64>,
    /// Gradient data `(Y_1, Y_2)`, `n x 2`.
    pub by: MultiVector,
}

const DATA_COLUMNS: [&str; 6] = ["y_re", "y_im", "y1_re", "y1_im", "y2_re", "y2_im"];

/// Writes the header to `path` and the data CSV named in the header beside it.
pub fn write_measurements(path: &Path, set: &MeasurementSet) -> Result<()> {
    let h = &set.header;
    if set.y.len() != h.n || set.by.shape() != (h.n, 2) {
        return Err(Error::Format(format!("measurement set does not hold n = {} rows", h.n)));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DATA_COLUMNS)?;
    for l in 0..h.n {
        let (a, b, c) = (set.y[l], set.by.get(l, 0), set.by.get(l, 1));
        w.write_record([a.re, a.im, b.re, b.im, c.re, c.im].map(|v| v.to_string()))?;
    }
    let data = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    atomic_write(&dir.join(&h.data_file), &data)?;
    write_json(path, h)
}

pub fn read_measurements(path: &Path) -> Result<MeasurementSet> {
    let header: MeasurementHeader = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut r = csv::Reader::from_path(dir.join(&header.data_file))?;
    if r.headers()?.iter().ne(DATA_COLUMNS) {
        return Err(Error::Format(format!("{}: unexpected columns", header.data_file)));
    }
    let mut y = Vec::with_capacity(header.n);
    let mut rows = Vec::with_capacity(header.n);
    for rec in r.deserialize::<[f64; 6]>() {
        let v = rec?;
        y.push(C64::new(v[0], v[1]));
        rows.push(vec![C64::new(v[2], v[3]), C64::new(v[4], v[5])]);
    }
    if y.len() != header.n {
        return Err(Error::Format(format!("{}: {} rows, header says {}", header.data_file, y.len(), header.n)));
    }
    let by = if rows.is_empty() { MultiVector::zeros(0, 2) } else { MultiVector::from_rows(&rows)? };
    Ok(MeasurementSet { header, y, by })
}

/// Plan stored alongside a measurement header.
pub fn plan_for(path: &Path, header: &MeasurementHeader) -> Result<SamplingPlan> {
    read_plan(&path.parent().unwrap_or(Path::new(".")).join(&header.plan_file))
}
