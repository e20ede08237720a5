//! On-disk formats: trace CSVs and their manifest, the fit table, the weight
//! table, PFM float rasters and PBM masks.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! reader returns exactly what the writer was given.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use squeezeprof_core::reconstruction::{SignedWeights, ThermalWeights};
use squeezeprof_core::{Mask, QuadratureFit, Samples, TraceId, VarianceTrace};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const FITS: &str = "fits.csv";
pub const MANIFEST_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.position() {
        Some(pos) => CliError::data(path, format!("line {}: {e}", pos.line())),
        None => CliError::data(path, e),
    }
}

fn parse_f64(path: &Path, line: u64, field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| CliError::data(path, format!("line {line}: bad {field} value {s:?}")))
}

/// `mask_0007.csv`, `mask_0007c.csv`, `blank.csv`.
pub fn trace_file_name(id: TraceId) -> String {
    match id {
        TraceId::Mask(m) => format!("mask_{m:04}.csv"),
        TraceId::Complement(m) => format!("mask_{m:04}c.csv"),
        TraceId::Blank => "blank.csv".into(),
    }
}

pub fn write_trace(path: &Path, trace: &VarianceTrace) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "theta_rad,variance").map_err(io)?;
    for (t, v) in trace.thetas().iter().zip(trace.variances()) {
        writeln!(w, "{t},{v}").map_err(io)?;
    }
    finish(path, w)
}

pub fn read_trace(path: &Path, id: TraceId, samples: Samples) -> Result<VarianceTrace> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers != vec!["theta_rad", "variance"] {
        return Err(CliError::data(path, format!("line 1: expected header theta_rad,variance, found {headers:?}")));
    }
    let (mut thetas, mut variances) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(CliError::data(path, format!("line {line}: expected 2 fields, found {}", record.len())));
        }
        thetas.push(parse_f64(path, line, "theta_rad", &record[0])?);
        variances.push(parse_f64(path, line, "variance", &record[1])?);
    }
    VarianceTrace::new(id, thetas, variances, samples).map_err(|e| CliError::data(path, e))
}

/// Written last by `simulate`; its presence marks a complete trace set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub grid: usize,
    pub mask_order: crate::config::OrderConfig,
    /// Samples per point; `None` for noiseless traces.
    pub samples: Option<u64>,
    pub seed: u64,
    /// File name to trace id (`"7"`, `"7c"`, `"blank"`).
    pub traces: BTreeMap<String, String>,
}

impl Manifest {
    pub fn samples(&self) -> Samples {
        self.samples.map_or(Samples::Exact, Samples::Finite)
    }

    /// Entries sorted masks first, then complements, then the blank.
    pub fn entries(&self, path: &Path) -> Result<Vec<(TraceId, String)>> {
        let mut out = self
            .traces
            .iter()
            .map(|(file, id)| {
                id.parse::<TraceId>()
                    .map(|id| (id, file.clone()))
                    .map_err(|_| CliError::data(path, format!("bad trace id {id:?} for {file}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by_key(|(id, _)| id_order(*id));
        Ok(out)
    }
}

pub fn id_order(id: TraceId) -> (u8, usize) {
    match id {
        TraceId::Mask(m) => (0, m),
        TraceId::Complement(m) => (1, m),
        TraceId::Blank => (2, 0),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::data(path, e))?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    finish(path, w)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::data(path, e))
}

/// One row of the fit table. Failed fits keep their row with empty values.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub id: TraceId,
    pub fit: std::result::Result<QuadratureFit, String>,
}

impl FitRow {
    pub fn ok(fit: QuadratureFit) -> Self {
        Self { id: fit.id, fit: Ok(fit) }
    }
}

pub fn write_fits(path: &Path, rows: &[FitRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e| csv_error(path, e);
    w.write_record(["mask_id", "v_plus", "v_minus", "theta_rad", "residual_rms", "status"])
        .map_err(err)?;
    for row in rows {
        let id = row.id.to_string();
        match &row.fit {
            Ok(f) => w.write_record([
                id,
                f.v_plus.to_string(),
                f.v_minus.to_string(),
                f.theta_m.to_string(),
                f.residual_rms.to_string(),
                "ok".into(),
            ]),
            Err(reason) => w.write_record([id, String::new(), String::new(), String::new(), String::new(), format!("failed: {reason}")]),
        }
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_fits(path: &Path) -> Result<Vec<FitRow>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["mask_id", "v_plus", "v_minus", "theta_rad", "residual_rms", "status"];
    if headers.iter().ne(expected) {
        return Err(CliError::data(path, format!("line 1: expected header {}", expected.join(","))));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id: TraceId = record[0]
            .parse()
            .map_err(|_| CliError::data(path, format!("line {line}: bad mask_id {:?}", &record[0])))?;
        let status = &record[5];
        let fit = if status == "ok" {
            Ok(QuadratureFit {
                id,
                v_plus: parse_f64(path, line, "v_plus", &record[1])?,
                v_minus: parse_f64(path, line, "v_minus", &record[2])?,
                theta_m: parse_f64(path, line, "theta_rad", &record[3])?,
                residual_rms: parse_f64(path, line, "residual_rms", &record[4])?,
            })
        } else if let Some(reason) = status.strip_prefix("failed: ") {
            Err(reason.to_string())
        } else {
            return Err(CliError::data(path, format!("line {line}: bad status {status:?}")));
        };
        rows.push(FitRow { id, fit });
    }
    Ok(rows)
}

/// Per-mask reconstruction weights and sign diagnostics.
pub fn write_weights(path: &Path, signed: &SignedWeights, thermal: &ThermalWeights) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e| csv_error(path, e);
    w.write_record([
        "mask_id",
        "weight_re",
        "weight_im",
        "complement_re",
        "complement_im",
        "sign",
        "complement_sign",
        "sign_residual",
        "sign_confidence",
        "ambiguous",
        "thermal",
        "thermal_complement",
    ])
    .map_err(err)?;
    for m in 0..signed.mask.len() {
        let c = &signed.choices[m];
        w.write_record([
            m.to_string(),
            signed.mask[m].re.to_string(),
            signed.mask[m].im.to_string(),
            signed.complement[m].re.to_string(),
            signed.complement[m].im.to_string(),
            c.mask.to_string(),
            c.complement.to_string(),
            c.residual.to_string(),
            c.confidence.to_string(),
            c.ambiguous.to_string(),
            thermal.mask[m].to_string(),
            thermal.complement[m].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Rows of the weight table: signed mask weight, signed complement weight,
/// thermal weights.
pub type WeightRow = (Complex64, Complex64, f64, f64);

pub fn read_weights(path: &Path) -> Result<Vec<WeightRow>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 12 {
            return Err(CliError::data(path, format!("line {line}: expected 12 fields")));
        }
        let f = |i: usize, name: &str| parse_f64(path, line, name, &record[i]);
        rows.push((
            Complex64::new(f(1, "weight_re")?, f(2, "weight_im")?),
            Complex64::new(f(3, "complement_re")?, f(4, "complement_im")?),
            f(10, "thermal")?,
            f(11, "thermal_complement")?,
        ));
    }
    Ok(rows)
}

/// Grayscale float raster, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn square(n: usize, values: &[f64]) -> Self {
        Self {
            width: n,
            height: n,
            data: values.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Little-endian `Pf`, scale `-1.0`, rows stored bottom to top.
pub fn write_pfm(path: &Path, raster: &Raster) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    write!(w, "Pf\n{} {}\n-1.0\n", raster.width, raster.height).map_err(io)?;
    for row in raster.data.chunks(raster.width.max(1)).rev() {
        for v in row {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    finish(path, w)
}

fn header_token(path: &Path, r: &mut impl BufRead) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte).map_err(|e| CliError::io(path, e))? == 0 {
            break;
        }
        match byte[0] {
            b'#' if token.is_empty() => {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip).map_err(|e| CliError::io(path, e))?;
            }
            b if b.is_ascii_whitespace() => {
                if !token.is_empty() {
                    break;
                }
            }
            b => token.push(b),
        }
    }
    if token.is_empty() {
        return Err(CliError::data(path, "truncated header"));
    }
    String::from_utf8(token).map_err(|_| CliError::data(path, "non-ASCII header"))
}

fn header_usize(path: &Path, r: &mut impl BufRead) -> Result<usize> {
    let t = header_token(path, r)?;
    t.parse().map_err(|_| CliError::data(path, format!("bad dimension {t:?}")))
}

pub fn read_pfm(path: &Path) -> Result<Raster> {
    let mut r = open(path)?;
    let magic = header_token(path, &mut r)?;
    if magic != "Pf" {
        return Err(CliError::data(path, format!("expected grayscale PFM (Pf), found {magic:?}")));
    }
    let width = header_usize(path, &mut r)?;
    let height = header_usize(path, &mut r)?;
    let scale_token = header_token(path, &mut r)?;
    let scale: f32 = scale_token
        .parse()
        .map_err(|_| CliError::data(path, format!("bad scale {scale_token:?}")))?;
    let little = scale < 0.0;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    if bytes.len() != width * height * 4 {
        return Err(CliError::data(
            path,
            format!("expected {} data bytes, found {}", width * height * 4, bytes.len()),
        ));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let mut data = Vec::with_capacity(values.len());
    for row in values.chunks(width.max(1)).rev() {
        data.extend_from_slice(row);
    }
    Ok(Raster { width, height, data })
}

/// Binary `P4`, bit 1 = open pixel, rows top to bottom, MSB first.
pub fn write_pbm(path: &Path, mask: &Mask) -> Result<()> {
    let n = mask.n();
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    write!(w, "P4\n{n} {n}\n").map_err(io)?;
    for row in mask.pixels().chunks(n) {
        let mut packed = vec![0u8; n.div_ceil(8)];
        for (c, &open) in row.iter().enumerate() {
            if open {
                packed[c / 8] |= 0x80 >> (c % 8);
            }
        }
        w.write_all(&packed).map_err(io)?;
    }
    finish(path, w)
}

pub fn read_pbm(path: &Path) -> Result<Mask> {
    let mut r = open(path)?;
    let magic = header_token(path, &mut r)?;
    if magic != "P4" {
        return Err(CliError::data(path, format!("expected binary PBM (P4), found {magic:?}")));
    }
    let width = header_usize(path, &mut r)?;
    let height = header_usize(path, &mut r)?;
    if width != height {
        return Err(CliError::data(path, format!("mask must be square, found {width}x{height}")));
    }
    let stride = width.div_ceil(8);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    if bytes.len() != stride * height {
        return Err(CliError::data(path, format!("expected {} data bytes, found {}", stride * height, bytes.len())));
    }
    let open = (0..height)
        .flat_map(|row| (0..width).map(move |c| (row, c)))
        .map(|(row, c)| bytes[row * stride + c / 8] & (0x80 >> (c % 8)) != 0)
        .collect();
    Mask::new(width, open).map_err(|e| CliError::data(path, e))
}

pub fn mask_file_name(id: TraceId) -> String {
    trace_file_name(id).replace(".csv", ".pbm")
}

/// Refuses to clobber `path` unless `force` is set.
pub fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        Err(CliError::Exists(path.to_path_buf()))
    } else {
        Ok(())
    }
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}
