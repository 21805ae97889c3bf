//! CSV interchange files.
//!
//! - `designs.csv`: header `d,x0,..,x{p-1}`, one design per row
//! - `responses.csv`: header of strain levels, one stress row per design
//! - `sinusoids.csv`: header `d,amplitude,omega,phi` (optional provenance)
//! - target files: header `strain,stress`
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read
//! cycle is lossless.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::design::SinusoidSpec;
use crate::cokrige::{design_from_values, hpd_interval, Prediction, ResponseCurve, StrainGrid};
use crate::error::{invalid, Error, Result};
use crate::spectral::StructureDesign;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub designs: Vec<StructureDesign>,
    /// Stress in MPa, one row per design.
    pub responses: DMatrix<f64>,
    pub grid: StrainGrid,
}

impl Dataset {
    pub fn new(designs: Vec<StructureDesign>, responses: DMatrix<f64>, grid: StrainGrid) -> Result<Self> {
        if responses.shape() != (designs.len(), grid.len()) {
            return invalid(format!(
                "responses are {:?}, expected ({}, {})",
                responses.shape(),
                designs.len(),
                grid.len()
            ));
        }
        if let Some(pos) = responses.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            let (i, j) = (pos % responses.nrows(), pos / responses.nrows());
            return invalid(format!("stress at design {i}, level {j} is not positive"));
        }
        Ok(Self {
            designs,
            responses,
            grid,
        })
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn sinusoids(&self) -> Option<Vec<SinusoidSpec>> {
        self.designs.iter().map(|d| d.provenance).collect()
    }

    /// Writes `{prefix}designs.csv`, `{prefix}responses.csv` and, when every
    /// design has one, `{prefix}sinusoids.csv`.
    pub fn write_dir(&self, dir: &Path, prefix: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_designs(&dir.join(format!("{prefix}designs.csv")), &self.designs)?;
        write_responses(&dir.join(format!("{prefix}responses.csv")), &self.grid, &self.responses)?;
        if let Some(specs) = self.sinusoids() {
            write_sinusoids(&dir.join(format!("{prefix}sinusoids.csv")), &specs)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path, prefix: &str) -> Result<Self> {
        let mut designs = read_designs(&dir.join(format!("{prefix}designs.csv")))?;
        let (grid, responses) = read_responses(&dir.join(format!("{prefix}responses.csv")))?;
        let sin = dir.join(format!("{prefix}sinusoids.csv"));
        if sin.exists() {
            let specs = read_sinusoids(&sin)?;
            if specs.len() != designs.len() {
                return invalid(format!("{} sinusoid rows for {} designs", specs.len(), designs.len()));
            }
            for (d, s) in designs.iter_mut().zip(specs) {
                d.provenance = Some(s);
            }
        }
        Self::new(designs, responses, grid)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn parse(field: &str, path: &Path, row: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::InvalidInput(format!("{}: row {row}: cannot parse {field:?} as a number", path.display()))
    })
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return invalid(format!("{}: row {} has {} fields, header has {}", path.display(), r + 1, rec.len(), header.len()));
        }
        out.push(rec.iter().map(|f| parse(f, path, r + 1)).collect::<Result<Vec<f64>>>()?);
    }
    Ok((header, out))
}

pub fn write_designs(path: &Path, designs: &[StructureDesign]) -> Result<()> {
    let p = designs.first().map_or(0, |d| d.p());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["d".to_string()];
    header.extend((0..p).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for d in designs {
        if d.p() != p {
            return invalid("designs have different curve lengths");
        }
        let mut row = vec![fmt(d.diameter)];
        row.extend(d.curve.values().iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_designs(path: &Path) -> Result<Vec<StructureDesign>> {
    let (header, data) = rows(path)?;
    if header.first().map(String::as_str) != Some("d") {
        return invalid(format!("{}: first column must be `d`", path.display()));
    }
    for (k, h) in header[1..].iter().enumerate() {
        if *h != format!("x{k}") {
            return invalid(format!("{}: column {} should be x{k}, found {h:?}", path.display(), k + 1));
        }
    }
    data.into_iter().map(|row| design_from_values(row[0], row[1..].to_vec())).collect()
}

pub fn write_responses(path: &Path, grid: &StrainGrid, stress: &DMatrix<f64>) -> Result<()> {
    if stress.ncols() != grid.len() {
        return invalid("response columns do not match the strain grid");
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(grid.levels().iter().map(|s| fmt(*s)))?;
    for row in stress.row_iter() {
        w.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_responses(path: &Path) -> Result<(StrainGrid, DMatrix<f64>)> {
    let (header, data) = rows(path)?;
    let levels = header.iter().enumerate().map(|(j, h)| parse(h, path, j)).collect::<Result<Vec<f64>>>()?;
    let grid = StrainGrid::new(levels)?;
    let m = grid.len();
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    Ok((grid, DMatrix::from_row_slice(flat.len() / m.max(1), m, &flat)))
}

pub fn write_sinusoids(path: &Path, specs: &[SinusoidSpec]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["d", "amplitude", "omega", "phi"])?;
    for s in specs {
        w.write_record(s.features().map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sinusoids(path: &Path) -> Result<Vec<SinusoidSpec>> {
    let (header, data) = rows(path)?;
    if header != ["d", "amplitude", "omega", "phi"] {
        return invalid(format!("{}: expected header d,amplitude,omega,phi", path.display()));
    }
    Ok(data
        .into_iter()
        .map(|r| SinusoidSpec {
            d: r[0],
            amplitude: r[1],
            omega: r[2],
            phi: r[3],
        })
        .collect())
}

/// A target curve: `strain,stress` rows.
pub fn read_target(path: &Path) -> Result<(StrainGrid, ResponseCurve)> {
    let (header, data) = rows(path)?;
    if header != ["strain", "stress"] {
        return invalid(format!("{}: expected header strain,stress", path.display()));
    }
    let grid = StrainGrid::new(data.iter().map(|r| r[0]).collect())?;
    let curve = ResponseCurve::stress(data.iter().map(|r| r[1]).collect())?;
    Ok((grid, curve))
}

pub fn write_target(path: &Path, grid: &StrainGrid, curve: &ResponseCurve) -> Result<()> {
    let stress = curve.to_stress();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["strain", "stress"])?;
    for (s, v) in grid.levels().iter().zip(&stress.values) {
        w.write_record([fmt(*s), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format predictions: `design,strain,mean,lower,upper` in stress units.
pub fn write_predictions(path: &Path, grid: &StrainGrid, preds: &[Prediction], level: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["design", "strain", "mean", "lower", "upper"])?;
    for (i, pred) in preds.iter().enumerate() {
        let (lo, hi) = hpd_interval(pred, level)?;
        let (mean, lo, hi) = (pred.mean.to_stress(), lo.to_stress(), hi.to_stress());
        for (j, s) in grid.levels().iter().enumerate() {
            w.write_record([i.to_string(), fmt(*s), fmt(mean.values[j]), fmt(lo.values[j]), fmt(hi.values[j])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A single structure curve as `t,x` rows.
pub fn write_curve(path: &Path, values: &[f64], spacing: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x"])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([fmt(k as f64 * spacing), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// `path` with `suffix` inserted before the extension: `a/model.json` and
/// `.trace` give `a/model.trace.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}
