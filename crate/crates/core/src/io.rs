//! CSV and JSON artifacts, and the hashed manifest of an output directory.
//!
//! Grid functions are written as `x[,y],t,<names...>`, one row per active
//! node, rows ordered by time level then node index, numbers as `{:.16e}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{Grid, GridFunction, SampledField};

/// Formats one number the way every artifact does.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text of a grid function with `names.len()` components. Functions
/// with a single level are written at `t = 0`.
pub fn grid_function_csv(grid: &Grid, f: &GridFunction, names: &[&str]) -> String {
    assert_eq!(names.len(), f.components(), "one column name per component");
    let mut s = String::new();
    s.push_str(if grid.dim() == 1 { "x,t" } else { "x,y,t" });
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for n in 0..f.levels() {
        let t = if f.levels() == 1 { 0.0 } else { grid.time(n) };
        for i in grid.active_nodes() {
            let x = grid.coords(i);
            s.push_str(&num(x[0]));
            if grid.dim() == 2 {
                s.push(',');
                s.push_str(&num(x[1]));
            }
            s.push(',');
            s.push_str(&num(t));
            for c in 0..f.components() {
                s.push(',');
                s.push_str(&num(f.get(n, i, c)));
            }
            s.push('\n');
        }
    }
    s
}

/// CSV text of a generic table; floats are formatted with [`num`].
pub fn table_csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(Cell::render).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// One entry of a CSV table.
#[derive(Clone, Debug)]
pub enum Cell {
    F(f64),
    I(usize),
    S(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => num(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(v) => v.clone(),
            Cell::Missing => String::new(),
        }
    }
}

/// Parsed CSV with a header row and numeric cells.
#[derive(Clone, Debug)]
pub struct NumericTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_numeric_csv(path: &Path) -> Result<NumericTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>().map_err(|_| {
                    Error::Config(format!(
                        "{}: row {}, column '{}': '{v}' is not a number",
                        path.display(),
                        k + 2,
                        header.get(c).map(String::as_str).unwrap_or("?")
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "{}: row {} has {} cells, header has {}",
                path.display(),
                k + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(NumericTable { header, rows })
}

fn axis_values(vals: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = vals.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    v
}

fn uniform_step(v: &[f64], what: &str) -> Result<f64> {
    if v.len() < 2 {
        return Ok(1.0);
    }
    let h = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
    for (k, x) in v.iter().enumerate() {
        if (x - (v[0] + k as f64 * h)).abs() > 1e-9 * h {
            return Err(Error::Config(format!("sampled field: {what} values are not uniformly spaced")));
        }
    }
    Ok(h)
}

/// Sampled field from a CSV in grid-function layout covering a full tensor
/// grid in space (and optionally several uniform time levels). Every
/// column after `t` is one component.
pub fn read_sampled_field(path: &Path, dim: usize) -> Result<SampledField> {
    let tab = read_numeric_csv(path)?;
    let want = if dim == 1 { vec!["x", "t"] } else { vec!["x", "y", "t"] };
    for (k, w) in want.iter().enumerate() {
        if tab.header.get(k).map(String::as_str) != Some(*w) {
            return Err(Error::Config(format!(
                "{}: expected column {} to be '{w}'",
                path.display(),
                k + 1
            )));
        }
    }
    let nc = tab.header.len() - want.len();
    if nc == 0 {
        return Err(Error::Config(format!("{}: no value columns", path.display())));
    }
    let xs = axis_values(tab.rows.iter().map(|r| r[0]));
    let ys = if dim == 2 { axis_values(tab.rows.iter().map(|r| r[1])) } else { vec![0.0] };
    let ts = axis_values(tab.rows.iter().map(|r| r[dim]));
    let (hx, hy, dt) = (uniform_step(&xs, "x")?, uniform_step(&ys, "y")?, uniform_step(&ts, "t")?);
    let (nx, ny, nt) = (xs.len(), ys.len(), ts.len());
    if tab.rows.len() != nx * ny * nt {
        return Err(Error::Config(format!(
            "{}: {} rows do not cover the {nx} x {ny} x {nt} tensor grid",
            path.display(),
            tab.rows.len()
        )));
    }
    let idx = |v: f64, lo: f64, h: f64| ((v - lo) / h).round() as usize;
    let mut data = GridFunction::zeros(nx * ny, nt, nc);
    for r in &tab.rows {
        let i = idx(r[0], xs[0], hx);
        let j = if dim == 2 { idx(r[1], ys[0], hy) } else { 0 };
        let n = idx(r[dim], ts[0], dt);
        for c in 0..nc {
            data.set(n, i + nx * j, c, r[dim + 1 + c]);
        }
    }
    if !data.all_finite() {
        return Err(Error::Config(format!("{}: non-finite sample", path.display())));
    }
    Ok(SampledField {
        dim,
        lo: [xs[0], ys[0]],
        h: [hx, hy],
        n: [nx, ny],
        t0: ts[0],
        dt,
        data,
    })
}

/// One manifest line.
#[derive(Clone, Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes artifacts into one directory and records their hashes. Writes are
/// serialised through `&mut self`.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

impl ArtifactWriter {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ArtifactWriter { dir, entries: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.entries.retain(|e| e.path != name);
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Numerical(format!("cannot serialise {name}: {e}")))?;
        s.push('\n');
        self.write_text(name, &s)
    }

    pub fn write_grid_function(&mut self, name: &str, grid: &Grid, f: &GridFunction, cols: &[&str]) -> Result<()> {
        self.write_text(name, &grid_function_csv(grid, f, cols))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Writes `manifest.json` (entries sorted by path) and returns them.
    pub fn finish(mut self) -> Result<Vec<ManifestEntry>> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let mut s = serde_json::to_string_pretty(&self.entries).expect("manifest serialises");
        s.push('\n');
        let path = self.dir.join(MANIFEST);
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        Ok(self.entries)
    }
}

/// Text summary line of a manifest, for logs.
pub fn manifest_summary(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{}  {}", &e.sha256[..16], e.path);
    }
    s
}
