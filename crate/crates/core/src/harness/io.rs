//! Snapshot, checkpoint and CSV files.
//!
//! Snapshots are plain text:
//!
//! ```text
//! # rotgpe-snapshot v1
//! # nx=4 ny=4 xmin=0 xmax=1 ymin=0 ymax=1 t=0.5 [grid=cell] [payload=dofs element=q1]
//! <rows of values>
//! ```
//!
//! Density snapshots hold `(ny+1) x (nx+1)` nodal values, or `ny x nx` cell
//! averages with `grid=cell`. Checkpoints (`payload=dofs`) hold the real
//! parts of all coefficients on one line and the imaginary parts on the next.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::assembly::FeSpace;
use crate::elements::ElementKind;
use crate::mesh::RectDomain;
use crate::observables::{cell_average_density, nodal_density, ObservableRecord};
use crate::scheme::Field;
use crate::sparse::C64;

pub const MAGIC: &str = "# rotgpe-snapshot v1";

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("checkpoint does not match the space: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Shortest decimal with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    Nodes,
    Cells,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub nx: usize,
    pub ny: usize,
    pub domain: RectDomain,
    pub t: f64,
    /// Extra `key=value` flags in order of appearance.
    pub flags: Vec<(String, String)>,
}

impl SnapshotHeader {
    pub fn for_field(u: &Field, t: f64) -> Self {
        let mesh = &u.space.mesh;
        SnapshotHeader {
            nx: mesh.nx,
            ny: mesh.ny,
            domain: mesh.domain,
            t,
            flags: Vec::new(),
        }
    }

    pub fn flag(&self, key: &str) -> Option<&str> {
        self.flags
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn render(&self) -> String {
        let d = &self.domain;
        let mut s = format!(
            "{MAGIC}\n# nx={} ny={} xmin={} xmax={} ymin={} ymax={} t={}",
            self.nx,
            self.ny,
            fmt_real(d.x_min),
            fmt_real(d.x_max),
            fmt_real(d.y_min),
            fmt_real(d.y_max),
            fmt_real(self.t)
        );
        for (k, v) in &self.flags {
            write!(s, " {k}={v}").unwrap();
        }
        s.push('\n');
        s
    }

    fn parse(path: &Path, first: Option<&str>, second: Option<&str>) -> Result<Self, FileError> {
        let fail = |reason: String| FileError::Format {
            path: path.to_path_buf(),
            reason,
        };
        if first.map(str::trim_end) != Some(MAGIC) {
            return Err(fail(format!("missing {MAGIC:?} header")));
        }
        let line = second
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| fail("missing geometry header".into()))?;
        let mut pairs: Vec<(String, String)> = Vec::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| fail(format!("bad header token {tok:?}")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        let take = |key: &str| -> Result<String, FileError> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| fail(format!("header lacks {key}")))
        };
        let count = |key: &str| -> Result<usize, FileError> {
            take(key)?.parse().map_err(|_| fail(format!("bad {key}")))
        };
        let real = |key: &str| -> Result<f64, FileError> {
            take(key)?.parse().map_err(|_| fail(format!("bad {key}")))
        };
        let domain = RectDomain::new(real("xmin")?, real("xmax")?, real("ymin")?, real("ymax")?)
            .map_err(|e| fail(e.to_string()))?;
        const CORE: [&str; 7] = ["nx", "ny", "xmin", "xmax", "ymin", "ymax", "t"];
        Ok(SnapshotHeader {
            nx: count("nx")?,
            ny: count("ny")?,
            domain,
            t: real("t")?,
            flags: pairs
                .iter()
                .filter(|(k, _)| !CORE.contains(&k.as_str()))
                .cloned()
                .collect(),
        })
    }
}

/// Density values on the nodes or the cells of the mesh, row-major with x
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshot {
    pub header: SnapshotHeader,
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DensitySnapshot {
    /// `|u|^2` at the nodes for Q1 and cell averages for EQ1rot.
    pub fn from_field(u: &Field, t: f64) -> Self {
        let mut header = SnapshotHeader::for_field(u, t);
        let (grid, values) = match u.kind() {
            ElementKind::ConformingQ1 => (Grid::Nodes, nodal_density(u)),
            ElementKind::NonconformingEQ1Rot => {
                header.flags.push(("grid".into(), "cell".into()));
                (Grid::Cells, cell_average_density(u))
            }
        };
        DensitySnapshot {
            header,
            grid,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self.grid {
            Grid::Nodes => (self.header.ny + 1, self.header.nx + 1),
            Grid::Cells => (self.header.ny, self.header.nx),
        }
    }

    pub fn render(&self) -> String {
        let mut s = self.header.render();
        let (_, cols) = self.shape();
        for row in self.values.chunks(cols) {
            let line: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), FileError> {
        std::fs::write(path, self.render()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, FileError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let fail = |reason: String| FileError::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        let header = SnapshotHeader::parse(path, lines.next(), lines.next())?;
        if header.flag("payload").is_some() {
            return Err(fail("file is a checkpoint, not a density snapshot".into()));
        }
        let grid = match header.flag("grid") {
            None => Grid::Nodes,
            Some("cell") => Grid::Cells,
            Some(g) => return Err(fail(format!("unknown grid {g:?}"))),
        };
        let mut snap = DensitySnapshot {
            header,
            grid,
            values: Vec::new(),
        };
        let (rows, cols) = snap.shape();
        let data: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
        if data.len() != rows {
            return Err(fail(format!("expected {rows} rows, found {}", data.len())));
        }
        for (r, line) in data.iter().enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| fail(format!("row {}: bad number", r + 1)))?;
            if row.len() != cols {
                return Err(fail(format!("row {}: expected {cols} values", r + 1)));
            }
            snap.values.extend(row);
        }
        Ok(snap)
    }
}

/// A complex field with enough metadata to rebuild its space.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: SnapshotHeader,
    pub element: ElementKind,
    pub coeffs: Vec<C64>,
}

impl Checkpoint {
    pub fn from_field(u: &Field, t: f64) -> Self {
        let mut header = SnapshotHeader::for_field(u, t);
        header.flags.push(("payload".into(), "dofs".into()));
        header
            .flags
            .push(("element".into(), u.kind().name().into()));
        Checkpoint {
            header,
            element: u.kind(),
            coeffs: u.coeffs.clone(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = self.header.render();
        let re: Vec<String> = self.coeffs.iter().map(|z| fmt_real(z.re)).collect();
        let im: Vec<String> = self.coeffs.iter().map(|z| fmt_real(z.im)).collect();
        s.push_str(&re.join(" "));
        s.push('\n');
        s.push_str(&im.join(" "));
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), FileError> {
        std::fs::write(path, self.render()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, FileError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let fail = |reason: String| FileError::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        let header = SnapshotHeader::parse(path, lines.next(), lines.next())?;
        if header.flag("payload") != Some("dofs") {
            return Err(fail("not a checkpoint (payload=dofs missing)".into()));
        }
        let element: ElementKind = header
            .flag("element")
            .ok_or_else(|| fail("checkpoint lacks element".into()))?
            .parse()
            .map_err(|e: crate::elements::ElementError| fail(e.to_string()))?;
        let data: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
        if data.len() != 2 {
            return Err(fail(format!(
                "expected 2 value blocks, found {}",
                data.len()
            )));
        }
        let parse = |line: &str| -> Result<Vec<f64>, FileError> {
            line.split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| fail("bad number in value block".into()))
        };
        let (re, im) = (parse(data[0])?, parse(data[1])?);
        if re.len() != im.len() {
            return Err(fail("real and imaginary blocks differ in length".into()));
        }
        Ok(Checkpoint {
            header,
            element,
            coeffs: re
                .into_iter()
                .zip(im)
                .map(|(a, b)| C64::new(a, b))
                .collect(),
        })
    }

    /// Field on `space`, which must match the stored mesh and element.
    pub fn to_field(&self, space: &Arc<FeSpace>) -> Result<Field, FileError> {
        let mesh = &space.mesh;
        if space.kind != self.element {
            return Err(FileError::Mismatch(format!(
                "element {} vs {}",
                self.element, space.kind
            )));
        }
        if (mesh.nx, mesh.ny) != (self.header.nx, self.header.ny)
            || mesh.domain != self.header.domain
        {
            return Err(FileError::Mismatch(format!(
                "mesh {}x{} on {:?} vs {}x{} on {:?}",
                self.header.nx, self.header.ny, self.header.domain, mesh.nx, mesh.ny, mesh.domain
            )));
        }
        Field::from_coeffs(space.clone(), self.coeffs.clone())
            .map_err(|e| FileError::Mismatch(e.to_string()))
    }
}

pub const SERIES_HEADER: &str = "t,mass,rel_mass_err,energy,rel_energy_err,fp_iters";

/// Streaming writer for the observable series; rows are flushed as they go.
pub struct SeriesWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl SeriesWriter {
    pub fn create(path: &Path) -> Result<Self, FileError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{SERIES_HEADER}").map_err(io_err(path))?;
        Ok(SeriesWriter {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn push(&mut self, r: &ObservableRecord) -> Result<(), FileError> {
        writeln!(
            self.out,
            "{},{},{},{},{},{}",
            fmt_real(r.t),
            fmt_real(r.mass),
            fmt_real(r.rel_mass_err),
            fmt_real(r.energy_h),
            fmt_real(r.rel_energy_err),
            r.fp_iters
        )
        .map_err(io_err(&self.path))
    }

    pub fn flush(&mut self) -> Result<(), FileError> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

impl Drop for SeriesWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

/// Reads a series CSV back into records (the broken H1 column is not stored).
pub fn read_series(path: &Path) -> Result<Vec<ObservableRecord>, FileError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let fail = |reason: String| FileError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some(SERIES_HEADER) {
        return Err(fail("unexpected series header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(fail(format!("row {}: expected 6 columns", i + 1)));
            }
            let real = |k: usize| {
                cols[k]
                    .parse::<f64>()
                    .map_err(|_| fail(format!("row {}: bad number", i + 1)))
            };
            Ok(ObservableRecord {
                t: real(0)?,
                mass: real(1)?,
                rel_mass_err: real(2)?,
                energy_h: real(3)?,
                rel_energy_err: real(4)?,
                h1_broken_norm: f64::NAN,
                fp_iters: cols[5]
                    .parse()
                    .map_err(|_| fail(format!("row {}: bad count", i + 1)))?,
            })
        })
        .collect()
}
