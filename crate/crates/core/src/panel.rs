//! Panels of time series observed on a shared temporal grid.
//!
//! A [`SamplePanel`] holds `m` independent realisations of a process, one
//! per row, each measured at the same `T` time stamps. The CSV form has a
//! header row carrying the grid and one realisation per subsequent row. An
//! optional leading `id` column labels the rows.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePanel {
    values: Array2<f64>,
    grid: Vec<f64>,
    labels: Option<Vec<String>>,
}

/// Equally spaced grid on `[0, 1]` with both endpoints included.
pub fn unit_grid(t: usize) -> Vec<f64> {
    match t {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = (t - 1) as f64;
            (0..t).map(|j| j as f64 / last).collect()
        }
    }
}

impl SamplePanel {
    pub fn new(values: Array2<f64>, grid: Vec<f64>) -> Result<Self> {
        let (m, t) = values.dim();
        if m == 0 || t == 0 {
            return Err(Error::Input(format!("panel must be non-empty, got {m}x{t}")));
        }
        if grid.len() != t {
            return Err(Error::DimensionMismatch {
                what: "panel grid",
                left: grid.len(),
                right: t,
            });
        }
        if grid.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) || grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::Input("grid must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("panel values must be finite".into()));
        }
        Ok(Self {
            values: values.as_standard_layout().into_owned(),
            grid,
            labels: None,
        })
    }

    /// Panel on the default equally spaced grid over `[0, 1]`.
    pub fn on_unit_grid(values: Array2<f64>) -> Result<Self> {
        let t = values.ncols();
        Self::new(values, unit_grid(t))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != t) {
            return Err(Error::DimensionMismatch {
                what: "panel rows",
                left: bad.len(),
                right: t,
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((m, t), flat)
            .map_err(|e| Error::Input(format!("panel shape: {e}")))?;
        Self::on_unit_grid(values)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.realisations() {
            return Err(Error::DimensionMismatch {
                what: "panel labels",
                left: labels.len(),
                right: self.realisations(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Number of realisations `m`.
    pub fn realisations(&self) -> usize {
        self.values.nrows()
    }

    /// Number of time points `T`.
    pub fn time_points(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Contiguous slice of row `i`.
    pub fn row_slice(&self, i: usize) -> &[f64] {
        let t = self.time_points();
        &self.values.as_slice().expect("standard layout")[i * t..(i + 1) * t]
    }

    /// New panel made of the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Input("row selection is empty".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.realisations()) {
            return Err(Error::Input(format!(
                "row index {bad} out of range for {} realisations",
                self.realisations()
            )));
        }
        Ok(Self {
            values: self.values.select(Axis(0), idx),
            grid: self.grid.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i].clone()).collect()),
        })
    }

    /// Single-column panel holding time point `t`.
    pub fn column(&self, t: usize) -> Result<Self> {
        if t >= self.time_points() {
            return Err(Error::Input(format!("time index {t} out of range")));
        }
        Ok(Self {
            values: self.values.select(Axis(1), &[t]),
            grid: vec![self.grid[t]],
            labels: self.labels.clone(),
        })
    }

    /// Multiply every value by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut out = self.clone();
        out.values.mapv_inplace(|v| v * c);
        if out.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("scaled panel is not finite".into()));
        }
        Ok(out)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv_writer(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(Error::Input("panel CSV is empty".into())),
        };
        let labelled = header
            .get(0)
            .is_some_and(|first| first.parse::<f64>().is_err());
        let skip = usize::from(labelled);
        let grid = header
            .iter()
            .skip(skip)
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: 1,
                    msg: format!("grid stamp {s:?} is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut flat = Vec::new();
        let mut labels = Vec::new();
        let mut rows = 0;
        for (k, rec) in records.enumerate() {
            let line = k + 2;
            let rec = rec?;
            if rec.len() != grid.len() + skip {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, found {}", grid.len() + skip, rec.len()),
                });
            }
            if labelled {
                labels.push(rec[0].to_string());
            }
            for s in rec.iter().skip(skip) {
                let v = s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("value {s:?} is not a number"),
                })?;
                flat.push(v);
            }
            rows += 1;
        }
        let values = Array2::from_shape_vec((rows, grid.len()), flat)
            .map_err(|e| Error::Input(format!("panel shape: {e}")))?;
        let panel = Self::new(values, grid)?;
        if labelled {
            panel.with_labels(labels)
        } else {
            Ok(panel)
        }
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = Vec::with_capacity(self.time_points() + 1);
        if self.labels.is_some() {
            header.push("id".into());
        }
        header.extend(self.grid.iter().map(|g| g.to_string()));
        wtr.write_record(&header)?;
        for i in 0..self.realisations() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if let Some(labels) = &self.labels {
                rec.push(labels[i].clone());
            }
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}
