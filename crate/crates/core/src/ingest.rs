//! Entity × year indicator panels from CSV: loading, distance-weighted
//! imputation, aggregation of indicators to targets, and conversion into
//! [`SamplePanel`]s for testing.
//!
//! The schema is a TOML file:
//!
//! ```toml
//! format_version = 1
//! layout = "long"            # or "wide"
//!
//! [columns]                  # header names, defaults shown
//! entity = "entity"
//! year = "year"
//! indicator = "indicator"    # long layout only
//! value = "value"            # long layout only
//!
//! [targets]                  # indicator -> target
//! "1.1.1" = "1.1"
//!
//! [groups]                   # entity -> group label
//! KEN = "low"
//!
//! [output]                   # optional
//! mode = "two-sample"        # or "independence" with `series = ["a", "b"]`
//! series = "1.1"
//! groups = ["low", "high"]
//! ```
//!
//! In the wide layout every column other than entity and year is an
//! indicator unless `indicators = [...]` lists them. Empty fields and `NA`
//! are missing values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::SamplePanel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Long,
    Wide,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnNames {
    pub entity: String,
    pub year: String,
    pub indicator: String,
    pub value: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        Self {
            entity: "entity".into(),
            year: "year".into(),
            indicator: "indicator".into(),
            value: "value".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutputSpec {
    TwoSample { series: String, groups: [String; 2] },
    Independence { series: [String; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub format_version: u32,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub columns: ColumnNames,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicators: Option<Vec<String>>,
    #[serde(default)]
    pub targets: BTreeMap<String, String>,
    #[serde(default)]
    pub groups: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

impl Schema {
    pub fn long() -> Self {
        Self {
            format_version: SCHEMA_VERSION,
            layout: Layout::Long,
            columns: ColumnNames::default(),
            indicators: None,
            targets: BTreeMap::new(),
            groups: BTreeMap::new(),
            output: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text)?;
        if schema.format_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema format_version {} (expected {SCHEMA_VERSION})",
                schema.format_version
            )));
        }
        Ok(schema)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Entity × year matrices of named indicators, with optional cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPanel {
    entities: Vec<String>,
    years: Vec<i64>,
    indicators: BTreeMap<String, Array2<Option<f64>>>,
    targets: BTreeMap<String, String>,
    groups: BTreeMap<String, String>,
}

impl RawPanel {
    /// Panel with the given axes and no indicators.
    pub fn empty(entities: Vec<String>, mut years: Vec<i64>) -> Result<Self> {
        years.sort_unstable();
        years.dedup();
        let unique: BTreeSet<&String> = entities.iter().collect();
        if unique.len() != entities.len() {
            return Err(Error::Input("entity identifiers must be unique".into()));
        }
        Ok(Self {
            entities,
            years,
            indicators: BTreeMap::new(),
            targets: BTreeMap::new(),
            groups: BTreeMap::new(),
        })
    }

    pub fn with_metadata(
        mut self,
        targets: BTreeMap<String, String>,
        groups: BTreeMap<String, String>,
    ) -> Self {
        self.targets = targets;
        self.groups = groups;
        self
    }

    /// Add or replace an indicator matrix (entities × years).
    pub fn insert(&mut self, name: impl Into<String>, values: Array2<Option<f64>>) -> Result<()> {
        if values.dim() != (self.entities.len(), self.years.len()) {
            return Err(Error::DimensionMismatch {
                what: "indicator matrix rows",
                left: values.nrows(),
                right: self.entities.len(),
            });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("indicator values must be finite".into()));
        }
        self.indicators.insert(name.into(), values);
        Ok(())
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn years(&self) -> &[i64] {
        &self.years
    }

    pub fn indicator_names(&self) -> impl Iterator<Item = &str> {
        self.indicators.keys().map(String::as_str)
    }

    pub fn indicator(&self, name: &str) -> Option<&Array2<Option<f64>>> {
        self.indicators.get(name)
    }

    pub fn targets(&self) -> &BTreeMap<String, String> {
        &self.targets
    }

    pub fn groups(&self) -> &BTreeMap<String, String> {
        &self.groups
    }

    pub fn value(&self, indicator: &str, entity: usize, year: usize) -> Option<f64> {
        self.indicators.get(indicator).and_then(|m| m[[entity, year]])
    }

    pub fn missing_cells(&self) -> usize {
        self.indicators
            .values()
            .map(|m| m.iter().filter(|v| v.is_none()).count())
            .sum()
    }

    /// Entities of each group label, in panel order.
    pub fn group_members(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for e in &self.entities {
            if let Some(g) = self.groups.get(e) {
                out.entry(g.clone()).or_default().push(e.clone());
            }
        }
        out
    }
}

fn parse_cell(raw: &str) -> Option<&str> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") {
        None
    } else {
        Some(t)
    }
}

fn parse_value(raw: &str, line: usize) -> Result<Option<f64>> {
    match parse_cell(raw) {
        None => Ok(None),
        Some(s) => match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(Error::Parse {
                line,
                msg: format!("value {s:?} is not a finite number"),
            }),
        },
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Input(format!("column {name:?} not found in header")))
}

type Cell = (usize, i64, String);

/// Load a panel according to `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &Schema) -> Result<RawPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c = &schema.columns;
    let entity_col = column_index(&headers, &c.entity)?;
    let year_col = column_index(&headers, &c.year)?;
    let value_cols: Vec<(usize, Option<String>)> = match schema.layout {
        Layout::Long => vec![
            (column_index(&headers, &c.indicator)?, None),
            (column_index(&headers, &c.value)?, None),
        ],
        Layout::Wide => match &schema.indicators {
            Some(names) => names
                .iter()
                .map(|n| Ok((column_index(&headers, n)?, Some(n.clone()))))
                .collect::<Result<_>>()?,
            None => headers
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != entity_col && i != year_col)
                .map(|(i, h)| (i, Some(h.trim().to_string())))
                .collect(),
        },
    };

    let mut entity_ids: HashMap<String, usize> = HashMap::new();
    let mut entities: Vec<String> = Vec::new();
    let mut cells: HashMap<Cell, Option<f64>> = HashMap::new();
    let mut names: BTreeSet<String> = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<&str> {
            rec.get(i).ok_or_else(|| Error::Parse {
                line,
                msg: format!("row has {} fields, needs column {}", rec.len(), i + 1),
            })
        };
        let entity = parse_cell(field(entity_col)?)
            .ok_or_else(|| Error::Parse {
                line,
                msg: "empty entity identifier".into(),
            })?
            .to_string();
        let year_raw = field(year_col)?.trim();
        let year: i64 = year_raw.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("year {year_raw:?} is not an integer"),
        })?;
        let next = entities.len();
        let e = *entity_ids.entry(entity.clone()).or_insert(next);
        if e == next {
            entities.push(entity);
        }
        let mut put = |name: String, value: Option<f64>| -> Result<()> {
            names.insert(name.clone());
            let key = (e, year, name);
            if cells.contains_key(&key) {
                return Err(Error::Conflict(format!(
                    "duplicate cell (entity {}, year {}, indicator {}) at line {line}",
                    entities[e], key.1, key.2
                )));
            }
            cells.insert(key, value);
            Ok(())
        };
        match schema.layout {
            Layout::Long => {
                let name = parse_cell(field(value_cols[0].0)?)
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: "empty indicator name".into(),
                    })?
                    .to_string();
                put(name, parse_value(field(value_cols[1].0)?, line)?)?;
            }
            Layout::Wide => {
                for (i, name) in &value_cols {
                    let name = name.clone().expect("wide columns are named");
                    put(name, parse_value(field(*i)?, line)?)?;
                }
            }
        }
    }
    if entities.is_empty() {
        return Err(Error::Input("panel CSV has no data rows".into()));
    }
    let years: Vec<i64> = cells
        .keys()
        .map(|(_, y, _)| *y)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let year_pos: HashMap<i64, usize> = years.iter().enumerate().map(|(i, &y)| (y, i)).collect();
    let mut panel = RawPanel::empty(entities, years)?;
    let dim = (panel.entities.len(), panel.years.len());
    let mut matrices: BTreeMap<String, Array2<Option<f64>>> =
        names.into_iter().map(|n| (n, Array2::from_elem(dim, None))).collect();
    for ((e, y, name), v) in cells {
        matrices.get_mut(&name).expect("indicator registered")[[e, year_pos[&y]]] = v;
    }
    for (name, m) in matrices {
        panel.insert(name, m)?;
    }
    Ok(panel.with_metadata(schema.targets.clone(), schema.groups.clone()))
}

/// Write every cell in long layout with the schema's column names; missing
/// cells are written as empty fields.
pub fn write_csv<W: Write>(panel: &RawPanel, columns: &ColumnNames, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([&columns.entity, &columns.year, &columns.indicator, &columns.value])?;
    for (e, entity) in panel.entities.iter().enumerate() {
        for (y, year) in panel.years.iter().enumerate() {
            for (name, m) in &panel.indicators {
                let value = m[[e, y]].map(|v| v.to_string()).unwrap_or_default();
                wtr.write_record([entity.as_str(), &year.to_string(), name, &value])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// One imputed cell and the number of donors that contributed to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilledCell {
    pub entity: String,
    pub year: i64,
    pub indicator: String,
    pub donors: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImputationReport {
    pub cells_filled: usize,
    pub cells: Vec<FilledCell>,
}

/// Weighted mean `Σ v_d / dist_d ÷ Σ 1 / dist_d` over `(value, distance)`
/// donors. Donors at distance zero take over: their plain mean is returned.
pub fn weighted_fill(donors: &[(f64, f64)]) -> Option<f64> {
    if donors.is_empty() {
        return None;
    }
    let exact: Vec<f64> = donors.iter().filter(|d| d.1 == 0.0).map(|d| d.0).collect();
    if !exact.is_empty() {
        return Some(exact.iter().sum::<f64>() / exact.len() as f64);
    }
    // Weights d_max / d are proportional to 1 / d and stay exact when the
    // distances are commensurate.
    let d_max = donors.iter().map(|d| d.1).fold(0.0, f64::max);
    let (num, den) = donors.iter().fold((0.0, 0.0), |(n, d), &(v, dist)| {
        let w = d_max / dist;
        (n + v * w, d + w)
    });
    Some(num / den)
}

/// Pairwise entity distances over z-scored (indicator, year) coordinates,
/// each pair restricted to the coordinates observed for both entities.
/// `None` when a pair shares no observed coordinate.
fn entity_distances(panel: &RawPanel) -> Vec<Vec<Option<f64>>> {
    let n = panel.entities.len();
    // z-scores per coordinate, from observed values only
    let mut profiles: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
    for m in panel.indicators.values() {
        for y in 0..panel.years.len() {
            let col: Vec<Option<f64>> = (0..n).map(|e| m[[e, y]]).collect();
            let obs: Vec<f64> = col.iter().flatten().copied().collect();
            let k = obs.len() as f64;
            let mean = obs.iter().sum::<f64>() / k.max(1.0);
            let sd = (obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k.max(1.0)).sqrt();
            for (e, v) in col.into_iter().enumerate() {
                profiles[e].push(v.map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 }));
            }
        }
    }
    (0..n)
        .into_par_iter()
        .map(|a| {
            (0..n)
                .map(|b| {
                    let mut shared = false;
                    let mut ss = 0.0;
                    for (pa, pb) in profiles[a].iter().zip(&profiles[b]) {
                        if let (Some(u), Some(v)) = (pa, pb) {
                            shared = true;
                            ss += (u - v) * (u - v);
                        }
                    }
                    shared.then(|| ss.sqrt())
                })
                .collect()
        })
        .collect()
}

/// Fill every missing cell with the inverse-distance weighted mean over the
/// entities observed at the same indicator and year. Distances use the
/// observed data only; observed cells are left untouched.
pub fn impute(panel: &RawPanel) -> Result<(RawPanel, ImputationReport)> {
    let dist = entity_distances(panel);
    let mut out = panel.clone();
    let mut report = ImputationReport::default();
    for (name, m) in &panel.indicators {
        let missing: Vec<(usize, usize)> = m
            .indexed_iter()
            .filter(|(_, v)| v.is_none())
            .map(|(ix, _)| ix)
            .collect();
        let fills = missing
            .par_iter()
            .map(|&(e, y)| {
                let donors: Vec<(f64, f64)> = (0..panel.entities.len())
                    .filter(|&d| d != e)
                    .filter_map(|d| Some((m[[d, y]]?, dist[e][d]?)))
                    .collect();
                match weighted_fill(&donors) {
                    Some(v) => Ok((e, y, v, donors.len())),
                    None => Err(Error::Unimputable {
                        entity: panel.entities[e].clone(),
                        year: panel.years[y],
                        indicator: name.clone(),
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let target = out.indicators.get_mut(name).expect("same indicators");
        for (e, y, v, donors) in fills {
            target[[e, y]] = Some(v);
            report.cells.push(FilledCell {
                entity: panel.entities[e].clone(),
                year: panel.years[y],
                indicator: name.clone(),
                donors,
            });
        }
    }
    report.cells_filled = report.cells.len();
    Ok((out, report))
}

/// Replace indicators by their targets: each target cell is the mean of its
/// indicators' observed values at that cell (missing if none is observed).
pub fn aggregate_to_targets(panel: &RawPanel) -> Result<RawPanel> {
    let mut members: BTreeMap<&str, Vec<&Array2<Option<f64>>>> = BTreeMap::new();
    for (name, m) in &panel.indicators {
        let target = panel
            .targets
            .get(name)
            .ok_or_else(|| Error::Metadata(format!("indicator {name:?} has no target")))?;
        members.entry(target.as_str()).or_default().push(m);
    }
    let mut out = RawPanel::empty(panel.entities.clone(), panel.years.clone())?;
    let dim = (panel.entities.len(), panel.years.len());
    for (target, mats) in members {
        let agg = Array2::from_shape_fn(dim, |ix| {
            let obs: Vec<f64> = mats.iter().filter_map(|m| m[ix]).collect();
            (!obs.is_empty()).then(|| obs.iter().sum::<f64>() / obs.len() as f64)
        });
        out.insert(target, agg)?;
    }
    let identity = out.indicators.keys().map(|k| (k.clone(), k.clone())).collect();
    Ok(out.with_metadata(identity, panel.groups.clone()))
}

/// A complete series as a labelled panel on the year grid, restricted to
/// the given entity rows.
pub fn series_panel(panel: &RawPanel, series: &str, rows: &[usize]) -> Result<SamplePanel> {
    let m = panel
        .indicators
        .get(series)
        .ok_or_else(|| Error::Input(format!("series {series:?} not in panel")))?;
    let t = panel.years.len();
    let mut values = Array2::zeros((rows.len(), t));
    for (r, &e) in rows.iter().enumerate() {
        for y in 0..t {
            values[[r, y]] = m[[e, y]].ok_or_else(|| {
                Error::Input(format!(
                    "series {series:?} is missing entity {} year {}; impute first",
                    panel.entities[e], panel.years[y]
                ))
            })?;
        }
    }
    let grid = panel.years.iter().map(|&y| y as f64).collect();
    let labels = rows.iter().map(|&e| panel.entities[e].clone()).collect();
    SamplePanel::new(values, grid)?.with_labels(labels)
}

/// The two panels requested by `output`.
pub fn to_sample_panels(panel: &RawPanel, output: &OutputSpec) -> Result<(SamplePanel, SamplePanel)> {
    match output {
        OutputSpec::TwoSample { series, groups } => {
            let rows = |label: &str| -> Result<Vec<usize>> {
                let rows: Vec<usize> = (0..panel.entities.len())
                    .filter(|&e| panel.groups.get(&panel.entities[e]).map(String::as_str) == Some(label))
                    .collect();
                if rows.len() < 2 {
                    return Err(Error::SampleSize(format!(
                        "group {label:?} has {} entities; at least 2 are needed",
                        rows.len()
                    )));
                }
                Ok(rows)
            };
            let x = series_panel(panel, series, &rows(&groups[0])?)?;
            let y = series_panel(panel, series, &rows(&groups[1])?)?;
            Ok((x, y))
        }
        OutputSpec::Independence { series } => {
            if panel.entities.len() < 2 {
                return Err(Error::SampleSize("independence mode needs at least 2 entities".into()));
            }
            let rows: Vec<usize> = (0..panel.entities.len()).collect();
            let x = series_panel(panel, &series[0], &rows)?;
            let y = series_panel(panel, &series[1], &rows)?;
            Ok((x, y))
        }
    }
}
