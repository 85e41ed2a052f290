//! Matrix-variate time series of directed flows.
//!
//! A [`MatrixSeries`] holds one dense `n x n` flow matrix per month: entry
//! `(i, j)` is the volume flowing from entity `i` to entity `j`. For transport
//! data the diagonal is undefined; it is kept as a mask rather than a numeric
//! sentinel so that reading an undefined cell is an explicit `None`, not a NaN
//! that silently propagates.
//!
//! This module also covers ingestion from long-format CSV
//! (`exporter,importer,year,month,value`), mirror imputation of export flows
//! from partner-reported imports, centered three-month smoothing, and
//! contiguous sub-series windows.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month, the time unit of every series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1-based month, 1..=12.
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidParameter(format!(
                "month must be in 1..=12, got {month}"
            )));
        }
        Ok(YearMonth { year, month })
    }

    /// Months since year 0; gives a total order with unit gaps between
    /// consecutive calendar months.
    pub fn index(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(index: i64) -> Self {
        let year = index.div_euclid(12) as i32;
        let month = (index.rem_euclid(12) + 1) as u8;
        YearMonth { year, month }
    }

    pub fn next(&self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn plus_months(&self, months: i64) -> Self {
        Self::from_index(self.index() + months)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    /// Parses `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s.split_once('-').ok_or_else(|| {
            Error::InvalidParameter(format!("expected YYYY-MM, got {s:?}"))
        })?;
        let year: i32 = y
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad year in {s:?}")))?;
        let month: u8 = m
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad month in {s:?}")))?;
        YearMonth::new(year, month)
    }
}

/// One row of the long-format input: a directed flow observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRecord {
    pub exporter: String,
    pub importer: String,
    pub time: YearMonth,
    pub value: f64,
}

/// Summary of what ingestion had to repair or flag.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub rows: usize,
    /// Off-diagonal cells with no record, zero-filled under `strict = false`.
    pub missing_zeroed: usize,
    /// Negative values encountered (expected only for simulated data).
    pub negative_values: usize,
}

/// Counters from mirror imputation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MirrorReport {
    /// Cells where only the exporter-side report existed.
    pub exporter_fallbacks: usize,
    /// Cells covered by neither side, zero-filled under `strict = false`.
    pub missing_zeroed: usize,
}

/// An ordered sequence of dense `n x n` flow matrices at monthly frequency.
///
/// Immutable after construction; cheap to share across readers.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    entities: Vec<String>,
    times: Vec<YearMonth>,
    values: Vec<Array2<f64>>,
    diag_defined: bool,
    contains_negative: bool,
}

impl MatrixSeries {
    /// Builds a series, enforcing the structural invariants: square matrices
    /// matching the entity count, strictly increasing contiguous months, and
    /// finite defined entries. When `diag_defined` is false the stored
    /// diagonal is forced to zero so no information can hide there.
    pub fn new(
        entities: Vec<String>,
        times: Vec<YearMonth>,
        mut values: Vec<Array2<f64>>,
        diag_defined: bool,
    ) -> Result<Self> {
        let n = entities.len();
        if n == 0 {
            return Err(Error::InvalidParameter("no entities".into()));
        }
        if times.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} time stamps but {} matrices",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::InvalidParameter("empty series".into()));
        }
        for w in times.windows(2) {
            if w[1].index() != w[0].index() + 1 {
                return Err(Error::NonContiguousMonths {
                    time: w[0].next().to_string(),
                });
            }
        }
        let mut contains_negative = false;
        for (t, m) in values.iter_mut().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "matrix at {} is {}x{}, expected {n}x{n}",
                    times[t],
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !diag_defined {
                for i in 0..n {
                    m[[i, i]] = 0.0;
                }
            }
            for ((i, j), v) in m.indexed_iter() {
                if !diag_defined && i == j {
                    continue;
                }
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "non-finite value at ({i}, {j}), {}",
                        times[t]
                    )));
                }
                if *v < 0.0 {
                    contains_negative = true;
                }
            }
        }
        Ok(MatrixSeries {
            entities,
            times,
            values,
            diag_defined,
            contains_negative,
        })
    }

    pub fn n(&self) -> usize {
        self.entities.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn times(&self) -> &[YearMonth] {
        &self.times
    }

    pub fn diag_defined(&self) -> bool {
        self.diag_defined
    }

    /// True when any defined entry is negative (simulated data only).
    pub fn contains_negative(&self) -> bool {
        self.contains_negative
    }

    /// Value of cell `(i, j)` at time index `t`; `None` if the cell is
    /// undefined (the diagonal of a transport network).
    pub fn get(&self, t: usize, i: usize, j: usize) -> Option<f64> {
        if !self.diag_defined && i == j {
            return None;
        }
        Some(self.values[t][[i, j]])
    }

    /// Dense matrix at time index `t` with undefined cells set to zero.
    ///
    /// This is the representation every moment computation consumes: omitting
    /// undefined entries from the sums is equivalent to zeroing them.
    pub fn dense_zero_diag(&self, t: usize) -> &Array2<f64> {
        // Constructor already forces the undefined diagonal to 0.
        &self.values[t]
    }

    pub fn entity_index(&self, label: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == label)
    }

    /// Contiguous sub-series `[start, start + length)` with value semantics:
    /// the window owns its data and never aliases the parent.
    pub fn window(&self, start: usize, length: usize) -> Result<MatrixSeries> {
        if length == 0 {
            return Err(Error::InvalidParameter("window length must be > 0".into()));
        }
        let end = start
            .checked_add(length)
            .ok_or_else(|| Error::OutOfRange("window end overflows".into()))?;
        if end > self.len() {
            return Err(Error::OutOfRange(format!(
                "window [{start}, {end}) exceeds series length {}",
                self.len()
            )));
        }
        Ok(MatrixSeries {
            entities: self.entities.clone(),
            times: self.times[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
            diag_defined: self.diag_defined,
            contains_negative: self.contains_negative,
        })
    }

    /// Centered three-month smoothing: output month `t` is the elementwise
    /// mean of months `t-1, t, t+1`. The first and last months have no
    /// centered window and are dropped, so the output has `T - 2` points.
    pub fn three_month_average(&self) -> Result<MatrixSeries> {
        let t_len = self.len();
        if t_len < 3 {
            return Err(Error::InvalidParameter(format!(
                "three-month average needs T >= 3, got {t_len}"
            )));
        }
        let mut values = Vec::with_capacity(t_len - 2);
        for t in 1..t_len - 1 {
            let m =
                (&self.values[t - 1] + &self.values[t] + &self.values[t + 1]) / 3.0;
            values.push(m);
        }
        MatrixSeries::new(
            self.entities.clone(),
            self.times[1..t_len - 1].to_vec(),
            values,
            self.diag_defined,
        )
    }

    /// Reorders entities by `perm`, where output entity `k` is input entity
    /// `perm[k]`; rows and columns move together.
    pub fn permute_entities(&self, perm: &[usize]) -> Result<MatrixSeries> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "permutation length {} != n {n}",
                perm.len()
            )));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            seen[p] = true;
        }
        let entities = perm.iter().map(|&p| self.entities[p].clone()).collect();
        let values = self
            .values
            .iter()
            .map(|m| {
                let mut out = Array2::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        out[[i, j]] = m[[perm[i], perm[j]]];
                    }
                }
                out
            })
            .collect();
        MatrixSeries::new(entities, self.times.clone(), values, self.diag_defined)
    }

    /// Writes the series back to long CSV. Undefined diagonal cells are
    /// omitted. Values print in shortest round-trip form, so re-ingesting
    /// reproduces them bit for bit.
    pub fn export_long_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "exporter,importer,year,month,value")?;
        for (t, ym) in self.times.iter().enumerate() {
            for i in 0..self.n() {
                for j in 0..self.n() {
                    if let Some(v) = self.get(t, i, j) {
                        writeln!(
                            w,
                            "{},{},{},{},{}",
                            csv_escape(&self.entities[i]),
                            csv_escape(&self.entities[j]),
                            ym.year,
                            ym.month,
                            v
                        )?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes one `n x n` matrix CSV per time point into `dir`, named
    /// `X_YYYY-MM.csv`, with an entity header row and column. Undefined
    /// diagonals print as `NA`.
    pub fn export_matrix_csvs(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.len());
        for (t, ym) in self.times.iter().enumerate() {
            let path = dir.join(format!("X_{ym}.csv"));
            let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
            write!(w, "entity")?;
            for e in &self.entities {
                write!(w, ",{}", csv_escape(e))?;
            }
            writeln!(w)?;
            for i in 0..self.n() {
                write!(w, "{}", csv_escape(&self.entities[i]))?;
                for j in 0..self.n() {
                    match self.get(t, i, j) {
                        Some(v) => write!(w, ",{v}")?,
                        None => write!(w, ",NA")?,
                    }
                }
                writeln!(w)?;
            }
            w.flush()?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// A panel that may not cover every cell: dense values plus a coverage mask.
/// Intermediate form for mirror imputation, where the export-side and
/// import-side reports each cover only part of the grid.
#[derive(Debug, Clone)]
pub struct PartialPanel {
    pub entities: Vec<String>,
    pub times: Vec<YearMonth>,
    pub values: Vec<Array2<f64>>,
    pub covered: Vec<Array2<bool>>,
}

impl PartialPanel {
    /// Assembles a partial panel from long records. Entities are the sorted
    /// union of labels; the month range is the observed min..=max. Duplicate
    /// keys and self-flows are errors.
    pub fn from_records(records: &[LongRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidParameter("no records".into()));
        }
        let mut entity_set = BTreeSet::new();
        let mut t_min = i64::MAX;
        let mut t_max = i64::MIN;
        for rec in records {
            if rec.exporter == rec.importer {
                return Err(Error::InvalidParameter(format!(
                    "self-flow record for {} at {}",
                    rec.exporter, rec.time
                )));
            }
            entity_set.insert(rec.exporter.clone());
            entity_set.insert(rec.importer.clone());
            t_min = t_min.min(rec.time.index());
            t_max = t_max.max(rec.time.index());
        }
        let entities: Vec<String> = entity_set.into_iter().collect();
        let n = entities.len();
        let times: Vec<YearMonth> = (t_min..=t_max).map(YearMonth::from_index).collect();
        let t_len = times.len();
        let mut values = vec![Array2::zeros((n, n)); t_len];
        let mut covered = vec![Array2::from_elem((n, n), false); t_len];
        let index_of = |label: &str| entities.binary_search_by(|e| e.as_str().cmp(label));
        for rec in records {
            let i = index_of(&rec.exporter).expect("exporter in union");
            let j = index_of(&rec.importer).expect("importer in union");
            let t = (rec.time.index() - t_min) as usize;
            if covered[t][[i, j]] {
                return Err(Error::DuplicateRecord {
                    exporter: rec.exporter.clone(),
                    importer: rec.importer.clone(),
                    time: rec.time.to_string(),
                });
            }
            values[t][[i, j]] = rec.value;
            covered[t][[i, j]] = true;
        }
        Ok(PartialPanel {
            entities,
            times,
            values,
            covered,
        })
    }
}

/// Reads long-format records from a CSV file with header
/// `exporter,importer,year,month,value`. Parse failures carry the 1-based
/// line number.
pub fn read_long_records(path: &Path) -> Result<Vec<LongRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    {
        let headers = rdr.headers()?;
        let expect = ["exporter", "importer", "year", "month", "value"];
        if headers.len() < 5 || (0..5).any(|k| !headers[k].eq_ignore_ascii_case(expect[k])) {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "expected header exporter,importer,year,month,value, got {:?}",
                    headers.iter().collect::<Vec<_>>()
                ),
            });
        }
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(records.len() + 2);
        let field = |k: usize, name: &str| -> Result<&str> {
            rec.get(k).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing column {name}"),
            })
        };
        let year: i32 = field(2, "year")?.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad year {:?}", &rec[2]),
        })?;
        let month: u8 = field(3, "month")?.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad month {:?}", &rec[3]),
        })?;
        let value: f64 = field(4, "value")?.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad value {:?}", &rec[4]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("non-finite value {value}"),
            });
        }
        let time = YearMonth::new(year, month).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        records.push(LongRecord {
            exporter: field(0, "exporter")?.to_string(),
            importer: field(1, "importer")?.to_string(),
            time,
            value,
        });
    }
    if records.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    Ok(records)
}

/// Builds a complete series from long records. Every month in the observed
/// range must have at least one record; under `strict = true` every
/// off-diagonal cell must be covered, otherwise uncovered cells become zero
/// and are counted in the report.
pub fn series_from_records(
    records: &[LongRecord],
    strict: bool,
) -> Result<(MatrixSeries, IngestReport)> {
    let panel = PartialPanel::from_records(records)?;
    let n = panel.entities.len();
    let mut report = IngestReport {
        rows: records.len(),
        ..Default::default()
    };
    for (t, cov) in panel.covered.iter().enumerate() {
        if !cov.iter().any(|&c| c) {
            return Err(Error::NonContiguousMonths {
                time: panel.times[t].to_string(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if !cov[[i, j]] {
                    if strict {
                        return Err(Error::MissingCell {
                            exporter: panel.entities[i].clone(),
                            importer: panel.entities[j].clone(),
                            time: panel.times[t].to_string(),
                        });
                    }
                    report.missing_zeroed += 1;
                } else if panel.values[t][[i, j]] < 0.0 {
                    report.negative_values += 1;
                }
            }
        }
    }
    let series = MatrixSeries::new(panel.entities, panel.times, panel.values, false)?;
    Ok((series, report))
}

/// Reads a long CSV and assembles the full panel. See [`series_from_records`]
/// for the completeness rules.
pub fn ingest_long_csv(path: &Path, strict: bool) -> Result<(MatrixSeries, IngestReport)> {
    let records = read_long_records(path)?;
    series_from_records(&records, strict)
}

/// Combines exporter-side and importer-side reports into one series,
/// preferring the import report for each cell: output `(i, j)` is entity
/// `j`'s reported import from `i` when available, else `i`'s reported export
/// to `j` (counted as a fallback), else the usual missing-cell handling.
pub fn mirror_impute(
    exports_reported: &PartialPanel,
    imports_reported: &PartialPanel,
    strict: bool,
) -> Result<(MatrixSeries, MirrorReport)> {
    // Align both panels onto the union of entities and months.
    let mut entity_set: BTreeSet<String> = BTreeSet::new();
    entity_set.extend(exports_reported.entities.iter().cloned());
    entity_set.extend(imports_reported.entities.iter().cloned());
    let entities: Vec<String> = entity_set.into_iter().collect();
    let n = entities.len();
    let t_min = exports_reported.times[0]
        .index()
        .min(imports_reported.times[0].index());
    let t_max = exports_reported
        .times
        .last()
        .unwrap()
        .index()
        .max(imports_reported.times.last().unwrap().index());
    let times: Vec<YearMonth> = (t_min..=t_max).map(YearMonth::from_index).collect();

    let lookup = |panel: &PartialPanel| -> Vec<Option<usize>> {
        entities
            .iter()
            .map(|e| panel.entities.iter().position(|p| p == e))
            .collect()
    };
    let exp_idx = lookup(exports_reported);
    let imp_idx = lookup(imports_reported);

    let mut report = MirrorReport::default();
    let mut values = Vec::with_capacity(times.len());
    for ym in &times {
        let mut m = Array2::zeros((n, n));
        let exp_t = (ym.index() - exports_reported.times[0].index()).try_into().ok();
        let imp_t = (ym.index() - imports_reported.times[0].index()).try_into().ok();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let from_imports = imp_t
                    .filter(|&t: &usize| t < imports_reported.times.len())
                    .and_then(|t| match (imp_idx[i], imp_idx[j]) {
                        (Some(pi), Some(pj)) if imports_reported.covered[t][[pi, pj]] => {
                            Some(imports_reported.values[t][[pi, pj]])
                        }
                        _ => None,
                    });
                let from_exports = exp_t
                    .filter(|&t: &usize| t < exports_reported.times.len())
                    .and_then(|t| match (exp_idx[i], exp_idx[j]) {
                        (Some(pi), Some(pj)) if exports_reported.covered[t][[pi, pj]] => {
                            Some(exports_reported.values[t][[pi, pj]])
                        }
                        _ => None,
                    });
                m[[i, j]] = match (from_imports, from_exports) {
                    (Some(v), _) => v,
                    (None, Some(v)) => {
                        report.exporter_fallbacks += 1;
                        v
                    }
                    (None, None) => {
                        if strict {
                            return Err(Error::MissingCell {
                                exporter: entities[i].clone(),
                                importer: entities[j].clone(),
                                time: ym.to_string(),
                            });
                        }
                        report.missing_zeroed += 1;
                        0.0
                    }
                };
            }
        }
        values.push(m);
    }
    let series = MatrixSeries::new(entities, times, values, false)?;
    Ok((series, report))
}
