//! Plot-ready data exports and their parse-back readers.
//!
//! Everything is plain CSV or JSON. Floats print in Rust's shortest
//! round-trip form, so reading a file back reproduces the values bit for
//! bit; the readers here exist both for tests and for downstream commands
//! that consume a previous run's artifacts.
//!
//! Files per export kind:
//!
//! * heatmap: `heatmap.csv` (`entity,hub,window_label,loading`) for the
//!   shared model; `heatmap_export.csv` / `heatmap_import.csv` for the
//!   two-sided model.
//! * network (per window): `network_<label>_nodes.csv`
//!   (`hub,side,self_volume`), `..._edges.csv`
//!   (`from_hub,to_hub,weight,direction_flipped`), `..._country_edges.csv`
//!   (`entity,side,hub,weight`, non-zero truncated loadings only).
//! * dendrogram: `dendrogram*.csv` (`step,left,right,height,size`) plus
//!   `*_leaves.csv` (`id,entity`); the two-sided model gets joint, export,
//!   and import variants.
//! * scree: `scree.csv` (`window_label,side,index,eigenvalue`).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::analysis::{
    concatenated_loading_features, hub_network, ward_cluster, FeatureSide, Merge, RollingResult,
    WindowResult,
};
use crate::error::{Error, Result};
use crate::estimator::{ModelFit, ModelKind};

/// Export kinds accepted by [`export_plot_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotData {
    Heatmap,
    Network,
    Dendrogram,
    Scree,
}

impl FromStr for PlotData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heatmap" => Ok(PlotData::Heatmap),
            "network" => Ok(PlotData::Network),
            "dendrogram" => Ok(PlotData::Dendrogram),
            "scree" => Ok(PlotData::Scree),
            other => Err(Error::UnknownExportKind(other.to_string())),
        }
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Writes the requested export into `dir` and returns the created files.
pub fn export_plot_data(
    result: &RollingResult,
    what: PlotData,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if result.windows.is_empty() {
        return Err(Error::InvalidParameter("empty rolling result".into()));
    }
    std::fs::create_dir_all(dir)?;
    match what {
        PlotData::Heatmap => write_heatmaps(result, dir),
        PlotData::Network => write_networks(result, dir),
        PlotData::Dendrogram => write_dendrograms(result, dir),
        PlotData::Scree => write_scree(result, dir),
    }
}

fn side_name(model: ModelKind, left: bool) -> &'static str {
    match (model, left) {
        (ModelKind::SymmetricLoading, _) => "shared",
        (ModelKind::TwoSided, true) => "export",
        (ModelKind::TwoSided, false) => "import",
    }
}

fn write_heatmaps(result: &RollingResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let sides: Vec<(bool, String)> = match result.model {
        ModelKind::SymmetricLoading => vec![(true, "heatmap.csv".into())],
        ModelKind::TwoSided => vec![
            (true, "heatmap_export.csv".into()),
            (false, "heatmap_import.csv".into()),
        ],
    };
    for (left, name) in sides {
        let path = dir.join(name);
        let mut w = create(&path)?;
        writeln!(w, "entity,hub,window_label,loading")?;
        for window in &result.windows {
            let loading = if left {
                &window.left.aligned_sumone
            } else {
                &window.right_view().aligned_sumone
            };
            for k in 0..loading.r() {
                for (i, entity) in loading.entities.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        quote(entity),
                        loading.hub_labels[k],
                        window.label,
                        loading.values[[i, k]]
                    )?;
                }
            }
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

fn write_networks(result: &RollingResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for window in &result.windows {
        let net = hub_network(window)?;
        files.extend(write_network_files(
            dir,
            &window.label.to_string(),
            result.model,
            &result.entities,
            &net.mean_factor,
            &net.truncated_left,
            net.truncated_right.as_ref(),
        )?);
    }
    Ok(files)
}

/// Writes one window's hub-network node/edge files from its components.
/// Also serves commands that rebuild networks from stored artifacts.
pub fn write_network_files(
    dir: &Path,
    label: &str,
    model: ModelKind,
    entities: &[String],
    mean_factor: &ndarray::Array2<f64>,
    truncated_left: &ndarray::Array2<f64>,
    truncated_right: Option<&ndarray::Array2<f64>>,
) -> Result<Vec<PathBuf>> {
    let (r1, r2) = mean_factor.dim();
    let mut files = Vec::new();

    let nodes_path = dir.join(format!("network_{label}_nodes.csv"));
    let mut w = create(&nodes_path)?;
    writeln!(w, "hub,side,self_volume")?;
    match model {
        ModelKind::SymmetricLoading => {
            for k in 0..r1 {
                writeln!(w, "H{},shared,{}", k + 1, mean_factor[[k, k]])?;
            }
        }
        ModelKind::TwoSided => {
            for k in 0..r1 {
                let vol = if k < r2 { mean_factor[[k, k]] } else { 0.0 };
                writeln!(w, "H{},export,{vol}", k + 1)?;
            }
            for k in 0..r2 {
                let vol = if k < r1 { mean_factor[[k, k]] } else { 0.0 };
                writeln!(w, "H{},import,{vol}", k + 1)?;
            }
        }
    }
    w.flush()?;
    files.push(nodes_path);

    let edges_path = dir.join(format!("network_{label}_edges.csv"));
    let mut w = create(&edges_path)?;
    writeln!(w, "from_hub,to_hub,weight,direction_flipped")?;
    for i in 0..r1 {
        for j in 0..r2 {
            if model == ModelKind::SymmetricLoading && i == j {
                continue; // within-hub volume lives on the node
            }
            let v = mean_factor[[i, j]];
            writeln!(w, "H{},H{},{},{}", i + 1, j + 1, v, v < 0.0)?;
        }
    }
    w.flush()?;
    files.push(edges_path);

    let country_path = dir.join(format!("network_{label}_country_edges.csv"));
    let mut w = create(&country_path)?;
    writeln!(w, "entity,side,hub,weight")?;
    let mut write_side = |trunc: &ndarray::Array2<f64>, left: bool| -> Result<()> {
        for k in 0..trunc.ncols() {
            for (i, entity) in entities.iter().enumerate() {
                let v = trunc[[i, k]];
                if v != 0.0 {
                    writeln!(
                        w,
                        "{},{},H{},{v}",
                        quote(entity),
                        side_name(model, left),
                        k + 1
                    )?;
                }
            }
        }
        Ok(())
    };
    write_side(truncated_left, true)?;
    if let Some(right) = truncated_right {
        write_side(right, false)?;
    }
    w.flush()?;
    files.push(country_path);
    Ok(files)
}

fn write_dendrogram_files(
    dir: &Path,
    stem: &str,
    entities: &[String],
    merges: &[Merge],
) -> Result<Vec<PathBuf>> {
    let merges_path = dir.join(format!("{stem}.csv"));
    let mut w = create(&merges_path)?;
    writeln!(w, "step,left,right,height,size")?;
    for (step, m) in merges.iter().enumerate() {
        writeln!(w, "{step},{},{},{},{}", m.left, m.right, m.height, m.size)?;
    }
    w.flush()?;
    let leaves_path = dir.join(format!("{stem}_leaves.csv"));
    let mut w = create(&leaves_path)?;
    writeln!(w, "id,entity")?;
    for (i, e) in entities.iter().enumerate() {
        writeln!(w, "{i},{}", quote(e))?;
    }
    w.flush()?;
    Ok(vec![merges_path, leaves_path])
}

fn write_dendrograms(result: &RollingResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let variants: Vec<(FeatureSide, &str)> = match result.model {
        ModelKind::SymmetricLoading => vec![(FeatureSide::Left, "dendrogram")],
        ModelKind::TwoSided => vec![
            (FeatureSide::Joint, "dendrogram_joint"),
            (FeatureSide::Left, "dendrogram_export"),
            (FeatureSide::Right, "dendrogram_import"),
        ],
    };
    let mut files = Vec::new();
    for (side, stem) in variants {
        let features = concatenated_loading_features(result, side)?;
        let (merges, _) = ward_cluster(&features, 1)?;
        files.extend(write_dendrogram_files(dir, stem, &result.entities, &merges)?);
    }
    Ok(files)
}

fn write_scree(result: &RollingResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("scree.csv");
    let mut w = create(&path)?;
    writeln!(w, "window_label,side,index,eigenvalue")?;
    for window in &result.windows {
        let fit = &window.fit;
        for (j, lambda) in fit.eigenvalues_left.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{lambda}",
                window.label,
                side_name(result.model, true),
                j + 1
            )?;
        }
        if let Some(right) = &fit.eigenvalues_right {
            for (j, lambda) in right.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{lambda}",
                    window.label,
                    side_name(result.model, false),
                    j + 1
                )?;
            }
        }
    }
    w.flush()?;
    Ok(vec![path])
}

/// Writes the per-window rank-estimator table: one column per window label,
/// rows `ratio`, `scree`, and the variance explained (percent) at the fitted
/// rank. Two-sided runs print `(left, right)` pairs.
pub fn write_rank_table(result: &RollingResult, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let labels: Vec<String> = result.windows.iter().map(|x| x.label.to_string()).collect();
    writeln!(w, "quantity,{}", labels.join(","))?;
    let cell = |window: &WindowResult, pick: &dyn Fn(&ModelFit) -> (String, Option<String>)| {
        let (left, right) = pick(&window.fit);
        match right {
            Some(r) => quote(&format!("({left}, {r})")),
            None => left,
        }
    };
    let ratio_row: Vec<String> = result
        .windows
        .iter()
        .map(|win| {
            cell(win, &|fit| {
                (
                    fit.rank_estimates_left.ratio.to_string(),
                    fit.rank_estimates_right.map(|e| e.ratio.to_string()),
                )
            })
        })
        .collect();
    writeln!(w, "ratio,{}", ratio_row.join(","))?;
    let scree_row: Vec<String> = result
        .windows
        .iter()
        .map(|win| {
            cell(win, &|fit| {
                (
                    fit.rank_estimates_left.scree.to_string(),
                    fit.rank_estimates_right.map(|e| e.scree.to_string()),
                )
            })
        })
        .collect();
    writeln!(w, "scree,{}", scree_row.join(","))?;
    let ve_row: Vec<String> = result
        .windows
        .iter()
        .map(|win| {
            cell(win, &|fit| match fit.variance_explained_sides {
                Some((l, r)) => (
                    format!("{}", l * 100.0),
                    Some(format!("{}", r * 100.0)),
                ),
                None => (format!("{}", fit.variance_explained * 100.0), None),
            })
        })
        .collect();
    writeln!(w, "ve_pct,{}", ve_row.join(","))?;
    w.flush()?;
    Ok(())
}

/// One row of a heatmap file.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRow {
    pub entity: String,
    pub hub: String,
    pub window_label: i32,
    pub loading: f64,
}

pub fn read_heatmap(path: &Path) -> Result<Vec<HeatmapRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |msg: String| Error::Parse { line, msg };
        rows.push(HeatmapRow {
            entity: rec[0].to_string(),
            hub: rec[1].to_string(),
            window_label: rec[2]
                .parse()
                .map_err(|_| parse_err(format!("bad window label {:?}", &rec[2])))?,
            loading: rec[3]
                .parse()
                .map_err(|_| parse_err(format!("bad loading {:?}", &rec[3])))?,
        });
    }
    Ok(rows)
}

pub fn read_dendrogram(path: &Path) -> Result<Vec<Merge>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut merges = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |msg: String| Error::Parse { line, msg };
        merges.push(Merge {
            left: rec[1]
                .parse()
                .map_err(|_| parse_err("bad left id".into()))?,
            right: rec[2]
                .parse()
                .map_err(|_| parse_err("bad right id".into()))?,
            height: rec[3]
                .parse()
                .map_err(|_| parse_err("bad height".into()))?,
            size: rec[4]
                .parse()
                .map_err(|_| parse_err("bad size".into()))?,
        });
    }
    Ok(merges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRow {
    pub hub: String,
    pub side: String,
    pub self_volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRow {
    pub from_hub: String,
    pub to_hub: String,
    pub weight: f64,
    pub direction_flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryEdgeRow {
    pub entity: String,
    pub side: String,
    pub hub: String,
    pub weight: f64,
}

pub fn read_network_nodes(path: &Path) -> Result<Vec<NodeRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(NodeRow {
            hub: rec[0].to_string(),
            side: rec[1].to_string(),
            self_volume: rec[2].parse().map_err(|_| Error::Parse {
                line: 0,
                msg: format!("bad self_volume {:?}", &rec[2]),
            })?,
        });
    }
    Ok(rows)
}

pub fn read_network_edges(path: &Path) -> Result<Vec<EdgeRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(EdgeRow {
            from_hub: rec[0].to_string(),
            to_hub: rec[1].to_string(),
            weight: rec[2].parse().map_err(|_| Error::Parse {
                line: 0,
                msg: format!("bad weight {:?}", &rec[2]),
            })?,
            direction_flipped: rec[3].parse().map_err(|_| Error::Parse {
                line: 0,
                msg: format!("bad flag {:?}", &rec[3]),
            })?,
        });
    }
    Ok(rows)
}

pub fn read_country_edges(path: &Path) -> Result<Vec<CountryEdgeRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(CountryEdgeRow {
            entity: rec[0].to_string(),
            side: rec[1].to_string(),
            hub: rec[2].to_string(),
            weight: rec[3].parse().map_err(|_| Error::Parse {
                line: 0,
                msg: format!("bad weight {:?}", &rec[3]),
            })?,
        });
    }
    Ok(rows)
}

/// Per-side numbers of a fit report.
#[derive(Debug, Clone, Serialize)]
pub struct FitReportSide {
    pub r: usize,
    pub rank_ratio: usize,
    pub rank_scree: usize,
    pub eigenvalue_share: f64,
    pub eigenvalues: Vec<f64>,
}

/// JSON-ready summary of one fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub n: usize,
    pub t: usize,
    pub h0: usize,
    pub centered: bool,
    pub window_start: String,
    pub window_end: String,
    /// Residual-based variance explained over defined cells.
    pub variance_explained: f64,
    /// Per-side projection shares (two-sided model).
    pub variance_explained_sides: Option<(f64, f64)>,
    pub left: FitReportSide,
    pub right: Option<FitReportSide>,
    /// Span discrepancy against a supplied ground truth, when available.
    pub subspace_distance_left: Option<f64>,
    pub subspace_distance_right: Option<f64>,
}

pub fn fit_report(fit: &ModelFit) -> FitReport {
    let side = |r: usize,
                est: crate::estimator::RankEstimates,
                share: f64,
                eigenvalues: &[f64]| FitReportSide {
        r,
        rank_ratio: est.ratio,
        rank_scree: est.scree,
        eigenvalue_share: share,
        eigenvalues: eigenvalues.to_vec(),
    };
    FitReport {
        model: fit.model,
        n: fit.q_left.n(),
        t: fit.factors.len(),
        h0: fit.h0,
        centered: fit.centered,
        window_start: fit.window_start.to_string(),
        window_end: fit.window_end.to_string(),
        variance_explained: fit.variance_explained,
        variance_explained_sides: fit.variance_explained_sides,
        left: side(
            fit.r_left(),
            fit.rank_estimates_left,
            fit.eigenvalue_share_left,
            &fit.eigenvalues_left,
        ),
        right: fit.rank_estimates_right.map(|est| {
            side(
                fit.r_right(),
                est,
                fit.eigenvalue_share_right.unwrap_or(0.0),
                fit.eigenvalues_right.as_deref().unwrap_or(&[]),
            )
        }),
        subspace_distance_left: None,
        subspace_distance_right: None,
    }
}

/// Alignment and normalization record for one window, appended to the fit
/// report in rolling runs.
#[derive(Debug, Clone, Serialize)]
pub struct WindowReport {
    pub label: i32,
    #[serde(flatten)]
    pub fit: FitReport,
    pub alignment_left: crate::rotation::AlignmentMap,
    pub alignment_right: Option<crate::rotation::AlignmentMap>,
    pub rotation_left: Vec<Vec<f64>>,
    pub rotation_right: Option<Vec<Vec<f64>>>,
    pub truncated_mass_left: Vec<f64>,
    pub truncated_mass_right: Option<Vec<f64>>,
}

pub fn window_report(window: &WindowResult) -> WindowReport {
    let rows = |m: &ndarray::Array2<f64>| -> Vec<Vec<f64>> {
        m.rows().into_iter().map(|r| r.to_vec()).collect()
    };
    WindowReport {
        label: window.label,
        fit: fit_report(&window.fit),
        alignment_left: window.left.alignment.clone(),
        alignment_right: window.right.as_ref().map(|s| s.alignment.clone()),
        rotation_left: rows(&window.left.rotation),
        rotation_right: window.right.as_ref().map(|s| rows(&s.rotation)),
        truncated_mass_left: window.left.truncated_mass.clone(),
        truncated_mass_right: window.right.as_ref().map(|s| s.truncated_mass.clone()),
    }
}

/// Writes a loading matrix as CSV with an entity column and hub headers.
pub fn write_loading_csv(
    loading: &crate::spectral::LoadingMatrix,
    path: &Path,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "entity,{}", loading.hub_labels.join(","))?;
    for (i, entity) in loading.entities.iter().enumerate() {
        let row: Vec<String> = (0..loading.r())
            .map(|k| format!("{}", loading.values[[i, k]]))
            .collect();
        writeln!(w, "{},{}", quote(entity), row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a factor series in long form: `time,row_hub,col_hub,value`.
pub fn write_factor_series_csv(
    factors: &crate::estimator::FactorSeries,
    path: &Path,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "time,row_hub,col_hub,value")?;
    for (t, time) in factors.times.iter().enumerate() {
        let f = &factors.values[t];
        for i in 0..f.nrows() {
            for j in 0..f.ncols() {
                writeln!(
                    w,
                    "{time},{},{},{}",
                    factors.hub_labels_left[i],
                    factors.hub_labels_right[j],
                    f[[i, j]]
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_labeled_matrix_csv`].
pub fn read_labeled_matrix_csv(
    path: &Path,
) -> Result<(Vec<String>, Vec<String>, ndarray::Array2<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| s.to_string()).collect());
    }
    if rows.len() < 2 || rows[0].len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "labeled matrix needs a header row and at least one data row".into(),
        });
    }
    let col_labels: Vec<String> = rows[0][1..].to_vec();
    let mut row_labels = Vec::new();
    let mut m = ndarray::Array2::<f64>::zeros((rows.len() - 1, col_labels.len()));
    for (i, row) in rows[1..].iter().enumerate() {
        if row.len() != col_labels.len() + 1 {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("expected {} fields, got {}", col_labels.len() + 1, row.len()),
            });
        }
        row_labels.push(row[0].clone());
        for (j, field) in row[1..].iter().enumerate() {
            m[[i, j]] = field.parse().map_err(|_| Error::Parse {
                line: i + 2,
                msg: format!("bad value {field:?}"),
            })?;
        }
    }
    Ok((row_labels, col_labels, m))
}

/// Writes a plain matrix with row/column labels.
pub fn write_labeled_matrix_csv(
    m: &ndarray::Array2<f64>,
    row_labels: &[String],
    col_labels: &[String],
    path: &Path,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        ",{}",
        col_labels.iter().map(|c| quote(c)).collect::<Vec<_>>().join(",")
    )?;
    for (i, label) in row_labels.iter().enumerate() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[[i, j]])).collect();
        writeln!(w, "{},{}", quote(label), row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{rolling_fit, RollingOptions};
    use crate::estimator::RankSpec;
    use crate::series::YearMonth;
    use crate::simgen::{simulate, GroundTruth};

    fn small_rolling(model: ModelKind) -> RollingResult {
        let truth = GroundTruth::planted_hubs(10, 3, 3.0, 0.7, 1.0, 0.05, 33).unwrap();
        let s = simulate(&truth, 84, YearMonth::new(1982, 1).unwrap()).unwrap();
        rolling_fit(
            &s,
            &RollingOptions {
                window_months: 60,
                step_months: 12,
                model,
                r_left: RankSpec::Fixed(3),
                r_right: RankSpec::Fixed(3),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn unknown_export_kind_is_an_error() {
        assert!(matches!(
            "chord".parse::<PlotData>(),
            Err(Error::UnknownExportKind(_))
        ));
        assert_eq!("HEATMAP".parse::<PlotData>().unwrap(), PlotData::Heatmap);
    }

    #[test]
    fn heatmap_round_trip_reproduces_loadings() {
        let result = small_rolling(ModelKind::SymmetricLoading);
        let dir = tempfile::tempdir().unwrap();
        let files = export_plot_data(&result, PlotData::Heatmap, dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        let rows = read_heatmap(&files[0]).unwrap();
        let n = result.entities.len();
        let r = result.windows[0].left.aligned_sumone.r();
        assert_eq!(rows.len(), n * r * result.windows.len());
        for row in &rows {
            let window = result
                .windows
                .iter()
                .find(|w| w.label == row.window_label)
                .unwrap();
            let loading = &window.left.aligned_sumone;
            let i = loading.entity_index(&row.entity).unwrap();
            let k = loading.hub_labels.iter().position(|h| h == &row.hub).unwrap();
            assert_eq!(row.loading, loading.values[[i, k]], "lossy at {row:?}");
        }
    }

    #[test]
    fn network_shapes_and_round_trip() {
        let result = small_rolling(ModelKind::SymmetricLoading);
        let dir = tempfile::tempdir().unwrap();
        let files = export_plot_data(&result, PlotData::Network, dir.path()).unwrap();
        // Three files per window.
        assert_eq!(files.len(), 3 * result.windows.len());
        let w0 = &result.windows[0];
        let nodes = read_network_nodes(&files[0]).unwrap();
        assert_eq!(nodes.len(), 3);
        let edges = read_network_edges(&files[1]).unwrap();
        assert!(edges.len() <= 9);
        for (k, node) in nodes.iter().enumerate() {
            assert_eq!(node.self_volume, w0.mean_factor[[k, k]]);
        }
        let country = read_country_edges(&files[2]).unwrap();
        let net = hub_network(w0).unwrap();
        for row in &country {
            let i = result.entities.iter().position(|e| e == &row.entity).unwrap();
            let k: usize = row.hub[1..].parse::<usize>().unwrap() - 1;
            assert_eq!(row.weight, net.truncated_left[[i, k]]);
        }
    }

    #[test]
    fn dendrogram_round_trip() {
        let result = small_rolling(ModelKind::SymmetricLoading);
        let dir = tempfile::tempdir().unwrap();
        let files = export_plot_data(&result, PlotData::Dendrogram, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let features = concatenated_loading_features(&result, FeatureSide::Left).unwrap();
        let (expect, _) = ward_cluster(&features, 1).unwrap();
        let merges = read_dendrogram(&files[0]).unwrap();
        assert_eq!(merges, expect);
    }

    #[test]
    fn two_sided_exports_have_both_sides() {
        let result = small_rolling(ModelKind::TwoSided);
        let dir = tempfile::tempdir().unwrap();
        let heat = export_plot_data(&result, PlotData::Heatmap, dir.path()).unwrap();
        assert_eq!(heat.len(), 2);
        let dendro = export_plot_data(&result, PlotData::Dendrogram, dir.path()).unwrap();
        assert_eq!(dendro.len(), 6);
        let scree = export_plot_data(&result, PlotData::Scree, dir.path()).unwrap();
        let text = std::fs::read_to_string(&scree[0]).unwrap();
        assert!(text.contains("export") && text.contains("import"));
    }

    #[test]
    fn rank_table_layout() {
        let result = small_rolling(ModelKind::SymmetricLoading);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rank_table.csv");
        write_rank_table(&result, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("quantity,1984,1985,1986"));
        assert!(lines[1].starts_with("ratio,"));
        assert!(lines[2].starts_with("scree,"));
        assert!(lines[3].starts_with("ve_pct,"));
        let cols = lines[0].split(',').count();
        assert_eq!(cols, 1 + result.windows.len());
    }

    #[test]
    fn fit_report_serializes() {
        let result = small_rolling(ModelKind::TwoSided);
        let report = window_report(&result.windows[0]);
        let json = serde_json::to_string_pretty(&report).unwrap();
        assert!(json.contains("\"variance_explained\""));
        assert!(json.contains("\"rank_ratio\""));
        assert!(json.contains("\"permutation\""));
    }
}
