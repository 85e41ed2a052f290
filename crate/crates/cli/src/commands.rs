//! Subcommand implementations.
//!
//! Each command resolves its flags through the config layers, does its work
//! against a staging directory, and echoes the effective configuration as
//! `run_config.json` next to its artifacts. Nothing here writes timestamps
//! into artifacts, so identical configurations produce byte-identical output
//! trees.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use hubnet::analysis::{
    rolling_fit, truncate_loadings_ten_rule, ward_cluster, RollingOptions, RollingResult,
    WindowResult,
};
use hubnet::error::{Error, Result};
use hubnet::estimator::{FitOptions, ModelKind, RankSpec};
use hubnet::export::{
    export_plot_data, read_heatmap, read_labeled_matrix_csv, window_report,
    write_factor_series_csv, write_labeled_matrix_csv, write_loading_csv, write_network_files,
    write_rank_table, PlotData,
};
use hubnet::moments::{build_m_matrix, MomentOptions, MomentPath};
use hubnet::series::{ingest_long_csv, mirror_impute, read_long_records, PartialPanel, YearMonth};
use hubnet::simgen::{simulate, subspace_distance, GroundTruth, NoiseMode};
use hubnet::spectral::{ratio_rank, scree_rank, sym_eigen, RankRule};

use crate::cli;
use crate::config::{echo_config, with_staged_dir, Layers};

/// Resolved knobs shared by every estimation command.
#[derive(Debug, Clone, Serialize)]
pub struct CommonConfig {
    pub seed: u64,
    pub workers: usize,
    pub determinism: bool,
}

pub fn resolve_common(common: &cli::CommonArgs, layers: &Layers) -> Result<CommonConfig> {
    Ok(CommonConfig {
        seed: layers.resolve(common.seed, "seed", 0)?,
        workers: layers.resolve(common.workers, "workers", 0)?,
        determinism: layers.resolve(common.determinism, "determinism", false)?,
    })
}

/// Bounds the rayon pool. Zero workers means all available cores; the
/// determinism flag forces a single worker so every reduction runs in
/// sequence.
pub fn init_workers(common: &CommonConfig) {
    let threads = if common.determinism {
        1
    } else {
        common.workers
    };
    if threads > 0 {
        // Ignore the error when a pool already exists (tests call this
        // repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn moment_path(requested: Option<MomentPath>, common: &CommonConfig) -> MomentPath {
    if common.determinism {
        MomentPath::Naive
    } else {
        requested.unwrap_or(MomentPath::Fast)
    }
}

#[derive(Debug, Clone, Serialize)]
struct SimulateConfig {
    subcommand: &'static str,
    n: usize,
    r1: usize,
    r2: usize,
    model: ModelKind,
    t: usize,
    start: String,
    phi: f64,
    sigma_f: f64,
    sigma_e: f64,
    loading: String,
    dominance: f64,
    noise_rho: Option<f64>,
    keep_diagonal: bool,
    out: PathBuf,
    #[serde(flatten)]
    common: CommonConfig,
}

pub fn run_simulate(args: &cli::SimulateArgs, layers: &Layers) -> Result<()> {
    let common = resolve_common(&args.common, layers)?;
    let r1 = layers.resolve(args.r.or(args.r1), "r", 3)?;
    let r2 = layers.resolve(args.r2.or(args.r), "r2", r1)?;
    let config = SimulateConfig {
        subcommand: "simulate",
        n: layers.resolve(args.n, "n", 24)?,
        r1,
        r2,
        model: layers.resolve(args.model, "model", ModelKind::SymmetricLoading)?,
        t: layers.resolve(args.t, "t", 408)?,
        start: layers.resolve(args.start.clone(), "start", "1982-01".to_string())?,
        phi: layers.resolve(args.phi, "phi", 0.7)?,
        sigma_f: layers.resolve(args.sigma_f, "sigma-f", 1.0)?,
        sigma_e: layers.resolve(args.sigma_e, "sigma-e", 1.0)?,
        loading: layers.resolve(args.loading.clone(), "loading", "gaussian".to_string())?,
        dominance: layers.resolve(args.dominance, "dominance", 3.0)?,
        noise_rho: layers.resolve_opt(args.noise_rho, "noise-rho")?,
        keep_diagonal: layers.resolve(args.keep_diagonal, "keep-diagonal", false)?,
        out: args.out.clone(),
        common,
    };
    let start: YearMonth = config.start.parse()?;
    let mut truth = match (config.loading.as_str(), config.model) {
        ("planted", _) => GroundTruth::planted_hubs(
            config.n,
            config.r1,
            config.dominance,
            config.phi,
            config.sigma_f,
            config.sigma_e,
            config.common.seed,
        )?,
        ("gaussian", ModelKind::SymmetricLoading) => GroundTruth::random_shared(
            config.n,
            config.r1,
            config.phi,
            config.sigma_f,
            config.sigma_e,
            config.common.seed,
        )?,
        ("gaussian", ModelKind::TwoSided) => GroundTruth::random_two_sided(
            config.n,
            config.r1,
            config.r2,
            config.phi,
            config.sigma_f,
            config.sigma_e,
            config.common.seed,
        )?,
        (other, _) => {
            return Err(Error::InvalidParameter(format!(
                "loading must be gaussian or planted, got {other:?}"
            )))
        }
    };
    if let Some(rho) = config.noise_rho {
        truth = truth.with_noise_mode(NoiseMode::CrossCorrelated { rho });
    }
    if config.keep_diagonal {
        truth = truth.with_defined_diagonal();
    }
    let series = simulate(&truth, config.t, start)?;
    with_staged_dir(&config.out, |dir| {
        series.export_long_csv(&dir.join("series.csv"))?;
        let json = serde_json::to_string_pretty(&truth)?;
        std::fs::write(dir.join("truth.json"), json + "\n")?;
        echo_config(&config, dir)
    })?;
    eprintln!(
        "simulated {} months x {} entities into {}",
        config.t,
        config.n,
        config.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct IngestConfig {
    subcommand: &'static str,
    input: Option<PathBuf>,
    exports: Option<PathBuf>,
    imports: Option<PathBuf>,
    strict: bool,
    smooth: bool,
    emit: String,
    out: PathBuf,
    #[serde(flatten)]
    common: CommonConfig,
}

pub fn run_ingest(args: &cli::IngestArgs, layers: &Layers) -> Result<()> {
    let common = resolve_common(&args.common, layers)?;
    let config = IngestConfig {
        subcommand: "ingest",
        input: args.input.clone(),
        exports: args.exports.clone(),
        imports: args.imports.clone(),
        strict: layers.resolve(args.strict, "strict", true)?,
        smooth: layers.resolve(args.smooth, "smooth", false)?,
        emit: layers.resolve(args.emit.clone(), "emit", "long".to_string())?,
        out: args.out.clone(),
        common,
    };
    #[derive(Serialize)]
    struct Report<A, B> {
        ingest: Option<A>,
        mirror: Option<B>,
        smoothed: bool,
        n: usize,
        t: usize,
    }
    let (series, ingest_report, mirror_report) = match (&config.imports, &config.exports) {
        (Some(imports), exports) => {
            let export_path = exports
                .clone()
                .or_else(|| config.input.clone())
                .ok_or_else(|| {
                    Error::InvalidParameter(
                        "mirror mode needs --exports (or --input) alongside --imports".into(),
                    )
                })?;
            let export_panel = PartialPanel::from_records(&read_long_records(&export_path)?)?;
            let import_panel = PartialPanel::from_records(&read_long_records(imports)?)?;
            let (series, report) = mirror_impute(&export_panel, &import_panel, config.strict)?;
            (series, None, Some(report))
        }
        (None, _) => {
            let input = config.input.clone().ok_or_else(|| {
                Error::InvalidParameter("ingest needs --input (or --exports/--imports)".into())
            })?;
            let (series, report) = ingest_long_csv(&input, config.strict)?;
            (series, Some(report), None)
        }
    };
    let series = if config.smooth {
        series.three_month_average()?
    } else {
        series
    };
    with_staged_dir(&config.out, |dir| {
        match config.emit.as_str() {
            "long" => series.export_long_csv(&dir.join("series.csv"))?,
            "matrices" => {
                series.export_matrix_csvs(&dir.join("matrices"))?;
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "emit must be long or matrices, got {other:?}"
                )))
            }
        }
        let report = Report {
            ingest: ingest_report.clone(),
            mirror: mirror_report.clone(),
            smoothed: config.smooth,
            n: series.n(),
            t: series.len(),
        };
        std::fs::write(
            dir.join("ingest_report.json"),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
        echo_config(&config, dir)
    })?;
    eprintln!(
        "ingested {} months x {} entities into {}",
        series.len(),
        series.n(),
        config.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct RankConfig {
    subcommand: &'static str,
    input: PathBuf,
    h0: usize,
    mode: hubnet::moments::Mode,
    center: bool,
    path: MomentPath,
    r_max_rule: RankRule,
    scree_threshold: f64,
    strict: bool,
    dump_m: bool,
    out: Option<PathBuf>,
    #[serde(flatten)]
    common: CommonConfig,
}

pub fn run_rank(args: &cli::RankArgs, layers: &Layers) -> Result<()> {
    let common = resolve_common(&args.common, layers)?;
    let config = RankConfig {
        subcommand: "rank",
        input: args.input.clone(),
        h0: layers.resolve(args.h0, "h0", 1)?,
        mode: layers.resolve(args.mode, "mode", hubnet::moments::Mode::Both)?,
        center: layers.resolve(args.center, "center", false)?,
        path: moment_path(layers.resolve_opt(args.path, "path")?, &common),
        r_max_rule: layers.resolve(args.r_max_rule, "r-max-rule", RankRule::CeilHalf)?,
        scree_threshold: layers.resolve(args.scree_threshold, "scree-threshold", 0.85)?,
        strict: layers.resolve(args.strict, "strict", true)?,
        dump_m: layers.resolve(args.dump_m, "dump-m", false)?,
        out: args.out.clone(),
        common,
    };
    let (series, _) = ingest_long_csv(&config.input, config.strict)?;
    let acc = build_m_matrix(
        &series,
        &MomentOptions {
            h0: config.h0,
            mode: config.mode,
            path: config.path,
            center: config.center,
        },
    )?;
    let spectrum = sym_eigen(&acc)?;
    let r_max = config.r_max_rule.r_max(series.n()).min(series.n() - 1);
    let ratio = ratio_rank(&spectrum.eigenvalues, r_max)?;
    let scree = scree_rank(&spectrum.eigenvalues, config.scree_threshold)?;
    println!("ratio_rank,{ratio}");
    println!("scree_rank,{scree}");
    let eigen_csv = {
        let mut text = String::from("index,eigenvalue\n");
        for (j, lambda) in spectrum.eigenvalues.iter().enumerate() {
            text.push_str(&format!("{},{lambda}\n", j + 1));
        }
        text
    };
    match &config.out {
        Some(out) => with_staged_dir(out, |dir| {
            std::fs::write(dir.join("eigenvalues.csv"), &eigen_csv)?;
            if config.dump_m {
                acc.write_csv(&dir.join("m_matrix.csv"))?;
            }
            echo_config(&config, dir)
        })?,
        None => print!("{eigen_csv}"),
    }
    Ok(())
}

/// Shared resolution for estimate and rolling.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationConfig {
    subcommand: &'static str,
    input: PathBuf,
    model: ModelKind,
    r: String,
    r2: String,
    h0: usize,
    center: bool,
    path: MomentPath,
    r_max_rule: RankRule,
    scree_threshold: f64,
    strict: bool,
    smooth: bool,
    window: usize,
    step: usize,
    anchors: Vec<String>,
    truth: Option<PathBuf>,
    exports: Vec<String>,
    out: PathBuf,
    #[serde(flatten)]
    common: CommonConfig,
}

fn rank_to_string(r: RankSpec) -> String {
    match r {
        RankSpec::Auto => "auto".into(),
        RankSpec::Fixed(v) => v.to_string(),
    }
}

fn resolve_estimation(
    subcommand: &'static str,
    args: &cli::EstimationArgs,
    layers: &Layers,
    default_window: Option<usize>,
) -> Result<(EstimationConfig, RollingOptions)> {
    let common = resolve_common(&args.common, layers)?;
    let r_left = layers.resolve(args.r, "r", RankSpec::Fixed(4))?;
    let r_right = layers.resolve(args.r2.or(args.r), "r2", r_left)?;
    let window = match default_window {
        Some(d) => layers.resolve(args.window, "window", d)?,
        // `estimate` fits the whole series as one window.
        None => 0,
    };
    let anchors_raw: String = layers.resolve(args.anchors.clone(), "anchors", String::new())?;
    let anchors: Vec<String> = anchors_raw
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let exports_raw: String = layers.resolve(
        args.exports.clone(),
        "exports",
        "heatmap,network,dendrogram,scree".to_string(),
    )?;
    let exports: Vec<String> = exports_raw
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let config = EstimationConfig {
        subcommand,
        input: args.input.clone(),
        model: layers.resolve(args.model, "model", ModelKind::SymmetricLoading)?,
        r: rank_to_string(r_left),
        r2: rank_to_string(r_right),
        h0: layers.resolve(args.h0, "h0", 1)?,
        center: layers.resolve(args.center, "center", false)?,
        path: moment_path(layers.resolve_opt(args.path, "path")?, &common),
        r_max_rule: layers.resolve(args.r_max_rule, "r-max-rule", RankRule::CeilHalf)?,
        scree_threshold: layers.resolve(args.scree_threshold, "scree-threshold", 0.85)?,
        strict: layers.resolve(args.strict, "strict", true)?,
        smooth: layers.resolve(args.smooth, "smooth", false)?,
        window,
        step: layers.resolve(args.step, "step", 12)?,
        anchors: anchors.clone(),
        truth: args.truth.clone(),
        exports,
        out: args.out.clone(),
        common,
    };
    let rolling = RollingOptions {
        window_months: config.window,
        step_months: config.step,
        model: config.model,
        r_left,
        r_right,
        fit: FitOptions {
            h0: config.h0,
            center: config.center,
            path: config.path,
            rank_rule: config.r_max_rule,
            scree_threshold: config.scree_threshold,
        },
        anchors,
    };
    Ok((config, rolling))
}

fn load_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Per-window artifact directory: loadings, factors, mean factor, report.
fn write_window_dir(
    window: &WindowResult,
    model: ModelKind,
    truth: Option<&GroundTruth>,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let suffixes: Vec<(&str, bool)> = match model {
        ModelKind::SymmetricLoading => vec![("", true)],
        ModelKind::TwoSided => vec![("_export", true), ("_import", false)],
    };
    for (suffix, left) in &suffixes {
        let side = if *left { &window.left } else { window.right_view() };
        let ortho = if *left {
            &window.fit.q_left
        } else {
            window.fit.q_right_view()
        };
        write_loading_csv(ortho, &dir.join(format!("loadings_orthonormal{suffix}.csv")))?;
        write_loading_csv(
            &side.aligned_sumone,
            &dir.join(format!("loadings_sumone{suffix}.csv")),
        )?;
    }
    write_factor_series_csv(&window.factors_flow, &dir.join("factors.csv"))?;
    write_labeled_matrix_csv(
        &window.mean_factor,
        &window.factors_flow.hub_labels_left,
        &window.factors_flow.hub_labels_right,
        &dir.join("mean_factor.csv"),
    )?;
    let mut report = window_report(window);
    if let Some(truth) = truth {
        report.fit.subspace_distance_left = Some(subspace_distance(
            &window.fit.q_left.values,
            &truth.q_left()?,
        )?);
        report.fit.subspace_distance_right = Some(subspace_distance(
            &window.fit.q_right_view().values,
            &truth.q_right()?,
        )?);
    }
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(())
}

fn run_pipeline(config: &EstimationConfig, rolling: &RollingOptions) -> Result<RollingResult> {
    let (series, _) = ingest_long_csv(&config.input, config.strict)?;
    let series = if config.smooth {
        series.three_month_average()?
    } else {
        series
    };
    let mut opts = rolling.clone();
    if opts.window_months == 0 {
        opts.window_months = series.len();
        opts.step_months = series.len();
    }
    rolling_fit(&series, &opts)
}

pub fn run_estimate(args: &cli::EstimationArgs, layers: &Layers) -> Result<()> {
    let (config, rolling) = resolve_estimation("estimate", args, layers, None)?;
    init_workers(&config.common);
    let result = run_pipeline(&config, &rolling)?;
    let truth = config.truth.as_deref().map(load_truth).transpose()?;
    let window = &result.windows[0];
    with_staged_dir(&config.out, |dir| {
        write_window_dir(window, result.model, truth.as_ref(), dir)?;
        let mut eigen = String::from("side,index,eigenvalue\n");
        let fit = &window.fit;
        for (j, l) in fit.eigenvalues_left.iter().enumerate() {
            let side = if fit.eigenvalues_right.is_some() { "export" } else { "shared" };
            eigen.push_str(&format!("{side},{},{l}\n", j + 1));
        }
        if let Some(right) = &fit.eigenvalues_right {
            for (j, l) in right.iter().enumerate() {
                eigen.push_str(&format!("import,{},{l}\n", j + 1));
            }
        }
        std::fs::write(dir.join("eigenvalues.csv"), eigen)?;
        echo_config(&config, dir)
    })?;
    eprintln!(
        "estimate: variance explained {:.6}",
        window.fit.variance_explained
    );
    Ok(())
}

pub fn run_rolling(args: &cli::EstimationArgs, layers: &Layers) -> Result<()> {
    let (config, rolling) = resolve_estimation("rolling", args, layers, Some(60))?;
    init_workers(&config.common);
    let result = run_pipeline(&config, &rolling)?;
    let truth = config.truth.as_deref().map(load_truth).transpose()?;
    with_staged_dir(&config.out, |dir| {
        write_rank_table(&result, &dir.join("rank_table.csv"))?;
        for kind in &config.exports {
            let what: PlotData = kind.parse()?;
            export_plot_data(&result, what, dir)?;
        }
        for window in &result.windows {
            let wdir = dir.join("windows").join(window.label.to_string());
            write_window_dir(window, result.model, truth.as_ref(), &wdir)?;
        }
        echo_config(&config, dir)
    })?;
    eprintln!(
        "rolling: {} windows labeled {}..{} into {}",
        result.windows.len(),
        result.windows.first().map(|w| w.label).unwrap_or_default(),
        result.windows.last().map(|w| w.label).unwrap_or_default(),
        config.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ClusterConfig {
    subcommand: &'static str,
    heatmap: PathBuf,
    k: usize,
    per_window: bool,
    out: PathBuf,
    #[serde(flatten)]
    common: CommonConfig,
}

/// Rebuilds entity feature rows from a heatmap artifact and clusters them.
pub fn run_cluster(args: &cli::ClusterArgs, layers: &Layers) -> Result<()> {
    let common = resolve_common(&args.common, layers)?;
    let heatmap = match (&args.heatmap, &args.rolling_dir) {
        (Some(h), _) => h.clone(),
        (None, Some(dir)) => {
            let shared = dir.join("heatmap.csv");
            if shared.exists() {
                shared
            } else {
                dir.join(format!(
                    "heatmap_{}.csv",
                    layers.resolve(args.side.clone(), "side", "export".to_string())?
                ))
            }
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "cluster needs --heatmap or --rolling-dir".into(),
            ))
        }
    };
    let config = ClusterConfig {
        subcommand: "cluster",
        heatmap,
        k: layers.resolve(args.k, "k", 4)?,
        per_window: layers.resolve(args.per_window, "per-window", false)?,
        out: args.out.clone(),
        common,
    };
    let rows = read_heatmap(&config.heatmap)?;
    if rows.is_empty() {
        return Err(Error::InvalidParameter("heatmap file has no rows".into()));
    }
    // Entity order of first appearance matches the series order the file
    // was written in.
    let mut entities: Vec<String> = Vec::new();
    for row in &rows {
        if !entities.contains(&row.entity) {
            entities.push(row.entity.clone());
        }
    }
    let mut labels: Vec<i32> = rows.iter().map(|r| r.window_label).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut hubs: Vec<String> = rows.iter().map(|r| r.hub.clone()).collect();
    hubs.sort();
    hubs.dedup();
    let index_of = |v: &[String], key: &str| v.iter().position(|x| x == key).unwrap();
    let feature_block = |label: i32| -> Array2<f64> {
        let mut block = Array2::<f64>::zeros((entities.len(), hubs.len()));
        for row in rows.iter().filter(|r| r.window_label == label) {
            block[[index_of(&entities, &row.entity), index_of(&hubs, &row.hub)]] = row.loading;
        }
        block
    };
    with_staged_dir(&config.out, |dir| {
        use std::io::Write;
        if config.per_window {
            let mut w = std::io::BufWriter::new(std::fs::File::create(
                dir.join("clusters_per_window.csv"),
            )?);
            writeln!(w, "window_label,entity,cluster")?;
            for &label in &labels {
                let (_, assignment) = ward_cluster(&feature_block(label), config.k)?;
                for (i, entity) in entities.iter().enumerate() {
                    writeln!(w, "{label},{entity},{}", assignment[i])?;
                }
            }
            w.flush()?;
        } else {
            let mut features = Array2::<f64>::zeros((entities.len(), labels.len() * hubs.len()));
            for (b, &label) in labels.iter().enumerate() {
                features
                    .slice_mut(ndarray::s![.., b * hubs.len()..(b + 1) * hubs.len()])
                    .assign(&feature_block(label));
            }
            let (merges, assignment) = ward_cluster(&features, config.k)?;
            let mut w =
                std::io::BufWriter::new(std::fs::File::create(dir.join("clusters.csv"))?);
            writeln!(w, "entity,cluster")?;
            for (i, entity) in entities.iter().enumerate() {
                writeln!(w, "{entity},{}", assignment[i])?;
            }
            w.flush()?;
            let mut w =
                std::io::BufWriter::new(std::fs::File::create(dir.join("dendrogram.csv"))?);
            writeln!(w, "step,left,right,height,size")?;
            for (step, m) in merges.iter().enumerate() {
                writeln!(w, "{step},{},{},{},{}", m.left, m.right, m.height, m.size)?;
            }
            w.flush()?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(
                dir.join("dendrogram_leaves.csv"),
            )?);
            writeln!(w, "id,entity")?;
            for (i, e) in entities.iter().enumerate() {
                writeln!(w, "{i},{e}")?;
            }
            w.flush()?;
        }
        echo_config(&config, dir)
    })?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ExportNetworkConfig {
    subcommand: &'static str,
    rolling_dir: PathBuf,
    window: String,
    out: PathBuf,
    #[serde(flatten)]
    common: CommonConfig,
}

/// Rebuilds network node/edge tables from a rolling run's stored window
/// artifacts.
pub fn run_export_network(args: &cli::ExportNetworkArgs, layers: &Layers) -> Result<()> {
    let common = resolve_common(&args.common, layers)?;
    let config = ExportNetworkConfig {
        subcommand: "export-network",
        rolling_dir: args.rolling_dir.clone(),
        window: layers.resolve(args.window.clone(), "window-label", String::new())?,
        out: args.out.clone(),
        common,
    };
    let windows_root = config.rolling_dir.join("windows");
    let mut window_dirs: Vec<PathBuf> = Vec::new();
    if config.window.is_empty() {
        for entry in std::fs::read_dir(&windows_root)? {
            let entry = entry?;
            if entry.path().is_dir() {
                window_dirs.push(entry.path());
            }
        }
        window_dirs.sort();
    } else {
        let dir = windows_root.join(&config.window);
        if !dir.is_dir() {
            return Err(Error::InvalidParameter(format!(
                "no window directory {}",
                dir.display()
            )));
        }
        window_dirs.push(dir);
    }
    with_staged_dir(&config.out, |dir| {
        for wdir in &window_dirs {
            let label = wdir.file_name().unwrap().to_string_lossy().to_string();
            let (hub_rows, _, mean_factor) =
                read_labeled_matrix_csv(&wdir.join("mean_factor.csv"))?;
            let shared = wdir.join("loadings_sumone.csv");
            let (model, loading_paths) = if shared.exists() {
                (ModelKind::SymmetricLoading, vec![shared])
            } else {
                (
                    ModelKind::TwoSided,
                    vec![
                        wdir.join("loadings_sumone_export.csv"),
                        wdir.join("loadings_sumone_import.csv"),
                    ],
                )
            };
            let mut truncated: Vec<Array2<f64>> = Vec::new();
            let mut entities: Vec<String> = Vec::new();
            for path in &loading_paths {
                let (rows, _, values) = read_labeled_matrix_csv(path)?;
                entities = rows;
                truncated.push(truncate_loadings_ten_rule(&values)?);
            }
            let _ = hub_rows;
            write_network_files(
                dir,
                &label,
                model,
                &entities,
                &mean_factor,
                &truncated[0],
                truncated.get(1),
            )?;
        }
        echo_config(&config, dir)
    })?;
    Ok(())
}

