//! Rolling-window estimation, entity clustering, and hub-network summaries.
//!
//! The rolling driver fits one model per window, rotates and normalizes the
//! loadings, and aligns hub positions across windows so that column `k` means
//! the same hub in every window: the first window is ordered by anchor
//! entities, later windows match the previous window by column cosine, with
//! anchors taking precedence when both are available.
//!
//! Factors travel with the loadings. When a loading is re-expressed in
//! sum-to-one form via pure column operations `A = Q T`, the factors become
//! `F_t = T^-1 Z_t T'^-1`, which keeps `A F_t A' = Q Z_t Q'` exactly and puts
//! `F_t` in the original flow units: the sum of its entries equals the total
//! fitted flow.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{
    fit_model1, fit_model2, FactorSeries, FitOptions, ModelFit, ModelKind, RankSpec,
};
use crate::rotation::{
    align_to_anchors, align_to_reference, sum_one_normalize, varimax, AlignMethod, AlignmentMap,
};
use crate::series::MatrixSeries;
use crate::spectral::LoadingMatrix;

/// Rolling-window estimation settings.
#[derive(Debug, Clone)]
pub struct RollingOptions {
    pub window_months: usize,
    pub step_months: usize,
    pub model: ModelKind,
    pub r_left: RankSpec,
    /// Ignored for the shared-loading model.
    pub r_right: RankSpec,
    pub fit: FitOptions,
    /// Ordered anchor entities; empty disables anchor alignment.
    pub anchors: Vec<String>,
}

impl Default for RollingOptions {
    fn default() -> Self {
        RollingOptions {
            window_months: 60,
            step_months: 12,
            model: ModelKind::SymmetricLoading,
            r_left: RankSpec::Fixed(4),
            r_right: RankSpec::Fixed(4),
            fit: FitOptions::default(),
            anchors: Vec::new(),
        }
    }
}

/// One side's loading pipeline for a window: rotation, normalization,
/// alignment.
#[derive(Debug, Clone)]
pub struct AlignedLoadings {
    /// Varimax rotation (orthogonal, sign fix folded in).
    pub rotation: Array2<f64>,
    /// Sum-to-one display loading before alignment.
    pub raw_sumone: LoadingMatrix,
    /// Sum-to-one display loading after alignment.
    pub aligned_sumone: LoadingMatrix,
    /// Exact sum-to-one loading (column operations only, no truncation),
    /// aligned. Satisfies `aligned_exact * factors * other' = fitted` to
    /// rounding.
    pub aligned_exact: Array2<f64>,
    pub alignment: AlignmentMap,
    /// Truncated-mass fractions, in aligned column order.
    pub truncated_mass: Vec<f64>,
}

/// One fitted, aligned window.
#[derive(Debug, Clone)]
pub struct WindowResult {
    /// Mid-year label (the year at the window's midpoint month).
    pub label: i32,
    pub start_index: usize,
    pub fit: ModelFit,
    pub left: AlignedLoadings,
    /// `None` for the shared-loading model.
    pub right: Option<AlignedLoadings>,
    /// Aligned factors in flow units.
    pub factors_flow: FactorSeries,
    /// Temporal mean of the flow-unit factors.
    pub mean_factor: Array2<f64>,
}

impl WindowResult {
    pub fn right_view(&self) -> &AlignedLoadings {
        self.right.as_ref().unwrap_or(&self.left)
    }
}

/// All windows of a rolling run.
#[derive(Debug, Clone)]
pub struct RollingResult {
    pub model: ModelKind,
    pub entities: Vec<String>,
    pub anchors: Vec<String>,
    pub windows: Vec<WindowResult>,
}

/// Everything about one window that can be computed before alignment.
struct PreparedWindow {
    label: i32,
    start_index: usize,
    fit: ModelFit,
    left: PreparedSide,
    right: Option<PreparedSide>,
    /// Flow-unit factors, un-aligned.
    factors_flow: Vec<Array2<f64>>,
}

struct PreparedSide {
    rotation: Array2<f64>,
    raw_sumone: LoadingMatrix,
    truncated_mass: Vec<f64>,
    /// Exact sum-to-one loading, un-aligned.
    exact: Array2<f64>,
    /// Column sums of the rotated orthonormal loading.
    colsums: Vec<f64>,
}

fn prepare_side(q: &LoadingMatrix) -> Result<PreparedSide> {
    let (rotated, rotation) = varimax(q)?;
    let (raw_sumone, truncated_mass) = sum_one_normalize(&rotated)?;
    let (n, r) = rotated.values.dim();
    let mut colsums = Vec::with_capacity(r);
    let mut exact = rotated.values.clone();
    for k in 0..r {
        let c: f64 = rotated.values.column(k).sum();
        if c <= 1e-12 * (n as f64).sqrt() {
            return Err(Error::SignConvention { column: k });
        }
        colsums.push(c);
        for i in 0..n {
            exact[[i, k]] /= c;
        }
    }
    Ok(PreparedSide {
        rotation,
        raw_sumone,
        truncated_mass,
        exact,
        colsums,
    })
}

/// `diag(c1) R1' Z R2 diag(c2)`: factors re-expressed for sum-to-one
/// loadings on both sides.
fn flow_factor(
    z: &Array2<f64>,
    left: &PreparedSide,
    right: &PreparedSide,
) -> Array2<f64> {
    let mut f = left.rotation.t().dot(z).dot(&right.rotation);
    for ((i, j), v) in f.indexed_iter_mut() {
        *v *= left.colsums[i] * right.colsums[j];
    }
    f
}

fn prepare_window(
    series: &MatrixSeries,
    start: usize,
    opts: &RollingOptions,
) -> Result<PreparedWindow> {
    let sub = series.window(start, opts.window_months)?;
    let label = sub.times()[opts.window_months / 2].year;
    let fit = match opts.model {
        ModelKind::SymmetricLoading => fit_model1(&sub, opts.r_left, &opts.fit)?,
        ModelKind::TwoSided => fit_model2(&sub, opts.r_left, opts.r_right, &opts.fit)?,
    };
    let left = prepare_side(&fit.q_left)?;
    let right = match &fit.q_right {
        Some(q) => Some(prepare_side(q)?),
        None => None,
    };
    let right_ref = right.as_ref().unwrap_or(&left);
    let factors_flow = fit
        .factors
        .values
        .iter()
        .map(|z| flow_factor(z, &left, right_ref))
        .collect();
    Ok(PreparedWindow {
        label,
        start_index: start,
        fit,
        left,
        right,
        factors_flow,
    })
}

/// `first` then `then`, as one permutation.
fn compose(first: &[usize], then: &[usize]) -> Vec<usize> {
    then.iter().map(|&k| first[k]).collect()
}

/// Aligns one side: greedy match against the previous window when available,
/// anchors applied on top (first window: anchors alone).
fn align_side(
    raw: &LoadingMatrix,
    previous: Option<&LoadingMatrix>,
    anchors: &[String],
) -> Result<AlignmentMap> {
    let r = raw.r();
    let greedy = match previous {
        Some(prev) => align_to_reference(raw, prev)?,
        None => AlignmentMap::identity(r),
    };
    if anchors.is_empty() {
        return Ok(greedy);
    }
    let greedy_aligned = greedy.apply(raw)?;
    let anchor_map = align_to_anchors(&greedy_aligned, anchors)?;
    let is_identity = anchor_map.permutation.iter().enumerate().all(|(k, &p)| k == p);
    if is_identity && previous.is_some() {
        // Greedy order already honors the anchors.
        return Ok(AlignmentMap {
            anchor_report: anchor_map.anchor_report,
            contested_anchors: anchor_map.contested_anchors,
            ..greedy
        });
    }
    Ok(AlignmentMap {
        permutation: compose(&greedy.permutation, &anchor_map.permutation),
        method: AlignMethod::Anchor,
        anchor_report: anchor_map.anchor_report,
        contested_anchors: anchor_map.contested_anchors,
    })
}

fn finish_side(side: PreparedSide, map: AlignmentMap) -> Result<AlignedLoadings> {
    let aligned_sumone = map.apply(&side.raw_sumone)?;
    let r = side.raw_sumone.r();
    let n = side.raw_sumone.n();
    let mut aligned_exact = Array2::zeros((n, r));
    let mut truncated_mass = Vec::with_capacity(r);
    for (k, &p) in map.permutation.iter().enumerate() {
        aligned_exact.column_mut(k).assign(&side.exact.column(p));
        truncated_mass.push(side.truncated_mass[p]);
    }
    Ok(AlignedLoadings {
        rotation: side.rotation,
        raw_sumone: side.raw_sumone,
        aligned_sumone,
        aligned_exact,
        alignment: map,
        truncated_mass,
    })
}

fn permute_factor(
    f: &Array2<f64>,
    left_perm: &[usize],
    right_perm: &[usize],
) -> Array2<f64> {
    let (r1, r2) = f.dim();
    Array2::from_shape_fn((r1, r2), |(i, j)| f[[left_perm[i], right_perm[j]]])
}

/// Fits every rolling window, aligns hubs across windows, and re-expresses
/// factors in flow units.
pub fn rolling_fit(series: &MatrixSeries, opts: &RollingOptions) -> Result<RollingResult> {
    let t_len = series.len();
    if opts.window_months == 0 || opts.window_months > t_len {
        return Err(Error::InvalidParameter(format!(
            "window of {} months does not fit a series of length {t_len}",
            opts.window_months
        )));
    }
    if opts.step_months == 0 {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let starts: Vec<usize> = (0..)
        .map(|w| w * opts.step_months)
        .take_while(|&s| s + opts.window_months <= t_len)
        .collect();

    // Windows are independent; fit them in parallel, collect in order.
    let prepared: Vec<PreparedWindow> = starts
        .par_iter()
        .map(|&start| prepare_window(series, start, opts))
        .collect::<Result<_>>()?;

    // Alignment is a sequential pass: each window aligns to the previous one.
    let mut windows: Vec<WindowResult> = Vec::with_capacity(prepared.len());
    for prep in prepared {
        let prev = windows.last();
        let left_map = align_side(
            &prep.left.raw_sumone,
            prev.map(|w| &w.left.aligned_sumone),
            &opts.anchors,
        )?;
        let right_map = match &prep.right {
            Some(side) => Some(align_side(
                &side.raw_sumone,
                prev.map(|w| &w.right_view().aligned_sumone),
                &opts.anchors,
            )?),
            None => None,
        };
        let left_perm = left_map.permutation.clone();
        let right_perm = right_map
            .as_ref()
            .map(|m| m.permutation.clone())
            .unwrap_or_else(|| left_perm.clone());
        let factors_values: Vec<Array2<f64>> = prep
            .factors_flow
            .iter()
            .map(|f| permute_factor(f, &left_perm, &right_perm))
            .collect();
        let mean_factor = mean_matrix(&factors_values);
        let factors_flow = FactorSeries {
            values: factors_values,
            times: prep.fit.factors.times.clone(),
            hub_labels_left: (1..=left_perm.len()).map(|k| format!("H{k}")).collect(),
            hub_labels_right: (1..=right_perm.len()).map(|k| format!("H{k}")).collect(),
        };
        let left = finish_side(prep.left, left_map)?;
        let right = match (prep.right, right_map) {
            (Some(side), Some(map)) => Some(finish_side(side, map)?),
            _ => None,
        };
        windows.push(WindowResult {
            label: prep.label,
            start_index: prep.start_index,
            fit: prep.fit,
            left,
            right,
            factors_flow,
            mean_factor,
        });
    }
    Ok(RollingResult {
        model: opts.model,
        entities: series.entities().to_vec(),
        anchors: opts.anchors.clone(),
        windows,
    })
}

fn mean_matrix(values: &[Array2<f64>]) -> Array2<f64> {
    let mut mean = Array2::<f64>::zeros(values[0].dim());
    for v in values {
        mean += v;
    }
    mean /= values.len() as f64;
    mean
}

/// Hub-level summary of one window, ready for network plotting.
#[derive(Debug, Clone, Serialize)]
pub struct HubNetwork {
    /// Temporal mean of the flow-unit factor matrices.
    pub mean_factor: Array2<f64>,
    /// Display loading after the `10 A` truncation rule, columns sum to one.
    pub truncated_left: Array2<f64>,
    pub truncated_right: Option<Array2<f64>>,
    /// Main diagonal of the mean factor: within-hub volume.
    pub hub_self_volume: Vec<f64>,
    /// Positions of negative mean-factor entries, read as reversed flow.
    pub direction_flips: Vec<(usize, usize)>,
}

/// Sparsifies a sum-to-one loading: keep entries whose value rounds to a
/// non-zero integer after scaling by ten (half away from zero), then
/// renormalize the survivors to column sum one.
pub fn truncate_loadings_ten_rule(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, r) = a.dim();
    let mut out = Array2::<f64>::zeros((n, r));
    for k in 0..r {
        let mut kept = 0.0;
        for i in 0..n {
            if (10.0 * a[[i, k]]).round() != 0.0 {
                kept += a[[i, k]];
            }
        }
        if kept <= 0.0 {
            return Err(Error::DegenerateSpectrum(format!(
                "column {k} has no loading above the rounding threshold"
            )));
        }
        for i in 0..n {
            if (10.0 * a[[i, k]]).round() != 0.0 {
                out[[i, k]] = a[[i, k]] / kept;
            }
        }
    }
    Ok(out)
}

/// Builds the hub-network summary for one aligned window.
pub fn hub_network(window: &WindowResult) -> Result<HubNetwork> {
    let mean_factor = window.mean_factor.clone();
    let truncated_left = truncate_loadings_ten_rule(&window.left.aligned_sumone.values)?;
    let truncated_right = match &window.right {
        Some(side) => Some(truncate_loadings_ten_rule(&side.aligned_sumone.values)?),
        None => None,
    };
    let d = mean_factor.nrows().min(mean_factor.ncols());
    let hub_self_volume = (0..d).map(|k| mean_factor[[k, k]]).collect();
    let direction_flips = mean_factor
        .indexed_iter()
        .filter(|(_, &v)| v < 0.0)
        .map(|((i, j), _)| (i, j))
        .collect();
    Ok(HubNetwork {
        mean_factor,
        truncated_left,
        truncated_right,
        hub_self_volume,
        direction_flips,
    })
}

/// One agglomeration step; leaves are `0..n`, the merge at step `m` creates
/// cluster id `n + m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Cluster dissimilarity at the merge (squared-distance scale).
    pub height: f64,
    /// Leaves under the new cluster.
    pub size: usize,
}

/// Agglomerative clustering under Ward's minimum-variance criterion.
///
/// Dissimilarities start as squared Euclidean distances between feature rows
/// and update through the Lance-Williams recurrence
/// `d(u+v, w) = [(n_u + n_w) d(u, w) + (n_v + n_w) d(v, w) - n_w d(u, v)]
/// / (n_u + n_v + n_w)`. Ties break toward the pair with the lowest entity
/// indices. Returns the merge tree and the labels of the `k`-cluster cut,
/// numbered by each cluster's lowest entity index.
pub fn ward_cluster(features: &Array2<f64>, k: usize) -> Result<(Vec<Merge>, Vec<usize>)> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter("no feature rows".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }

    // Active cluster bookkeeping, indexed by slot.
    let mut dist = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let mut d = 0.0;
            for c in 0..features.ncols() {
                let diff = features[[i, c]] - features[[j, c]];
                d += diff * diff;
            }
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut size: Vec<usize> = vec![1; n];
    let mut cluster_id: Vec<usize> = (0..n).collect();
    let mut lowest: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        // Lowest-entity ordering makes tie-breaking deterministic.
        let mut order: Vec<usize> = (0..n).filter(|&s| active[s]).collect();
        order.sort_by_key(|&s| lowest[s]);
        let mut best: Option<(usize, usize, f64)> = None;
        for (a_pos, &a) in order.iter().enumerate() {
            for &b in &order[a_pos + 1..] {
                let d = dist[[a, b]];
                if best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((a, b, d));
                }
            }
        }
        let (a, b, height) = best.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &w in &order {
            if w == a || w == b {
                continue;
            }
            let nw = size[w] as f64;
            let updated = ((na + nw) * dist[[a, w]] + (nb + nw) * dist[[b, w]]
                - nw * height)
                / (na + nb + nw);
            dist[[a, w]] = updated;
            dist[[w, a]] = updated;
        }
        merges.push(Merge {
            left: cluster_id[a].min(cluster_id[b]),
            right: cluster_id[a].max(cluster_id[b]),
            height,
            size: size[a] + size[b],
        });
        // The merged cluster lives in slot `a`.
        size[a] += size[b];
        cluster_id[a] = n + step;
        lowest[a] = lowest[a].min(lowest[b]);
        active[b] = false;
    }

    // Cut: apply the first n - k merges with a union-find over leaves.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let mut members: Vec<Vec<usize>> = (0..2 * n - 1).map(|_| Vec::new()).collect();
    for i in 0..n {
        members[i] = vec![i];
    }
    for (step, merge) in merges.iter().take(n - k).enumerate() {
        let mut all = members[merge.left].clone();
        all.extend(members[merge.right].iter().copied());
        let root = all[0];
        for &leaf in &all[1..] {
            let r = find(&mut parent, leaf);
            parent[r] = find(&mut parent, root);
        }
        members[n + step] = all;
    }
    let mut roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    // Number clusters by their lowest entity index.
    let mut cluster_lowest: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let root = roots[i];
        if !cluster_lowest.iter().any(|&(r, _)| r == root) {
            cluster_lowest.push((root, i));
        }
    }
    cluster_lowest.sort_by_key(|&(_, low)| low);
    let label_of_root = |root: usize| -> usize {
        cluster_lowest.iter().position(|&(r, _)| r == root).unwrap()
    };
    let labels: Vec<usize> = roots.iter_mut().map(|r| label_of_root(*r)).collect();
    Ok((merges, labels))
}

/// Which loading side feeds clustering features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeatureSide {
    Left,
    Right,
    /// Left and right features concatenated (two-sided model).
    Joint,
}

/// Entity feature rows: aligned sum-to-one loadings concatenated across all
/// windows (one window's loading also works by slicing the result of a
/// single-window run).
pub fn concatenated_loading_features(
    result: &RollingResult,
    side: FeatureSide,
) -> Result<Array2<f64>> {
    if result.windows.is_empty() {
        return Err(Error::InvalidParameter("no windows".into()));
    }
    let n = result.entities.len();
    let take = |w: &WindowResult, s: FeatureSide| -> Vec<Array2<f64>> {
        match s {
            FeatureSide::Left => vec![w.left.aligned_sumone.values.clone()],
            FeatureSide::Right => vec![w.right_view().aligned_sumone.values.clone()],
            FeatureSide::Joint => vec![
                w.left.aligned_sumone.values.clone(),
                w.right_view().aligned_sumone.values.clone(),
            ],
        }
    };
    let mut blocks: Vec<Array2<f64>> = Vec::new();
    for w in &result.windows {
        blocks.extend(take(w, side));
    }
    let total_cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut features = Array2::<f64>::zeros((n, total_cols));
    let mut at = 0;
    for block in blocks {
        let c = block.ncols();
        features
            .slice_mut(ndarray::s![.., at..at + c])
            .assign(&block);
        at += c;
    }
    Ok(features)
}

/// Total fitted flow per month: `1' (Q1 Z_t Q2') 1`.
pub fn fitted_total_flow(fit: &ModelFit) -> Vec<f64> {
    let ones_left = Array1::<f64>::ones(fit.q_left.n());
    (0..fit.factors.len())
        .map(|t| {
            let fitted = fit.fitted(t);
            ones_left.dot(&fitted.dot(&ones_left))
        })
        .collect()
}
