//! Loading post-processing: varimax rotation, sum-to-one normalization, and
//! cross-window hub alignment.
//!
//! Eigenvectors identify the loading space only up to rotation. Varimax picks
//! the orthogonal rotation with approximately simple structure, sum-to-one
//! normalization makes each column read as shares of a hub, and alignment
//! keeps hub positions comparable across rolling windows (by anchor entities
//! or by cosine matching against the previous window).

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{fix_column_signs, orthonormality_defect, LoadingMatrix, LoadingState};

/// Varimax criterion: per-column variance of squared loadings, summed.
pub fn varimax_criterion(m: &Array2<f64>) -> f64 {
    let (n, r) = m.dim();
    let nf = n as f64;
    let mut total = 0.0;
    for k in 0..r {
        let mut sum_sq = 0.0;
        let mut sum_quad = 0.0;
        for i in 0..n {
            let v = m[[i, k]];
            sum_sq += v * v;
            sum_quad += v * v * v * v;
        }
        total += sum_quad / nf - (sum_sq / nf).powi(2);
    }
    total
}

const VARIMAX_TOL: f64 = 1e-8;
const VARIMAX_MAX_SWEEPS: usize = 1000;

/// Rotates an orthonormal loading to its varimax optimum.
///
/// Pairwise plane rotations sweep the column pairs in lexicographic order
/// until the criterion gain of a full sweep drops below `1e-8`. The returned
/// rotation is orthogonal and includes the final deterministic sign fix
/// (largest-magnitude entry of each column positive), so
/// `rotated = input * rotation` up to rounding and the column space is
/// untouched. `r = 1` returns the identity rotation.
pub fn varimax(q: &LoadingMatrix) -> Result<(LoadingMatrix, Array2<f64>)> {
    varimax_with_history(q).map(|(rotated, rotation, _)| (rotated, rotation))
}

/// [`varimax`] plus the criterion value before rotation and after every
/// sweep, for contract checks on the sweep-wise monotonicity.
pub fn varimax_with_history(
    q: &LoadingMatrix,
) -> Result<(LoadingMatrix, Array2<f64>, Vec<f64>)> {
    if !matches!(q.state, LoadingState::Orthonormal | LoadingState::Rotated) {
        return Err(Error::InvalidParameter(
            "varimax expects orthonormal columns".into(),
        ));
    }
    let defect = orthonormality_defect(&q.values);
    if defect > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "varimax input not orthonormal (defect {defect:e})"
        )));
    }
    let (n, r) = q.values.dim();
    let mut lambda = q.values.clone();
    let mut rotation = Array2::<f64>::eye(r);
    let mut history = vec![varimax_criterion(&lambda)];
    if r > 1 {
        let nf = n as f64;
        let mut criterion = history[0];
        for _sweep in 0..VARIMAX_MAX_SWEEPS {
            for k in 0..r - 1 {
                for l in k + 1..r {
                    // Kaiser's closed-form optimal angle for one column pair.
                    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                    for i in 0..n {
                        let x = lambda[[i, k]];
                        let y = lambda[[i, l]];
                        let u = x * x - y * y;
                        let v = 2.0 * x * y;
                        a += u;
                        b += v;
                        c += u * u - v * v;
                        d += 2.0 * u * v;
                    }
                    let num = d - 2.0 * a * b / nf;
                    let den = c - (a * a - b * b) / nf;
                    if num == 0.0 && den == 0.0 {
                        continue;
                    }
                    let angle = 0.25 * num.atan2(den);
                    if angle.abs() < 1e-15 {
                        continue;
                    }
                    let (s, co) = angle.sin_cos();
                    for i in 0..n {
                        let x = lambda[[i, k]];
                        let y = lambda[[i, l]];
                        lambda[[i, k]] = co * x + s * y;
                        lambda[[i, l]] = -s * x + co * y;
                    }
                    for i in 0..r {
                        let x = rotation[[i, k]];
                        let y = rotation[[i, l]];
                        rotation[[i, k]] = co * x + s * y;
                        rotation[[i, l]] = -s * x + co * y;
                    }
                }
            }
            let next = varimax_criterion(&lambda);
            history.push(next);
            let gain = next - criterion;
            criterion = criterion.max(next);
            if gain < VARIMAX_TOL {
                break;
            }
        }
    }
    for (k, flipped) in fix_column_signs(&mut lambda).into_iter().enumerate() {
        if flipped {
            for i in 0..r {
                rotation[[i, k]] = -rotation[[i, k]];
            }
        }
    }
    let rotated = LoadingMatrix {
        values: lambda,
        entities: q.entities.clone(),
        hub_labels: q.hub_labels.clone(),
        state: LoadingState::Rotated,
    };
    Ok((rotated, rotation, history))
}

/// Truncates negatives to zero and rescales each column to sum to one.
///
/// Returns the normalized loading and, per column, the truncated mass
/// fraction: the absolute mass removed divided by the column's total
/// absolute mass before truncation.
pub fn sum_one_normalize(q: &LoadingMatrix) -> Result<(LoadingMatrix, Vec<f64>)> {
    let (n, r) = q.values.dim();
    let mut values = q.values.clone();
    let mut truncated_mass = vec![0.0; r];
    for k in 0..r {
        let mut removed = 0.0;
        let mut abs_total = 0.0;
        let mut positive_sum = 0.0;
        for i in 0..n {
            let v = values[[i, k]];
            abs_total += v.abs();
            if v < 0.0 {
                removed += -v;
            } else {
                positive_sum += v;
            }
        }
        if positive_sum <= 0.0 {
            return Err(Error::SignConvention { column: k });
        }
        truncated_mass[k] = if abs_total > 0.0 { removed / abs_total } else { 0.0 };
        for i in 0..n {
            let v = values[[i, k]];
            values[[i, k]] = if v < 0.0 { 0.0 } else { v / positive_sum };
        }
    }
    Ok((
        LoadingMatrix {
            values,
            entities: q.entities.clone(),
            hub_labels: q.hub_labels.clone(),
            state: LoadingState::SumToOne,
        },
        truncated_mass,
    ))
}

/// Alignment method actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AlignMethod {
    Anchor,
    GreedyMatch,
}

/// One anchored hub position.
#[derive(Debug, Clone, Serialize)]
pub struct AnchorAssignment {
    /// Output position of the hub.
    pub position: usize,
    pub anchor: String,
    /// Input column that was assigned.
    pub source_column: usize,
    /// The anchored entity's loading on that column.
    pub loading: f64,
}

/// How hubs of one window map onto a common ordering.
#[derive(Debug, Clone, Serialize)]
pub struct AlignmentMap {
    /// Output position `k` takes input column `permutation[k]`.
    pub permutation: Vec<usize>,
    pub method: AlignMethod,
    pub anchor_report: Vec<AnchorAssignment>,
    /// Anchors whose unconstrained best column was already claimed; the
    /// conflicted pair fell back to the best remaining column.
    pub contested_anchors: Vec<String>,
}

impl AlignmentMap {
    pub fn identity(r: usize) -> Self {
        AlignmentMap {
            permutation: (0..r).collect(),
            method: AlignMethod::GreedyMatch,
            anchor_report: Vec::new(),
            contested_anchors: Vec::new(),
        }
    }

    pub fn apply(&self, loading: &LoadingMatrix) -> Result<LoadingMatrix> {
        loading.permute_hubs(&self.permutation)
    }
}

/// Alignment target: an ordered anchor-entity list or a reference loading.
pub enum AlignTarget<'a> {
    Anchors(&'a [String]),
    Reference(&'a LoadingMatrix),
}

pub fn align_hubs(current: &LoadingMatrix, target: AlignTarget<'_>) -> Result<AlignmentMap> {
    match target {
        AlignTarget::Anchors(anchors) => align_to_anchors(current, anchors),
        AlignTarget::Reference(reference) => align_to_reference(current, reference),
    }
}

/// Orders hubs by anchor entities: position `m` gets the column with maximum
/// loading on anchor `m` among the columns still unassigned; remaining hubs
/// keep their relative order. A contested anchor (its unconstrained best
/// column already taken by an earlier anchor) is recorded.
pub fn align_to_anchors(current: &LoadingMatrix, anchors: &[String]) -> Result<AlignmentMap> {
    let r = current.r();
    let mut assigned = vec![false; r];
    let mut permutation = Vec::with_capacity(r);
    let mut anchor_report = Vec::new();
    let mut contested = Vec::new();
    for (m, anchor) in anchors.iter().enumerate() {
        if m >= r {
            break;
        }
        let row = current.entity_index(anchor).ok_or_else(|| {
            Error::InvalidParameter(format!("anchor entity {anchor:?} not in series"))
        })?;
        let argmax = |restrict: bool| -> Option<usize> {
            let mut best: Option<(usize, f64)> = None;
            for k in 0..r {
                if restrict && assigned[k] {
                    continue;
                }
                let v = current.values[[row, k]];
                if best.map_or(true, |(_, bv)| v > bv) {
                    best = Some((k, v));
                }
            }
            best.map(|(k, _)| k)
        };
        let unconstrained = argmax(false).expect("r > 0");
        let chosen = argmax(true).expect("unassigned column remains");
        if unconstrained != chosen {
            contested.push(anchor.clone());
        }
        assigned[chosen] = true;
        anchor_report.push(AnchorAssignment {
            position: m,
            anchor: anchor.clone(),
            source_column: chosen,
            loading: current.values[[row, chosen]],
        });
        permutation.push(chosen);
    }
    for k in 0..r {
        if !assigned[k] {
            permutation.push(k);
        }
    }
    Ok(AlignmentMap {
        permutation,
        method: AlignMethod::Anchor,
        anchor_report,
        contested_anchors: contested,
    })
}

fn cosine(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(&b) / (na * nb)
}

/// Matches hubs to a reference window by greedy column-cosine assignment;
/// ties break toward lower hub indices.
pub fn align_to_reference(
    current: &LoadingMatrix,
    reference: &LoadingMatrix,
) -> Result<AlignmentMap> {
    if current.entities != reference.entities {
        return Err(Error::ShapeMismatch(
            "alignment needs identical entity sets".into(),
        ));
    }
    let r = current.r();
    if reference.r() != r {
        return Err(Error::ShapeMismatch(format!(
            "alignment needs equal ranks, got {} vs {r}",
            reference.r()
        )));
    }
    let mut sim = Array2::<f64>::zeros((r, r));
    for a in 0..r {
        for b in 0..r {
            sim[[a, b]] = cosine(reference.values.column(a), current.values.column(b));
        }
    }
    let mut ref_done = vec![false; r];
    let mut cur_done = vec![false; r];
    let mut permutation = vec![0usize; r];
    for _ in 0..r {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..r {
            if ref_done[a] {
                continue;
            }
            for b in 0..r {
                if cur_done[b] {
                    continue;
                }
                if best.map_or(true, |(_, _, bv)| sim[[a, b]] > bv) {
                    best = Some((a, b, sim[[a, b]]));
                }
            }
        }
        let (a, b, _) = best.expect("unassigned pair remains");
        ref_done[a] = true;
        cur_done[b] = true;
        permutation[a] = b;
    }
    Ok(AlignmentMap {
        permutation,
        method: AlignMethod::GreedyMatch,
        anchor_report: Vec::new(),
        contested_anchors: Vec::new(),
    })
}

/// Exhaustive assignment maximizing total column cosine; only for small `r`.
/// Cross-checks the greedy matcher.
pub fn exhaustive_match(
    current: &LoadingMatrix,
    reference: &LoadingMatrix,
) -> Result<AlignmentMap> {
    let r = current.r();
    if r > 8 {
        return Err(Error::InvalidParameter(
            "exhaustive matching is limited to r <= 8".into(),
        ));
    }
    if current.entities != reference.entities || reference.r() != r {
        return Err(Error::ShapeMismatch(
            "exhaustive matching needs matching shapes".into(),
        ));
    }
    let mut sim = Array2::<f64>::zeros((r, r));
    for a in 0..r {
        for b in 0..r {
            sim[[a, b]] = cosine(reference.values.column(a), current.values.column(b));
        }
    }
    let mut perm: Vec<usize> = (0..r).collect();
    let mut best_perm = perm.clone();
    let mut best_score = f64::NEG_INFINITY;
    permute_all(&mut perm, 0, &mut |p| {
        let score: f64 = p.iter().enumerate().map(|(a, &b)| sim[[a, b]]).sum();
        if score > best_score {
            best_score = score;
            best_perm = p.to_vec();
        }
    });
    Ok(AlignmentMap {
        permutation: best_perm,
        method: AlignMethod::GreedyMatch,
        anchor_report: Vec::new(),
        contested_anchors: Vec::new(),
    })
}

fn permute_all(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute_all(items, k + 1, visit);
        items.swap(k, i);
    }
}

impl LoadingMatrix {
    pub fn entity_index(&self, label: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == label)
    }
}
