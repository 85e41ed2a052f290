//! Symmetric eigendecomposition and rank selection.
//!
//! The moment matrices are symmetric non-negative definite, so a cyclic
//! Jacobi sweep is enough: it converges quadratically, preserves symmetry by
//! construction, and keeps the whole decomposition deterministic without an
//! external LAPACK dependency. Eigenvector sign is normalized so the
//! largest-magnitude entry of each column is positive.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::SymmetricAccumulator;

/// Full spectrum of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector paired with `eigenvalues[k]`.
    pub eigenvectors: Array2<f64>,
}

/// Normalization state of a loading matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadingState {
    /// Columns are orthonormal eigenvectors.
    Orthonormal,
    /// Orthonormal columns after a varimax rotation.
    Rotated,
    /// Non-negative columns summing to one.
    SumToOne,
}

/// An `n x r` matrix connecting entities to latent hubs.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    pub values: Array2<f64>,
    pub entities: Vec<String>,
    pub hub_labels: Vec<String>,
    pub state: LoadingState,
}

impl LoadingMatrix {
    pub fn new(values: Array2<f64>, entities: Vec<String>, state: LoadingState) -> Result<Self> {
        if values.nrows() != entities.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} entities",
                values.nrows(),
                entities.len()
            )));
        }
        let hub_labels = (1..=values.ncols()).map(|k| format!("H{k}")).collect();
        Ok(LoadingMatrix {
            values,
            entities,
            hub_labels,
            state,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn r(&self) -> usize {
        self.values.ncols()
    }

    /// Reorders hubs: output column `k` is input column `perm[k]`.
    pub fn permute_hubs(&self, perm: &[usize]) -> Result<LoadingMatrix> {
        let r = self.r();
        if perm.len() != r {
            return Err(Error::ShapeMismatch(format!(
                "permutation length {} != r {r}",
                perm.len()
            )));
        }
        let mut seen = vec![false; r];
        for &p in perm {
            if p >= r || seen[p] {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            seen[p] = true;
        }
        let mut values = Array2::zeros((self.n(), r));
        for (k, &p) in perm.iter().enumerate() {
            values.column_mut(k).assign(&self.values.column(p));
        }
        Ok(LoadingMatrix {
            values,
            entities: self.entities.clone(),
            hub_labels: (1..=r).map(|k| format!("H{k}")).collect(),
            state: self.state,
        })
    }
}

/// `max |(V'V - I)_ij|`, the orthonormality defect.
pub fn orthonormality_defect(v: &Array2<f64>) -> f64 {
    let gram = v.t().dot(v);
    let mut defect = 0.0_f64;
    for ((i, j), g) in gram.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        defect = defect.max((g - target).abs());
    }
    defect
}

/// Flips columns so the largest-magnitude entry of each is positive; ties on
/// magnitude resolve to the first such index. Returns which columns flipped.
pub(crate) fn fix_column_signs(m: &mut Array2<f64>) -> Vec<bool> {
    let (n, r) = (m.nrows(), m.ncols());
    let mut flipped = vec![false; r];
    for k in 0..r {
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for i in 0..n {
            let a = m[[i, k]].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[[best, k]] < 0.0 {
            for i in 0..n {
                m[[i, k]] = -m[[i, k]];
            }
            flipped[k] = true;
        }
    }
    flipped
}

const MAX_SWEEPS: usize = 64;

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigen_matrix(m: &Array2<f64>) -> Result<Spectrum> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut a = m.clone();
    let mut v = Array2::<f64>::eye(n);
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob;

    let mut converged = frob == 0.0 || n == 1;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                // Smaller-magnitude root of t^2 + 2*theta*t - 1 = 0; the
                // asymptotic form avoids overflow in theta^2.
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J' A J on rows/columns p and q.
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        let mut off_sq = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off_sq += 2.0 * a[[p, q]] * a[[p, q]];
            }
        }
        converged = off_sq.sqrt() <= tol;
    }
    if !converged {
        let mut off_sq = 0.0;
        let mut max_entry = 0.0_f64;
        for p in 0..n {
            for q in 0..n {
                max_entry = max_entry.max(a[[p, q]].abs());
                if p < q {
                    off_sq += 2.0 * a[[p, q]] * a[[p, q]];
                }
            }
        }
        return Err(Error::EigenNoConverge {
            sweeps,
            off_norm: off_sq.sqrt(),
            max_entry,
        });
    }

    // Sort eigenpairs descending; stable so equal eigenvalues keep diagonal
    // order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        eigenvectors.column_mut(k).assign(&v.column(i));
    }
    fix_column_signs(&mut eigenvectors);
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Spectrum of a finalized moment accumulator.
pub fn sym_eigen(acc: &SymmetricAccumulator) -> Result<Spectrum> {
    sym_eigen_matrix(acc.matrix())
}

/// Rule for the search bound of the ratio estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankRule {
    CeilHalf,
    CeilThird,
}

impl RankRule {
    pub fn r_max(&self, n: usize) -> usize {
        match self {
            RankRule::CeilHalf => n.div_ceil(2),
            RankRule::CeilThird => n.div_ceil(3),
        }
    }
}

impl std::str::FromStr for RankRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ceil-half" | "half" => Ok(RankRule::CeilHalf),
            "ceil-third" | "third" => Ok(RankRule::CeilThird),
            other => Err(Error::InvalidParameter(format!(
                "r-max rule must be ceil-half or ceil-third, got {other:?}"
            ))),
        }
    }
}

/// Ratio-based rank estimate: the lag `j` in `1..=r_max` minimizing
/// `lambda_{j+1} / lambda_j`, ties resolved to the smallest `j`.
///
/// Eigenvalues below `1e-12 * lambda_1` are floored there first, so trailing
/// ratios beyond the true rank sit near one instead of hitting 0/0.
pub fn ratio_rank(eigenvalues: &[f64], r_max: usize) -> Result<usize> {
    let n = eigenvalues.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "need at least two eigenvalues".into(),
        ));
    }
    if r_max == 0 || r_max > n - 1 {
        return Err(Error::InvalidParameter(format!(
            "r_max must be in 1..={}, got {r_max}",
            n - 1
        )));
    }
    for w in eigenvalues.windows(2) {
        if w[1] > w[0] {
            return Err(Error::InvalidParameter(
                "eigenvalues must be descending".into(),
            ));
        }
    }
    let lambda_1 = eigenvalues[0];
    if lambda_1 <= 0.0 {
        return Err(Error::DegenerateSpectrum(
            "all eigenvalues are zero".into(),
        ));
    }
    let floor = 1e-12 * lambda_1;
    let lam = |j: usize| eigenvalues[j].max(floor);
    let mut best_j = 1usize;
    let mut best_ratio = f64::INFINITY;
    for j in 1..=r_max {
        let ratio = lam(j) / lam(j - 1);
        if ratio < best_ratio {
            best_ratio = ratio;
            best_j = j;
        }
    }
    Ok(best_j)
}

/// Scree rank: the smallest `r` whose cumulative eigenvalue share reaches the
/// threshold. Negative (rounding-level) eigenvalues count as zero.
pub fn scree_rank(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be in (0, 1], got {threshold}"
        )));
    }
    let total: f64 = eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSpectrum(
            "eigenvalue sum is not positive".into(),
        ));
    }
    let mut cum = 0.0;
    for (j, &l) in eigenvalues.iter().enumerate() {
        cum += l.max(0.0);
        if cum / total >= threshold {
            return Ok(j + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Cumulative eigenvalue share of the leading `r` values, the scree-style
/// variance-explained reading.
pub fn eigenvalue_share(eigenvalues: &[f64], r: usize) -> f64 {
    let total: f64 = eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    eigenvalues.iter().take(r).map(|&l| l.max(0.0)).sum::<f64>() / total
}

/// The leading `r` eigenvectors as an orthonormal loading matrix.
pub fn top_loadings(spectrum: &Spectrum, r: usize, entities: &[String]) -> Result<LoadingMatrix> {
    let n = spectrum.eigenvectors.nrows();
    if r == 0 || r > n {
        return Err(Error::InvalidParameter(format!(
            "r must be in 1..={n}, got {r}"
        )));
    }
    if entities.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} entities for {n}-dimensional spectrum",
            entities.len()
        )));
    }
    let values = spectrum.eigenvectors.slice(s![.., ..r]).to_owned();
    LoadingMatrix::new(values, entities.to_vec(), LoadingState::Orthonormal)
}
