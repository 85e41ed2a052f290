//! Lagged auto-cross-moment accumulation.
//!
//! For a lag `h`, the column moment between entities `i` and `j` is the
//! averaged outer product of column `i` at time `t` with column `j` at time
//! `t + h`; the row moment is the analogue for rows. Summing
//! `omega * omega'` over all lags up to `h0` and all entity pairs yields a
//! non-negative definite `n x n` matrix whose leading eigenvectors span the
//! loading space.
//!
//! Two evaluation paths produce the same quantity:
//!
//! * `Naive` runs the literal quadruple loop over `(h, i, j)` and serves as
//!   the brute-force oracle. Its summation order is fixed, which makes it the
//!   bit-stable baseline.
//! * `Fast` collapses the entity-pair sums algebraically. Summing the outer
//!   products over `i` and `j` first gives
//!   `M_col(h) = (T-h)^-2 * sum_{t,s} <X_{t+h}, X_{s+h}>_F * X_t X_s'`
//!   (and `X_t' X_s` for rows), so the whole accumulation reduces to a Gram
//!   matrix of vectorized slices plus matrix products. The collapse is exact;
//!   only floating-point summation order differs from `Naive`.
//!
//! Undefined diagonal cells enter every sum as zero, which is equivalent to
//! omitting them.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{MatrixSeries, YearMonth};

/// Which slice vectors feed the outer products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Col,
    Row,
    Both,
}

impl Mode {
    fn wants_col(self) -> bool {
        matches!(self, Mode::Col | Mode::Both)
    }

    fn wants_row(self) -> bool {
        matches!(self, Mode::Row | Mode::Both)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "col" => Ok(Mode::Col),
            "row" => Ok(Mode::Row),
            "both" => Ok(Mode::Both),
            other => Err(Error::InvalidParameter(format!(
                "mode must be col, row, or both, got {other:?}"
            ))),
        }
    }
}

impl std::str::FromStr for MomentPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fast" => Ok(MomentPath::Fast),
            "naive" => Ok(MomentPath::Naive),
            other => Err(Error::InvalidParameter(format!(
                "path must be fast or naive, got {other:?}"
            ))),
        }
    }
}

/// Vector orientation for a single lagged cross-moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Col,
    Row,
}

/// Evaluation path for the accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentPath {
    Fast,
    Naive,
}

#[derive(Debug, Clone, Copy)]
pub struct MomentOptions {
    /// Maximum lag; moments for `h = 1..=h0` are accumulated.
    pub h0: usize,
    pub mode: Mode,
    pub path: MomentPath,
    /// Subtract the per-cell temporal mean over the window before
    /// accumulating (covariance reading instead of raw second moments).
    pub center: bool,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            h0: 1,
            mode: Mode::Both,
            path: MomentPath::Fast,
            center: false,
        }
    }
}

/// The accumulated `n x n` moment matrix plus its provenance.
#[derive(Debug, Clone)]
pub struct SymmetricAccumulator {
    m: Array2<f64>,
    pub h0: usize,
    pub mode: Mode,
    pub path: MomentPath,
    pub centered: bool,
    pub window_start: YearMonth,
    pub window_end: YearMonth,
    pub window_len: usize,
}

impl SymmetricAccumulator {
    /// The finalized matrix, symmetrized to `(m + m') / 2`.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// Largest relative asymmetry before symmetrization was applied; kept for
    /// diagnostics, always at rounding level.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.m.nrows() {
            let row: Vec<String> = (0..self.m.ncols())
                .map(|j| format!("{}", self.m[[i, j]]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Dense zero-diagonal slices, optionally centered by the per-cell temporal
/// mean over the window.
fn prepared_slices(series: &MatrixSeries, center: bool) -> Vec<Array2<f64>> {
    let t_len = series.len();
    let mut slices: Vec<Array2<f64>> = (0..t_len)
        .map(|t| series.dense_zero_diag(t).clone())
        .collect();
    if center {
        let n = series.n();
        let mut mean = Array2::<f64>::zeros((n, n));
        for x in &slices {
            mean += x;
        }
        mean /= t_len as f64;
        for x in &mut slices {
            *x -= &mean;
        }
    }
    slices
}

/// Lag-`h` cross-moment between entity `i` and entity `j`:
/// columns `(1/(T-h)) * sum_t X_t[:,i] X_{t+h}[:,j]'`, or the row analogue.
pub fn lagged_cross_moment(
    series: &MatrixSeries,
    h: usize,
    i: usize,
    j: usize,
    orientation: Orientation,
) -> Result<Array2<f64>> {
    let t_len = series.len();
    let n = series.n();
    if h == 0 || h >= t_len {
        return Err(Error::InvalidParameter(format!(
            "lag h must satisfy 1 <= h <= T-1 = {}, got {h}",
            t_len - 1
        )));
    }
    if i >= n || j >= n {
        return Err(Error::OutOfRange(format!(
            "entity indices ({i}, {j}) out of range for n = {n}"
        )));
    }
    let tau = t_len - h;
    let mut omega = Array2::<f64>::zeros((n, n));
    for t in 0..tau {
        let x0 = series.dense_zero_diag(t);
        let x1 = series.dense_zero_diag(t + h);
        match orientation {
            Orientation::Col => {
                for a in 0..n {
                    for b in 0..n {
                        omega[[a, b]] += x0[[a, i]] * x1[[b, j]];
                    }
                }
            }
            Orientation::Row => {
                for a in 0..n {
                    for b in 0..n {
                        omega[[a, b]] += x0[[i, a]] * x1[[j, b]];
                    }
                }
            }
        }
    }
    omega /= tau as f64;
    Ok(omega)
}

/// Accumulates the moment matrix for the given window and options.
pub fn build_m_matrix(series: &MatrixSeries, opts: &MomentOptions) -> Result<SymmetricAccumulator> {
    let t_len = series.len();
    if opts.h0 == 0 || opts.h0 >= t_len {
        return Err(Error::InvalidParameter(format!(
            "h0 must satisfy 1 <= h0 <= T-1 = {}, got {}",
            t_len - 1,
            opts.h0
        )));
    }
    let slices = prepared_slices(series, opts.center);
    let (col, row) = match opts.path {
        MomentPath::Naive => accumulate_naive(&slices, opts)?,
        MomentPath::Fast => accumulate_fast(&slices, opts)?,
    };
    // Finalize each orientation as (m + m') / 2, then add, so the combined
    // mode is bit-identical to the sum of the single-mode accumulators.
    let symmetrize = |m: Array2<f64>| (&m + &m.t()) / 2.0;
    let n = series.n();
    let mut m = Array2::<f64>::zeros((n, n));
    if let Some(c) = col {
        m += &symmetrize(c);
    }
    if let Some(r) = row {
        m += &symmetrize(r);
    }
    Ok(SymmetricAccumulator {
        m,
        h0: opts.h0,
        mode: opts.mode,
        path: opts.path,
        centered: opts.center,
        window_start: series.times()[0],
        window_end: *series.times().last().unwrap(),
        window_len: t_len,
    })
}

type ModePair = (Option<Array2<f64>>, Option<Array2<f64>>);

/// Literal quadruple loop over `(h, i, j)` and both orientations.
fn accumulate_naive(slices: &[Array2<f64>], opts: &MomentOptions) -> Result<ModePair> {
    let t_len = slices.len();
    let n = slices[0].nrows();
    let mut m_col = opts.mode.wants_col().then(|| Array2::<f64>::zeros((n, n)));
    let mut m_row = opts.mode.wants_row().then(|| Array2::<f64>::zeros((n, n)));
    let mut omega = Array2::<f64>::zeros((n, n));
    for h in 1..=opts.h0 {
        let tau = t_len - h;
        for i in 0..n {
            for j in 0..n {
                if let Some(acc) = m_col.as_mut() {
                    omega.fill(0.0);
                    for t in 0..tau {
                        let x0 = &slices[t];
                        let x1 = &slices[t + h];
                        for a in 0..n {
                            for b in 0..n {
                                omega[[a, b]] += x0[[a, i]] * x1[[b, j]];
                            }
                        }
                    }
                    omega /= tau as f64;
                    add_outer_product_square(acc, &omega);
                }
                if let Some(acc) = m_row.as_mut() {
                    omega.fill(0.0);
                    for t in 0..tau {
                        let x0 = &slices[t];
                        let x1 = &slices[t + h];
                        for a in 0..n {
                            for b in 0..n {
                                omega[[a, b]] += x0[[i, a]] * x1[[j, b]];
                            }
                        }
                    }
                    omega /= tau as f64;
                    add_outer_product_square(acc, &omega);
                }
            }
        }
        check_finite(&m_col, h)?;
        check_finite(&m_row, h)?;
    }
    Ok((m_col, m_row))
}

/// acc += omega * omega'
fn add_outer_product_square(acc: &mut Array2<f64>, omega: &Array2<f64>) {
    let n = omega.nrows();
    for a in 0..n {
        for b in 0..n {
            let mut sum = 0.0;
            for k in 0..n {
                sum += omega[[a, k]] * omega[[b, k]];
            }
            acc[[a, b]] += sum;
        }
    }
}

/// Algebraic collapse of the entity-pair sums. One Gram matrix of vectorized
/// slices serves every lag and both orientations.
fn accumulate_fast(slices: &[Array2<f64>], opts: &MomentOptions) -> Result<ModePair> {
    let t_len = slices.len();
    let n = slices[0].nrows();
    // Rows of `y` are the vectorized slices.
    let mut y = Array2::<f64>::zeros((t_len, n * n));
    for (t, x) in slices.iter().enumerate() {
        y.row_mut(t)
            .assign(&x.view().into_shape_with_order(n * n).unwrap());
    }
    // gram[t, s] = <X_t, X_s>_F
    let gram = y.dot(&y.t());

    let mut m_col = opts.mode.wants_col().then(|| Array2::<f64>::zeros((n, n)));
    let mut m_row = opts.mode.wants_row().then(|| Array2::<f64>::zeros((n, n)));
    for h in 1..=opts.h0 {
        let tau = t_len - h;
        // weighted[t] = sum_s gram[t+h, s+h] * X_s, stacked as rows.
        let gram_h = gram.slice(s![h.., h..]);
        let y0 = y.slice(s![..tau, ..]);
        let weighted = gram_h.dot(&y0);
        let scale = 1.0 / (tau as f64 * tau as f64);
        let mut col_h = m_col.as_ref().map(|_| Array2::<f64>::zeros((n, n)));
        let mut row_h = m_row.as_ref().map(|_| Array2::<f64>::zeros((n, n)));
        for t in 0..tau {
            let w_t = weighted
                .index_axis(Axis(0), t)
                .into_shape_with_order((n, n))
                .unwrap();
            let x_t = &slices[t];
            if let Some(acc) = col_h.as_mut() {
                *acc += &x_t.dot(&w_t.t());
            }
            if let Some(acc) = row_h.as_mut() {
                *acc += &x_t.t().dot(&w_t);
            }
        }
        if let (Some(acc), Some(part)) = (m_col.as_mut(), col_h) {
            acc.scaled_add(scale, &part);
        }
        if let (Some(acc), Some(part)) = (m_row.as_mut(), row_h) {
            acc.scaled_add(scale, &part);
        }
        check_finite(&m_col, h)?;
        check_finite(&m_row, h)?;
    }
    Ok((m_col, m_row))
}

fn check_finite(acc: &Option<Array2<f64>>, lag: usize) -> Result<()> {
    if let Some(m) = acc {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { lag });
        }
    }
    Ok(())
}
