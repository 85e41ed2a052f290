//! Factor model fits for flow matrix series.
//!
//! Two families: a shared-loading model `X_t = Q Z_t Q' + E_t` where the same
//! hubs serve both flow directions, and a two-sided model
//! `X_t = Q1 Z_t Q2' + E_t` with separate outbound and inbound hub spaces.
//! Loadings come from the leading eigenvectors of the accumulated moment
//! matrix: the combined (column + row) accumulator for the shared model, the
//! column accumulator for the left space and the row accumulator for the
//! right space in the two-sided model. Factors and residuals follow by
//! projection:
//!
//! ```text
//! Z_t = Q1' X_t Q2        E_t = X_t - Q1 Z_t Q2'
//! ```
//!
//! Undefined diagonal cells are zeroed before projection and excluded from
//! all residual and variance sums; when a series has a defined diagonal
//! (simulated data), those cells participate like any other.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{build_m_matrix, Mode, MomentOptions, MomentPath};
use crate::series::{MatrixSeries, YearMonth};
use crate::spectral::{
    eigenvalue_share, ratio_rank, scree_rank, sym_eigen, top_loadings, LoadingMatrix, RankRule,
    Spectrum,
};

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    /// One loading matrix for both flow directions.
    SymmetricLoading,
    /// Separate outbound (left) and inbound (right) loadings.
    TwoSided,
}

/// Requested number of hubs for one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSpec {
    Fixed(usize),
    /// Resolve with the eigenvalue-ratio estimator.
    Auto,
}

impl std::str::FromStr for RankSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(RankSpec::Auto);
        }
        s.parse::<usize>().map(RankSpec::Fixed).map_err(|_| {
            Error::InvalidParameter(format!("rank must be a positive integer or auto, got {s:?}"))
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sym" | "symmetric" | "shared" => Ok(ModelKind::SymmetricLoading),
            "two" | "two-sided" | "twosided" => Ok(ModelKind::TwoSided),
            other => Err(Error::InvalidParameter(format!(
                "model must be sym or two, got {other:?}"
            ))),
        }
    }
}

/// Fit-time knobs shared by both model families.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub h0: usize,
    pub center: bool,
    pub path: MomentPath,
    /// Search bound rule for the ratio estimator (used by `RankSpec::Auto`
    /// and for the reported estimates).
    pub rank_rule: RankRule,
    /// Threshold for the reported scree estimate.
    pub scree_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            h0: 1,
            center: false,
            path: MomentPath::Fast,
            rank_rule: RankRule::CeilHalf,
            scree_threshold: 0.85,
        }
    }
}

/// Rank estimates recorded for one spectrum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RankEstimates {
    pub ratio: usize,
    pub scree: usize,
}

/// Latent factor matrices aligned to the input time index.
#[derive(Debug, Clone)]
pub struct FactorSeries {
    pub values: Vec<Array2<f64>>,
    pub times: Vec<YearMonth>,
    pub hub_labels_left: Vec<String>,
    pub hub_labels_right: Vec<String>,
}

impl FactorSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A fitted factor model for one window.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub model: ModelKind,
    pub q_left: LoadingMatrix,
    /// `None` for the shared-loading model (left serves both sides).
    pub q_right: Option<LoadingMatrix>,
    pub factors: FactorSeries,
    pub eigenvalues_left: Vec<f64>,
    pub eigenvalues_right: Option<Vec<f64>>,
    pub rank_estimates_left: RankEstimates,
    pub rank_estimates_right: Option<RankEstimates>,
    /// Residual-based share of squared flow explained by the fit.
    pub variance_explained: f64,
    /// Per-side projection shares for the two-sided model (left, right).
    pub variance_explained_sides: Option<(f64, f64)>,
    /// Cumulative eigenvalue share at the chosen rank, the scree-style
    /// variance reading (left side, right side where applicable).
    pub eigenvalue_share_left: f64,
    pub eigenvalue_share_right: Option<f64>,
    pub h0: usize,
    pub centered: bool,
    pub window_start: YearMonth,
    pub window_end: YearMonth,
}

impl ModelFit {
    pub fn r_left(&self) -> usize {
        self.q_left.r()
    }

    pub fn r_right(&self) -> usize {
        self.q_right.as_ref().map_or(self.q_left.r(), |q| q.r())
    }

    /// Right-side loading view: the shared loading when the model has one.
    pub fn q_right_view(&self) -> &LoadingMatrix {
        self.q_right.as_ref().unwrap_or(&self.q_left)
    }

    /// Fitted signal matrix `Q1 Z_t Q2'` at time index `t`.
    pub fn fitted(&self, t: usize) -> Array2<f64> {
        let q1 = &self.q_left.values;
        let q2 = &self.q_right_view().values;
        q1.dot(&self.factors.values[t]).dot(&q2.t())
    }
}

fn resolve_rank(
    spec: RankSpec,
    spectrum: &Spectrum,
    n: usize,
    opts: &FitOptions,
) -> Result<(usize, RankEstimates)> {
    let r_max = opts.rank_rule.r_max(n).min(n - 1);
    let ratio = ratio_rank(&spectrum.eigenvalues, r_max)?;
    let scree = scree_rank(&spectrum.eigenvalues, opts.scree_threshold)?;
    let estimates = RankEstimates { ratio, scree };
    let r = match spec {
        RankSpec::Auto => ratio,
        RankSpec::Fixed(r) => {
            if r == 0 || r > n {
                return Err(Error::InvalidParameter(format!(
                    "r must be in 1..={n}, got {r}"
                )));
            }
            r
        }
    };
    Ok((r, estimates))
}

fn check_length(series: &MatrixSeries, h0: usize) -> Result<()> {
    if series.len() < h0 + 2 {
        return Err(Error::InvalidParameter(format!(
            "series length {} too short for h0 = {h0} (need T >= h0 + 2)",
            series.len()
        )));
    }
    Ok(())
}

/// Squared Frobenius mass of the defined cells: all of them when the
/// diagonal is defined, off-diagonal only otherwise.
fn defined_sq_sum(m: &Array2<f64>, diag_defined: bool) -> f64 {
    let n = m.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if diag_defined || i != j {
                sum += m[[i, j]] * m[[i, j]];
            }
        }
    }
    sum
}

fn variance_sums(series: &MatrixSeries, fit: &ModelFit) -> (f64, f64) {
    let diag = series.diag_defined();
    let mut resid_sq = 0.0;
    let mut data_sq = 0.0;
    for t in 0..series.len() {
        let x = series.dense_zero_diag(t);
        let resid = x - &fit.fitted(t);
        resid_sq += defined_sq_sum(&resid, diag);
        data_sq += defined_sq_sum(x, diag);
    }
    (resid_sq, data_sq)
}

/// Residual-based variance explained, recomputed from the series and the
/// fit's loadings over defined cells only.
pub fn variance_explained(series: &MatrixSeries, fit: &ModelFit) -> Result<f64> {
    let (resid_sq, data_sq) = variance_sums(series, fit);
    if data_sq <= 0.0 {
        return Err(Error::ZeroDenominator(
            "series has no squared flow mass".into(),
        ));
    }
    Ok(1.0 - resid_sq / data_sq)
}

/// Residual series `E_t = X_t - Q1 Z_t Q2'`; the diagonal stays masked when
/// the input's diagonal is undefined.
pub fn residuals(series: &MatrixSeries, fit: &ModelFit) -> Result<MatrixSeries> {
    let values: Vec<Array2<f64>> = (0..series.len())
        .map(|t| series.dense_zero_diag(t) - &fit.fitted(t))
        .collect();
    MatrixSeries::new(
        series.entities().to_vec(),
        series.times().to_vec(),
        values,
        series.diag_defined(),
    )
}

/// Fits the shared-loading model: loadings from the combined column + row
/// moment accumulator, factors by two-sided projection.
pub fn fit_model1(series: &MatrixSeries, r: RankSpec, opts: &FitOptions) -> Result<ModelFit> {
    check_length(series, opts.h0)?;
    let acc = build_m_matrix(
        series,
        &MomentOptions {
            h0: opts.h0,
            mode: Mode::Both,
            path: opts.path,
            center: opts.center,
        },
    )?;
    let spectrum = sym_eigen(&acc)?;
    let n = series.n();
    let (r, estimates) = resolve_rank(r, &spectrum, n, opts)?;
    let q = top_loadings(&spectrum, r, series.entities())?;

    let factors = project_factors(series, &q.values, &q.values, r, r);
    let mut fit = ModelFit {
        model: ModelKind::SymmetricLoading,
        q_left: q,
        q_right: None,
        factors,
        eigenvalue_share_left: eigenvalue_share(&spectrum.eigenvalues, r),
        eigenvalues_left: spectrum.eigenvalues,
        eigenvalues_right: None,
        rank_estimates_left: estimates,
        rank_estimates_right: None,
        variance_explained: 0.0,
        variance_explained_sides: None,
        eigenvalue_share_right: None,
        h0: opts.h0,
        centered: opts.center,
        window_start: series.times()[0],
        window_end: *series.times().last().unwrap(),
    };
    fit.variance_explained = variance_explained(series, &fit)?;
    Ok(fit)
}

/// Fits the two-sided model: the left space from the column accumulator, the
/// right space from the row accumulator, each rank resolved independently.
pub fn fit_model2(
    series: &MatrixSeries,
    r1: RankSpec,
    r2: RankSpec,
    opts: &FitOptions,
) -> Result<ModelFit> {
    check_length(series, opts.h0)?;
    let moment_opts = |mode| MomentOptions {
        h0: opts.h0,
        mode,
        path: opts.path,
        center: opts.center,
    };
    let acc_col = build_m_matrix(series, &moment_opts(Mode::Col))?;
    let acc_row = build_m_matrix(series, &moment_opts(Mode::Row))?;
    let spec_left = sym_eigen(&acc_col)?;
    let spec_right = sym_eigen(&acc_row)?;
    let n = series.n();
    let (r1, est_left) = resolve_rank(r1, &spec_left, n, opts)?;
    let (r2, est_right) = resolve_rank(r2, &spec_right, n, opts)?;
    let q1 = top_loadings(&spec_left, r1, series.entities())?;
    let q2 = top_loadings(&spec_right, r2, series.entities())?;

    let factors = project_factors(series, &q1.values, &q2.values, r1, r2);
    let sides = side_variances(series, &q1.values, &q2.values)?;
    let mut fit = ModelFit {
        model: ModelKind::TwoSided,
        q_left: q1,
        q_right: Some(q2),
        factors,
        eigenvalue_share_left: eigenvalue_share(&spec_left.eigenvalues, r1),
        eigenvalue_share_right: Some(eigenvalue_share(&spec_right.eigenvalues, r2)),
        eigenvalues_left: spec_left.eigenvalues,
        eigenvalues_right: Some(spec_right.eigenvalues),
        rank_estimates_left: est_left,
        rank_estimates_right: Some(est_right),
        variance_explained: 0.0,
        variance_explained_sides: Some(sides),
        h0: opts.h0,
        centered: opts.center,
        window_start: series.times()[0],
        window_end: *series.times().last().unwrap(),
    };
    fit.variance_explained = variance_explained(series, &fit)?;
    Ok(fit)
}

fn project_factors(
    series: &MatrixSeries,
    q1: &Array2<f64>,
    q2: &Array2<f64>,
    r1: usize,
    r2: usize,
) -> FactorSeries {
    let values = (0..series.len())
        .map(|t| q1.t().dot(series.dense_zero_diag(t)).dot(q2))
        .collect();
    FactorSeries {
        values,
        times: series.times().to_vec(),
        hub_labels_left: (1..=r1).map(|k| format!("H{k}")).collect(),
        hub_labels_right: (1..=r2).map(|k| format!("H{k}")).collect(),
    }
}

/// Per-side projection shares: variance explained by the left space alone
/// (row projection) and the right space alone (column projection).
fn side_variances(series: &MatrixSeries, q1: &Array2<f64>, q2: &Array2<f64>) -> Result<(f64, f64)> {
    let diag = series.diag_defined();
    let mut data_sq = 0.0;
    let mut left_resid = 0.0;
    let mut right_resid = 0.0;
    for t in 0..series.len() {
        let x = series.dense_zero_diag(t);
        data_sq += defined_sq_sum(x, diag);
        let left_fit = q1.dot(&q1.t().dot(x));
        left_resid += defined_sq_sum(&(x - &left_fit), diag);
        let right_fit = x.dot(q2).dot(&q2.t());
        right_resid += defined_sq_sum(&(x - &right_fit), diag);
    }
    if data_sq <= 0.0 {
        return Err(Error::ZeroDenominator(
            "series has no squared flow mass".into(),
        ));
    }
    Ok((1.0 - left_resid / data_sq, 1.0 - right_resid / data_sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::YearMonth;
    use crate::simgen::subspace_distance;
    use ndarray::Array1;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ym(y: i32, m: u8) -> YearMonth {
        YearMonth::new(y, m).unwrap()
    }

    /// Orthonormalizes the columns of a random Gaussian matrix.
    fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Array2<f64> {
        let mut q = Array2::<f64>::zeros((n, r));
        for k in 0..r {
            let mut v = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0_f64..1.0));
            for prev in 0..k {
                let proj = q.column(prev).dot(&v);
                let col = q.column(prev).to_owned();
                v.scaled_add(-proj, &col);
            }
            let norm = v.dot(&v).sqrt();
            q.column_mut(k).assign(&(&v / norm));
        }
        q
    }

    /// Noise-free series `X_t = Q1 Z_t Q2'` with persistent factors. The
    /// diagonal is kept defined so the model holds exactly on every cell.
    fn noise_free_series(
        rng: &mut ChaCha8Rng,
        q1: &Array2<f64>,
        q2: &Array2<f64>,
        t_len: usize,
    ) -> MatrixSeries {
        let n = q1.nrows();
        let (r1, r2) = (q1.ncols(), q2.ncols());
        let mut z = Array2::<f64>::zeros((r1, r2));
        let mut values = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            // AR(1) factor entries keep lagged moments alive.
            z = &z * 0.7
                + &Array2::from_shape_fn((r1, r2), |_| rng.gen_range(-1.0_f64..1.0));
            values.push(q1.dot(&z).dot(&q2.t()));
        }
        let entities = (0..n).map(|i| format!("E{i}")).collect();
        let times = (0..t_len).map(|k| ym(2000, 1).plus_months(k as i64)).collect();
        MatrixSeries::new(entities, times, values, true).unwrap()
    }

    #[test]
    fn noise_free_shared_model_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let q = random_orthonormal(&mut rng, 10, 3);
        let s = noise_free_series(&mut rng, &q, &q, 80);
        let fit = fit_model1(&s, RankSpec::Fixed(3), &FitOptions::default()).unwrap();
        assert!(fit.variance_explained >= 1.0 - 1e-8);
        let d = subspace_distance(&fit.q_left.values, &q).unwrap();
        assert!(d <= 1e-6, "subspace distance {d:e}");
        // Residual mass is at rounding level.
        let resid = residuals(&s, &fit).unwrap();
        let resid_norm: f64 = (0..s.len())
            .map(|t| defined_sq_sum(resid.dense_zero_diag(t), true))
            .sum();
        let data_norm: f64 = (0..s.len())
            .map(|t| defined_sq_sum(s.dense_zero_diag(t), true))
            .sum();
        assert!(resid_norm.sqrt() <= 1e-8 * data_norm.sqrt());
    }

    #[test]
    fn noise_free_two_sided_model_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let q1 = random_orthonormal(&mut rng, 10, 3);
        let q2 = random_orthonormal(&mut rng, 10, 2);
        let s = noise_free_series(&mut rng, &q1, &q2, 80);
        let fit = fit_model2(
            &s,
            RankSpec::Fixed(3),
            RankSpec::Fixed(2),
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.variance_explained >= 1.0 - 1e-8);
        assert!(subspace_distance(&fit.q_left.values, &q1).unwrap() <= 1e-6);
        assert!(subspace_distance(&fit.q_right.as_ref().unwrap().values, &q2).unwrap() <= 1e-6);
        let (ve_l, ve_r) = fit.variance_explained_sides.unwrap();
        assert!(ve_l >= 1.0 - 1e-8 && ve_r >= 1.0 - 1e-8);
    }

    #[test]
    fn auto_rank_resolves_by_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q = random_orthonormal(&mut rng, 12, 3);
        let s = noise_free_series(&mut rng, &q, &q, 120);
        let fit = fit_model1(&s, RankSpec::Auto, &FitOptions::default()).unwrap();
        assert_eq!(fit.r_left(), 3);
        assert_eq!(fit.rank_estimates_left.ratio, 3);
        assert!(fit.rank_estimates_left.scree >= 1);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let q = random_orthonormal(&mut rng, 8, 3);
        let s = noise_free_series(&mut rng, &q, &q, 40);
        let fit = fit_model1(&s, RankSpec::Fixed(3), &FitOptions::default()).unwrap();
        for t in [0usize, 17, 39] {
            let fitted = fit.fitted(t);
            let refit = fit.q_left.values.t().dot(&fitted).dot(&fit.q_left.values);
            let diff = (&refit - &fit.factors.values[t])
                .iter()
                .fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!(diff <= 1e-10, "idempotence defect {diff:e}");
        }
    }

    #[test]
    fn residual_identity_two_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let n = 7;
        let entities = (0..n).map(|i| format!("E{i}")).collect();
        let times = (0..30).map(|k| ym(2000, 1).plus_months(k)).collect();
        let values = (0..30)
            .map(|_| Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0_f64..1.0)))
            .collect();
        let s = MatrixSeries::new(entities, times, values, false).unwrap();
        let fit = fit_model1(&s, RankSpec::Fixed(3), &FitOptions::default()).unwrap();
        let q = &fit.q_left.values;
        let proj = q.dot(&q.t());
        let eye = Array2::<f64>::eye(n);
        let complement = &eye - &proj;
        for t in 0..s.len() {
            let x = s.dense_zero_diag(t);
            let direct = x - &fit.fitted(t);
            let split = complement.dot(x) + proj.dot(x).dot(&complement);
            let diff = (&direct - &split)
                .iter()
                .fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!(diff <= 1e-10, "residual identity defect {diff:e} at t = {t}");
        }
    }

    #[test]
    fn variance_explained_monotone_in_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let n = 9;
        let entities: Vec<String> = (0..n).map(|i| format!("E{i}")).collect();
        let times: Vec<YearMonth> = (0..60).map(|k| ym(2000, 1).plus_months(k)).collect();
        let values = (0..60)
            .map(|_| Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0_f64..1.0)))
            .collect();
        let s = MatrixSeries::new(entities, times, values, false).unwrap();
        let mut prev = -1.0;
        for r in 1..=6 {
            let fit = fit_model1(&s, RankSpec::Fixed(r), &FitOptions::default()).unwrap();
            assert!(
                fit.variance_explained >= prev - 1e-12,
                "r = {r}: {} < {prev}",
                fit.variance_explained
            );
            prev = fit.variance_explained;
        }
    }

    #[test]
    fn fit_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let q = random_orthonormal(&mut rng, 6, 2);
        let s = noise_free_series(&mut rng, &q, &q, 40);
        let perm = [3usize, 1, 5, 0, 4, 2];
        let sp = s.permute_entities(&perm).unwrap();
        let fit = fit_model1(&s, RankSpec::Fixed(2), &FitOptions::default()).unwrap();
        let fit_p = fit_model1(&sp, RankSpec::Fixed(2), &FitOptions::default()).unwrap();
        // The loading space of the permuted fit is the permuted loading space.
        let mut permuted_q = Array2::zeros((6, 2));
        for i in 0..6 {
            for k in 0..2 {
                permuted_q[[i, k]] = fit.q_left.values[[perm[i], k]];
            }
        }
        let d = subspace_distance(&fit_p.q_left.values, &permuted_q).unwrap();
        assert!(d <= 1e-8, "subspace distance {d:e}");
        assert!((fit.variance_explained - fit_p.variance_explained).abs() <= 1e-10);
    }

    #[test]
    fn zero_series_is_degenerate() {
        let s = MatrixSeries::new(
            vec!["A".into(), "B".into(), "C".into()],
            (0..5).map(|k| ym(2000, 1).plus_months(k)).collect(),
            vec![Array2::zeros((3, 3)); 5],
            false,
        )
        .unwrap();
        // The moment matrix is identically zero: the spectrum is degenerate
        // before any variance can be computed.
        let err = fit_model1(&s, RankSpec::Fixed(1), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum(_)));
    }

    #[test]
    fn short_series_rejected() {
        let s = MatrixSeries::new(
            vec!["A".into(), "B".into()],
            vec![ym(2000, 1), ym(2000, 2)],
            vec![Array2::ones((2, 2)); 2],
            false,
        )
        .unwrap();
        assert!(fit_model1(&s, RankSpec::Fixed(1), &FitOptions::default()).is_err());
    }
}
