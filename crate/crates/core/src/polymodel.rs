//! Multivariate polynomial `g(x₀, …, x_n)` of total degree `Q`.
//!
//! Terms are indexed by exponent tuples in graded-lexicographic order, constant
//! first. In Hermite mode every channel is standardized with the mean and
//! standard deviation of the estimation data and the monomial `x^e` is replaced
//! by the probabilists' Hermite polynomial `He_e(x̃)`. Both bases span the same
//! space, so predictions agree; the Hermite columns are better conditioned on
//! Gaussian-like channels.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, LsSolution, QrAccumulator};

const CHUNK_ROWS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex {
    pub exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.exponents {
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// All exponent tuples of total degree `≤ degree`, graded, lexicographically
/// descending inside each degree: `{00, 10, 01, 20, 11, 02}` for two channels.
pub fn enumerate_multi_indices(n_channels: usize, degree: usize) -> Vec<MultiIndex> {
    fn fill(d: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if pos + 1 == cur.len() {
            cur[pos] = d;
            out.push(MultiIndex { exponents: cur.clone() });
            return;
        }
        for e in (0..=d).rev() {
            cur[pos] = e;
            fill(d - e, pos + 1, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    if n_channels == 0 {
        out.push(MultiIndex { exponents: Vec::new() });
        return out;
    }
    let mut cur = vec![0; n_channels];
    for d in 0..=degree as u32 {
        fill(d, 0, &mut cur, &mut out);
    }
    out
}

/// `C(n_channels + degree, degree)`.
pub fn n_terms(n_channels: usize, degree: usize) -> usize {
    (1..=degree).fold(1usize, |acc, k| acc * (n_channels + k) / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Monomial,
    #[default]
    Hermite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(n_channels: usize) -> Self {
        Standardization {
            mean: vec![0.0; n_channels],
            scale: vec![1.0; n_channels],
        }
    }

    /// Column means and (population) standard deviations; a constant column
    /// keeps unit scale.
    pub fn from_data(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for (c, col) in x.column_iter().enumerate() {
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            if s > 0.0 && s.is_finite() {
                scale.push(s);
            } else {
                log::warn!("channel {c} has zero variance; using unit scale");
                scale.push(1.0);
            }
            mean.push(m);
        }
        Standardization { mean, scale }
    }

    pub fn for_basis(basis: Basis, x: &DMatrix<f64>) -> Self {
        match basis {
            Basis::Monomial => Self::identity(x.ncols()),
            Basis::Hermite => Self::from_data(x),
        }
    }
}

/// Column generator for a fixed set of terms.
struct Design<'a> {
    indices: &'a [MultiIndex],
    basis: Basis,
    std: &'a Standardization,
    degree: usize,
}

impl Design<'_> {
    /// Regressor rows `r0..r0+len` of `x` into the first `len` rows of `out`.
    fn fill(&self, x: &DMatrix<f64>, r0: usize, len: usize, out: &mut DMatrix<f64>) {
        let nc = x.ncols();
        let q = self.degree;
        // table[(c * (q+1) + e) * len + i] = basis_e(x̃_c(r0+i))
        let mut table = vec![0.0; nc * (q + 1) * len];
        for c in 0..nc {
            let (mu, s) = (self.std.mean[c], self.std.scale[c]);
            let xc = x.column(c);
            let col = &xc.as_slice()[r0..r0 + len];
            let base = c * (q + 1) * len;
            table[base..base + len].iter_mut().for_each(|v| *v = 1.0);
            if q == 0 {
                continue;
            }
            for i in 0..len {
                table[base + len + i] = (col[i] - mu) / s;
            }
            for e in 2..=q {
                let (lo, hi) = table[base..].split_at_mut(e * len);
                let (pm2, pm1) = (&lo[(e - 2) * len..(e - 1) * len], &lo[(e - 1) * len..e * len]);
                let x1 = &lo[len..2 * len];
                let cur = &mut hi[..len];
                match self.basis {
                    Basis::Monomial => {
                        for i in 0..len {
                            cur[i] = pm1[i] * x1[i];
                        }
                    }
                    Basis::Hermite => {
                        // He_e = x He_{e−1} − (e−1) He_{e−2}
                        let k = (e - 1) as f64;
                        for i in 0..len {
                            cur[i] = x1[i] * pm1[i] - k * pm2[i];
                        }
                    }
                }
            }
        }
        for (j, idx) in self.indices.iter().enumerate() {
            let mut col = out.column_mut(j);
            let dst = &mut col.as_mut_slice()[..len];
            dst.iter_mut().for_each(|v| *v = 1.0);
            for (c, &e) in idx.exponents.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let src = &table[(c * (q + 1) + e as usize) * len..][..len];
                for i in 0..len {
                    dst[i] *= src[i];
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub psi: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl RegressionProblem {
    pub fn is_determinate(&self) -> bool {
        self.psi.nrows() >= self.psi.ncols()
    }
}

fn check_inputs(x: &DMatrix<f64>, y: Option<&[f64]>) -> Result<()> {
    if let Some(y) = y {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} regressor rows against {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite target sample".into()));
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite channel sample".into()));
    }
    Ok(())
}

/// Materialized regressor matrix `Ψ` for channels `x` (one column per channel).
pub fn build_regressors(
    x: &DMatrix<f64>,
    y: &[f64],
    degree: usize,
    basis: Basis,
    std: &Standardization,
) -> Result<RegressionProblem> {
    check_inputs(x, Some(y))?;
    if std.mean.len() != x.ncols() {
        return Err(Error::DimensionMismatch("standardization does not match channel count".into()));
    }
    let indices = enumerate_multi_indices(x.ncols(), degree);
    let design = Design {
        indices: &indices,
        basis,
        std,
        degree,
    };
    let n = x.nrows();
    let mut psi = DMatrix::zeros(n, indices.len());
    let mut block = DMatrix::zeros(CHUNK_ROWS.min(n.max(1)), indices.len());
    let mut r0 = 0;
    while r0 < n {
        let len = CHUNK_ROWS.min(n - r0);
        design.fill(x, r0, len, &mut block);
        psi.rows_mut(r0, len).copy_from(&block.rows(0, len));
        r0 += len;
    }
    Ok(RegressionProblem { psi, y: y.to_vec() })
}

/// Minimum-norm least squares by orthogonal factorization.
pub fn fit_ls(prob: &RegressionProblem) -> LsSolution {
    let sol = lstsq(&prob.psi, &prob.y);
    if sol.is_rank_deficient() {
        log::warn!("regression is rank deficient ({} of {})", sol.rank, sol.x.len());
    }
    sol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: MultiIndex,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MultiPolyModel {
    pub n_channels: usize,
    pub degree: usize,
    pub basis: Basis,
    pub standardization: Standardization,
    pub terms: Vec<Term>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    n_channels: usize,
    degree: usize,
    basis: Basis,
    standardization: Standardization,
    terms: Vec<Term>,
}

impl TryFrom<RawModel> for MultiPolyModel {
    type Error = Error;

    fn try_from(r: RawModel) -> Result<Self> {
        let expected = enumerate_multi_indices(r.n_channels, r.degree);
        if r.terms.len() != expected.len()
            || r.terms.iter().zip(&expected).any(|(t, e)| &t.exponents != e)
        {
            return Err(Error::InvalidSpec(
                "polynomial terms must list every multi-index in graded-lex order".into(),
            ));
        }
        if r.terms.iter().any(|t| !t.coefficient.is_finite()) {
            return Err(Error::InvalidSpec("non-finite polynomial coefficient".into()));
        }
        if r.standardization.mean.len() != r.n_channels || r.standardization.scale.len() != r.n_channels {
            return Err(Error::InvalidSpec("standardization length does not match channels".into()));
        }
        Ok(MultiPolyModel {
            n_channels: r.n_channels,
            degree: r.degree,
            basis: r.basis,
            standardization: r.standardization,
            terms: r.terms,
        })
    }
}

impl MultiPolyModel {
    pub fn from_coefficients(
        n_channels: usize,
        degree: usize,
        basis: Basis,
        standardization: Standardization,
        coefficients: &[f64],
    ) -> Result<Self> {
        let indices = enumerate_multi_indices(n_channels, degree);
        if coefficients.len() != indices.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} terms",
                coefficients.len(),
                indices.len()
            )));
        }
        Ok(MultiPolyModel {
            n_channels,
            degree,
            basis,
            standardization,
            terms: indices
                .into_iter()
                .zip(coefficients)
                .map(|(exponents, &coefficient)| Term { exponents, coefficient })
                .collect(),
        })
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.terms.iter_mut().for_each(|t| t.coefficient *= c);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub rows: usize,
    pub n_terms: usize,
    pub rank: usize,
    pub condition_number: f64,
    pub residual_sq: f64,
}

#[derive(Debug, Clone)]
pub struct PolyFit {
    pub model: MultiPolyModel,
    pub report: FitReport,
}

/// Fit `g` to `(x, y)` without materializing `Ψ`: rows are generated and
/// folded into the triangular factor chunk by chunk.
pub fn fit_polynomial(x: &DMatrix<f64>, y: &[f64], degree: usize, basis: Basis) -> Result<PolyFit> {
    check_inputs(x, Some(y))?;
    let std = Standardization::for_basis(basis, x);
    let indices = enumerate_multi_indices(x.ncols(), degree);
    let p = indices.len();
    let n = x.nrows();
    if n < p {
        log::warn!("underdetermined regression: {n} rows for {p} terms");
    }
    let design = Design {
        indices: &indices,
        basis,
        std: &std,
        degree,
    };
    let mut acc = QrAccumulator::new(p);
    let mut block = DMatrix::zeros(CHUNK_ROWS.min(n.max(1)), p);
    let mut r0 = 0;
    while r0 < n {
        let len = CHUNK_ROWS.min(n - r0);
        design.fill(x, r0, len, &mut block);
        if len == block.nrows() {
            acc.push_matrix(&block, &y[r0..r0 + len]);
        } else {
            acc.push_matrix(&block.rows(0, len).into_owned(), &y[r0..r0 + len]);
        }
        r0 += len;
    }
    let sol = acc.solve();
    if sol.is_rank_deficient() {
        log::warn!("regression is rank deficient ({} of {p})", sol.rank);
    }
    let report = FitReport {
        rows: n,
        n_terms: p,
        rank: sol.rank,
        condition_number: sol.condition_number(),
        residual_sq: sol.residual_sq,
    };
    let model = MultiPolyModel::from_coefficients(x.ncols(), degree, basis, std, &sol.x)?;
    Ok(PolyFit { model, report })
}

/// `ŷ(t) = Σ β_idx · basis_idx(x(t, ·))` with the standardization frozen at fit time.
pub fn evaluate(model: &MultiPolyModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.n_channels {
        return Err(Error::DimensionMismatch(format!(
            "model has {} channels, data has {}",
            model.n_channels,
            x.ncols()
        )));
    }
    let indices: Vec<MultiIndex> = model.terms.iter().map(|t| t.exponents.clone()).collect();
    let beta = model.coefficients();
    let design = Design {
        indices: &indices,
        basis: model.basis,
        std: &model.standardization,
        degree: model.degree,
    };
    let n = x.nrows();
    let mut out = Vec::with_capacity(n);
    let mut block = DMatrix::zeros(CHUNK_ROWS.min(n.max(1)), indices.len());
    let mut r0 = 0;
    while r0 < n {
        let len = CHUNK_ROWS.min(n - r0);
        design.fill(x, r0, len, &mut block);
        for i in 0..len {
            out.push((0..beta.len()).map(|j| block[(i, j)] * beta[j]).sum());
        }
        r0 += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_channels(n: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, c, |_, _| StandardNormal.sample(&mut rng))
    }

    fn rms(v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn enumeration_order_and_counts() {
        let idx: Vec<String> = enumerate_multi_indices(2, 2).iter().map(|m| m.to_string()).collect();
        assert_eq!(idx, ["00", "10", "01", "20", "11", "02"]);
        assert_eq!(enumerate_multi_indices(5, 0).len(), 1);
        assert_eq!(enumerate_multi_indices(4, 3).len(), 35);
        assert_eq!(n_terms(4, 3), 35);
        assert_eq!(n_terms(10, 3), 286);
        assert_eq!(enumerate_multi_indices(10, 3).len(), 286);
    }

    #[test]
    fn single_channel_monomial_columns() {
        let x = DMatrix::from_column_slice(3, 1, &[2.0, -1.0, 0.5]);
        let p = build_regressors(&x, &[0.0; 3], 3, Basis::Monomial, &Standardization::identity(1)).unwrap();
        assert_eq!(p.psi.row(0).iter().copied().collect::<Vec<_>>(), [1.0, 2.0, 4.0, 8.0]);
        assert_eq!(p.psi.row(1).iter().copied().collect::<Vec<_>>(), [1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn hermite_columns_decorrelate() {
        let x = gaussian_channels(10_000, 1, 4);
        let std = Standardization::from_data(&x);
        let p = build_regressors(&x, &vec![0.0; 10_000], 2, Basis::Hermite, &std).unwrap();
        let (a, b) = (p.psi.column(1), p.psi.column(2));
        let n = a.len() as f64;
        let (ma, mb) = (a.sum() / n, b.sum() / n);
        let cov: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
        let sa = (a.iter().map(|u| (u - ma).powi(2)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n).sqrt();
        assert!((cov / (sa * sb)).abs() < 0.05);
    }

    #[test]
    fn bases_span_the_same_space() {
        let x = gaussian_channels(500, 3, 8);
        let mono = build_regressors(&x, &vec![0.0; 500], 3, Basis::Monomial, &Standardization::identity(3)).unwrap();
        let herm = build_regressors(&x, &vec![0.0; 500], 3, Basis::Hermite, &Standardization::from_data(&x)).unwrap();
        for j in 0..mono.psi.ncols() {
            let col: Vec<f64> = mono.psi.column(j).iter().copied().collect();
            let sol = lstsq(&herm.psi, &col);
            let cn = rms(&col);
            assert!(sol.residual_sq.max(0.0).sqrt() / (500f64.sqrt() * cn) < 1e-10, "column {j}");
        }
    }

    #[test]
    fn exact_and_orthogonal_residual_recovery() {
        let x = gaussian_channels(300, 2, 1);
        let std = Standardization::identity(2);
        let beta: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
        let blank = build_regressors(&x, &vec![0.0; 300], 2, Basis::Monomial, &std).unwrap();
        let y: Vec<f64> = (blank.psi.clone() * nalgebra::DVector::from_vec(beta.clone())).iter().copied().collect();
        let sol = fit_ls(&RegressionProblem { psi: blank.psi.clone(), y: y.clone() });
        for (a, b) in sol.x.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-10);
        }
        // add a vector orthogonal to all columns
        let mut r: Vec<f64> = (0..300).map(|i| ((i * 7) as f64).sin()).collect();
        let proj = lstsq(&blank.psi, &r);
        let fitted = blank.psi.clone() * nalgebra::DVector::from_vec(proj.x);
        r.iter_mut().zip(fitted.iter()).for_each(|(a, b)| *a -= b);
        let y2: Vec<f64> = y.iter().zip(&r).map(|(a, b)| a + b).collect();
        let sol2 = fit_ls(&RegressionProblem { psi: blank.psi, y: y2 });
        for (a, b) in sol2.x.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn recovers_cubic_nonlinearity() {
        let x = gaussian_channels(2000, 1, 3);
        let y: Vec<f64> = x.column(0).iter().map(|v| v + 0.8 * v * v + 0.7 * v * v * v).collect();
        let fit = fit_polynomial(&x, &y, 3, Basis::Monomial).unwrap();
        let beta = fit.model.coefficients();
        for (a, b) in beta.iter().zip([0.0, 1.0, 0.8, 0.7]) {
            assert!((a - b).abs() < 1e-10, "{beta:?}");
        }
        // the Hermite fit predicts the same values
        let herm = fit_polynomial(&x, &y, 3, Basis::Hermite).unwrap();
        let yh = evaluate(&herm.model, &x).unwrap();
        let ym = evaluate(&fit.model, &x).unwrap();
        let scale = rms(&y);
        assert!(yh.iter().zip(&ym).all(|(a, b)| (a - b).abs() < 1e-8 * scale));
        assert!(yh.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-10 * scale));
    }

    #[test]
    fn constant_model_evaluates_to_constant() {
        let mut coeffs = vec![0.0; 10];
        coeffs[0] = 2.5;
        let m = MultiPolyModel::from_coefficients(3, 2, Basis::Monomial, Standardization::identity(3), &coeffs).unwrap();
        let x = gaussian_channels(20, 3, 9);
        assert!(evaluate(&m, &x).unwrap().iter().all(|v| *v == 2.5));
        assert!(evaluate(&m, &gaussian_channels(4, 2, 9)).is_err());
    }

    #[test]
    fn hermite_conditioning_is_no_worse() {
        let mut x = gaussian_channels(5000, 3, 21);
        // correlated, non-unit channels
        for i in 0..5000 {
            let a = x[(i, 0)];
            x[(i, 1)] = 0.6 * a + 0.8 * x[(i, 1)];
            x[(i, 2)] = 3.0 * x[(i, 2)] + 1.5;
        }
        let y = vec![0.0; 5000];
        let m = fit_polynomial(&x, &y, 3, Basis::Monomial).unwrap().report.condition_number;
        let h = fit_polynomial(&x, &y, 3, Basis::Hermite).unwrap().report.condition_number;
        assert!(h <= 1.1 * m, "hermite {h} vs monomial {m}");
    }

    #[test]
    fn zero_variance_channel_falls_back() {
        let x = DMatrix::from_fn(50, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let std = Standardization::from_data(&x);
        assert_eq!(std.scale[0], 1.0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let x = gaussian_channels(100, 2, 2);
        let y: Vec<f64> = x.column(0).iter().zip(x.column(1).iter()).map(|(a, b)| a * b + 0.1).collect();
        let fit = fit_polynomial(&x, &y, 2, Basis::Hermite).unwrap();
        let text = serde_json::to_string(&fit.model).unwrap();
        assert!(text.contains("\"exponents\":[1,1]"));
        let back: MultiPolyModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, fit.model);
        let broken = text.replace("[1,1]", "[2,2]");
        assert!(serde_json::from_str::<MultiPolyModel>(&broken).is_err());
    }

    proptest! {
        #[test]
        fn fit_is_scale_equivariant(seed in 0u64..500, c in -5.0f64..5.0) {
            let x = gaussian_channels(80, 2, seed);
            let y: Vec<f64> = x.column(0).iter().map(|v| v.powi(3) - v).collect();
            let yc: Vec<f64> = y.iter().map(|v| c * v).collect();
            let a = fit_polynomial(&x, &y, 3, Basis::Hermite).unwrap().model.coefficients();
            let b = fit_polynomial(&x, &yc, 3, Basis::Hermite).unwrap().model.coefficients();
            let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((c * u - v).abs() < 1e-9 * scale * c.abs().max(1.0));
            }
        }
    }
}
