//! Best linear approximation: nonparametric FRF and its parametric rational fit.
//!
//! The rational fit minimizes `(1/N_F) Σ W(k) |Ĝ(k) − B(k)/A(k)|²` over the
//! stacked coefficient vector `θ = [a₀ … a_{n_a}, b₀ … b_{n_b}]` with `‖θ‖₂ = 1`.
//! It starts from Levy's linearization, runs Sanathanan–Koerner reweighting
//! and finishes with Levenberg–Marquardt on the true cost.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{right_singular, QrAccumulator};
use crate::ratfun::{PoleSet, RationalTF};
use crate::signals::{dft, SignalRecord};

/// FRF on the excited bins only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonparametricBla {
    pub excited_bins: Vec<usize>,
    /// Angular frequency `ω_k` of each bin, rad/sample.
    pub omegas: Vec<f64>,
    pub frf: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl NonparametricBla {
    pub fn new(omegas: Vec<f64>, frf: Vec<Complex64>) -> Result<Self> {
        if omegas.len() != frf.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies for {} FRF values",
                omegas.len(),
                frf.len()
            )));
        }
        let n = omegas.len();
        Ok(NonparametricBla {
            excited_bins: (0..n).collect(),
            omegas,
            frf,
            weights: vec![1.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.frf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frf.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.frf.iter_mut().for_each(|g| *g *= c);
        out
    }
}

/// Bin-wise `Y/U` of the per-period averaged spectra.
pub fn estimate_frf(u: &SignalRecord, y: &SignalRecord, n_periods: usize) -> Result<NonparametricBla> {
    if u.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} samples, output {}",
            u.len(),
            y.len()
        )));
    }
    if n_periods == 0 || u.is_empty() || u.len() % n_periods != 0 {
        return Err(Error::InvalidSpec(format!(
            "{} samples do not split into {} periods",
            u.len(),
            n_periods
        )));
    }
    let p = u.len() / n_periods;
    let mut uu = vec![Complex64::new(0.0, 0.0); p];
    let mut yy = vec![Complex64::new(0.0, 0.0); p];
    for m in 0..n_periods {
        let range = m * p..(m + 1) * p;
        for (acc, v) in uu.iter_mut().zip(dft(&u.samples[range.clone()])) {
            *acc += v / n_periods as f64;
        }
        for (acc, v) in yy.iter_mut().zip(dft(&y.samples[range])) {
            *acc += v / n_periods as f64;
        }
    }
    let umax = uu[1..=p / 2].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let bins: Vec<usize> = match &u.excited_bins {
        Some(b) => b.clone(),
        None => (1..=p / 2).filter(|&k| uu[k].norm() > 1e-8 * umax).collect(),
    };
    if bins.is_empty() || umax == 0.0 {
        return Err(Error::DegenerateExcitation { bin: 0, magnitude: 0.0 });
    }
    let mut frf = Vec::with_capacity(bins.len());
    let mut omegas = Vec::with_capacity(bins.len());
    for &k in &bins {
        if k == 0 || k > p / 2 {
            return Err(Error::InvalidSpec(format!("excited bin {k} outside 1..={}", p / 2)));
        }
        if uu[k].norm() < 1e-12 * umax {
            return Err(Error::DegenerateExcitation { bin: k, magnitude: uu[k].norm() });
        }
        frf.push(yy[k] / uu[k]);
        omegas.push(2.0 * PI * k as f64 / p as f64);
    }
    let n = bins.len();
    Ok(NonparametricBla {
        excited_bins: bins,
        omegas,
        frf,
        weights: vec![1.0; n],
    })
}

/// Cross-over-auto power ratio from Hann-windowed segments with 50 % overlap,
/// for random (non-periodic) excitation. Bins `1..L/2` of the segment length.
pub fn estimate_frf_welch(u: &SignalRecord, y: &SignalRecord, segment_len: usize) -> Result<NonparametricBla> {
    if u.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} samples, output {}",
            u.len(),
            y.len()
        )));
    }
    let l = segment_len;
    if l < 8 || l > u.len() {
        return Err(Error::InvalidSpec(format!(
            "segment length {l} must be in 8..={}",
            u.len()
        )));
    }
    let hop = l / 2;
    let window: Vec<f64> = (0..l)
        .map(|t| 0.5 - 0.5 * (2.0 * PI * t as f64 / l as f64).cos())
        .collect();
    let mut suu = vec![0.0; l];
    let mut syu = vec![Complex64::new(0.0, 0.0); l];
    let mut start = 0;
    while start + l <= u.len() {
        let seg = |x: &[f64]| -> Vec<f64> {
            x[start..start + l].iter().zip(&window).map(|(v, w)| v * w).collect()
        };
        let us = dft(&seg(&u.samples));
        let ys = dft(&seg(&y.samples));
        for k in 0..l {
            suu[k] += us[k].norm_sqr();
            syu[k] += ys[k] * us[k].conj();
        }
        start += hop;
    }
    let smax = suu[1..l / 2].iter().copied().fold(0.0, f64::max);
    let mut bins = Vec::new();
    let mut frf = Vec::new();
    let mut omegas = Vec::new();
    for k in 1..l / 2 {
        if suu[k] < 1e-24 * smax.max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateExcitation { bin: k, magnitude: suu[k].sqrt() });
        }
        bins.push(k);
        frf.push(syu[k] / suu[k]);
        omegas.push(2.0 * PI * k as f64 / l as f64);
    }
    let n = bins.len();
    Ok(NonparametricBla {
        excited_bins: bins,
        omegas,
        frf,
        weights: vec![1.0; n],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Use the per-bin weights stored in the [`NonparametricBla`].
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlaFitConfig {
    pub n_a: usize,
    pub n_b: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub weighting: Weighting,
}

fn default_max_iters() -> usize {
    100
}

fn default_rel_tol() -> f64 {
    1e-10
}

impl BlaFitConfig {
    pub fn new(n_a: usize, n_b: usize) -> Self {
        BlaFitConfig {
            n_a,
            n_b,
            max_iters: default_max_iters(),
            rel_tol: default_rel_tol(),
            weighting: Weighting::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaFitResult {
    /// Coefficients with `‖[a; b]‖₂ = 1` and `a₀ > 0`.
    pub tf: RationalTF,
    pub poles: PoleSet,
    pub final_cost: f64,
    /// Cost of the Levy initializer.
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost_trace: Vec<f64>,
    /// Set when two estimated poles are closer than `1e-6`.
    pub repeated_poles: bool,
}

impl BlaFitResult {
    pub fn theta(&self) -> Vec<f64> {
        self.tf.a.iter().chain(self.tf.b.iter()).copied().collect()
    }
}

/// Precomputed fit problem: weights and `e^{-jωl}` powers per bin.
struct Problem<'a> {
    frf: &'a [Complex64],
    sqrt_w: Vec<f64>,
    powers: Vec<Vec<Complex64>>,
    n_a: usize,
    n_b: usize,
}

impl Problem<'_> {
    fn n_theta(&self) -> usize {
        self.n_a + self.n_b + 2
    }

    fn polys(&self, theta: &[f64], k: usize) -> (Complex64, Complex64) {
        let e = &self.powers[k];
        let a: Complex64 = (0..=self.n_a).map(|l| e[l] * theta[l]).sum();
        let b: Complex64 = (0..=self.n_b).map(|l| e[l] * theta[self.n_a + 1 + l]).sum();
        (a, b)
    }

    fn cost(&self, theta: &[f64]) -> f64 {
        let n = self.frf.len();
        let mut total = 0.0;
        for k in 0..n {
            let (a, b) = self.polys(theta, k);
            let r = self.frf[k] - b / a;
            total += self.sqrt_w[k] * self.sqrt_w[k] * r.norm_sqr();
        }
        if total.is_finite() {
            total / n as f64
        } else {
            f64::INFINITY
        }
    }

    /// Linearized problem `Σ w_k |A Ĝ − B|²`; returns ascending singular values/vectors.
    fn linearized(&self, extra_weight: Option<&[f64]>) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
        let p = self.n_theta();
        let mut acc = QrAccumulator::new(p);
        let mut re = vec![0.0; p];
        let mut im = vec![0.0; p];
        for k in 0..self.frf.len() {
            let w = self.sqrt_w[k] * extra_weight.map_or(1.0, |x| x[k]);
            let e = &self.powers[k];
            for l in 0..=self.n_a {
                let v = self.frf[k] * e[l] * w;
                re[l] = v.re;
                im[l] = v.im;
            }
            for l in 0..=self.n_b {
                let v = -e[l] * w;
                re[self.n_a + 1 + l] = v.re;
                im[self.n_a + 1 + l] = v.im;
            }
            acc.push_row(&re, 0.0);
            acc.push_row(&im, 0.0);
        }
        right_singular(acc)
    }

    /// One damped Gauss–Newton step on the true cost.
    fn lm_step(&self, theta: &[f64], mu: f64) -> Option<Vec<f64>> {
        let p = self.n_theta();
        let n = self.frf.len();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(2 * n);
        let mut diag = vec![0.0; p];
        for k in 0..n {
            let (a, b) = self.polys(theta, k);
            if a.norm() < 1e-300 {
                return None;
            }
            let w = self.sqrt_w[k];
            let r = (self.frf[k] - b / a) * w;
            let e = &self.powers[k];
            let mut jr = vec![0.0; p];
            let mut ji = vec![0.0; p];
            for l in 0..=self.n_a {
                let d = b * e[l] / (a * a) * w;
                jr[l] = d.re;
                ji[l] = d.im;
            }
            for l in 0..=self.n_b {
                let d = -e[l] / a * w;
                jr[self.n_a + 1 + l] = d.re;
                ji[self.n_a + 1 + l] = d.im;
            }
            for l in 0..p {
                diag[l] += jr[l] * jr[l] + ji[l] * ji[l];
            }
            rows.push((jr, -r.re));
            rows.push((ji, -r.im));
        }
        let dmax = diag.iter().copied().fold(0.0, f64::max);
        let mut acc = QrAccumulator::new(p);
        for (row, rhs) in &rows {
            acc.push_row(row, *rhs);
        }
        for (l, d) in diag.iter().enumerate() {
            let mut row = vec![0.0; p];
            row[l] = (mu * d.max(1e-12 * dmax)).sqrt();
            acc.push_row(&row, 0.0);
        }
        let sol = acc.solve();
        let next: Vec<f64> = theta.iter().zip(&sol.x).map(|(t, d)| t + d).collect();
        Some(normalize(next))
    }
}

fn normalize(mut theta: Vec<f64>) -> Vec<f64> {
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    theta.iter_mut().for_each(|v| *v /= norm);
    let pivot = if theta[0] != 0.0 {
        theta[0]
    } else {
        theta.iter().copied().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m })
    };
    if pivot < 0.0 {
        theta.iter_mut().for_each(|v| *v = -*v);
    }
    theta
}

pub fn fit_rational(bla: &NonparametricBla, cfg: &BlaFitConfig) -> Result<BlaFitResult> {
    let n = bla.len();
    let p = cfg.n_a + cfg.n_b + 2;
    if !(cfg.rel_tol > 0.0) {
        return Err(Error::InvalidSpec("rel_tol must be positive".into()));
    }
    if 2 * n < p {
        return Err(Error::InvalidSpec(format!(
            "{n} bins cannot determine {p} coefficients"
        )));
    }
    let sqrt_w: Vec<f64> = match cfg.weighting {
        Weighting::Uniform => vec![1.0; n],
        Weighting::User => {
            if bla.weights.len() != n || bla.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(Error::InvalidSpec("weights must be positive, one per bin".into()));
            }
            bla.weights.iter().map(|w| w.sqrt()).collect()
        }
    };
    let order = cfg.n_a.max(cfg.n_b);
    let powers = bla
        .omegas
        .iter()
        .map(|&w| (0..=order).map(|l| Complex64::from_polar(1.0, -w * l as f64)).collect())
        .collect();
    let prob = Problem {
        frf: &bla.frf,
        sqrt_w,
        powers,
        n_a: cfg.n_a,
        n_b: cfg.n_b,
    };

    let (sv, vecs) = prob.linearized(None);
    if p >= 2 && sv[1] <= 1e-13 * sv[p - 1] {
        return Err(Error::RankDeficient(format!(
            "linearized problem has a null space of dimension ≥ 2 (σ₂/σ_max = {:e})",
            sv[1] / sv[p - 1]
        )));
    }
    let mut theta = normalize(vecs.column(0).iter().copied().collect());
    let initial_cost = prob.cost(&theta);
    let mut cost = initial_cost;
    let mut trace = vec![cost];
    let mut best = (cost, theta.clone());
    let mut iterations = 0;

    // Sanathanan–Koerner reweighting
    for _ in 0..20 {
        let inv_a: Vec<f64> = (0..n)
            .map(|k| {
                let a = prob.polys(&theta, k).0.norm();
                if a > 1e-300 {
                    1.0 / a
                } else {
                    1.0
                }
            })
            .collect();
        let (_, vecs) = prob.linearized(Some(&inv_a));
        let next = normalize(vecs.column(0).iter().copied().collect());
        iterations += 1;
        let step: f64 = next.iter().zip(&theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        theta = next;
        cost = prob.cost(&theta);
        trace.push(cost);
        if cost < best.0 {
            best = (cost, theta.clone());
        }
        if step < 1e-12 {
            break;
        }
    }

    // Levenberg–Marquardt on the true cost
    let (mut cost, mut theta) = best;
    let mut mu = 1e-3;
    let mut converged = cost == 0.0;
    let mut lm_iters = 0;
    while !converged && lm_iters < cfg.max_iters {
        lm_iters += 1;
        let mut accepted = None;
        for _ in 0..12 {
            match prob.lm_step(&theta, mu) {
                Some(cand) => {
                    let c = prob.cost(&cand);
                    if c < cost {
                        accepted = Some((c, cand));
                        mu = (mu / 3.0).max(1e-12);
                        break;
                    }
                }
                None => {}
            }
            mu *= 4.0;
        }
        match accepted {
            Some((c, cand)) => {
                let rel = (cost - c) / cost;
                cost = c;
                theta = cand;
                trace.push(cost);
                if rel < cfg.rel_tol || cost == 0.0 {
                    converged = true;
                }
            }
            // no descent direction left at working precision
            None => converged = true,
        }
    }
    iterations += lm_iters;

    let tf = RationalTF::new(theta[cfg.n_a + 1..].to_vec(), theta[..=cfg.n_a].to_vec())?;
    let poles = if cfg.n_a == 0 {
        PoleSet::new(Vec::new())
    } else {
        tf.poles()?
    };
    let repeated = poles.min_separation().is_some_and(|d| d < 1e-6);
    if repeated {
        log::warn!("BLA fit produced (nearly) repeated poles; rate guarantees assume distinct poles");
    }
    Ok(BlaFitResult {
        tf,
        poles,
        final_cost: cost,
        initial_cost,
        iterations,
        converged,
        cost_trace: trace,
        repeated_poles: repeated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizedPoles {
    pub poles: PoleSet,
    pub n_reflected: usize,
}

impl StabilizedPoles {
    pub fn warned(&self) -> bool {
        self.n_reflected > 0
    }
}

/// Reflect poles on or outside the unit circle to `1/p*`; poles exactly on the
/// circle are pulled to radius `1 − 1e-6`.
pub fn stabilize_poles(ps: &PoleSet) -> StabilizedPoles {
    let mut n_reflected = 0;
    let poles = ps
        .poles
        .iter()
        .map(|&p| {
            let r = p.norm();
            if r < 1.0 {
                return p;
            }
            n_reflected += 1;
            let q = 1.0 / p.conj();
            if q.norm() >= 1.0 - 1e-12 {
                q * ((1.0 - 1e-6) / q.norm())
            } else {
                q
            }
        })
        .collect();
    if n_reflected > 0 {
        log::warn!("{n_reflected} unstable pole(s) reflected into the unit circle");
    }
    StabilizedPoles {
        poles: PoleSet::new(poles),
        n_reflected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratfun::FilterMode;
    use crate::signals::{generate_multisine, MultisineSpec};

    fn example_one() -> RationalTF {
        RationalTF::new(vec![1.0, 3.0, 3.0, 1.0], vec![1.0, -2.1, 1.9, -0.7]).unwrap()
    }

    fn sampled(tf: &RationalTF, n: usize, wmax: f64) -> NonparametricBla {
        let omegas: Vec<f64> = (1..=n).map(|k| wmax * k as f64 / n as f64).collect();
        let frf = tf.freq_response(&omegas).unwrap();
        NonparametricBla::new(omegas, frf).unwrap()
    }

    fn max_pole_distance(a: &PoleSet, b: &PoleSet) -> f64 {
        a.poles
            .iter()
            .map(|p| b.poles.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    }

    #[test]
    fn lti_frf_is_exact() {
        let g = example_one();
        let u = generate_multisine(&MultisineSpec::flat(100, 6, 1.0, 5)).unwrap();
        let y = g.filter_time(&u, FilterMode::PeriodicSteadyState).unwrap();
        let bla = estimate_frf(&u, &y, 1).unwrap();
        assert_eq!(bla.len(), 100);
        let truth = g.freq_response(&bla.omegas).unwrap();
        for (a, b) in bla.frf.iter().zip(&truth) {
            assert!((a - b).norm() < 1e-10 * b.norm().max(1.0));
        }
    }

    #[test]
    fn zero_output_gives_zero_frf() {
        let u = generate_multisine(&MultisineSpec::flat(20, 4, 1.0, 5)).unwrap();
        let y = SignalRecord::periodic(vec![0.0; u.len()], u.len());
        let bla = estimate_frf(&u, &y, 1).unwrap();
        assert!(bla.frf.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn degenerate_excitation_detected() {
        let mut u = generate_multisine(&MultisineSpec::flat(20, 4, 1.0, 5)).unwrap();
        u.excited_bins = Some(vec![1, 2, 25]);
        let y = u.clone();
        assert!(matches!(
            estimate_frf(&u, &y, 1),
            Err(Error::DegenerateExcitation { bin: 25, .. })
        ));
    }

    #[test]
    fn multi_period_averaging() {
        let g = example_one();
        let u = generate_multisine(&MultisineSpec::flat(50, 6, 1.0, 8)).unwrap().repeat(3);
        let y = g.filter_time(&u, FilterMode::PeriodicSteadyState).unwrap();
        let bla = estimate_frf(&u, &y, 3).unwrap();
        let truth = g.freq_response(&bla.omegas).unwrap();
        for (a, b) in bla.frf.iter().zip(&truth) {
            assert!((a - b).norm() < 1e-9 * b.norm());
        }
    }

    #[test]
    fn recovers_third_order_poles() {
        let g = example_one();
        let bla = sampled(&g, 300, PI / 3.0);
        let fit = fit_rational(&bla, &BlaFitConfig::new(3, 3)).unwrap();
        let truth = g.poles().unwrap();
        assert!(max_pole_distance(&fit.poles, &truth) < 1e-8);
        let theta = fit.theta();
        let norm: f64 = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-14);
        assert!(fit.final_cost <= fit.initial_cost);
        assert!(fit.final_cost >= 0.0);
    }

    #[test]
    fn zeroth_order_constant() {
        let omegas: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
        let bla = NonparametricBla::new(omegas, vec![Complex64::new(5.0, 0.0); 10]).unwrap();
        let fit = fit_rational(&bla, &BlaFitConfig::new(0, 0)).unwrap();
        let s = 26f64.sqrt();
        assert!((fit.tf.a[0] - 1.0 / s).abs() < 1e-14);
        assert!((fit.tf.b[0] - 5.0 / s).abs() < 1e-14);
        assert!(fit.final_cost < 1e-28);
        assert!(fit.poles.is_empty());
    }

    #[test]
    fn too_few_bins() {
        let bla = sampled(&example_one(), 3, 1.0);
        assert!(matches!(
            fit_rational(&bla, &BlaFitConfig::new(3, 3)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn overmodeled_exact_data_is_rank_deficient() {
        let g = RationalTF::new(vec![1.0], vec![1.0, -0.5]).unwrap();
        let bla = sampled(&g, 50, PI);
        assert!(matches!(
            fit_rational(&bla, &BlaFitConfig::new(3, 3)),
            Err(Error::RankDeficient(_))
        ));
    }

    fn perturbed_frf() -> NonparametricBla {
        let g = example_one();
        let mut bla = sampled(&g, 200, PI / 3.0);
        for (k, v) in bla.frf.iter_mut().enumerate() {
            let t = k as f64;
            *v += Complex64::new((1.7 * t).sin(), (2.3 * t).cos()) * 0.5;
        }
        bla
    }

    #[test]
    fn weight_scaling_does_not_move_the_optimum() {
        let mut bla = perturbed_frf();
        bla.weights = (0..bla.len()).map(|k| 1.0 + (k % 7) as f64).collect();
        let mut cfg = BlaFitConfig::new(3, 3);
        cfg.weighting = Weighting::User;
        let a = fit_rational(&bla, &cfg).unwrap();
        bla.weights.iter_mut().for_each(|w| *w *= 37.0);
        let b = fit_rational(&bla, &cfg).unwrap();
        assert!(max_pole_distance(&a.poles, &b.poles) < 1e-8);
        assert!((b.final_cost / a.final_cost - 37.0).abs() < 1e-6 * 37.0);
    }

    #[test]
    fn frf_scale_does_not_move_poles() {
        let bla = perturbed_frf();
        let cfg = BlaFitConfig::new(3, 3);
        let a = fit_rational(&bla, &cfg).unwrap();
        for c in [0.25, -3.0] {
            let b = fit_rational(&bla.scaled(c), &cfg).unwrap();
            assert!(max_pole_distance(&a.poles, &b.poles) < 1e-8, "scale {c}");
        }
    }

    #[test]
    fn stabilize_examples() {
        let s = stabilize_poles(&PoleSet::new(vec![Complex64::new(2.0, 0.0)]));
        assert!((s.poles.poles[0] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(s.warned());
        let p = PoleSet::new(vec![Complex64::new(0.9, 0.1)]);
        let s = stabilize_poles(&p);
        assert_eq!(s.poles, p);
        assert!(!s.warned());
        let z = Complex64::from_polar(1.25, PI / 4.0);
        let s = stabilize_poles(&PoleSet::new(vec![z, z.conj()]));
        assert!(s.poles.is_conjugate_closed());
        for q in &s.poles.poles {
            assert!((q.norm() - 0.8).abs() < 1e-15);
        }
        let on_circle = stabilize_poles(&PoleSet::new(vec![Complex64::new(1.0, 0.0)]));
        assert!(on_circle.poles.is_stable());
    }
}
