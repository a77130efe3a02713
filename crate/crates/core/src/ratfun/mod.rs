//! Discrete-time rational transfer functions in `z⁻¹`.

mod roots;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{dft, idft_real, SignalRecord};

pub use roots::poly_roots;

/// `G(z) = (b₀ + b₁z⁻¹ + … + b_{n_b}z^{-n_b}) / (a₀ + a₁z⁻¹ + … + a_{n_a}z^{-n_a})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTf")]
pub struct RationalTF {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTf {
    b: Vec<f64>,
    a: Vec<f64>,
}

impl TryFrom<RawTf> for RationalTF {
    type Error = Error;

    fn try_from(raw: RawTf) -> Result<Self> {
        RationalTF::new(raw.b, raw.a)
    }
}

/// How a finite record is pushed through a filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Exact steady state of a periodic input, computed bin-wise in the DFT domain.
    #[default]
    PeriodicSteadyState,
    /// Direct recursion from zero state.
    ZeroInitial,
}

impl RationalTF {
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidSpec("transfer function needs non-empty b and a".into()));
        }
        if a[0] == 0.0 {
            return Err(Error::InvalidSpec("leading denominator coefficient a₀ is zero".into()));
        }
        if a.iter().chain(b.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidSpec("non-finite transfer function coefficient".into()));
        }
        Ok(RationalTF { b, a })
    }

    pub fn identity() -> Self {
        RationalTF {
            b: vec![1.0],
            a: vec![1.0],
        }
    }

    /// `z^{-d}`.
    pub fn delay(d: usize) -> Self {
        let mut b = vec![0.0; d + 1];
        b[d] = 1.0;
        RationalTF { b, a: vec![1.0] }
    }

    pub fn is_identity(&self) -> bool {
        self.b.len() == 1 && self.a.len() == 1 && self.b[0] == self.a[0]
    }

    /// `k · z^{-d} · Π(1 − z_i z⁻¹) / Π(1 − p_i z⁻¹)`; zeros and poles must be conjugate-closed.
    pub fn from_zpk(zeros: &[Complex64], poles: &[Complex64], gain: f64, delay: usize) -> Result<Self> {
        let mut b = vec![0.0; delay];
        b.extend(real_poly_from_roots(zeros)?.into_iter().map(|c| c * gain));
        let a = real_poly_from_roots(poles)?;
        RationalTF::new(b, a)
    }

    /// Cascade `self · other`.
    pub fn series(&self, other: &RationalTF) -> RationalTF {
        RationalTF {
            b: convolve(&self.b, &other.b),
            a: convolve(&self.a, &other.a),
        }
    }

    pub fn eval_z_inv(&self, zinv: Complex64) -> Result<Complex64> {
        let num = horner_z_inv(&self.b, zinv);
        let den = horner_z_inv(&self.a, zinv);
        if den.norm() < 1e-300 {
            return Err(Error::Singular("denominator vanishes on the evaluation grid".into()));
        }
        Ok(num / den)
    }

    /// `B(e^{jω})/A(e^{jω})` for each `ω`.
    pub fn freq_response(&self, omegas: &[f64]) -> Result<Vec<Complex64>> {
        omegas
            .iter()
            .map(|&w| self.eval_z_inv(Complex64::from_polar(1.0, -w)))
            .collect()
    }

    /// Response on the full DFT grid `ω_k = 2πk/n`, `k = 0..n`.
    pub fn dft_grid_response(&self, n: usize) -> Result<Vec<Complex64>> {
        let omegas: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        self.freq_response(&omegas)
    }

    pub fn poles(&self) -> Result<PoleSet> {
        Ok(PoleSet::new(poly_roots(&self.a)?))
    }

    /// Finite zeros; leading zero coefficients of `b` are pure delays and contribute none.
    pub fn zeros(&self) -> Result<PoleSet> {
        let first = self.b.iter().position(|&c| c != 0.0);
        match first {
            None => Ok(PoleSet::new(Vec::new())),
            Some(i) => Ok(PoleSet::new(poly_roots(&self.b[i..])?)),
        }
    }

    /// Leading nonzero numerator coefficient over `a₀`, and the pure delay.
    pub fn gain_and_delay(&self) -> (f64, usize) {
        match self.b.iter().position(|&c| c != 0.0) {
            None => (0.0, 0),
            Some(i) => (self.b[i] / self.a[0], i),
        }
    }

    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.poles()?.is_stable())
    }

    /// Zero-state direct-form II transposed recursion.
    pub fn filter_slice(&self, u: &[f64]) -> Vec<f64> {
        let a0 = self.a[0];
        let b: Vec<f64> = self.b.iter().map(|c| c / a0).collect();
        let a: Vec<f64> = self.a.iter().map(|c| c / a0).collect();
        let order = b.len().max(a.len()) - 1;
        let coef = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let mut state = vec![0.0; order + 1];
        let mut y = Vec::with_capacity(u.len());
        for &x in u {
            let out = coef(&b, 0) * x + state[0];
            for i in 0..order {
                state[i] = coef(&b, i + 1) * x - coef(&a, i + 1) * out + state[i + 1];
            }
            y.push(out);
        }
        y
    }

    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut delta = vec![0.0; n];
        if n > 0 {
            delta[0] = 1.0;
        }
        self.filter_slice(&delta)
    }

    pub fn filter_time(&self, u: &SignalRecord, mode: FilterMode) -> Result<SignalRecord> {
        let samples = match mode {
            FilterMode::ZeroInitial => self.filter_slice(&u.samples),
            FilterMode::PeriodicSteadyState => {
                if !self.is_stable()? {
                    return Err(Error::Unstable(
                        "periodic steady state requires a stable transfer function".into(),
                    ));
                }
                let n = u.len();
                let spectrum = dft(&u.samples);
                let h = self.dft_grid_response(n)?;
                let y: Vec<Complex64> = spectrum.iter().zip(&h).map(|(x, g)| x * g).collect();
                idft_real(&y)
            }
        };
        Ok(SignalRecord {
            samples,
            period: u.period,
            spectrum: None,
            excited_bins: u.excited_bins.clone(),
        })
    }
}

/// Samples until the impulse response stays below `1e-8` of its peak, capped at `cap`.
pub fn transient_length(tf: &RationalTF, cap: usize) -> Result<usize> {
    let poles = tf.poles()?;
    if !poles.is_stable() {
        return Err(Error::Unstable("transient length of an unstable filter".into()));
    }
    let order = tf.a.len().max(tf.b.len());
    let radius = poles.max_modulus();
    let horizon = if radius <= 0.0 {
        order + 1
    } else {
        // envelope r^t reaches 1e-10 (slack for polynomial factors of repeated poles)
        let t = (1e-10f64).ln() / radius.ln();
        (2.0 * t).ceil() as usize + 4 * order + 8
    };
    let horizon = horizon.min(cap.saturating_add(1)).max(1);
    let h = tf.impulse_response(horizon);
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(0);
    }
    let last = h.iter().rposition(|v| v.abs() >= 1e-8 * peak).unwrap_or(0);
    Ok((last + 1).min(cap))
}

fn horner_z_inv(c: &[f64], zinv: Complex64) -> Complex64 {
    c.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * zinv + ci)
}

fn convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + y.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Coefficients of `Π(1 − r_i z⁻¹)`, required to be real.
fn real_poly_from_roots(roots: &[Complex64]) -> Result<Vec<f64>> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        p = next;
    }
    let scale = p.iter().map(|c| c.norm()).fold(1.0, f64::max);
    if p.iter().any(|c| c.im.abs() > 1e-9 * scale) {
        return Err(Error::InvalidSpec("roots are not closed under conjugation".into()));
    }
    Ok(p.into_iter().map(|c| c.re).collect())
}

/// Poles (or zeros) in the `z` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleSet {
    pub poles: Vec<Complex64>,
}

impl PoleSet {
    /// Sorted by modulus, then angle.
    pub fn new(mut poles: Vec<Complex64>) -> Self {
        poles.sort_by(|a, b| {
            a.norm()
                .total_cmp(&b.norm())
                .then(a.arg().total_cmp(&b.arg()))
        });
        PoleSet { poles }
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn is_stable(&self) -> bool {
        self.poles.iter().all(|p| p.norm() < 1.0)
    }

    pub fn max_modulus(&self) -> f64 {
        self.poles.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Exact closure: every non-real member has its conjugate in the set.
    pub fn is_conjugate_closed(&self) -> bool {
        let mut used = vec![false; self.poles.len()];
        for (i, p) in self.poles.iter().enumerate() {
            if p.im == 0.0 || used[i] {
                continue;
            }
            let partner = self
                .poles
                .iter()
                .enumerate()
                .position(|(j, q)| j != i && !used[j] && *q == p.conj());
            match partner {
                Some(j) => {
                    used[i] = true;
                    used[j] = true;
                }
                None => return false,
            }
        }
        true
    }

    /// Smallest pairwise distance, `None` for fewer than two members.
    pub fn min_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.poles.len() {
            for j in i + 1..self.poles.len() {
                let d = (self.poles[i] - self.poles[j]).norm();
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }
}
