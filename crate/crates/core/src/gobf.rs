//! Generalized orthonormal basis functions.
//!
//! A finite pole set `{ξ₁ … ξ_{n_ξ}}` repeated `n_rep` times generates the
//! Takenaka–Malmquist functions
//!
//! ```text
//! F_l(z) = √(1 − |ξ_l|²)/(z − ξ_l) · Π_{i<l} (1 − ξ_i* z)/(z − ξ_i)
//! ```
//!
//! plus the constant `F₀ = 1`. For a complex pair `(ξ, ξ*)` the functions are
//! complex; the bank emits two real channels instead, built from the real and
//! imaginary parts of the first member of the pair and orthonormalized with
//! their closed-form Gram matrix. The real channels span the same space as
//! `{F_l, F_{l+1}}` because every pair is complete before the next section.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::QrAccumulator;
use crate::ratfun::{FilterMode, PoleSet, RationalTF};
use crate::signals::{dft, idft_in_place, SignalRecord};

/// Pole of one repetition block. Pairs are stored by their upper-half-plane member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockPole {
    Real(f64),
    Pair(Complex64),
}

/// Real output channel of the bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    Constant,
    /// Section `l` (1-based) with a real pole.
    Real { section: usize },
    /// Row of the 2×2 transform applied to `[Re x_l, Im x_l]` of section `l`.
    PairPart { section: usize, weights: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BankSpec", into = "BankSpec")]
pub struct GobfBank {
    base: Vec<BlockPole>,
    n_rep: usize,
    include_constant: bool,
    /// `ξ_1 … ξ_n` in cascade order.
    sections: Vec<Complex64>,
    channels: Vec<Channel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankSpec {
    /// `[re, im]` per pole, conjugate-closed.
    base_poles: Vec<[f64; 2]>,
    n_rep: usize,
    #[serde(default = "yes")]
    include_constant: bool,
}

fn yes() -> bool {
    true
}

impl TryFrom<BankSpec> for GobfBank {
    type Error = Error;

    fn try_from(spec: BankSpec) -> Result<Self> {
        let poles = PoleSet::new(
            spec.base_poles
                .iter()
                .map(|[re, im]| Complex64::new(*re, *im))
                .collect(),
        );
        let mut bank = build_bank(&poles, spec.n_rep)?;
        if !spec.include_constant {
            bank = bank.without_constant();
        }
        Ok(bank)
    }
}

impl From<GobfBank> for BankSpec {
    fn from(bank: GobfBank) -> Self {
        BankSpec {
            base_poles: bank.base_poles().poles.iter().map(|p| [p.re, p.im]).collect(),
            n_rep: bank.n_rep,
            include_constant: bank.include_constant,
        }
    }
}

/// Build the bank for `poles` repeated `n_rep` times, with `F₀ = 1` included.
pub fn build_bank(poles: &PoleSet, n_rep: usize) -> Result<GobfBank> {
    if let Some(p) = poles.poles.iter().find(|p| p.norm() >= 1.0) {
        return Err(Error::Unstable(format!(
            "basis pole {p} is not strictly inside the unit circle; run stabilize_poles first"
        )));
    }
    if !poles.is_conjugate_closed() {
        return Err(Error::InvalidSpec("basis poles must be closed under conjugation".into()));
    }
    // PoleSet is sorted by modulus then angle; keep one representative per pair.
    let base: Vec<BlockPole> = poles
        .poles
        .iter()
        .filter(|p| p.im >= 0.0)
        .map(|p| if p.im == 0.0 { BlockPole::Real(p.re) } else { BlockPole::Pair(*p) })
        .collect();

    let mut sections = Vec::new();
    let mut channels = vec![Channel::Constant];
    for _ in 0..n_rep {
        for bp in &base {
            match *bp {
                BlockPole::Real(x) => {
                    sections.push(Complex64::new(x, 0.0));
                    channels.push(Channel::Real { section: sections.len() });
                }
                BlockPole::Pair(xi) => {
                    sections.push(xi);
                    let l = sections.len();
                    sections.push(xi.conj());
                    let t = pair_transform(xi);
                    channels.push(Channel::PairPart { section: l, weights: t[0] });
                    channels.push(Channel::PairPart { section: l, weights: t[1] });
                }
            }
        }
    }
    Ok(GobfBank {
        base,
        n_rep,
        include_constant: true,
        sections,
        channels,
    })
}

/// Gram–Schmidt on `[Re F, Im F]` for the first member `ξ` of a pair.
///
/// With `s = Σ f(t)² = (1 − |ξ|²)/(1 − ξ²)` and `‖F‖ = 1`, the Gram matrix of
/// the real and imaginary parts is `[[1 + Re s, Im s], [Im s, 1 − Re s]] / 2`.
fn pair_transform(xi: Complex64) -> [[f64; 2]; 2] {
    let s = Complex64::new(1.0 - xi.norm_sqr(), 0.0) / (Complex64::new(1.0, 0.0) - xi * xi);
    let g11 = 0.5 * (1.0 + s.re);
    let g12 = 0.5 * s.im;
    let g22 = 0.5 * (1.0 - s.re);
    let n1 = g11.sqrt();
    let d = (g22 - g12 * g12 / g11).sqrt();
    [[1.0 / n1, 0.0], [-g12 / (g11 * d), 1.0 / d]]
}

impl GobfBank {
    pub fn n_rep(&self) -> usize {
        self.n_rep
    }

    pub fn includes_constant(&self) -> bool {
        self.include_constant
    }

    /// Number of dynamic basis functions `n = n_rep · n_ξ`.
    pub fn n_dynamic(&self) -> usize {
        self.sections.len()
    }

    /// Number of real output channels (`n + 1` with the constant).
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn sections(&self) -> &[Complex64] {
        &self.sections
    }

    pub fn base_poles(&self) -> PoleSet {
        let mut v = Vec::new();
        for bp in &self.base {
            match *bp {
                BlockPole::Real(x) => v.push(Complex64::new(x, 0.0)),
                BlockPole::Pair(p) => {
                    v.push(p);
                    v.push(p.conj());
                }
            }
        }
        PoleSet::new(v)
    }

    pub fn without_constant(mut self) -> Self {
        self.include_constant = false;
        self.channels.retain(|c| !matches!(c, Channel::Constant));
        self
    }

    /// Complex `F_l(z)` for `l = 1..=n` at one point, via the all-pass cascade.
    fn complex_at(&self, z: Complex64) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.sections.len());
        let mut prefix = Complex64::new(1.0, 0.0);
        for &xi in &self.sections {
            let den = z - xi;
            out.push(prefix * (1.0 - xi.norm_sqr()).sqrt() / den);
            prefix *= (Complex64::new(1.0, 0.0) - xi.conj() * z) / den;
        }
        out
    }

    /// Entry `(k, l)` is `F_l(e^{jω_k})`; column 0 is `F₀ = 1` when included.
    pub fn bank_frequency_matrix(&self, omegas: &[f64]) -> DMatrix<Complex64> {
        let offset = usize::from(self.include_constant);
        let mut m = DMatrix::zeros(omegas.len(), self.sections.len() + offset);
        for (k, &w) in omegas.iter().enumerate() {
            if self.include_constant {
                m[(k, 0)] = Complex64::new(1.0, 0.0);
            }
            for (l, v) in self.complex_at(Complex64::from_polar(1.0, w)).into_iter().enumerate() {
                m[(k, l + offset)] = v;
            }
        }
        m
    }

    fn channel_value(&self, ch: &Channel, f_pos: &[Complex64], f_neg: &[Complex64]) -> Complex64 {
        match *ch {
            Channel::Constant => Complex64::new(1.0, 0.0),
            Channel::Real { section } => f_pos[section - 1],
            Channel::PairPart { section, weights } => {
                let (fp, fn_) = (f_pos[section - 1], f_neg[section - 1].conj());
                let re = (fp + fn_) * 0.5;
                let im = (fp - fn_) / Complex64::new(0.0, 2.0);
                re * weights[0] + im * weights[1]
            }
        }
    }

    /// Frequency responses of the real output channels.
    pub fn real_frequency_matrix(&self, omegas: &[f64]) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(omegas.len(), self.channels.len());
        for (k, &w) in omegas.iter().enumerate() {
            let fp = self.complex_at(Complex64::from_polar(1.0, w));
            let fm = self.complex_at(Complex64::from_polar(1.0, -w));
            for (c, ch) in self.channels.iter().enumerate() {
                m[(k, c)] = self.channel_value(ch, &fp, &fm);
            }
        }
        m
    }

    /// Channel outputs `x_l(t)` as an `N × n_channels` matrix.
    pub fn bank_outputs(&self, u: &SignalRecord, mode: FilterMode) -> Result<DMatrix<f64>> {
        match mode {
            FilterMode::PeriodicSteadyState => Ok(self.outputs_periodic(&u.samples)),
            FilterMode::ZeroInitial => Ok(self.outputs_recursive(&u.samples)),
        }
    }

    fn outputs_periodic(&self, u: &[f64]) -> DMatrix<f64> {
        let n = u.len();
        let spectrum = dft(u);
        // F_l on the DFT grid, one row per bin
        let grid: Vec<Vec<Complex64>> = (0..n)
            .map(|k| self.complex_at(Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)))
            .collect();
        let mut out = DMatrix::zeros(n, self.channels.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (c, ch) in self.channels.iter().enumerate() {
            if matches!(ch, Channel::Constant) {
                out.column_mut(c).copy_from_slice(u);
                continue;
            }
            for k in 0..n {
                let h = self.channel_value(ch, &grid[k], &grid[(n - k) % n]);
                buf[k] = spectrum[k] * h;
            }
            idft_in_place(&mut buf);
            for (t, v) in buf.iter().enumerate() {
                out[(t, c)] = v.re;
            }
        }
        out
    }

    /// Cascaded first-order recursions from zero state. Head and all-pass of a
    /// section share the state `s(t) = ξ s(t−1) + v(t)`.
    fn outputs_recursive(&self, u: &[f64]) -> DMatrix<f64> {
        let n = u.len();
        let mut v: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut heads: Vec<Vec<Complex64>> = Vec::with_capacity(self.sections.len());
        for &xi in &self.sections {
            let gain = (1.0 - xi.norm_sqr()).sqrt();
            let mut head = vec![Complex64::new(0.0, 0.0); n];
            let mut prev = Complex64::new(0.0, 0.0);
            for t in 0..n {
                let s = xi * prev + v[t];
                head[t] = prev * gain;
                v[t] = prev - xi.conj() * s;
                prev = s;
            }
            heads.push(head);
        }
        let mut out = DMatrix::zeros(n, self.channels.len());
        for (c, ch) in self.channels.iter().enumerate() {
            match *ch {
                Channel::Constant => out.column_mut(c).copy_from_slice(u),
                Channel::Real { section } => {
                    for (t, h) in heads[section - 1].iter().enumerate() {
                        out[(t, c)] = h.re;
                    }
                }
                Channel::PairPart { section, weights } => {
                    for (t, h) in heads[section - 1].iter().enumerate() {
                        out[(t, c)] = weights[0] * h.re + weights[1] * h.im;
                    }
                }
            }
        }
        out
    }
}

/// `⟨F_a, F_b⟩ = (1/2π)∮ F_a F_b* dω` by the trapezoidal rule on `m` circle points,
/// over the complex functions (with `F₀` first when included).
pub fn gram_matrix(bank: &GobfBank, m: usize) -> DMatrix<Complex64> {
    gram_of(m, |w| bank.bank_frequency_matrix(w))
}

/// Gram matrix of the real output channels.
pub fn real_gram_matrix(bank: &GobfBank, m: usize) -> DMatrix<Complex64> {
    gram_of(m, |w| bank.real_frequency_matrix(w))
}

fn gram_of(m: usize, eval: impl Fn(&[f64]) -> DMatrix<Complex64>) -> DMatrix<Complex64> {
    const CHUNK: usize = 4096;
    let mut gram: Option<DMatrix<Complex64>> = None;
    let mut start = 0;
    while start < m {
        let end = (start + CHUNK).min(m);
        let omegas: Vec<f64> = (start..end).map(|i| 2.0 * PI * i as f64 / m as f64).collect();
        let f = eval(&omegas);
        let part = f.adjoint() * &f;
        gram = Some(match gram {
            None => part,
            Some(g) => g + part,
        });
        start = end;
    }
    // adjoint·F gives Σ conj(F_a) F_b; transpose for ⟨F_a, F_b⟩ = Σ F_a conj(F_b)
    gram.map(|g| g.transpose() / Complex64::new(m as f64, 0.0))
        .unwrap_or_else(|| DMatrix::zeros(0, 0))
}

/// `ρ = max_j Π_k |(p_j − ξ_k)/(1 − p_j ξ_k)|`.
pub fn decay_rho(bank_poles: &PoleSet, target_poles: &PoleSet) -> f64 {
    target_poles
        .poles
        .iter()
        .map(|p| {
            bank_poles
                .poles
                .iter()
                .map(|xi| ((p - xi) / (1.0 - p * xi)).norm())
                .product::<f64>()
        })
        .fold(0.0, f64::max)
}

pub const PROJECTION_GRID: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    /// Real coefficients, one per output channel.
    pub coefficients: Vec<f64>,
    /// `max_ω |G − Σ α_l F_l|` on the projection grid.
    pub residual_sup: f64,
    pub rho: f64,
    pub condition: f64,
}

/// Least-squares projection of a stable target's frequency response onto the
/// real channels, on `PROJECTION_GRID` equispaced frequencies in `[0, π]`.
pub fn project_expansion(target: &RationalTF, bank: &GobfBank) -> Result<ExpansionResult> {
    let target_poles = target.poles()?;
    if !target_poles.is_stable() {
        return Err(Error::Unstable("expansion target must be stable".into()));
    }
    let omegas: Vec<f64> = (0..PROJECTION_GRID)
        .map(|i| PI * i as f64 / (PROJECTION_GRID - 1) as f64)
        .collect();
    let g = target.freq_response(&omegas)?;
    let f = bank.real_frequency_matrix(&omegas);
    let p = f.ncols();
    let mut acc = QrAccumulator::new(p);
    let mut re = vec![0.0; p];
    let mut im = vec![0.0; p];
    for k in 0..omegas.len() {
        for c in 0..p {
            re[c] = f[(k, c)].re;
            im[c] = f[(k, c)].im;
        }
        acc.push_row(&re, g[k].re);
        acc.push_row(&im, g[k].im);
    }
    let sol = acc.solve();
    let condition = sol.condition_number();
    if condition > 1e10 {
        log::warn!("GOBF projection is ill-conditioned (cond = {condition:e})");
    }
    let residual_sup = (0..omegas.len())
        .map(|k| {
            let approx: Complex64 = (0..p).map(|c| f[(k, c)] * sol.x[c]).sum();
            (g[k] - approx).norm()
        })
        .fold(0.0, f64::max);
    Ok(ExpansionResult {
        coefficients: sol.x,
        residual_sup,
        rho: decay_rho(&bank.base_poles(), &target_poles),
        condition,
    })
}

/// Truncation residuals for `n_rep = 0..=max_rep` with an envelope
/// `c · η^{n_rep} / (1 − η)`, `η` halfway between `ρ` and 1 and `c` the
/// smallest constant that bounds every observed residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionDecay {
    pub residual_sup: Vec<f64>,
    pub rho: f64,
    pub eta: f64,
    pub c_gobf: f64,
    pub bound: Vec<f64>,
}

pub fn expansion_decay(target: &RationalTF, base_poles: &PoleSet, max_rep: usize) -> Result<ExpansionDecay> {
    let residual_sup = (0..=max_rep)
        .map(|r| Ok(project_expansion(target, &build_bank(base_poles, r)?)?.residual_sup))
        .collect::<Result<Vec<f64>>>()?;
    let rho = decay_rho(base_poles, &target.poles()?);
    let eta = 0.5 * (rho + 1.0);
    let c_gobf = residual_sup
        .iter()
        .enumerate()
        .map(|(r, res)| res * (1.0 - eta) / eta.powi(r as i32))
        .fold(0.0, f64::max);
    let bound = (0..=max_rep)
        .map(|r| c_gobf * eta.powi(r as i32) / (1.0 - eta))
        .collect();
    Ok(ExpansionDecay {
        residual_sup,
        rho,
        eta,
        c_gobf,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{generate_multisine, MultisineSpec};

    fn example_one() -> RationalTF {
        RationalTF::new(vec![1.0, 3.0, 3.0, 1.0], vec![1.0, -2.1, 1.9, -0.7]).unwrap()
    }

    fn max_dev_from_identity(g: &DMatrix<Complex64>) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }

    #[test]
    fn zero_pole_gives_pure_delay() {
        let bank = build_bank(&PoleSet::new(vec![Complex64::new(0.0, 0.0)]), 1).unwrap();
        let w = [0.0, 0.4, 2.0];
        let m = bank.bank_frequency_matrix(&w);
        for (k, &om) in w.iter().enumerate() {
            assert!((m[(k, 1)] - Complex64::from_polar(1.0, -om)).norm() < 1e-15);
            assert_eq!(m[(k, 0)], Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn n_rep_zero_is_constant_only() {
        let bank = build_bank(&example_one().poles().unwrap(), 0).unwrap();
        assert_eq!(bank.n_channels(), 1);
        let u = generate_multisine(&MultisineSpec::flat(10, 4, 1.0, 1)).unwrap();
        let x = bank.bank_outputs(&u, FilterMode::PeriodicSteadyState).unwrap();
        assert_eq!(x.column(0).as_slice(), u.samples.as_slice());
    }

    #[test]
    fn example_one_bank_is_orthonormal() {
        let bank = build_bank(&example_one().poles().unwrap(), 2).unwrap();
        assert_eq!(bank.n_dynamic(), 6);
        assert_eq!(bank.n_channels(), 7);
        let g = gram_matrix(&bank, 100_000);
        assert!(max_dev_from_identity(&g) < 1e-8);
        let gr = real_gram_matrix(&bank, 100_000);
        assert!(max_dev_from_identity(&gr) < 1e-8);
    }

    #[test]
    fn naive_sqrt2_recombination_is_not_orthonormal() {
        // guards the Gram correction in pair_transform
        let xi = Complex64::new(0.637, 0.665);
        let s = Complex64::new(1.0 - xi.norm_sqr(), 0.0) / (1.0 - xi * xi);
        assert!(s.norm() > 0.05);
    }

    #[test]
    fn allpass_factor_is_unit_modulus() {
        let xi = Complex64::new(0.6, 0.7);
        for i in 0..200 {
            let z = Complex64::from_polar(1.0, 0.0314 * i as f64);
            let ap = (1.0 - xi.conj() * z) / (z - xi);
            assert!((ap.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn real_poles_produce_real_outputs() {
        let poles = PoleSet::new(vec![Complex64::new(0.5, 0.0), Complex64::new(-0.3, 0.0)]);
        let bank = build_bank(&poles, 2).unwrap();
        let u = generate_multisine(&MultisineSpec::flat(40, 4, 1.0, 3)).unwrap();
        let x = bank.bank_outputs(&u, FilterMode::PeriodicSteadyState).unwrap();
        // F₁ = √(1−ξ₁²)/(z − ξ₁), compared with direct filtering
        let x1 = bank.sections()[0].re;
        let f1 = RationalTF::new(vec![0.0, (1.0 - x1 * x1).sqrt()], vec![1.0, -x1]).unwrap();
        let ref1 = f1.filter_time(&u, FilterMode::PeriodicSteadyState).unwrap();
        for t in 0..u.len() {
            assert!((x[(t, 1)] - ref1.samples[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn outputs_are_white_orthonormal_under_flat_full_band_excitation() {
        let bank = build_bank(&example_one().poles().unwrap(), 1).unwrap();
        let u = generate_multisine(&MultisineSpec::flat(4095, 2, 1.0, 12)).unwrap();
        let x = bank.bank_outputs(&u, FilterMode::PeriodicSteadyState).unwrap();
        let n = u.len() as f64;
        let g = x.transpose() * &x / n;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - target).abs() < 0.02, "({i},{j}) = {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn recursive_outputs_match_periodic_in_steady_state() {
        let bank = build_bank(&example_one().poles().unwrap(), 2).unwrap();
        let u = generate_multisine(&MultisineSpec::flat(100, 6, 1.0, 5)).unwrap();
        let n = u.len();
        let periodic = bank.bank_outputs(&u, FilterMode::PeriodicSteadyState).unwrap();
        let rec = bank.bank_outputs(&u.repeat(4), FilterMode::ZeroInitial).unwrap();
        for c in 0..bank.n_channels() {
            for t in 0..n {
                assert!((rec[(3 * n + t, c)] - periodic[(t, c)]).abs() < 1e-8, "channel {c}");
            }
        }
    }

    #[test]
    fn rho_examples() {
        let p = PoleSet::new(vec![Complex64::new(0.5, 0.0)]);
        let z = PoleSet::new(vec![Complex64::new(0.0, 0.0)]);
        assert!((decay_rho(&z, &p) - 0.5).abs() < 1e-15);
        assert_eq!(decay_rho(&p, &p), 0.0);
        assert!((decay_rho(&p, &z) - decay_rho(&z, &p)).abs() < 1e-15);
        let truth = example_one().poles().unwrap();
        let shifted = PoleSet::new(truth.poles.iter().map(|q| q + 0.05).collect());
        let r = decay_rho(&shifted, &truth);
        assert!((0.0..1.0).contains(&r));
    }

    #[test]
    fn basis_member_projects_to_unit_coefficient() {
        let poles = PoleSet::new(vec![Complex64::new(0.4, 0.0), Complex64::new(-0.2, 0.0)]);
        let bank = build_bank(&poles, 2).unwrap();
        // channel 2 is F₂ = √(1−ξ₂²)/(z−ξ₂) · (1 − ξ₁z)/(z − ξ₁) in PoleSet order
        let (x1, x2) = (bank.sections()[0].re, bank.sections()[1].re);
        let head = RationalTF::new(vec![0.0, (1.0 - x2 * x2).sqrt()], vec![1.0, -x2]).unwrap();
        let ap = RationalTF::new(vec![-x1, 1.0], vec![1.0, -x1]).unwrap();
        let f2 = head.series(&ap);
        let res = project_expansion(&f2, &bank).unwrap();
        for (l, a) in res.coefficients.iter().enumerate() {
            let expect = if l == 2 { 1.0 } else { 0.0 };
            assert!((a - expect).abs() < 1e-10, "α_{l} = {a}");
        }
    }

    #[test]
    fn exact_poles_span_target() {
        let g = example_one();
        let bank = build_bank(&g.poles().unwrap(), 1).unwrap();
        let res = project_expansion(&g, &bank).unwrap();
        assert!(res.residual_sup < 1e-8, "residual {}", res.residual_sup);
        assert!(res.rho < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let bank = build_bank(&example_one().poles().unwrap(), 3).unwrap();
        let text = serde_json::to_string(&bank).unwrap();
        let back: GobfBank = serde_json::from_str(&text).unwrap();
        assert_eq!(back.n_channels(), bank.n_channels());
        assert_eq!(back.sections(), bank.sections());
        assert!(serde_json::from_str::<GobfBank>(r#"{"base_poles":[[1.5,0.0]],"n_rep":1}"#).is_err());
    }

    #[test]
    fn rejects_unstable_and_open_sets() {
        assert!(matches!(
            build_bank(&PoleSet::new(vec![Complex64::new(1.2, 0.0)]), 1),
            Err(Error::Unstable(_))
        ));
        assert!(matches!(
            build_bank(&PoleSet::new(vec![Complex64::new(0.2, 0.3)]), 1),
            Err(Error::InvalidSpec(_))
        ));
    }
}
