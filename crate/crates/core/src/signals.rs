//! Excitation and disturbance signals: random-phase multisines, Gaussian
//! inputs, filtered white noise, and the DFT conventions used throughout.
//!
//! DFT convention: `X(k) = Σ_t x(t) e^{-j2πkt/N}`, inverse carries the `1/N`.

use std::f64::consts::PI;
use std::io::Read;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::fmt17;
use crate::ratfun::RationalTF;
use crate::seed::{self, Role};

/// Shape `Ǔ(·)` of the multisine amplitude spectrum over the excited bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "values")]
pub enum AmplitudeProfile {
    #[default]
    Flat,
    /// One non-negative value per excited bin `k = 1..=N_F`.
    PerBin(Vec<f64>),
}

impl AmplitudeProfile {
    fn value(&self, k: usize) -> f64 {
        match self {
            AmplitudeProfile::Flat => 1.0,
            AmplitudeProfile::PerBin(v) => v[k - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultisineSpec {
    pub n_samples: usize,
    #[serde(default = "one")]
    pub sample_period: f64,
    pub n_freqs: usize,
    #[serde(default)]
    pub amplitude_profile: AmplitudeProfile,
    #[serde(default = "one")]
    pub target_rms: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl MultisineSpec {
    /// Flat multisine with `f_max = f_s / oversampling`, i.e. `N = oversampling · N_F`.
    pub fn flat(n_freqs: usize, oversampling: usize, target_rms: f64, seed: u64) -> Self {
        MultisineSpec {
            n_samples: n_freqs * oversampling,
            sample_period: 1.0,
            n_freqs,
            amplitude_profile: AmplitudeProfile::Flat,
            target_rms,
            seed,
        }
    }

    pub fn f_max(&self) -> f64 {
        self.n_freqs as f64 / (self.n_samples as f64 * self.sample_period)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_freqs == 0 {
            return Err(Error::InvalidSpec("multisine needs N ≥ 1 and N_F ≥ 1".into()));
        }
        if 2 * self.n_freqs > self.n_samples {
            return Err(Error::InvalidSpec(format!(
                "N_F = {} exceeds N/2 = {}",
                self.n_freqs,
                self.n_samples / 2
            )));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(Error::InvalidSpec("sample period must be positive".into()));
        }
        if !(self.target_rms > 0.0 && self.target_rms.is_finite()) {
            return Err(Error::InvalidSpec("target rms must be positive".into()));
        }
        if let AmplitudeProfile::PerBin(v) = &self.amplitude_profile {
            if v.len() != self.n_freqs {
                return Err(Error::InvalidSpec(format!(
                    "amplitude profile has {} entries, expected N_F = {}",
                    v.len(),
                    self.n_freqs
                )));
            }
            if v.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(Error::InvalidSpec("amplitudes must be finite and ≥ 0".into()));
            }
        }
        if (1..=self.n_freqs).all(|k| self.amplitude_profile.value(k) == 0.0) {
            return Err(Error::InvalidSpec("amplitude profile is identically zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub n_samples: usize,
    #[serde(default = "one")]
    pub variance: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Output disturbance `v = H(q) e` with `e` white Gaussian of variance `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub variance: f64,
    #[serde(default = "RationalTF::identity")]
    pub shaping_filter: RationalTF,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec::white(0.0, 0)
    }

    pub fn white(variance: f64, seed: u64) -> Self {
        NoiseSpec {
            variance,
            shaping_filter: RationalTF::identity(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidSpec("noise variance must be ≥ 0".into()));
        }
        let h = &self.shaping_filter;
        if (h.a[0] - 1.0).abs() > 1e-12 || (h.b[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec("noise shaping filter must be monic".into()));
        }
        if !h.poles()?.is_stable() {
            return Err(Error::Unstable("noise shaping filter".into()));
        }
        Ok(())
    }
}

/// A sampled signal, optionally periodic, optionally carrying its DFT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub samples: Vec<f64>,
    /// Samples per period, `None` for non-periodic records.
    #[serde(default)]
    pub period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<Complex64>>,
    /// Excited DFT bins (per period), known when the record is a generated multisine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excited_bins: Option<Vec<usize>>,
}

impl SignalRecord {
    pub fn aperiodic(samples: Vec<f64>) -> Self {
        SignalRecord {
            samples,
            period: None,
            spectrum: None,
            excited_bins: None,
        }
    }

    pub fn periodic(samples: Vec<f64>, period: usize) -> Self {
        SignalRecord {
            samples,
            period: Some(period),
            spectrum: None,
            excited_bins: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Sample at any integer time, wrapping for periodic records.
    pub fn at(&self, t: i64) -> Option<f64> {
        match self.period {
            Some(p) => {
                let idx = t.rem_euclid(p as i64) as usize;
                self.samples.get(idx).copied()
            }
            None if t >= 0 => self.samples.get(t as usize).copied(),
            None => None,
        }
    }

    /// Repeat a periodic record `n` times.
    pub fn repeat(&self, n: usize) -> SignalRecord {
        let mut samples = Vec::with_capacity(self.len() * n);
        for _ in 0..n {
            samples.extend_from_slice(&self.samples);
        }
        SignalRecord {
            samples,
            period: self.period,
            spectrum: None,
            excited_bins: self.excited_bins.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 28 + 16);
        out.push_str("index,value\n");
        for (i, v) in self.samples.iter().enumerate() {
            out.push_str(&i.to_string());
            out.push(',');
            out.push_str(&fmt17(*v));
            out.push('\n');
        }
        out
    }

    /// Parse a two-column `index,value` CSV. The result is aperiodic.
    pub fn from_csv<R: Read>(reader: R) -> Result<SignalRecord> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let value = rec
                .get(1)
                .ok_or_else(|| Error::InvalidSpec(format!("row {row}: missing value column")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("row {row}: bad number {value:?}")))?;
            samples.push(v);
        }
        Ok(SignalRecord::aperiodic(samples))
    }
}

/// Generator description stored next to a signal for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SignalSource {
    Multisine(MultisineSpec),
    Gaussian(GaussianSpec),
    Noise { spec: NoiseSpec, n_samples: usize },
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalEnvelope {
    pub source: SignalSource,
    pub signal: SignalRecord,
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn dft(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_complex_in_place(&mut buf);
    buf
}

pub fn dft_complex_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = FftPlanner::new().plan_fft_forward(buf.len());
    fft.process(buf);
}

/// Inverse DFT with the `1/N` factor.
pub fn idft(spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut buf = spectrum.to_vec();
    idft_in_place(&mut buf);
    buf
}

pub fn idft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let n = buf.len();
    let fft = FftPlanner::new().plan_fft_inverse(n);
    fft.process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Real part of the inverse DFT.
pub fn idft_real(spectrum: &[Complex64]) -> Vec<f64> {
    idft(spectrum).into_iter().map(|c| c.re).collect()
}

/// Random-phase multisine `u(t) = Σ_{k=-N_F}^{N_F} U_k e^{j2πkt/N}` with
/// `U_k = Ǔ(k)/√N_F · e^{jφ_k}`, `U_0 = 0`, then rescaled to the target rms.
pub fn generate_multisine(spec: &MultisineSpec) -> Result<SignalRecord> {
    spec.validate()?;
    let n = spec.n_samples;
    let nf = spec.n_freqs;
    let mut rng = seed::stream(spec.seed, Role::Phases);
    let norm = 1.0 / (nf as f64).sqrt();

    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..=nf {
        let phase = 2.0 * PI * rng.random::<f64>();
        let uk = Complex64::from_polar(norm * spec.amplitude_profile.value(k), phase) * n as f64;
        spectrum[k] += uk;
        spectrum[n - k] += uk.conj();
    }
    let mut samples = idft_real(&spectrum);
    let raw_rms = rms(&samples);
    if raw_rms == 0.0 {
        return Err(Error::InvalidSpec("multisine has zero power".into()));
    }
    let gain = spec.target_rms / raw_rms;
    samples.iter_mut().for_each(|v| *v *= gain);
    spectrum.iter_mut().for_each(|v| *v *= gain);

    let excited: Vec<usize> = (1..=nf)
        .filter(|&k| spec.amplitude_profile.value(k) > 0.0)
        .collect();
    Ok(SignalRecord {
        samples,
        period: Some(n),
        spectrum: Some(spectrum),
        excited_bins: Some(excited),
    })
}

fn white_gaussian<R: Rng>(rng: &mut R, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect()
}

/// i.i.d. zero-mean Gaussian input.
pub fn generate_gaussian(spec: &GaussianSpec) -> Result<SignalRecord> {
    if spec.n_samples == 0 || !(spec.variance >= 0.0 && spec.variance.is_finite()) {
        return Err(Error::InvalidSpec("gaussian input needs n ≥ 1 and variance ≥ 0".into()));
    }
    let mut rng = seed::stream(spec.seed, Role::GaussianInput);
    Ok(SignalRecord::aperiodic(white_gaussian(
        &mut rng,
        spec.n_samples,
        spec.variance.sqrt(),
    )))
}

/// `v = H(q) e`. The shaping filter is run through its transient before the
/// returned window so the record is (approximately) stationary.
pub fn generate_noise(spec: &NoiseSpec, n: usize) -> Result<SignalRecord> {
    if n == 0 {
        return Err(Error::InvalidSpec("noise length must be ≥ 1".into()));
    }
    spec.validate()?;
    if spec.variance == 0.0 {
        return Ok(SignalRecord::aperiodic(vec![0.0; n]));
    }
    let mut rng = seed::stream(spec.seed, Role::OutputNoise);
    let h = &spec.shaping_filter;
    if h.is_identity() {
        return Ok(SignalRecord::aperiodic(white_gaussian(&mut rng, n, spec.variance.sqrt())));
    }
    let burn = crate::ratfun::transient_length(h, 1 << 20)?;
    let e = white_gaussian(&mut rng, n + burn, spec.variance.sqrt());
    let v = h.filter_slice(&e);
    Ok(SignalRecord::aperiodic(v[burn..].to_vec()))
}
