//! Wiener-system simulation and the three-step identification procedure:
//! BLA poles, GOBF bank from those poles, polynomial regression on the bank
//! outputs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bla::{self, BlaFitConfig, BlaFitResult, NonparametricBla, StabilizedPoles, Weighting};
use crate::error::{Error, Result, Stage};
use crate::gobf::{build_bank, GobfBank};
use crate::linalg::lstsq;
use crate::polymodel::{evaluate, fit_polynomial, Basis, FitReport, MultiPolyModel};
use crate::ratfun::{FilterMode, PoleSet, RationalTF};
use crate::signals::{generate_noise, NoiseSpec, SignalRecord};
use crate::export::fmt17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StaticNonlinearity {
    /// `f(x) = Σ γ_p x^p`, coefficients in ascending powers.
    Polynomial { coefficients: Vec<f64> },
    /// Clip to `[c1, c2]`.
    Saturation { c1: f64, c2: f64 },
}

pub const MAX_POLY_DEGREE: usize = 12;

impl StaticNonlinearity {
    pub fn identity() -> Self {
        StaticNonlinearity::Polynomial { coefficients: vec![0.0, 1.0] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StaticNonlinearity::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.len() > MAX_POLY_DEGREE + 1 {
                    return Err(Error::InvalidSpec(format!(
                        "polynomial needs 1 to {} coefficients",
                        MAX_POLY_DEGREE + 1
                    )));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidSpec("non-finite polynomial coefficient".into()));
                }
            }
            StaticNonlinearity::Saturation { c1, c2 } => {
                if !(c1 < c2) {
                    return Err(Error::InvalidSpec(format!("saturation needs c1 < c2, got {c1}, {c2}")));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            StaticNonlinearity::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, g| acc * x + g)
            }
            StaticNonlinearity::Saturation { c1, c2 } => x.clamp(*c1, *c2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerSystem {
    pub g: RationalTF,
    pub f: StaticNonlinearity,
    #[serde(default = "NoiseSpec::none")]
    pub output_noise: NoiseSpec,
}

impl WienerSystem {
    pub fn validate(&self) -> Result<()> {
        if !self.g.is_stable()? {
            return Err(Error::Unstable("linear block of the system is unstable".into()));
        }
        self.f.validate()?;
        self.output_noise.validate()
    }

    pub fn without_noise(&self) -> Self {
        WienerSystem {
            output_noise: NoiseSpec::none(),
            ..self.clone()
        }
    }
}

/// `x = G u`, `y = f(x) + v`. Returns `x` as well, for oracle checks only.
pub fn simulate(system: &WienerSystem, u: &SignalRecord, mode: FilterMode) -> Result<(SignalRecord, SignalRecord)> {
    system.validate()?;
    let x = system.g.filter_time(u, mode)?;
    let mut y = x.clone();
    y.spectrum = None;
    y.samples.iter_mut().for_each(|v| *v = system.f.apply(*v));
    if system.output_noise.variance > 0.0 {
        let v = generate_noise(&system.output_noise, u.len())?;
        y.samples.iter_mut().zip(&v.samples).for_each(|(a, b)| *a += b);
    }
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrfMethod {
    /// Per-period averaged spectral division on the excited bins.
    Periodic { n_periods: usize },
    /// Hann-windowed cross/auto spectrum ratio, 50% overlap.
    Welch { segment_len: usize },
}

impl Default for FrfMethod {
    fn default() -> Self {
        FrfMethod::Periodic { n_periods: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    pub n_a: usize,
    pub n_b: usize,
    pub n_rep: usize,
    pub degree: usize,
    #[serde(default)]
    pub basis: Basis,
    #[serde(default)]
    pub filter_mode: FilterMode,
    #[serde(default)]
    pub frf: FrfMethod,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Drop the bank start-up transient from the regression in zero-initial mode.
    #[serde(default = "yes")]
    pub discard_transient: bool,
}

fn default_max_iters() -> usize {
    100
}

fn default_rel_tol() -> f64 {
    1e-10
}

fn yes() -> bool {
    true
}

impl IdentifyConfig {
    pub fn new(n_a: usize, n_b: usize, n_rep: usize, degree: usize) -> Self {
        IdentifyConfig {
            n_a,
            n_b,
            n_rep,
            degree,
            basis: Basis::default(),
            filter_mode: FilterMode::default(),
            frf: FrfMethod::default(),
            max_iters: default_max_iters(),
            rel_tol: default_rel_tol(),
            discard_transient: true,
        }
    }

    pub fn fit_config(&self) -> BlaFitConfig {
        BlaFitConfig {
            n_a: self.n_a,
            n_b: self.n_b,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            weighting: Weighting::Uniform,
        }
    }
}

/// Parametric BLA as recorded in a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaSummary {
    pub tf: RationalTF,
    pub estimated_poles: PoleSet,
    pub bank_poles: PoleSet,
    pub n_reflected: usize,
    pub final_cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub repeated_poles: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub bla: BlaSummary,
    pub config: IdentifyConfig,
    pub regression: FitReport,
    /// First sample used by the regression.
    pub regression_start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerModel {
    pub bank: GobfBank,
    pub poly: MultiPolyModel,
    pub provenance: Provenance,
}

impl WienerModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: WienerModel = serde_json::from_str(text)?;
        if m.poly.n_channels != m.bank.n_channels() {
            return Err(Error::InvalidSpec(format!(
                "polynomial has {} channels, bank {}",
                m.poly.n_channels,
                m.bank.n_channels()
            )));
        }
        Ok(m)
    }
}

fn check_pair(u: &SignalRecord, y: &SignalRecord) -> Result<()> {
    if u.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} samples, output {}",
            u.len(),
            y.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::InvalidSpec("empty data record".into()));
    }
    Ok(())
}

/// Step 1: nonparametric FRF, rational fit, pole stabilization.
pub fn estimate_bla(u: &SignalRecord, y: &SignalRecord, cfg: &IdentifyConfig) -> Result<BlaSummary> {
    check_pair(u, y)?;
    let frf: NonparametricBla = match cfg.frf {
        FrfMethod::Periodic { n_periods } => bla::estimate_frf(u, y, n_periods),
        FrfMethod::Welch { segment_len } => bla::estimate_frf_welch(u, y, segment_len),
    }
    .map_err(|e| e.at(Stage::Frf))?;
    let fit: BlaFitResult = bla::fit_rational(&frf, &cfg.fit_config()).map_err(|e| e.at(Stage::RationalFit))?;
    let StabilizedPoles { poles, n_reflected } = bla::stabilize_poles(&fit.poles);
    if n_reflected > 0 {
        log::warn!("{n_reflected} BLA pole(s) reflected into the unit disc");
    }
    Ok(BlaSummary {
        tf: fit.tf,
        estimated_poles: fit.poles,
        bank_poles: poles,
        n_reflected,
        final_cost: fit.final_cost,
        initial_cost: fit.initial_cost,
        iterations: fit.iterations,
        converged: fit.converged,
        repeated_poles: fit.repeated_poles,
    })
}

/// Samples after which the bank's zero-state start-up has decayed below
/// `1e-8`, capped at a quarter of the record.
pub fn bank_transient(bank: &GobfBank, n: usize) -> usize {
    let sections = bank.sections();
    if sections.is_empty() {
        return 0;
    }
    let r = sections.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let t = if r <= 0.0 {
        sections.len() + 1
    } else {
        ((1e-8f64).ln() / r.ln()).ceil() as usize + sections.len()
    };
    t.min(n / 4)
}

/// Steps 2 and 3 on pre-computed BLA poles.
pub fn identify_with_bla(u: &SignalRecord, y: &SignalRecord, cfg: &IdentifyConfig, bla: &BlaSummary) -> Result<WienerModel> {
    check_pair(u, y)?;
    let bank = build_bank(&bla.bank_poles, cfg.n_rep).map_err(|e| e.at(Stage::Bank))?;
    let x = bank.bank_outputs(u, cfg.filter_mode).map_err(|e| e.at(Stage::Bank))?;
    let start = if cfg.discard_transient && cfg.filter_mode == FilterMode::ZeroInitial {
        bank_transient(&bank, u.len())
    } else {
        0
    };
    let fit = if start == 0 {
        fit_polynomial(&x, &y.samples, cfg.degree, cfg.basis)
    } else {
        let rows = x.nrows() - start;
        fit_polynomial(&x.rows(start, rows).into_owned(), &y.samples[start..], cfg.degree, cfg.basis)
    }
    .map_err(|e| e.at(Stage::Regression))?;
    Ok(WienerModel {
        bank,
        poly: fit.model,
        provenance: Provenance {
            bla: bla.clone(),
            config: cfg.clone(),
            regression: fit.report,
            regression_start: start,
        },
    })
}

pub fn identify(u: &SignalRecord, y: &SignalRecord, cfg: &IdentifyConfig) -> Result<WienerModel> {
    let bla = estimate_bla(u, y, cfg)?;
    identify_with_bla(u, y, cfg, &bla)
}

/// `ŷ = g(bank outputs of u)` in the filtering mode the model was identified with.
pub fn predict(model: &WienerModel, u: &SignalRecord) -> Result<SignalRecord> {
    let x = model
        .bank
        .bank_outputs(u, model.provenance.config.filter_mode)
        .map_err(|e| e.at(Stage::Prediction))?;
    let y = evaluate(&model.poly, &x).map_err(|e| e.at(Stage::Prediction))?;
    Ok(SignalRecord {
        samples: y,
        period: u.period,
        spectrum: None,
        excited_bins: None,
    })
}

/// `‖y − ŷ‖₂ / ‖y‖₂`.
pub fn nrmse(y: &[f64], y_hat: &[f64]) -> f64 {
    let num: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = y.iter().map(|a| a * a).sum();
    (num / den).sqrt()
}

/// `max_t |y − ŷ|`.
pub fn sup_error(y: &[f64], y_hat: &[f64]) -> f64 {
    y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateEstimate {
    pub alpha_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
}

/// Linear regression of `y` on the bank outputs; `x̂` carries the unknown BLA scale.
pub fn estimate_intermediate(y: &SignalRecord, x: &DMatrix<f64>) -> Result<IntermediateEstimate> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} bank output rows against {} samples",
            x.nrows(),
            y.len()
        )));
    }
    let sol = lstsq(x, &y.samples);
    if sol.is_rank_deficient() {
        log::warn!("intermediate-signal regression is rank deficient");
    }
    let x_hat = (x * nalgebra::DVector::from_row_slice(&sol.x)).iter().copied().collect();
    Ok(IntermediateEstimate {
        alpha_hat: sol.x,
        x_hat,
    })
}

/// `x_hat,y` pairs with a header row.
pub fn scatter_csv(x_hat: &[f64], y: &[f64]) -> String {
    let mut s = String::from("x_hat,y\n");
    for (a, b) in x_hat.iter().zip(y) {
        s.push_str(&fmt17(*a));
        s.push(',');
        s.push_str(&fmt17(*b));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSelection {
    pub n_rep: usize,
    /// `(n_rep, validation NRMSE)`; failed fits are left out.
    pub scores: Vec<(usize, f64)>,
}

/// Fit `n_rep = 0..=n_max` on the estimation pair with a shared BLA and keep
/// the validation-NRMSE minimizer.
pub fn select_n_rep(
    estimation: (&SignalRecord, &SignalRecord),
    validation: (&SignalRecord, &SignalRecord),
    cfg: &IdentifyConfig,
    n_max: usize,
) -> Result<RepSelection> {
    let bla = estimate_bla(estimation.0, estimation.1, cfg)?;
    let mut scores = Vec::new();
    let mut last_err = None;
    for r in 0..=n_max {
        let c = IdentifyConfig { n_rep: r, ..cfg.clone() };
        match identify_with_bla(estimation.0, estimation.1, &c, &bla).and_then(|m| predict(&m, validation.0)) {
            Ok(yh) => scores.push((r, nrmse(&validation.1.samples, &yh.samples))),
            Err(e) => last_err = Some(e),
        }
    }
    let best = scores.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|s| s.0);
    match best {
        Some(n_rep) => Ok(RepSelection { n_rep, scores }),
        None => Err(last_err.unwrap_or_else(|| Error::Numerical("no candidate model".into()))),
    }
}
