//! Weighted curve fitting: √t-exponential decay, straight line and
//! saturation exponential, with χ² and Pearson diagnostics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const DEFAULT_DECAY_RANGE: (f64, f64) = (200.0, 5000.0);
pub const DEFAULT_LINEAR_RANGE: (f64, f64) = (5000.0, 10000.0);

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("standard deviation at point {0} is not positive")]
    NonPositiveSigma(usize),
    #[error("the independent variable has zero variance")]
    ZeroVariance,
    #[error("series columns differ in length")]
    LengthMismatch,
    #[error("degrees of freedom must be at least 1")]
    NoDegreesOfFreedom,
    #[error("unknown model `{0}` (expected sqrt-exp, linear or saturation)")]
    UnknownModel(String),
}

/// Observations `(t, y ± σ)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Series {
    pub fn new(t: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self, FitError> {
        if t.len() != y.len() || t.len() != sigma.len() {
            return Err(FitError::LengthMismatch);
        }
        Ok(Self { t, y, sigma })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Points with `lo <= t <= hi`.
    pub fn window(&self, (lo, hi): (f64, f64)) -> Series {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| self.t[k] >= lo && self.t[k] <= hi)
            .collect();
        Series {
            t: keep.iter().map(|&k| self.t[k]).collect(),
            y: keep.iter().map(|&k| self.y[k]).collect(),
            sigma: keep.iter().map(|&k| self.sigma[k]).collect(),
        }
    }

    fn check_sigma(&self) -> Result<(), FitError> {
        match self.sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            Some(k) => Err(FitError::NonPositiveSigma(k)),
            None => Ok(()),
        }
    }

    fn span(&self) -> (f64, f64) {
        let lo = self.t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    /// `a·exp(−b·√t) + c`
    SqrtExp,
    /// `a + b·t`
    Linear,
    /// `y0 + A·exp(R0·x)`
    Saturation,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::SqrtExp => "sqrt-exp",
            Model::Linear => "linear",
            Model::Saturation => "saturation",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            Model::SqrtExp => "y = a*exp(-b*sqrt(t)) + c",
            Model::Linear => "y = a + b*t",
            Model::Saturation => "y = y0 + A*exp(R0*x)",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Model::SqrtExp => &["a", "b", "c"],
            Model::Linear => &["a", "b"],
            Model::Saturation => &["y0", "A", "R0"],
        }
    }

    pub fn eval(self, x: f64, p: &[f64]) -> f64 {
        match self {
            Model::SqrtExp => p[0] * (-p[1] * x.sqrt()).exp() + p[2],
            Model::Linear => p[0] + p[1] * x,
            Model::Saturation => p[0] + p[1] * (p[2] * x).exp(),
        }
    }

    fn gradient(self, x: f64, p: &[f64], out: &mut [f64]) {
        match self {
            Model::SqrtExp => {
                let s = x.sqrt();
                let e = (-p[1] * s).exp();
                out[0] = e;
                out[1] = -p[0] * s * e;
                out[2] = 1.0;
            }
            Model::Linear => {
                out[0] = 1.0;
                out[1] = x;
            }
            Model::Saturation => {
                let e = (p[2] * x).exp();
                out[0] = 1.0;
                out[1] = e;
                out[2] = p[1] * x * e;
            }
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sqrt-exp" | "sqrt_exp" | "decay" => Ok(Model::SqrtExp),
            "linear" => Ok(Model::Linear),
            "saturation" => Ok(Model::Saturation),
            _ => Err(FitError::UnknownModel(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: Model,
    pub params: Vec<f64>,
    pub param_errors: Vec<f64>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub pearson: f64,
    pub n_points: usize,
    pub range: (f64, f64),
    pub converged: bool,
    /// Parameters are not identifiable (flat model or singular covariance).
    pub degenerate: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        let k = self.model.param_names().iter().position(|&n| n == name)?;
        Some(self.params[k])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        let k = self.model.param_names().iter().position(|&n| n == name)?;
        Some(self.param_errors[k])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.model.eval(x, &self.params)
    }

    /// Plain-text table of the fit.
    pub fn report(&self) -> String {
        let mut out = format!("model: {} ({})\n", self.model, self.model.formula());
        out += &format!(
            "range: [{}, {}]  points: {}\n",
            self.range.0, self.range.1, self.n_points
        );
        for ((name, v), e) in self.model.param_names().iter().zip(&self.params).zip(&self.param_errors) {
            out += &format!("{name:>3} = {v:.6e} ± {e:.3e}\n");
        }
        out += &format!("chi2 = {:.6e}\n", self.chi2);
        out += &format!("reduced chi2 = {:.6e}\n", self.reduced_chi2);
        out += &format!("pearson = {:.6}\n", self.pearson);
        out += &format!(
            "converged: {}  iterations: {}{}\n",
            if self.converged { "yes" } else { "no" },
            self.iterations,
            if self.degenerate { "  (degenerate)" } else { "" }
        );
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when an accepted step changes χ² by less than this fraction.
    pub tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub chi2: f64,
    /// Unscaled covariance (JᵀWJ)⁻¹ at the solution, if invertible.
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Σ((y − f(t))/σ)².
pub fn chi_square(series: &Series, f: impl Fn(f64) -> f64) -> Result<f64, FitError> {
    series.check_sigma()?;
    Ok((0..series.len())
        .map(|k| ((series.y[k] - f(series.t[k])) / series.sigma[k]).powi(2))
        .sum())
}

/// χ² per degree of freedom.
pub fn reduced_chi_square(series: &Series, f: impl Fn(f64) -> f64, dof: usize) -> Result<f64, FitError> {
    if dof == 0 {
        return Err(FitError::NoDegreesOfFreedom);
    }
    Ok(chi_square(series, f)? / dof as f64)
}

/// Pearson product-moment correlation of `x` and `y`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch);
    }
    if x.len() < 2 {
        return Err(FitError::TooFewPoints { need: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FitError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn pearson_or_zero(s: &Series) -> f64 {
    pearson(&s.t, &s.y).unwrap_or(0.0)
}

/// Damped Gauss-Newton (Levenberg-Marquardt) weighted least squares; λ is
/// divided by 10 after an accepted step and multiplied by 10 after a
/// rejected one.
pub fn levenberg_marquardt(model: Model, series: &Series, p0: &[f64], opts: LmOptions) -> LmOutcome {
    let n = series.len();
    let k = p0.len();
    let chi2_of = |p: &[f64]| -> f64 {
        (0..n)
            .map(|i| ((series.y[i] - model.eval(series.t[i], p)) / series.sigma[i]).powi(2))
            .sum()
    };
    let normal = |p: &[f64]| -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut g = DVector::<f64>::zeros(k);
        let mut grad = vec![0.0; k];
        for i in 0..n {
            model.gradient(series.t[i], p, &mut grad);
            let w = 1.0 / (series.sigma[i] * series.sigma[i]);
            let r = series.y[i] - model.eval(series.t[i], p);
            for r1 in 0..k {
                g[r1] += w * grad[r1] * r;
                for c in 0..=r1 {
                    a[(r1, c)] += w * grad[r1] * grad[c];
                }
            }
        }
        for r1 in 0..k {
            for c in r1 + 1..k {
                a[(r1, c)] = a[(c, r1)];
            }
        }
        (a, g)
    };

    let mut p = p0.to_vec();
    let mut chi2 = chi2_of(&p);
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    if chi2.is_finite() {
        'outer: while iterations < opts.max_iterations {
            iterations += 1;
            let (a, g) = normal(&p);
            loop {
                let mut damped = a.clone();
                for d in 0..k {
                    damped[(d, d)] += lambda * a[(d, d)].max(f64::MIN_POSITIVE);
                }
                let step = damped.lu().solve(&g);
                if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
                    let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
                    let trial_chi2 = chi2_of(&trial);
                    if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                        let change = if chi2 > 0.0 { (chi2 - trial_chi2) / chi2 } else { 0.0 };
                        p = trial;
                        chi2 = trial_chi2;
                        lambda = (lambda / 10.0).max(1e-300);
                        if change < opts.tolerance {
                            converged = true;
                            break 'outer;
                        }
                        break;
                    }
                }
                lambda *= 10.0;
                if lambda > 1e20 {
                    // no descent direction left: a stationary point
                    converged = true;
                    break 'outer;
                }
            }
        }
    }
    let (a, _) = normal(&p);
    let covariance = a.try_inverse().filter(|c| c.iter().all(|v| v.is_finite()));
    LmOutcome {
        params: p,
        chi2,
        covariance,
        iterations,
        converged,
    }
}

fn finish(model: Model, series: &Series, range: (f64, f64), out: LmOutcome, degenerate_shape: bool) -> FitResult {
    let k = out.params.len();
    let (param_errors, singular) = match &out.covariance {
        Some(c) => {
            let errs: Vec<f64> = (0..k).map(|d| c[(d, d)].max(0.0).sqrt()).collect();
            let bad = (0..k).any(|d| c[(d, d)] < 0.0);
            (errs, bad)
        }
        None => (vec![f64::NAN; k], true),
    };
    FitResult {
        model,
        reduced_chi2: out.chi2 / (series.len() - k) as f64,
        chi2: out.chi2,
        pearson: pearson_or_zero(series),
        n_points: series.len(),
        range,
        converged: out.converged,
        degenerate: singular || degenerate_shape,
        iterations: out.iterations,
        params: out.params,
        param_errors,
    }
}

fn prepare(series: &Series, range: Option<(f64, f64)>, need: usize) -> Result<(Series, (f64, f64)), FitError> {
    let s = match range {
        Some(r) => series.window(r),
        None => series.clone(),
    };
    if s.len() < need {
        return Err(FitError::TooFewPoints { need, got: s.len() });
    }
    s.check_sigma()?;
    let range = range.unwrap_or_else(|| s.span());
    Ok((s, range))
}

/// Weighted least squares of `y = α + β·φ(t)` for a fixed basis φ.
fn linear_in_basis(s: &Series, phi: impl Fn(f64) -> f64) -> Option<(f64, f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..s.len() {
        let w = 1.0 / (s.sigma[k] * s.sigma[k]);
        let x = phi(s.t[k]);
        sw += w;
        sx += w * x;
        sy += w * s.y[k];
        sxx += w * x * x;
        sxy += w * x * s.y[k];
    }
    let det = sw * sxx - sx * sx;
    if !(det.abs() > 1e-300) {
        return None;
    }
    let alpha = (sxx * sy - sx * sxy) / det;
    let beta = (sw * sxy - sx * sy) / det;
    let chi2: f64 = (0..s.len())
        .map(|k| ((s.y[k] - alpha - beta * phi(s.t[k])) / s.sigma[k]).powi(2))
        .sum();
    Some((alpha, beta, chi2))
}

/// Best start over a log-spaced grid of the nonlinear rate, with the two
/// linear parameters solved exactly for each rate.
fn grid_start(s: &Series, rates: impl Iterator<Item = f64>, build: impl Fn(f64, f64, f64) -> Vec<f64>, phi: impl Fn(f64, f64) -> f64) -> Option<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for rate in rates {
        if let Some((alpha, beta, chi2)) = linear_in_basis(s, |t| phi(rate, t)) {
            if chi2.is_finite() && best.as_ref().is_none_or(|b| chi2 < b.0) {
                best = Some((chi2, build(alpha, beta, rate)));
            }
        }
    }
    best.map(|b| b.1)
}

fn tail_mean(y: &[f64]) -> f64 {
    let m = (y.len() / 10).max(1);
    y[y.len() - m..].iter().sum::<f64>() / m as f64
}

/// Slope of ln|y − asymptote| against `x` over the first decile.
fn log_slope(xs: &[f64], ys: &[f64], asymptote: f64) -> Option<f64> {
    let m = (xs.len() / 10).max(3).min(xs.len());
    let pts: Vec<(f64, f64)> = (0..m)
        .filter_map(|k| {
            let d = (ys[k] - asymptote).abs();
            (d > 0.0).then(|| (xs[k], d.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn sorted(s: &Series) -> Series {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.t[a].total_cmp(&s.t[b]));
    Series {
        t: idx.iter().map(|&k| s.t[k]).collect(),
        y: idx.iter().map(|&k| s.y[k]).collect(),
        sigma: idx.iter().map(|&k| s.sigma[k]).collect(),
    }
}

fn log_grid(lo: f64, hi: f64, steps: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..=steps).map(move |k| (a + (b - a) * k as f64 / steps as f64).exp())
}

/// Runs the solver from each start and keeps the best converged result.
fn best_of(model: Model, s: &Series, starts: Vec<Vec<f64>>) -> LmOutcome {
    let mut best: Option<LmOutcome> = None;
    for p0 in starts {
        if p0.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let out = levenberg_marquardt(model, s, &p0, LmOptions::default());
        let better = match &best {
            None => true,
            Some(b) => (out.converged && !b.converged) || (out.converged == b.converged && out.chi2 < b.chi2),
        };
        if better {
            best = Some(out);
        }
    }
    best.unwrap_or_else(|| LmOutcome {
        params: vec![f64::NAN; model.param_names().len()],
        chi2: f64::INFINITY,
        covariance: None,
        iterations: 0,
        converged: false,
    })
}

/// Fits `a·exp(−b·√t) + c` on the points of `series` inside `range`.
///
/// The solver starts from c = mean of the last 10% of y, a = y(t_min) − c and
/// b from a log-linear fit of the first decile; a second start from a grid
/// search over b guards against a poor first guess.
pub fn fit_sqrt_exp(series: &Series, range: Option<(f64, f64)>) -> Result<FitResult, FitError> {
    let (s, range) = prepare(series, range, 4)?;
    let s = sorted(&s);
    let roots: Vec<f64> = s.t.iter().map(|t| t.max(0.0).sqrt()).collect();
    let c0 = tail_mean(&s.y);
    let a0 = s.y[0] - c0;
    let b0 = log_slope(&roots, &s.y, c0).map(|k| -k).filter(|b| b.is_finite()).unwrap_or(1.0);
    let span = roots.last().unwrap() - roots[0];
    let span = if span > 0.0 { span } else { 1.0 };
    let mut starts = vec![vec![a0, b0, c0]];
    if let Some(g) = grid_start(
        &s,
        log_grid(1e-3 / span, 1e3 / span, 120),
        |alpha, beta, rate| vec![beta, rate, alpha],
        |rate, t| (-rate * t.max(0.0).sqrt()).exp(),
    ) {
        starts.push(g);
    }
    let out = best_of(Model::SqrtExp, &s, starts);
    let scale = s.y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = out.params[0];
    let flat = !(a.abs() > 1e-8 * scale) || !(out.params[1] * span > 1e-8);
    Ok(finish(Model::SqrtExp, &s, range, out, flat))
}

/// Closed-form weighted straight-line fit `a + b·t`.
pub fn fit_linear(series: &Series, range: Option<(f64, f64)>) -> Result<FitResult, FitError> {
    let (s, range) = prepare(series, range, 3)?;
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..s.len() {
        let w = 1.0 / (s.sigma[k] * s.sigma[k]);
        sw += w;
        sx += w * s.t[k];
        sy += w * s.y[k];
        sxx += w * s.t[k] * s.t[k];
        sxy += w * s.t[k] * s.y[k];
    }
    let t_mean = s.t.iter().sum::<f64>() / s.len() as f64;
    if s.t.iter().all(|&t| t == t_mean) {
        return Err(FitError::ZeroVariance);
    }
    let det = sw * sxx - sx * sx;
    let a = (sxx * sy - sx * sxy) / det;
    let b = (sw * sxy - sx * sy) / det;
    let chi2 = chi_square(&s, |t| a + b * t)?;
    Ok(FitResult {
        model: Model::Linear,
        params: vec![a, b],
        param_errors: vec![(sxx / det).sqrt(), (sw / det).sqrt()],
        chi2,
        reduced_chi2: chi2 / (s.len() - 2) as f64,
        pearson: pearson_or_zero(&s),
        n_points: s.len(),
        range,
        converged: true,
        degenerate: false,
        iterations: 0,
    })
}

/// Fits `y0 + A·exp(R0·x)`.
pub fn fit_saturation(series: &Series, range: Option<(f64, f64)>) -> Result<FitResult, FitError> {
    let (s, range) = prepare(series, range, 4)?;
    let s = sorted(&s);
    let y0 = tail_mean(&s.y);
    let a0 = s.y[0] - y0;
    let x0 = s.t[0];
    let r0 = log_slope(&s.t, &s.y, y0).filter(|r| r.is_finite()).unwrap_or(-1.0);
    let span = s.t.last().unwrap() - x0;
    let span = if span > 0.0 { span } else { 1.0 };
    // A is referred to x = 0, so undo the offset of the first point
    let mut starts = vec![vec![y0, a0 * (-r0 * x0).exp(), r0]];
    let rates = log_grid(1e-3 / span, 1e2 / span, 100).flat_map(|r| [-r, r]);
    if let Some(g) = grid_start(
        &s,
        rates,
        |alpha, beta, rate| vec![alpha, beta, rate],
        |rate, x| (rate * x).exp(),
    ) {
        starts.push(g);
    }
    let out = best_of(Model::Saturation, &s, starts);
    let scale = s.y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let flat = !(out.params[2].abs() * span > 1e-8) || !(out.params[1].abs() > 1e-8 * scale);
    Ok(finish(Model::Saturation, &s, range, out, flat))
}

/// Dispatches to the fit of `model`.
pub fn fit(model: Model, series: &Series, range: Option<(f64, f64)>) -> Result<FitResult, FitError> {
    match model {
        Model::SqrtExp => fit_sqrt_exp(series, range),
        Model::Linear => fit_linear(series, range),
        Model::Saturation => fit_saturation(series, range),
    }
}
