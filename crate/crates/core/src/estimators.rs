//! Treatment-effect estimators: difference in means, the 2×2 log odds ratio
//! and the treatment coefficient of a logistic regression, plus the
//! monotone links used to generate responses.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::domain::{Allocation, ResponseModel, Subjects};
use crate::error::{Error, Result};

/// An allocation together with the binary responses it produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    w: Allocation,
    y: Vec<u8>,
}

impl TrialOutcome {
    pub fn new(w: Allocation, y: Vec<u8>) -> Result<Self> {
        if w.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: w.len(), found: y.len() });
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::InvalidConfig(format!("response {} is {}, expected 0 or 1", i + 1, y[i])));
        }
        Ok(Self { w, y })
    }

    pub fn allocation(&self) -> &Allocation {
        &self.w
    }

    pub fn responses(&self) -> &[u8] {
        &self.y
    }

    /// Success and failure counts `(s_T, f_T, s_C, f_C)`.
    pub fn table(&self) -> (u32, u32, u32, u32) {
        let (mut st, mut ft, mut sc, mut fc) = (0, 0, 0, 0);
        for (&w, &y) in self.w.signs().iter().zip(&self.y) {
            match (w > 0, y == 1) {
                (true, true) => st += 1,
                (true, false) => ft += 1,
                (false, true) => sc += 1,
                (false, false) => fc += 1,
            }
        }
        (st, ft, sc, fc)
    }
}

/// Inverse link `φ` mapping a linear predictor to a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Expit,
    Probit,
    InverseCloglog,
}

impl Link {
    pub fn cdf(self, eta: f64) -> f64 {
        match self {
            Link::Expit => expit(eta),
            Link::Probit => 0.5 * erfc(-eta / std::f64::consts::SQRT_2),
            Link::InverseCloglog => -(-eta.exp()).exp_m1(),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "expit" | "logit" | "logistic" => Ok(Link::Expit),
            "probit" => Ok(Link::Probit),
            "inverse_cloglog" | "cloglog" | "cloglog-inverse" => Ok(Link::InverseCloglog),
            _ => Err(Error::UnknownLink(s.to_string())),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Expit => "expit",
            Link::Probit => "probit",
            Link::InverseCloglog => "inverse_cloglog",
        })
    }
}

/// Numerically stable `1 / (1 + e^-x)`.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `p_i(x, w) = φ(β_0 + β'x + β_T w)` with treatment coded `w = ±1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModelSpec {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub beta_t: f64,
    #[serde(default)]
    pub link: Link,
}

impl LogisticModelSpec {
    /// Success probabilities of every subject under both arms.
    pub fn response_model(&self, subjects: &Subjects) -> Result<ResponseModel> {
        let n = subjects.n_subjects();
        let mut p_t = Vec::with_capacity(n);
        let mut p_c = Vec::with_capacity(n);
        for i in 0..n {
            let row = subjects.row(i);
            p_t.push(link_eval(self, &row, 1)?);
            p_c.push(link_eval(self, &row, -1)?);
        }
        ResponseModel::new(p_t, p_c)
    }
}

/// Evaluate the model for one covariate row and arm.
pub fn link_eval(spec: &LogisticModelSpec, x: &[f64], w: i8) -> Result<f64> {
    if x.len() != spec.beta.len() {
        return Err(Error::DimensionMismatch { expected: spec.beta.len(), found: x.len() });
    }
    let eta = spec.beta0 + spec.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>() + spec.beta_t * f64::from(w);
    if !eta.is_finite() {
        return Err(Error::NonFinite("linear predictor"));
    }
    Ok(spec.link.cdf(eta))
}

/// Risk difference `(1/n) w'y = ȳ_T - ȳ_C`.
pub fn diff_in_means(outcome: &TrialOutcome) -> f64 {
    let n = outcome.w.len() as f64 / 2.0;
    let dot: i64 = outcome.w.signs().iter().zip(&outcome.y).map(|(&w, &y)| i64::from(w) * i64::from(y)).sum();
    dot as f64 / n
}

/// Log odds ratio of the 2×2 table; 0.5 is added to every cell when any cell is empty.
pub fn log_odds_ratio(outcome: &TrialOutcome) -> f64 {
    let (st, ft, sc, fc) = outcome.table();
    let c = if st == 0 || ft == 0 || sc == 0 || fc == 0 { 0.5 } else { 0.0 };
    let [st, ft, sc, fc] = [st, ft, sc, fc].map(|k| f64::from(k) + c);
    (st * fc).ln() - (ft * sc).ln()
}

pub const IRLS_TOLERANCE: f64 = 1e-8;
pub const IRLS_MAX_ITERATIONS: usize = 50;
const SEPARATION_EPS: f64 = 1e-10;

/// Maximum-likelihood logit fit and its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    /// Coefficients in design-column order.
    pub coefficients: Vec<f64>,
    /// Standard errors from the inverse Fisher information; `NaN` when singular.
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub separation: bool,
    pub log_likelihood: f64,
}

/// Coefficients of a `[1, X, w]` fit, split by role.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreatmentFit {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub beta_t: f64,
    pub se_beta_t: f64,
    pub fit: LogisticFit,
}

impl TreatmentFit {
    /// Usable for aggregation: converged and not separated.
    pub fn is_reliable(&self) -> bool {
        self.fit.converged && !self.fit.separation
    }
}

/// Numerical rank of `x` from its singular values.
pub fn matrix_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().svd(false, false).singular_values;
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    let tol = largest * 1e-10 * x.nrows().max(x.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Logistic regression of `y` on the columns of `design` by iteratively
/// reweighted least squares, starting at zero.
pub fn fit_logit(design: &DMatrix<f64>, y: &[u8]) -> Result<LogisticFit> {
    let (m, k) = design.shape();
    if m != y.len() {
        return Err(Error::DimensionMismatch { expected: m, found: y.len() });
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    let rank = matrix_rank(design);
    if rank < k {
        return Err(Error::RankDeficient { rank, cols: k });
    }
    let yv = DVector::from_iterator(m, y.iter().map(|&v| f64::from(v)));
    let mut beta = DVector::zeros(k);
    let mut p = DVector::from_element(m, 0.5);
    let mut converged = false;
    let mut growing = false;
    let mut iterations = 0;
    let mut information = DMatrix::zeros(k, k);
    for it in 1..=IRLS_MAX_ITERATIONS {
        iterations = it;
        let weights = p.map(|pi| pi * (1.0 - pi));
        information = weighted_gram(design, &weights);
        let score = design.transpose() * (&yv - &p);
        let step = match information.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            // weights underflowed: the fit is running off to infinity
            None => break,
        };
        let before = beta.amax();
        beta += &step;
        growing = beta.amax() > before;
        p = (design * &beta).map(expit);
        if step.amax() < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }
    let extreme = p.iter().any(|&pi| !(SEPARATION_EPS..=1.0 - SEPARATION_EPS).contains(&pi));
    let separation = extreme && (growing || !converged);
    let weights = p.map(|pi| pi * (1.0 - pi));
    if converged {
        information = weighted_gram(design, &weights);
    }
    let std_errors = match information.try_inverse() {
        Some(inv) => (0..k).map(|j| inv[(j, j)].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; k],
    };
    let log_likelihood = yv
        .iter()
        .zip(p.iter())
        .map(
            |(&yi, &pi)| if yi > 0.5 { pi.max(f64::MIN_POSITIVE).ln() } else { (1.0 - pi).max(f64::MIN_POSITIVE).ln() },
        )
        .sum();
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        iterations,
        converged,
        separation,
        log_likelihood,
    })
}

fn weighted_gram(x: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = x.clone();
    for (mut row, &w) in scaled.row_iter_mut().zip(weights.iter()) {
        row *= w;
    }
    x.transpose() * scaled
}

/// The `[1, X, w]` design matrix with `w` coded `±1`.
pub fn treatment_design(subjects: &Subjects, w: &Allocation) -> Result<DMatrix<f64>> {
    let m = subjects.n_subjects();
    if w.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: w.len() });
    }
    let d = subjects.dim();
    let x = subjects.covariates();
    Ok(DMatrix::from_fn(m, d + 2, |i, j| match j {
        0 => 1.0,
        j if j <= d => x[(i, j - 1)],
        _ => f64::from(w.signs()[i]),
    }))
}

/// Fit `logit p = β_0 + β'x + β_T w` to a trial. Non-convergence and
/// separation are flagged rather than raised.
pub fn logistic_fit(subjects: &Subjects, outcome: &TrialOutcome) -> Result<TreatmentFit> {
    let design = treatment_design(subjects, &outcome.w)?;
    let fit = fit_logit(&design, &outcome.y)?;
    let d = subjects.dim();
    Ok(TreatmentFit {
        intercept: fit.coefficients[0],
        beta: fit.coefficients[1..=d].to_vec(),
        beta_t: fit.coefficients[d + 1],
        se_beta_t: fit.std_errors[d + 1],
        fit,
    })
}

/// Fit `logit p = β_0 + β'x` to observational data, the starting point of a
/// parametric bootstrap. Returns `(β_0, β)` and the fit diagnostics.
pub fn covariate_fit(subjects: &Subjects, y: &[u8]) -> Result<(f64, Vec<f64>, LogisticFit)> {
    let m = subjects.n_subjects();
    if y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: y.len() });
    }
    let x = subjects.covariates();
    let design = DMatrix::from_fn(m, subjects.dim() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let fit = fit_logit(&design, y)?;
    Ok((fit.coefficients[0], fit.coefficients[1..].to_vec(), fit))
}
