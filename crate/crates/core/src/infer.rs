//! Search over `(y, z)` for an input the forward model scores highly while it
//! agrees with the score the inverse map was asked for.
//!
//! Each restart maximizes
//! `F - μ₁·relu(|y - F| - ε₁)² - μ₂·relu(ε₂ - log p₀(z))²` with
//! `F = f(G(z, y))`, all scores in the inverse map's standardized units.
//! Restarts run as rows of one batch; each row does gradient ascent with its
//! own step size, halved whenever a step would lower its objective.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Input};
use crate::diffcore::{Graph, Tensor};
use crate::error::{MinError, Result};
use crate::forward::ForwardModel;
use crate::invmap::{HeadMode, InverseMap, Samples};
use crate::reweight::percentile;
use crate::rng::MinRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Agreement tolerance in standardized score units.
    pub eps1: f64,
    /// Minimum log-prior of `z`; `None` uses the log-density at radius `2√d_z`.
    pub eps2: Option<f64>,
    pub mu1: f64,
    pub mu2: f64,
    pub steps: usize,
    pub step_size: f64,
    pub restarts: usize,
    /// Standard deviation of the initial score jitter, standardized units.
    pub y_jitter: f64,
    /// Keep `z` at the prior mode and search over `y` only.
    pub freeze_z: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            eps1: 0.5,
            eps2: None,
            mu1: 10.0,
            mu2: 10.0,
            steps: 200,
            step_size: 0.05,
            restarts: 32,
            y_jitter: 0.1,
            freeze_z: false,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0) || self.steps == 0 || self.restarts == 0 || !(self.step_size > 0.0) {
            return Err(MinError::invalid("inference needs eps1 > 0, steps >= 1, restarts >= 1, step size > 0"));
        }
        if !(self.mu1 >= 0.0) || !(self.mu2 >= 0.0) || !(self.y_jitter >= 0.0) {
            return Err(MinError::invalid("penalties and jitter must be non-negative"));
        }
        if self.eps2.is_some_and(|e| !e.is_finite()) {
            return Err(MinError::invalid("eps2 must be finite"));
        }
        Ok(())
    }

    pub fn eps2_for(&self, d_z: usize) -> f64 {
        self.eps2.unwrap_or_else(|| default_eps2(d_z))
    }
}

/// Standard normal log-density at radius `2√d`.
pub fn default_eps2(d: usize) -> f64 {
    -0.5 * d as f64 * (2.0 * PI).ln() - 2.0 * d as f64
}

pub fn log_prior(z: &[f64]) -> f64 {
    -0.5 * z.len() as f64 * (2.0 * PI).ln() - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartSummary {
    pub index: usize,
    pub y: f64,
    pub prediction: f64,
    pub residual: f64,
    pub log_prior: f64,
    pub feasible: bool,
    /// Relaxed objective before the first step and after each step.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    pub x_star: Input,
    /// Raw score the inverse map was conditioned on.
    pub y_star: f64,
    pub z_star: Vec<f64>,
    /// Forward prediction at `x_star`, raw units.
    pub prediction: f64,
    /// `|y - f(x_star)|` in standardized units.
    pub residual: f64,
    pub log_prior: f64,
    pub feasible: bool,
    pub eps1: f64,
    pub eps2: f64,
    pub restart: usize,
    pub restarts: Vec<RestartSummary>,
}

/// Post-hoc numbers for one `(z, y)`, recomputed from scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub x: Input,
    pub prediction: f64,
    pub residual: f64,
    pub log_prior: f64,
    pub feasible: bool,
}

fn check_models(inv: &InverseMap, fwd: &ForwardModel, context: Option<&[f64]>) -> Result<()> {
    if inv.space() != fwd.space() || inv.context_dim() != fwd.context_dim() {
        return Err(MinError::ModelMismatch("inverse and forward models cover different spaces".into()));
    }
    match (inv.context_dim(), context) {
        (None, None) => Ok(()),
        (Some(d), Some(c)) if c.len() == d => Ok(()),
        _ => Err(MinError::invalid("context does not match the models")),
    }
}

/// Decodes `(z, y)` to an input, scores it with the forward model and checks
/// both constraints. Categorical inputs are scored as hard one-hot sequences.
pub fn evaluate_point(
    inv: &InverseMap,
    fwd: &ForwardModel,
    z: &[f64],
    y: f64,
    context: Option<&[f64]>,
    eps1: f64,
    eps2: f64,
) -> Result<Check> {
    check_models(inv, fwd, context)?;
    let (_, x) = inv.decode_latent(z, y, context)?;
    let prediction = fwd.predict(&x, context)?;
    let s = inv.y_scaler();
    let residual = (s.apply_scalar(y) - s.apply_scalar(prediction)).abs();
    let lp = log_prior(z);
    Ok(Check { x, prediction, residual, log_prior: lp, feasible: residual <= eps1 && lp >= eps2 })
}

struct Batch {
    objective: Vec<f64>,
    grad_z: Option<Tensor>,
    grad_y: Option<Tensor>,
}

struct Problem<'a> {
    inv: &'a InverseMap,
    fwd: &'a ForwardModel,
    context: Option<Vec<f64>>,
    fwd_context: Option<Vec<f64>>,
    eps1: f64,
    eps2: f64,
    mu1: f64,
    mu2: f64,
    /// Affine map from the forward model's standardized output to the inverse map's units.
    out_scale: f64,
    out_shift: f64,
}

impl Problem<'_> {
    fn eval(&self, z: &Tensor, y: &Tensor) -> Result<Batch> {
        let r = y.rows();
        let d_z = z.cols();
        let mut g = Graph::new();
        let gen = self.inv.generator().bind(&mut g, false);
        let fwd = self.fwd.bind(&mut g, false);
        let zi = g.param(z.clone());
        let yi = g.param(y.clone());
        let cond = match &self.context {
            Some(c) => {
                let ci = g.input(Tensor::matrix(r, c.len(), c.repeat(r))?);
                g.concat(&[yi, ci])?
            }
            None => yi,
        };
        let x = self.inv.generate(&mut g, &gen, zi, cond, HeadMode::Relaxed)?;
        let fc = match &self.fwd_context {
            Some(c) => Some(g.input(Tensor::matrix(r, c.len(), c.repeat(r))?)),
            None => None,
        };
        let f = self.fwd.forward(&mut g, &fwd, x, fc)?;
        let f = g.scale(f, self.out_scale)?;
        let f = g.add_scalar(f, self.out_shift)?;

        let diff = g.sub(yi, f)?;
        let resid = g.abs(diff)?;
        let over = g.add_scalar(resid, -self.eps1)?;
        let over = g.relu(over)?;
        let p1 = g.mul(over, over)?;
        let p1 = g.scale(p1, -self.mu1)?;

        let zz = g.mul(zi, zi)?;
        let zz = g.sum_last(zz)?;
        let const_term = -0.5 * d_z as f64 * (2.0 * PI).ln();
        // eps2 - log p0(z) = eps2 - const + 0.5 |z|^2
        let short = g.scale(zz, 0.5)?;
        let short = g.add_scalar(short, self.eps2 - const_term)?;
        let short = g.relu(short)?;
        let p2 = g.mul(short, short)?;
        let p2 = g.scale(p2, -self.mu2)?;

        let obj = g.add(f, p1)?;
        let obj = g.add(obj, p2)?;
        let objective = g.value(obj).data().to_vec();
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(MinError::NonFinite { op: "inference objective".into() });
        }
        let total = g.sum(obj)?;
        let mut gr = g.backward(total)?;
        Ok(Batch { objective, grad_z: gr.take(zi), grad_y: gr.take(yi) })
    }
}

/// Runs the restarts and returns the best feasible one by forward prediction
/// (ties: lower residual, then lower index); if none is feasible, the one with
/// the smallest residual.
pub fn approx_infer(
    inv: &InverseMap,
    fwd: &ForwardModel,
    dataset_ys: &[f64],
    config: &InferenceConfig,
    context: Option<&[f64]>,
    rng: &mut MinRng,
) -> Result<InferenceResult> {
    config.validate()?;
    check_models(inv, fwd, context)?;
    if dataset_ys.is_empty() {
        return Err(MinError::invalid("approx_infer needs the dataset scores for its starting point"));
    }
    let d_z = inv.d_z();
    let r = config.restarts;
    let eps2 = config.eps2_for(d_z);
    let ys = inv.y_scaler();
    let fs = fwd.y_scaler();
    let problem = Problem {
        inv,
        fwd,
        context: match (inv.c_scaler(), context) {
            (Some(s), Some(c)) => Some(s.apply(c)),
            _ => None,
        },
        fwd_context: match (fwd.c_scaler(), context) {
            (Some(s), Some(c)) => Some(s.apply(c)),
            _ => None,
        },
        eps1: config.eps1,
        eps2,
        mu1: config.mu1,
        mu2: config.mu2,
        out_scale: fs.std[0] / ys.std[0],
        out_shift: (fs.mean[0] - ys.mean[0]) / ys.std[0],
    };

    let y_max = dataset_ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y0 = ys.apply_scalar(y_max + 0.5 * (y_max - percentile(dataset_ys, 0.9)));
    let mut y = Tensor::matrix(r, 1, (0..r).map(|_| y0 + config.y_jitter * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())?;
    let mut z = if config.freeze_z { Tensor::zeros(&[r, d_z]) } else { Tensor::randn(&[r, d_z], rng) };

    let mut cur = problem.eval(&z, &y)?;
    let mut traces: Vec<Vec<f64>> = cur.objective.iter().map(|&v| vec![v]).collect();
    let mut eta = vec![config.step_size; r];
    for _ in 0..config.steps {
        let gz = cur.grad_z.clone().unwrap_or_else(|| Tensor::zeros(&[r, d_z]));
        let gy = cur.grad_y.clone().unwrap_or_else(|| Tensor::zeros(&[r, 1]));
        let mut z_new = z.clone();
        let mut y_new = y.clone();
        for i in 0..r {
            if !config.freeze_z {
                for j in 0..d_z {
                    z_new.data_mut()[i * d_z + j] += eta[i] * gz.data()[i * d_z + j];
                }
            }
            y_new.data_mut()[i] += eta[i] * gy.data()[i];
        }
        let next = problem.eval(&z_new, &y_new)?;
        let mut accepted = false;
        for i in 0..r {
            if next.objective[i] >= cur.objective[i] {
                accepted = true;
                eta[i] *= 1.2;
                z.data_mut()[i * d_z..(i + 1) * d_z].copy_from_slice(&z_new.data()[i * d_z..(i + 1) * d_z]);
                y.data_mut()[i] = y_new.data()[i];
            } else {
                eta[i] *= 0.5;
            }
        }
        if accepted {
            // Rows that rejected keep their old point; re-evaluate so gradients match.
            cur = problem.eval(&z, &y)?;
        }
        for (t, &v) in traces.iter_mut().zip(&cur.objective) {
            t.push(v);
        }
    }

    let mut summaries = Vec::with_capacity(r);
    let mut checks = Vec::with_capacity(r);
    for (i, trace) in traces.into_iter().enumerate() {
        let zi = z.row(i).to_vec();
        let yi = ys.invert_scalar(y.data()[i]);
        let c = evaluate_point(inv, fwd, &zi, yi, context, config.eps1, eps2)?;
        summaries.push(RestartSummary {
            index: i,
            y: yi,
            prediction: c.prediction,
            residual: c.residual,
            log_prior: c.log_prior,
            feasible: c.feasible,
            trace,
        });
        checks.push((zi, yi, c));
    }
    let pick = best_restart(&summaries, config.eps1, eps2);
    let (z_star, y_star, c) = checks.swap_remove(pick);
    Ok(InferenceResult {
        x_star: c.x,
        y_star,
        z_star,
        prediction: c.prediction,
        residual: c.residual,
        log_prior: c.log_prior,
        feasible: c.feasible,
        eps1: config.eps1,
        eps2,
        restart: pick,
        restarts: summaries,
    })
}

/// Index of the restart to report under tolerances `(eps1, eps2)`, judged from
/// each summary's residual and log-prior.
pub fn best_restart(s: &[RestartSummary], eps1: f64, eps2: f64) -> usize {
    let feasible: Vec<&RestartSummary> = s.iter().filter(|r| r.residual <= eps1 && r.log_prior >= eps2).collect();
    if !feasible.is_empty() {
        return feasible
            .iter()
            .min_by(|a, b| {
                b.prediction
                    .total_cmp(&a.prediction)
                    .then(a.residual.total_cmp(&b.residual))
                    .then(a.index.cmp(&b.index))
            })
            .expect("nonempty")
            .index;
    }
    s.iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual).then(a.index.cmp(&b.index)))
        .expect("at least one restart")
        .index
}

impl InferenceResult {
    /// Recomputes `x_star`, the prediction and both constraints from
    /// `(z_star, y_star)`; true when everything reported matches.
    pub fn verify(&self, inv: &InverseMap, fwd: &ForwardModel, context: Option<&[f64]>) -> Result<bool> {
        let c = evaluate_point(inv, fwd, &self.z_star, self.y_star, context, self.eps1, self.eps2)?;
        let exact = c.residual <= self.eps1 && log_prior(&self.z_star) >= self.eps2;
        Ok(c.x == self.x_star
            && c.prediction == self.prediction
            && c.residual == self.residual
            && c.log_prior == self.log_prior
            && exact == self.feasible)
    }
}

/// `n` inverse-map samples at the best score in the dataset.
pub fn naive_best_y(
    ds: &Dataset,
    inv: &InverseMap,
    context: Option<&[f64]>,
    n: usize,
    rng: &mut MinRng,
) -> Result<Samples> {
    let y_max = ds.y_max().ok_or_else(|| MinError::invalid("dataset is empty"))?;
    inv.sample(y_max, context, n, rng)
}
