//! Proxy regressor `ŷ = f(x[, c])` and the naive baseline that climbs it directly.
//!
//! The network sees the encoded input and standardized context and predicts
//! the standardized score. The output layer starts at zero, so an untrained
//! model predicts the training mean.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Input, InputSpace, Standardizer};
use crate::diffcore::{checkpoint, Activation, AdamConfig, AdamState, Graph, Mlp, NodeId, Tensor};
use crate::error::{MinError, Result};
use crate::rng::{seeded, MinRng};

pub const SIDECAR_FORMAT: &str = "min-forward";
pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub validation_fraction: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig { hidden: vec![256, 256, 256], lr: 1e-3, batch_size: 128, steps: 2000, validation_fraction: 0.1 }
    }
}

impl ForwardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(MinError::invalid("forward lr, batch size and widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(MinError::invalid("validation fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardModel {
    space: InputSpace,
    context_dim: Option<usize>,
    net: Mlp,
    y_scaler: Standardizer,
    c_scaler: Option<Standardizer>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format: String,
    version: u32,
    space: InputSpace,
    context_dim: Option<usize>,
    sizes: Vec<usize>,
    activation: Activation,
    y_scaler: Standardizer,
    c_scaler: Option<Standardizer>,
}

impl ForwardModel {
    pub fn space(&self) -> &InputSpace {
        &self.space
    }

    pub fn context_dim(&self) -> Option<usize> {
        self.context_dim
    }

    pub fn y_scaler(&self) -> &Standardizer {
        &self.y_scaler
    }

    pub fn c_scaler(&self) -> Option<&Standardizer> {
        self.c_scaler.as_ref()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<NodeId> {
        self.net.bind(g, trainable)
    }

    /// Standardized prediction for encoded inputs `x` (`[n, encoded_dim]`) and,
    /// when contextual, standardized contexts `c` (`[n, context_dim]`).
    pub fn forward(&self, g: &mut Graph, bound: &[NodeId], x: NodeId, c: Option<NodeId>) -> Result<NodeId> {
        let inp = match c {
            Some(c) => g.concat(&[x, c])?,
            None => x,
        };
        self.net.forward(g, bound, inp)
    }

    fn context_row(&self, c: Option<&[f64]>) -> Result<Option<Vec<f64>>> {
        match (&self.c_scaler, c) {
            (None, None) => Ok(None),
            (Some(s), Some(c)) if c.len() == s.dim() => Ok(Some(s.apply(c))),
            _ => Err(MinError::invalid("context does not match the forward model")),
        }
    }

    /// Raw-score predictions for encoded rows sharing one context.
    pub fn predict_encoded(&self, rows: &[Vec<f64>], c: Option<&[f64]>) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.space.encoded_dim();
        if rows.iter().any(|r| r.len() != d) {
            return Err(MinError::shape("predict", format!("encoded rows must have {d} entries")));
        }
        let ctx = self.context_row(c)?;
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.input(Tensor::matrix(rows.len(), d, rows.concat())?);
        let c = match ctx {
            Some(row) => Some(g.input(Tensor::matrix(rows.len(), row.len(), row.repeat(rows.len()))?)),
            None => None,
        };
        let out = self.forward(&mut g, &bound, x, c)?;
        Ok(g.value(out).data().iter().map(|&v| self.y_scaler.invert_scalar(v)).collect())
    }

    pub fn predict(&self, x: &Input, c: Option<&[f64]>) -> Result<f64> {
        self.space.contains(x)?;
        Ok(self.predict_encoded(&[self.space.encode(x)], c)?[0])
    }

    pub fn predict_batch(&self, xs: &[Input], c: Option<&[f64]>) -> Result<Vec<f64>> {
        for x in xs {
            self.space.contains(x)?;
        }
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| self.space.encode(x)).collect();
        self.predict_encoded(&rows, c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, self.net.params())?;
        let side = Sidecar {
            format: SIDECAR_FORMAT.into(),
            version: SIDECAR_VERSION,
            space: self.space.clone(),
            context_dim: self.context_dim,
            sizes: self.net.sizes().to_vec(),
            activation: self.net.activation(),
            y_scaler: self.y_scaler.clone(),
            c_scaler: self.c_scaler.clone(),
        };
        fs::write(path.with_extension("json"), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side_path = path.with_extension("json");
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(&side_path)?)
            .map_err(|e| MinError::Malformed { path: side_path.clone(), detail: e.to_string() })?;
        if side.format != SIDECAR_FORMAT {
            return Err(MinError::Malformed { path: side_path, detail: format!("format {:?}", side.format) });
        }
        if side.version != SIDECAR_VERSION {
            return Err(MinError::Version { found: side.version, expected: SIDECAR_VERSION });
        }
        side.space.validate()?;
        let mut net = Mlp::new("fwd", &side.sizes, side.activation, &mut seeded(0))?;
        net.load_params(&checkpoint::load(path)?)?;
        if net.input_dim() != side.space.encoded_dim() + side.context_dim.unwrap_or(0) || net.output_dim() != 1 {
            return Err(MinError::ModelMismatch("forward sizes disagree with the space".into()));
        }
        Ok(ForwardModel {
            space: side.space,
            context_dim: side.context_dim,
            net,
            y_scaler: side.y_scaler,
            c_scaler: side.c_scaler,
        })
    }
}

fn rows_tensor(rows: &[&Vec<f64>]) -> Result<Tensor> {
    let cols = rows[0].len();
    Tensor::matrix(rows.len(), cols, rows.iter().flat_map(|r| r.iter().copied()).collect())
}

/// Trains on a seeded 90/10 split (by default) with mean squared error on the
/// standardized score. Returns the model and its validation MSE in raw score
/// units; with fewer than two records, or a zero validation fraction, the
/// training set stands in for validation.
pub fn train_forward(ds: &Dataset, config: &ForwardConfig, rng: &mut MinRng) -> Result<(ForwardModel, f64)> {
    config.validate()?;
    ds.require_nonempty()?;
    let space = ds.space().clone();
    let y_scaler = Standardizer::fit_scalar(&ds.ys())?;
    let c_scaler = match ds.context_dim() {
        Some(_) => Some(Standardizer::fit(ds.records().iter().map(|r| r.context.as_deref().unwrap_or(&[])))?),
        None => None,
    };
    let ctx = ds.context_dim().unwrap_or(0);
    let mut sizes = vec![space.encoded_dim() + ctx];
    sizes.extend(&config.hidden);
    sizes.push(1);
    let mut net = Mlp::new("fwd", &sizes, Activation::Relu, rng)?;
    net.zero_output_layer();
    let mut model = ForwardModel { space, context_dim: ds.context_dim(), net, y_scaler, c_scaler };

    let inputs: Vec<Vec<f64>> = ds
        .records()
        .iter()
        .map(|r| {
            let mut row = model.space.encode(&r.x);
            if let (Some(s), Some(c)) = (&model.c_scaler, &r.context) {
                row.extend(s.apply(c));
            }
            row
        })
        .collect();
    let targets: Vec<f64> = ds.ys().iter().map(|&y| model.y_scaler.apply_scalar(y)).collect();

    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(rng);
    let n_val = (ds.len() as f64 * config.validation_fraction).round() as usize;
    let n_val = if ds.len() < 2 { 0 } else { n_val.min(ds.len() - 1) };
    let (val, train) = order.split_at(n_val);
    let val = if val.is_empty() { train } else { val };

    let mut adam = AdamState::new(model.net.tensors(), AdamConfig { lr: config.lr, ..AdamConfig::default() });
    for step in 0..config.steps {
        let batch: Vec<usize> = (0..config.batch_size.min(train.len()))
            .map(|_| train[rand::Rng::random_range(rng, 0..train.len())])
            .collect();
        let x = rows_tensor(&batch.iter().map(|&i| &inputs[i]).collect::<Vec<_>>())?;
        let t = Tensor::matrix(batch.len(), 1, batch.iter().map(|&i| targets[i]).collect())?;
        let mut g = Graph::new();
        let bound = model.net.bind(&mut g, true);
        let (xi, ti) = (g.input(x), g.input(t));
        let pred = model.net.forward(&mut g, &bound, xi)?;
        let diff = g.sub(pred, ti)?;
        let sq = g.mul(diff, diff)?;
        let loss = g.mean(sq).map_err(|e| MinError::Diverged { step: step + 1, detail: e.to_string() })?;
        let mut grads = g.backward(loss)?;
        let gs: Vec<Tensor> = bound
            .iter()
            .zip(model.net.tensors())
            .map(|(&id, p)| grads.take(id).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        if gs.iter().any(|t| !t.all_finite()) {
            return Err(MinError::Diverged { step: step + 1, detail: "non-finite gradient".into() });
        }
        adam.step(model.net.tensors_mut(), &gs)?;
    }

    let vx = rows_tensor(&val.iter().map(|&i| &inputs[i]).collect::<Vec<_>>())?;
    let pred = model.net.eval(vx)?;
    let ys = ds.ys();
    let mse = val
        .iter()
        .zip(pred.data())
        .map(|(&i, &p)| (model.y_scaler.invert_scalar(p) - ys[i]).powi(2))
        .sum::<f64>()
        / val.len() as f64;
    Ok((model, mse))
}

/// A differentiable score model over raw continuous coordinates.
pub trait Surrogate {
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Surrogate for ForwardModel {
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let InputSpace::Continuous { lower, upper } = &self.space else {
            return Err(MinError::invalid("gradients over raw inputs need a continuous space"));
        };
        if self.context_dim.is_some() {
            return Err(MinError::invalid("contextual forward model needs a context"));
        }
        let enc = self.space.encode(&Input::Continuous(x.to_vec()));
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let xi = g.param(Tensor::matrix(1, enc.len(), enc)?);
        let out = self.forward(&mut g, &bound, xi, None)?;
        let out_sum = g.sum(out)?;
        let grads = g.backward(out_sum)?;
        let s = self.y_scaler.std[0];
        let ge = grads.get(xi).expect("input is differentiable");
        let grad = ge.data().iter().zip(lower.iter().zip(upper)).map(|(d, (l, u))| s * d * 2.0 / (u - l)).collect();
        Ok((self.y_scaler.invert_scalar(g.value(out).item()), grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveConfig {
    pub steps: usize,
    /// Step size in encoded units, where each coordinate's range has width 2.
    pub step_size: f64,
}

impl Default for NaiveConfig {
    fn default() -> Self {
        NaiveConfig { steps: 500, step_size: 0.05 }
    }
}

/// Projected gradient ascent on `model` from each start, clipping to the box
/// after every step. Returns the best point visited per start.
pub fn naive_forward_optimize(
    model: &dyn Surrogate,
    space: &InputSpace,
    starts: &[Vec<f64>],
    config: &NaiveConfig,
) -> Result<Vec<Vec<f64>>> {
    let InputSpace::Continuous { lower, upper } = space else {
        return Err(MinError::invalid("naive forward optimization needs a continuous space"));
    };
    let half: Vec<f64> = upper.iter().zip(lower).map(|(u, l)| 0.5 * (u - l)).collect();
    starts
        .iter()
        .map(|start| {
            let mut x = start.clone();
            space.contains(&Input::Continuous(x.clone()))?;
            let (mut val, mut grad) = model.value_and_grad(&x)?;
            let mut best = (val, x.clone());
            for _ in 0..config.steps {
                for i in 0..x.len() {
                    // Gradient in encoded units is grad * half; the step maps back by half.
                    x[i] = (x[i] + config.step_size * grad[i] * half[i] * half[i]).clamp(lower[i], upper[i]);
                }
                (val, grad) = model.value_and_grad(&x)?;
                if val > best.0 {
                    best = (val, x.clone());
                }
            }
            Ok(best.1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use rand::Rng;

    fn small() -> ForwardConfig {
        ForwardConfig { hidden: vec![32, 32], steps: 1500, batch_size: 64, ..ForwardConfig::default() }
    }

    fn dataset(n: usize, f: impl Fn(f64) -> f64, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let mut ds = Dataset::new(InputSpace::continuous(vec![0.0], vec![1.0]).unwrap(), None).unwrap();
        for _ in 0..n {
            let x: f64 = rng.random();
            ds.push(Record { context: None, x: Input::Continuous(vec![x]), y: f(x) }).unwrap();
        }
        ds
    }

    struct Quadratic {
        center: Vec<f64>,
    }

    impl Surrogate for Quadratic {
        fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let v = -x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>();
            Ok((v, x.iter().zip(&self.center).map(|(a, c)| -2.0 * (a - c)).collect()))
        }
    }

    struct Ramp;

    impl Surrogate for Ramp {
        fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((x[0], vec![1.0, 0.0]))
        }
    }

    #[test]
    fn fits_a_line() {
        let ds = dataset(500, |x| 3.0 * x + 1.0, 1);
        let (_, mse) = train_forward(&ds, &small(), &mut seeded(2)).unwrap();
        assert!(mse < 1e-3, "{mse}");
    }

    #[test]
    fn constant_scores_predict_the_constant() {
        let ds = dataset(100, |_| 2.5, 3);
        let (m, mse) = train_forward(&ds, &small(), &mut seeded(4)).unwrap();
        assert!(mse < 1e-6);
        assert!((m.predict(&Input::Continuous(vec![0.3]), None).unwrap() - 2.5).abs() < 1e-6);
    }

    #[test]
    fn batch_equals_pointwise_and_is_deterministic() {
        let ds = dataset(200, |x| (6.0 * x).sin(), 5);
        let (m, _) = train_forward(&ds, &ForwardConfig { steps: 50, ..small() }, &mut seeded(6)).unwrap();
        let xs: Vec<Input> = (0..7).map(|i| Input::Continuous(vec![i as f64 / 7.0])).collect();
        let batch = m.predict_batch(&xs, None).unwrap();
        for (x, b) in xs.iter().zip(&batch) {
            let p = m.predict(x, None).unwrap();
            assert!((p - b).abs() < 1e-12);
            assert_eq!(p, m.predict(x, None).unwrap());
        }
        assert!(m.predict(&Input::Continuous(vec![1.5]), None).is_err());
        assert!(m.predict(&Input::Continuous(vec![0.5]), Some(&[1.0])).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let ds = dataset(200, |x| (6.0 * x).sin(), 7);
        let (m, _) = train_forward(&ds, &ForwardConfig { steps: 200, hidden: vec![16], ..small() }, &mut seeded(8)).unwrap();
        for &x in &[0.13, 0.5, 0.77] {
            let (v, g) = m.value_and_grad(&[x]).unwrap();
            assert_eq!(v, m.predict(&Input::Continuous(vec![x]), None).unwrap());
            let h = 1e-5;
            let fd = (m.value_and_grad(&[x + h]).unwrap().0 - m.value_and_grad(&[x - h]).unwrap().0) / (2.0 * h);
            assert!((fd - g[0]).abs() <= 1e-6 + 1e-4 * fd.abs(), "{fd} vs {}", g[0]);
        }
    }

    #[test]
    fn affine_rescaling_of_scores_commutes() {
        let a = dataset(300, |x| (4.0 * x).cos(), 9);
        let mut b = Dataset::new(a.space().clone(), None).unwrap();
        for r in a.records() {
            b.push(Record { y: 3.0 * r.y + 5.0, ..r.clone() }).unwrap();
        }
        let cfg = ForwardConfig { steps: 300, ..small() };
        let (ma, _) = train_forward(&a, &cfg, &mut seeded(10)).unwrap();
        let (mb, _) = train_forward(&b, &cfg, &mut seeded(10)).unwrap();
        let xs: Vec<Input> = (0..50).map(|i| Input::Continuous(vec![i as f64 / 49.0])).collect();
        let (pa, pb) = (ma.predict_batch(&xs, None).unwrap(), mb.predict_batch(&xs, None).unwrap());
        for (u, v) in pa.iter().zip(&pb) {
            assert!((3.0 * u + 5.0 - v).abs() < 1e-6);
        }
        let argmax = |p: &[f64]| (0..p.len()).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap();
        assert_eq!(argmax(&pa), argmax(&pb));
    }

    #[test]
    fn naive_ascent_on_quadratic_and_ramp() {
        let space = InputSpace::continuous(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let q = Quadratic { center: vec![0.3, -0.4] };
        let out = naive_forward_optimize(&q, &space, &[vec![-0.9, 0.9], vec![0.0, 0.0]], &NaiveConfig::default()).unwrap();
        for x in out {
            assert!((x[0] - 0.3).abs() < 1e-3 && (x[1] + 0.4).abs() < 1e-3, "{x:?}");
        }
        let out = naive_forward_optimize(&Ramp, &space, &[vec![0.1, 0.2]], &NaiveConfig::default()).unwrap();
        assert_eq!(out[0], vec![1.0, 0.2]);
        let cat = InputSpace::categorical(2, 2).unwrap();
        assert!(naive_forward_optimize(&Ramp, &cat, &[], &NaiveConfig::default()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let ds = dataset(50, |x| x * x, 11);
        let (m, _) = train_forward(&ds, &ForwardConfig { steps: 20, ..small() }, &mut seeded(12)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("forward.ckpt");
        m.save(&p).unwrap();
        let back = ForwardModel::load(&p).unwrap();
        let x = Input::Continuous(vec![0.4]);
        assert_eq!(back.predict(&x, None).unwrap(), m.predict(&x, None).unwrap());
    }
}
