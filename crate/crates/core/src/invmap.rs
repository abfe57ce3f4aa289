//! Stochastic inverse map `x = G(z, y[, c])` trained adversarially against a
//! score-conditioned discriminator.
//!
//! Networks work in the encoded input space of [`InputSpace::encode`]: the
//! continuous head is `tanh`, which lands in `(-1, 1)` and so always decodes
//! inside the bounds; the categorical head is a per-position Gumbel-softmax.
//! Scores and contexts enter the networks standardized.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Input, InputSpace, Standardizer};
use crate::diffcore::{
    checkpoint, gumbel_softmax, Activation, AdamConfig, AdamState, Graph, Mlp, NodeId, Tensor,
};
use crate::error::{MinError, Result};
use crate::rng::{seeded, MinRng};

pub const SIDECAR_FORMAT: &str = "min-inverse-map";
pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    /// Latent size; `None` means 32 for continuous spaces and 16 for categorical.
    pub d_z: Option<usize>,
    pub hidden: Vec<usize>,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub beta1: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub d_steps: usize,
    pub temperature: f64,
    pub instance_noise: f64,
    pub leaky_slope: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            d_z: None,
            hidden: vec![256, 256],
            lr_generator: 1e-3,
            lr_discriminator: 1e-3,
            beta1: 0.5,
            batch_size: 128,
            steps: 2000,
            d_steps: 1,
            temperature: 0.75,
            instance_noise: 0.1,
            leaky_slope: 0.2,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr_generator, self.lr_discriminator, self.temperature];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(MinError::invalid("gan learning rates and temperature must be positive"));
        }
        if self.batch_size == 0 || self.d_steps == 0 || self.d_z == Some(0) || self.hidden.contains(&0) {
            return Err(MinError::invalid("gan sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(self.instance_noise >= 0.0) || !(self.leaky_slope >= 0.0) {
            return Err(MinError::invalid("gan beta1, instance noise or leaky slope out of range"));
        }
        Ok(())
    }

    pub fn latent_dim(&self, space: &InputSpace) -> usize {
        self.d_z.unwrap_or(if space.is_categorical() { 16 } else { 32 })
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.beta1, ..AdamConfig::default() }
    }
}

/// How the categorical head turns logits into a simplex point.
pub enum HeadMode<'a> {
    /// Gumbel-softmax draw at the map's temperature.
    Gumbel(&'a mut MinRng),
    /// Noise-free tempered softmax; makes `x` a deterministic function of `(z, y)`.
    Relaxed,
}

#[derive(Debug, Clone)]
pub struct InverseMap {
    space: InputSpace,
    context_dim: Option<usize>,
    d_z: usize,
    temperature: f64,
    generator: Mlp,
    y_scaler: Standardizer,
    c_scaler: Option<Standardizer>,
}

/// Samples in both network encoding and decoded form. For categorical spaces
/// `encoded` holds the relaxed simplex points and `inputs` their argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub encoded: Vec<Vec<f64>>,
    pub inputs: Vec<Input>,
}

fn check_context(context_dim: Option<usize>, c: Option<&[f64]>) -> Result<()> {
    match (context_dim, c) {
        (None, None) => Ok(()),
        (Some(d), Some(c)) if c.len() == d => Ok(()),
        (Some(d), Some(c)) => Err(MinError::invalid(format!("context has {} entries, expected {d}", c.len()))),
        (Some(_), None) => Err(MinError::invalid("model is contextual but no context was given")),
        (None, Some(_)) => Err(MinError::invalid("model takes no context")),
    }
}

impl InverseMap {
    pub fn space(&self) -> &InputSpace {
        &self.space
    }

    pub fn context_dim(&self) -> Option<usize> {
        self.context_dim
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn generator(&self) -> &Mlp {
        &self.generator
    }

    pub fn y_scaler(&self) -> &Standardizer {
        &self.y_scaler
    }

    pub fn c_scaler(&self) -> Option<&Standardizer> {
        self.c_scaler.as_ref()
    }

    /// Network conditioning row `[std(y), std(c)...]`.
    pub fn condition(&self, y: f64, c: Option<&[f64]>) -> Result<Vec<f64>> {
        check_context(self.context_dim, c)?;
        if !y.is_finite() {
            return Err(MinError::NonFinite { op: "inverse map condition".into() });
        }
        let mut row = vec![self.y_scaler.apply_scalar(y)];
        if let (Some(s), Some(c)) = (&self.c_scaler, c) {
            row.extend(s.apply(c));
        }
        Ok(row)
    }

    /// Records the generator on `g`. `z` is `[n, d_z]`, `cond` is `[n, 1 + c]`;
    /// the result is the encoded input `[n, encoded_dim]`.
    pub fn generate(&self, g: &mut Graph, bound: &[NodeId], z: NodeId, cond: NodeId, mode: HeadMode<'_>) -> Result<NodeId> {
        let inp = g.concat(&[z, cond])?;
        let out = self.generator.forward(g, bound, inp)?;
        match &self.space {
            InputSpace::Continuous { .. } => g.tanh(out),
            InputSpace::Categorical { length, alphabet } => {
                let n = g.value(out).rows();
                let blocks = g.reshape(out, &[n * length, *alphabet])?;
                let soft = match mode {
                    HeadMode::Gumbel(rng) => gumbel_softmax(g, blocks, self.temperature, rng)?,
                    HeadMode::Relaxed => {
                        let scaled = g.scale(blocks, 1.0 / self.temperature)?;
                        g.softmax(scaled)?
                    }
                };
                g.reshape(soft, &[n, length * alphabet])
            }
        }
    }

    /// Encoded generator output for explicit latents and conditioning rows.
    pub fn generate_tensor(&self, z: Tensor, cond: Tensor, mode: HeadMode<'_>) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.generator.bind(&mut g, false);
        let (zi, ci) = (g.input(z), g.input(cond));
        let out = self.generate(&mut g, &bound, zi, ci, mode)?;
        Ok(g.value(out).clone())
    }

    /// Deterministic decode of one latent: noise-free head, then [`InputSpace::decode`].
    pub fn decode_latent(&self, z: &[f64], y: f64, c: Option<&[f64]>) -> Result<(Vec<f64>, Input)> {
        if z.len() != self.d_z {
            return Err(MinError::shape("decode_latent", format!("z has {} entries, expected {}", z.len(), self.d_z)));
        }
        let cond = self.condition(y, c)?;
        let enc = self.generate_tensor(
            Tensor::matrix(1, self.d_z, z.to_vec())?,
            Tensor::matrix(1, cond.len(), cond)?,
            HeadMode::Relaxed,
        )?;
        let enc = enc.into_data();
        let x = self.space.decode(&enc);
        Ok((enc, x))
    }

    /// `n` draws of `x` at score `y`: latents from the standard normal prior,
    /// then Gumbel noise for categorical heads.
    pub fn sample(&self, y: f64, c: Option<&[f64]>, n: usize, rng: &mut MinRng) -> Result<Samples> {
        let cond = self.condition(y, c)?;
        if n == 0 {
            return Ok(Samples { encoded: Vec::new(), inputs: Vec::new() });
        }
        let z = Tensor::randn(&[n, self.d_z], rng);
        let conds = Tensor::matrix(n, cond.len(), cond.repeat(n))?;
        let enc = self.generate_tensor(z, conds, HeadMode::Gumbel(rng))?;
        let encoded: Vec<Vec<f64>> = (0..n).map(|r| enc.row(r).to_vec()).collect();
        let inputs = encoded.iter().map(|e| self.space.decode(e)).collect();
        Ok(Samples { encoded, inputs })
    }

    pub fn save(&self, path: &Path, disc: Option<&Discriminator>) -> Result<()> {
        let mut entries = self.generator.params().to_vec();
        if let Some(d) = disc {
            entries.extend(d.net.params().iter().cloned());
        }
        checkpoint::save(path, &entries)?;
        let sidecar = Sidecar {
            format: SIDECAR_FORMAT.into(),
            version: SIDECAR_VERSION,
            space: self.space.clone(),
            context_dim: self.context_dim,
            d_z: self.d_z,
            temperature: self.temperature,
            generator_sizes: self.generator.sizes().to_vec(),
            discriminator_sizes: disc.map(|d| d.net.sizes().to_vec()),
            activation: self.generator.activation(),
            y_scaler: self.y_scaler.clone(),
            c_scaler: self.c_scaler.clone(),
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(InverseMap, Option<Discriminator>)> {
        let side_path = sidecar_path(path);
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(&side_path)?)
            .map_err(|e| MinError::Malformed { path: side_path.clone(), detail: e.to_string() })?;
        if side.format != SIDECAR_FORMAT {
            return Err(MinError::Malformed { path: side_path, detail: format!("format {:?}", side.format) });
        }
        if side.version != SIDECAR_VERSION {
            return Err(MinError::Version { found: side.version, expected: SIDECAR_VERSION });
        }
        side.space.validate()?;
        let entries = checkpoint::load(path)?;
        let mut rng = seeded(0);
        let mut generator = Mlp::new("gen", &side.generator_sizes, side.activation, &mut rng)?;
        let n_gen = generator.params().len();
        if entries.len() < n_gen {
            return Err(MinError::ModelMismatch("checkpoint has too few generator tensors".into()));
        }
        generator.load_params(&entries[..n_gen])?;
        let disc = match side.discriminator_sizes {
            Some(sizes) => {
                let mut net = Mlp::new("disc", &sizes, side.activation, &mut rng)?;
                net.load_params(&entries[n_gen..])?;
                Some(Discriminator { net })
            }
            None => None,
        };
        let map = InverseMap {
            space: side.space,
            context_dim: side.context_dim,
            d_z: side.d_z,
            temperature: side.temperature,
            generator,
            y_scaler: side.y_scaler,
            c_scaler: side.c_scaler,
        };
        if map.generator.input_dim() != map.d_z + 1 + map.context_dim.unwrap_or(0)
            || map.generator.output_dim() != map.space.encoded_dim()
        {
            return Err(MinError::ModelMismatch("generator sizes disagree with space and latent size".into()));
        }
        Ok((map, disc))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format: String,
    version: u32,
    space: InputSpace,
    context_dim: Option<usize>,
    d_z: usize,
    temperature: f64,
    generator_sizes: Vec<usize>,
    discriminator_sizes: Option<Vec<usize>>,
    activation: Activation,
    y_scaler: Standardizer,
    c_scaler: Option<Standardizer>,
}

/// Scores `(x, y[, c])` pairs; the network emits a logit.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub net: Mlp,
}

impl Discriminator {
    /// Probability that each row of `[x_enc | cond]` is real.
    pub fn prob(&self, x_enc: Tensor, cond: Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let bound = self.net.bind(&mut g, false);
        let (x, c) = (g.input(x_enc), g.input(cond));
        let inp = g.concat(&[x, c])?;
        let logit = self.net.forward(&mut g, &bound, inp)?;
        let p = g.sigmoid(logit)?;
        Ok(g.value(p).data().to_vec())
    }
}

/// Record indices drawn i.i.d. with probability proportional to `weights`.
/// Equal weights use the plain uniform sampler, so unit weights reproduce
/// unweighted batches draw for draw.
pub fn weighted_minibatch(weights: &[f64], batch: usize, rng: &mut MinRng) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(MinError::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(MinError::invalid("all weights are zero"));
    }
    if weights.iter().all(|&w| w == weights[0]) {
        return Ok(uniform_minibatch(weights.len(), batch, rng));
    }
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    let last_positive = weights.iter().rposition(|&w| w > 0.0).expect("total is positive");
    Ok((0..batch)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cum.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect())
}

pub fn uniform_minibatch(n: usize, batch: usize, rng: &mut MinRng) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Generator and discriminator with their optimizer states, so training can
/// resume where it stopped.
#[derive(Debug, Clone)]
pub struct GanTrainer {
    config: GanConfig,
    map: InverseMap,
    g_adam: AdamState,
    disc: Discriminator,
    d_adam: AdamState,
    steps_done: usize,
}

/// Standardizers for `y` and, when contextual, `c`, fitted on `ds`.
pub fn fit_scalers(ds: &Dataset) -> Result<(Standardizer, Option<Standardizer>)> {
    ds.require_nonempty()?;
    let y = Standardizer::fit_scalar(&ds.ys())?;
    let c = match ds.context_dim() {
        Some(_) => Some(Standardizer::fit(ds.records().iter().map(|r| r.context.as_deref().unwrap_or(&[])))?),
        None => None,
    };
    Ok((y, c))
}

struct Prepared {
    x: Vec<Vec<f64>>,
    cond: Vec<Vec<f64>>,
}

fn gather(rows: &[Vec<f64>], idx: &[usize]) -> Result<Tensor> {
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(&rows[i]);
    }
    Tensor::matrix(idx.len(), cols, data)
}

fn diverged(step: usize, e: MinError) -> MinError {
    match e {
        MinError::NonFinite { op } => MinError::Diverged { step, detail: format!("non-finite value in {op}") },
        other => other,
    }
}

impl GanTrainer {
    pub fn new(
        space: InputSpace,
        context_dim: Option<usize>,
        scalers: (Standardizer, Option<Standardizer>),
        config: GanConfig,
        rng: &mut MinRng,
    ) -> Result<Self> {
        config.validate()?;
        space.validate()?;
        if scalers.0.dim() != 1 || scalers.1.as_ref().map(Standardizer::dim) != context_dim {
            return Err(MinError::invalid("standardizers do not match score and context sizes"));
        }
        let d_z = config.latent_dim(&space);
        let cond_dim = 1 + context_dim.unwrap_or(0);
        let act = Activation::LeakyRelu(config.leaky_slope);
        let mut sizes = vec![d_z + cond_dim];
        sizes.extend(&config.hidden);
        sizes.push(space.encoded_dim());
        let generator = Mlp::new("gen", &sizes, act, rng)?;
        let mut dsizes = vec![space.encoded_dim() + cond_dim];
        dsizes.extend(&config.hidden);
        dsizes.push(1);
        let disc = Discriminator { net: Mlp::new("disc", &dsizes, act, rng)? };
        let g_adam = AdamState::new(generator.tensors(), config.adam(config.lr_generator));
        let d_adam = AdamState::new(disc.net.tensors(), config.adam(config.lr_discriminator));
        let map = InverseMap {
            space,
            context_dim,
            d_z,
            temperature: config.temperature,
            generator,
            y_scaler: scalers.0,
            c_scaler: scalers.1,
        };
        Ok(GanTrainer { config, map, g_adam, disc, d_adam, steps_done: 0 })
    }

    pub fn inverse_map(&self) -> &InverseMap {
        &self.map
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }

    pub fn config(&self) -> &GanConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    fn prepare(&self, ds: &Dataset) -> Result<Prepared> {
        if ds.space() != &self.map.space || ds.context_dim() != self.map.context_dim {
            return Err(MinError::ModelMismatch("dataset space differs from the model's".into()));
        }
        let mut x = Vec::with_capacity(ds.len());
        let mut cond = Vec::with_capacity(ds.len());
        for r in ds.records() {
            x.push(self.map.space.encode(&r.x));
            cond.push(self.map.condition(r.y, r.context.as_deref())?);
        }
        Ok(Prepared { x, cond })
    }

    fn noisy(&self, x: Tensor, std: f64, rng: &mut MinRng) -> Tensor {
        if std == 0.0 {
            return x;
        }
        let noise = Tensor::randn(x.shape(), rng);
        let data = x.data().iter().zip(noise.data()).map(|(a, n)| a + std * n).collect();
        Tensor::new(x.shape().to_vec(), data).expect("same shape")
    }

    fn disc_logit(&self, g: &mut Graph, bound: &[NodeId], x: NodeId, cond: NodeId) -> Result<NodeId> {
        let inp = g.concat(&[x, cond])?;
        self.disc.net.forward(g, bound, inp)
    }

    fn disc_step(&mut self, data: &Prepared, weights: &[f64], noise: f64, rng: &mut MinRng) -> Result<f64> {
        let b = self.config.batch_size;
        let idx = weighted_minibatch(weights, b, rng)?;
        let real = gather(&data.x, &idx)?;
        let cond = gather(&data.cond, &idx)?;
        let z = Tensor::randn(&[b, self.map.d_z], rng);
        let fake = self.map.generate_tensor(z, cond.clone(), HeadMode::Gumbel(rng))?;
        let real = self.noisy(real, noise, rng);
        let fake = self.noisy(fake, noise, rng);

        let mut g = Graph::new();
        let bound = self.disc.net.bind(&mut g, true);
        let (r, f, c) = (g.input(real), g.input(fake), g.input(cond));
        let lr = self.disc_logit(&mut g, &bound, r, c)?;
        let lf = self.disc_logit(&mut g, &bound, f, c)?;
        let neg = g.scale(lr, -1.0)?;
        let real_term = g.softplus(neg)?;
        let real_term = g.mean(real_term)?;
        let fake_term = g.softplus(lf)?;
        let fake_term = g.mean(fake_term)?;
        let loss = g.add(real_term, fake_term)?;
        let mut grads = g.backward(loss)?;
        let gs = collect(&mut grads, &bound, self.disc.net.tensors());
        self.d_adam.step(self.disc.net.tensors_mut(), &gs)?;
        Ok(g.value(loss).item())
    }

    fn gen_step(&mut self, data: &Prepared, weights: &[f64], noise: f64, rng: &mut MinRng) -> Result<f64> {
        let b = self.config.batch_size;
        let idx = weighted_minibatch(weights, b, rng)?;
        let cond = gather(&data.cond, &idx)?;
        let z = Tensor::randn(&[b, self.map.d_z], rng);

        let mut g = Graph::new();
        let gen_bound = self.map.generator.bind(&mut g, true);
        let disc_bound = self.disc.net.bind(&mut g, false);
        let (zi, ci) = (g.input(z), g.input(cond));
        let fake = self.map.generate(&mut g, &gen_bound, zi, ci, HeadMode::Gumbel(rng))?;
        let fake = if noise > 0.0 {
            let n = Tensor::randn(g.value(fake).shape(), rng);
            let n = g.input(n);
            let n = g.scale(n, noise)?;
            g.add(fake, n)?
        } else {
            fake
        };
        let logit = self.disc_logit(&mut g, &disc_bound, fake, ci)?;
        let neg = g.scale(logit, -1.0)?;
        let loss = g.softplus(neg)?;
        let loss = g.mean(loss)?;
        let mut grads = g.backward(loss)?;
        let gs = collect(&mut grads, &gen_bound, self.map.generator.tensors());
        self.g_adam.step(self.map.generator.tensors_mut(), &gs)?;
        Ok(g.value(loss).item())
    }

    /// Runs `steps` generator updates (each preceded by `d_steps` discriminator
    /// updates) on minibatches drawn proportionally to `weights`. Instance noise
    /// decays linearly to zero over the call.
    pub fn train(&mut self, ds: &Dataset, weights: &[f64], steps: usize, rng: &mut MinRng) -> Result<Vec<LossRecord>> {
        ds.require_nonempty()?;
        if weights.len() != ds.len() {
            return Err(MinError::invalid(format!("{} weights for {} records", weights.len(), ds.len())));
        }
        let data = self.prepare(ds)?;
        let mut trace = Vec::with_capacity(steps);
        for t in 0..steps {
            let step = self.steps_done + 1;
            let noise = self.config.instance_noise * (1.0 - t as f64 / steps as f64);
            let mut d_loss = 0.0;
            for _ in 0..self.config.d_steps {
                d_loss = self.disc_step(&data, weights, noise, rng).map_err(|e| diverged(step, e))?;
            }
            let g_loss = self.gen_step(&data, weights, noise, rng).map_err(|e| diverged(step, e))?;
            if !d_loss.is_finite() || !g_loss.is_finite() {
                return Err(MinError::Diverged { step, detail: format!("losses d={d_loss} g={g_loss}") });
            }
            self.steps_done = step;
            trace.push(LossRecord { step, d_loss, g_loss });
        }
        Ok(trace)
    }
}

fn collect<'a>(
    grads: &mut crate::diffcore::Gradients,
    bound: &[NodeId],
    tensors: impl Iterator<Item = &'a Tensor>,
) -> Vec<Tensor> {
    bound
        .iter()
        .zip(tensors)
        .map(|(&id, t)| grads.take(id).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect()
}

/// Fits standardizers on `ds`, then trains a fresh generator/discriminator pair
/// for `config.steps` steps.
pub fn train_inverse_map(
    ds: &Dataset,
    weights: &[f64],
    config: &GanConfig,
    rng: &mut MinRng,
) -> Result<(InverseMap, Discriminator, Vec<LossRecord>)> {
    let scalers = fit_scalers(ds)?;
    let mut trainer = GanTrainer::new(ds.space().clone(), ds.context_dim(), scalers, config.clone(), rng)?;
    let trace = trainer.train(ds, weights, config.steps, rng)?;
    Ok((trainer.map, trainer.disc, trace))
}

pub fn write_loss_csv(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let mut out = String::from("step,d_loss,g_loss\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.step, crate::data::fmt_f64(r.d_loss), crate::data::fmt_f64(r.g_loss)));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;

    fn small_config() -> GanConfig {
        GanConfig { hidden: vec![16], batch_size: 16, steps: 5, d_z: Some(3), ..GanConfig::default() }
    }

    fn line_dataset(n: usize) -> Dataset {
        let mut ds = Dataset::new(InputSpace::continuous(vec![-1.0], vec![1.0]).unwrap(), None).unwrap();
        for i in 0..n {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            ds.push(Record { context: None, x: Input::Continuous(vec![x]), y: x }).unwrap();
        }
        ds
    }

    #[test]
    fn single_positive_weight_fills_batch() {
        let mut rng = seeded(1);
        let idx = weighted_minibatch(&[0.0, 0.0, 3.0, 0.0], 50, &mut rng).unwrap();
        assert!(idx.iter().all(|&i| i == 2));
        assert!(weighted_minibatch(&[0.0, 0.0], 4, &mut rng).is_err());
        assert!(weighted_minibatch(&[1.0, -1.0], 4, &mut rng).is_err());
    }

    #[test]
    fn unit_weights_match_uniform_sampler() {
        let (mut a, mut b) = (seeded(9), seeded(9));
        assert_eq!(weighted_minibatch(&[1.0; 37], 64, &mut a).unwrap(), uniform_minibatch(37, 64, &mut b));
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = seeded(2);
        let idx = weighted_minibatch(&[0.5; 10], 100_000, &mut rng).unwrap();
        let se = (0.1 * 0.9 / 1e5f64).sqrt();
        for k in 0..10 {
            let f = idx.iter().filter(|&&i| i == k).count() as f64 / 1e5;
            assert!((f - 0.1).abs() < 3.0 * se, "{k}: {f}");
        }
    }

    #[test]
    fn two_to_one_frequencies() {
        let mut rng = seeded(3);
        let n = 30_000;
        let idx = weighted_minibatch(&[2.0, 1.0], n, &mut rng).unwrap();
        let f = idx.iter().filter(|&&i| i == 0).count() as f64 / n as f64;
        let se = (2.0 / 9.0 / n as f64).sqrt();
        assert!((f - 2.0 / 3.0).abs() < 3.0 * se, "{f}");
    }

    #[test]
    fn samples_respect_bounds_and_are_deterministic() {
        let ds = line_dataset(40);
        let mut rng = seeded(4);
        let (map, _, trace) = train_inverse_map(&ds, &vec![1.0; 40], &small_config(), &mut rng).unwrap();
        assert_eq!(trace.len(), 5);
        assert!(trace.iter().all(|r| r.d_loss.is_finite() && r.g_loss.is_finite()));
        let a = map.sample(0.3, None, 200, &mut seeded(5)).unwrap();
        let b = map.sample(0.3, None, 200, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        for x in &a.inputs {
            let v = x.as_continuous().unwrap()[0];
            assert!((-1.0..=1.0).contains(&v));
        }
        assert!(map.sample(0.3, None, 0, &mut rng).unwrap().inputs.is_empty());
        assert!(map.sample(0.3, Some(&[1.0]), 1, &mut rng).is_err());
    }

    #[test]
    fn categorical_samples_are_simplex_points() {
        let space = InputSpace::categorical(3, 4).unwrap();
        let mut ds = Dataset::new(space.clone(), None).unwrap();
        let mut rng = seeded(6);
        for _ in 0..30 {
            let x = space.sample_uniform(&mut rng);
            ds.push(Record { context: None, x, y: rng.random() }).unwrap();
        }
        let (map, _, _) = train_inverse_map(&ds, &vec![1.0; 30], &small_config(), &mut rng).unwrap();
        let s = map.sample(0.5, None, 10, &mut rng).unwrap();
        for (enc, x) in s.encoded.iter().zip(&s.inputs) {
            for block in enc.chunks(4) {
                assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(block.iter().all(|&p| p >= 0.0));
            }
            assert_eq!(space.decode(enc), *x);
        }
    }

    #[test]
    fn constant_discriminator_gives_zero_generator_gradient() {
        let ds = line_dataset(10);
        let mut rng = seeded(7);
        let mut t =
            GanTrainer::new(ds.space().clone(), None, fit_scalers(&ds).unwrap(), small_config(), &mut rng).unwrap();
        let last = t.disc.net.sizes().len() - 2;
        for (i, p) in t.disc.net.tensors_mut().enumerate() {
            if i / 2 == last {
                p.data_mut().fill(0.0);
            }
        }
        let mut g = Graph::new();
        let gen_bound = t.map.generator.bind(&mut g, true);
        let disc_bound = t.disc.net.bind(&mut g, false);
        let z = g.input(Tensor::randn(&[8, 3], &mut rng));
        let c = g.input(Tensor::filled(&[8, 1], 0.2));
        let fake = t.map.generate(&mut g, &gen_bound, z, c, HeadMode::Relaxed).unwrap();
        let logit = t.disc_logit(&mut g, &disc_bound, fake, c).unwrap();
        let neg = g.scale(logit, -1.0).unwrap();
        let loss = g.softplus(neg).unwrap();
        let loss = g.mean(loss).unwrap();
        assert!((g.value(loss).item() - 2f64.ln()).abs() < 1e-15);
        let grads = g.backward(loss).unwrap();
        for id in gen_bound {
            assert!(grads.get(id).is_none_or(|t| t.data().iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let ds = line_dataset(20);
        let mut rng = seeded(8);
        let (map, disc, _) = train_inverse_map(&ds, &vec![1.0; 20], &small_config(), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inverse.ckpt");
        map.save(&path, Some(&disc)).unwrap();
        let (back, d2) = InverseMap::load(&path).unwrap();
        assert_eq!(back.generator().params(), map.generator().params());
        assert_eq!(d2.unwrap().net.params(), disc.net.params());
        assert_eq!(
            back.sample(0.1, None, 5, &mut seeded(1)).unwrap(),
            map.sample(0.1, None, 5, &mut seeded(1)).unwrap()
        );
    }

    #[test]
    fn weights_must_align() {
        let ds = line_dataset(10);
        let mut rng = seeded(9);
        assert!(train_inverse_map(&ds, &[1.0; 3], &small_config(), &mut rng).is_err());
    }
}
