//! Active data collection by randomized labeling.
//!
//! Each iteration augments the data with synthetic pairs whose scores sit
//! above the current best, retrains an exploration copy of the inverse map on
//! the augmented set and queries the oracle at that copy's sample for the
//! highest augmented score. An exploitation copy trains on real records only
//! and supplies the final answer. The greedy ablation drops the synthetic set
//! and queries the exploitation copy at the best observed score plus noise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, Dataset, Input, InputSpace, Record};
use crate::error::{MinError, Result};
use crate::forward::{train_forward, ForwardConfig, ForwardModel};
use crate::infer::{approx_infer, InferenceConfig, InferenceResult};
use crate::invmap::{fit_scalers, GanConfig, GanTrainer, InverseMap};
use crate::oracles::Oracle;
use crate::reweight::{adaptive_tau, bin_scores, importance_weights, ReweightConfig, ReweightingScheme};
use crate::rng::{component_rng, MinRng};

/// Where synthetic inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticInputs {
    /// Uniform over the input space.
    Uniform,
    /// A dataset input perturbed by Gaussian noise of 5% of each coordinate's
    /// range (continuous) or with each position resampled with probability
    /// `1/L` (categorical).
    PerturbedData,
    /// As `PerturbedData`, perturbing the top-bin record whose score is the base.
    PerturbedTop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveConfig {
    pub iterations: usize,
    /// Generator steps per iteration for each copy, after warm start.
    pub steps_per_iteration: usize,
    /// Generator steps on the initial dataset before the first query.
    pub initial_steps: usize,
    /// Synthetic set size; `None` means `max(32, |D0| / 20)`.
    pub synthetic: Option<usize>,
    /// Scale of the positive score noise; `None` uses the adaptive temperature.
    pub noise_scale: Option<f64>,
    pub synthetic_inputs: SyntheticInputs,
    /// Greedy ablation: query noise as a fraction of each coordinate's range.
    pub greedy_noise: f64,
    /// Run Approx-Infer on the exploitation copy after the last query.
    pub final_inference: bool,
    /// Record wall-clock milliseconds in the history; off keeps logs reproducible.
    pub wall_clock: bool,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        ActiveConfig {
            iterations: 100,
            steps_per_iteration: 200,
            initial_steps: 2000,
            synthetic: None,
            noise_scale: None,
            synthetic_inputs: SyntheticInputs::PerturbedTop,
            greedy_noise: 0.05,
            final_inference: true,
            wall_clock: false,
        }
    }
}

impl ActiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(MinError::invalid("active loop needs at least one iteration"));
        }
        if self.noise_scale.is_some_and(|s| !(s >= 0.0)) || !(self.greedy_noise >= 0.0) {
            return Err(MinError::invalid("noise scales must be non-negative"));
        }
        Ok(())
    }

    pub fn synthetic_size(&self, n0: usize) -> usize {
        self.synthetic.unwrap_or((n0 / 20).max(32))
    }
}

/// Synthetic records and, for each, the real score it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub records: Vec<Record>,
    pub base_y: Vec<f64>,
}

impl SyntheticSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn perturb(space: &InputSpace, x: &Input, rng: &mut MinRng) -> Input {
    match (space, x) {
        (InputSpace::Continuous { lower, upper }, Input::Continuous(v)) => {
            let mut out = Input::Continuous(
                v.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(xi, (l, u))| xi + 0.05 * (u - l) * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            space.clip(&mut out);
            out
        }
        (InputSpace::Categorical { length, alphabet }, Input::Categorical(s)) => Input::Categorical(
            s.iter()
                .map(|&a| if rng.random_range(0..*length) == 0 { rng.random_range(0..*alphabet) } else { a })
                .collect(),
        ),
        _ => x.clone(),
    }
}

/// `k` pairs `(x̃, ỹ)` with `ỹ = y_b + |N(0, noise²)|`, `y_b` the score of a
/// random record from the top score bin.
pub fn make_synthetic(
    ds: &Dataset,
    k: usize,
    noise: f64,
    inputs: SyntheticInputs,
    bins: usize,
    rng: &mut MinRng,
) -> Result<SyntheticSet> {
    if k == 0 {
        return Ok(SyntheticSet { records: Vec::new(), base_y: Vec::new() });
    }
    ds.require_nonempty()?;
    if ds.contextual() {
        return Err(MinError::invalid("synthetic augmentation needs a non-contextual dataset"));
    }
    let ys = ds.ys();
    let b = bin_scores(&ys, bins)?;
    let top = b.len() - 1;
    let top_records: Vec<usize> = (0..ys.len()).filter(|&i| b.bin_of(ys[i]).ok() == Some(top)).collect();
    let mut records = Vec::with_capacity(k);
    let mut base_y = Vec::with_capacity(k);
    for _ in 0..k {
        let b = top_records[rng.random_range(0..top_records.len())];
        let base = ys[b];
        let y = base + (noise * rng.sample::<f64, _>(StandardNormal)).abs();
        let x = match inputs {
            SyntheticInputs::Uniform => ds.space().sample_uniform(rng),
            SyntheticInputs::PerturbedData => {
                let src = &ds.records()[rng.random_range(0..ds.len())].x;
                perturb(ds.space(), src, rng)
            }
            SyntheticInputs::PerturbedTop => perturb(ds.space(), &ds.records()[b].x, rng),
        };
        records.push(Record { context: None, x, y });
        base_y.push(base);
    }
    Ok(SyntheticSet { records, base_y })
}

/// Real records followed by synthetic ones, with a provenance flag per record.
#[derive(Debug, Clone)]
pub struct AugmentedSet {
    pub dataset: Dataset,
    pub synthetic: Vec<bool>,
}

impl AugmentedSet {
    pub fn new(real: &Dataset, synth: &SyntheticSet) -> Result<Self> {
        let mut dataset = real.clone();
        let mut synthetic = vec![false; real.len()];
        for r in &synth.records {
            dataset.push(r.clone())?;
            synthetic.push(true);
        }
        Ok(AugmentedSet { dataset, synthetic })
    }

    /// The records whose provenance is real, in order.
    pub fn real_only(&self) -> Result<Dataset> {
        let mut ds = Dataset::new(self.dataset.space().clone(), self.dataset.context_dim())?;
        for (r, &s) in self.dataset.records().iter().zip(&self.synthetic) {
            if !s {
                ds.push(r.clone())?;
            }
        }
        Ok(ds)
    }
}

/// Cumulative regret `Σ (f* - y_t)` over scores in the maximization convention.
pub fn compute_regret(ys: &[f64], f_star: Option<f64>) -> Result<Vec<f64>> {
    let f_star = f_star.ok_or_else(|| MinError::invalid("regret needs a known optimum"))?;
    let mut acc = 0.0;
    Ok(ys
        .iter()
        .map(|y| {
            acc += (f_star - y).max(0.0);
            acc
        })
        .collect())
}

/// One query, with scores in the oracle's conventional sign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub x: Input,
    pub y: f64,
    pub best_so_far: f64,
    pub cum_regret: Option<f64>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunHistory {
    pub oracle: String,
    pub seed: u64,
    pub rows: Vec<HistoryRow>,
}

impl RunHistory {
    pub fn best_so_far(&self) -> Option<f64> {
        self.rows.last().map(|r| r.best_so_far)
    }
}

fn csv_header(space: &InputSpace) -> String {
    let xs = match space {
        InputSpace::Continuous { lower, .. } => (0..lower.len()).map(|i| format!("x_{i}")).collect::<Vec<_>>().join(","),
        InputSpace::Categorical { .. } => "x".to_string(),
    };
    format!("iter,{xs},y,best_so_far,cum_regret,elapsed_ms\n")
}

fn csv_row(row: &HistoryRow) -> String {
    let xs = match &row.x {
        Input::Continuous(v) => v.iter().map(|&c| fmt_f64(c)).collect::<Vec<_>>().join(","),
        Input::Categorical(s) => s.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("-"),
    };
    let regret = row.cum_regret.map(fmt_f64).unwrap_or_default();
    format!("{},{xs},{},{},{regret},{}\n", row.iter, fmt_f64(row.y), fmt_f64(row.best_so_far), row.elapsed_ms)
}

/// History CSV writer, flushed after every row. Categorical inputs are written
/// as one `x` column of symbols joined by `-`.
pub struct HistoryCsv {
    out: BufWriter<File>,
}

impl HistoryCsv {
    pub fn create(path: &Path, space: &InputSpace) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(csv_header(space).as_bytes())?;
        out.flush()?;
        Ok(HistoryCsv { out })
    }

    pub fn write(&mut self, row: &HistoryRow) -> Result<()> {
        self.out.write_all(csv_row(row).as_bytes())?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn history_csv(history: &RunHistory, space: &InputSpace) -> String {
    let mut s = csv_header(space);
    for r in &history.rows {
        s.push_str(&csv_row(r));
    }
    s
}

/// Everything a loop needs besides the oracle and data.
#[derive(Debug, Clone, Default)]
pub struct LoopConfigs {
    pub active: ActiveConfig,
    pub gan: GanConfig,
    pub reweight: ReweightConfig,
    pub forward: ForwardConfig,
    pub infer: InferenceConfig,
    /// Train without importance weights.
    pub unweighted: bool,
}

#[derive(Debug, Clone)]
pub struct ActiveOutcome {
    pub history: RunHistory,
    pub dataset: Dataset,
    pub exploration: Option<InverseMap>,
    pub exploitation: InverseMap,
    pub forward: Option<ForwardModel>,
    pub final_inference: Option<InferenceResult>,
    /// Oracle score of the final answer, conventional sign.
    pub final_score: Option<f64>,
}

fn weights_for(ds: &Dataset, cfg: &LoopConfigs) -> Result<Vec<f64>> {
    if cfg.unweighted {
        return Ok(vec![1.0; ds.len()]);
    }
    let ys = ds.ys();
    importance_weights(&ReweightingScheme::build(&ys, &cfg.reweight)?, &ys)
}

struct Tracker<'a> {
    oracle: &'a dyn Oracle,
    f_star: Option<f64>,
    best: f64,
    regret: f64,
    start: Instant,
    wall_clock: bool,
    history: RunHistory,
    csv: Option<&'a mut HistoryCsv>,
}

impl Tracker<'_> {
    fn record(&mut self, iter: usize, x: Input, y: f64) -> Result<()> {
        self.best = self.best.max(y);
        let cum_regret = self.f_star.map(|f| {
            self.regret += (f - y).max(0.0);
            self.regret
        });
        let sign = self.oracle.raw_sign();
        let row = HistoryRow {
            iter,
            x,
            y: sign * y,
            best_so_far: sign * self.best,
            cum_regret,
            elapsed_ms: if self.wall_clock { self.start.elapsed().as_millis() as u64 } else { 0 },
        };
        if let Some(csv) = self.csv.as_deref_mut() {
            csv.write(&row)?;
        }
        self.history.rows.push(row);
        Ok(())
    }
}

/// Evaluates the oracle at `propose()`, retrying once with a fresh proposal.
fn query(oracle: &dyn Oracle, mut propose: impl FnMut() -> Result<Input>) -> Result<(Input, f64)> {
    let x = propose()?;
    match oracle.evaluate(&x, None) {
        Ok(y) => Ok((x, y)),
        Err(_) => {
            let x = propose()?;
            let y = oracle.evaluate(&x, None)?;
            Ok((x, y))
        }
    }
}

fn finish(
    oracle: &dyn Oracle,
    ds: Dataset,
    history: RunHistory,
    exploration: Option<InverseMap>,
    exploitation: InverseMap,
    cfg: &LoopConfigs,
    seed: u64,
) -> Result<ActiveOutcome> {
    let (forward, final_inference, final_score) = if cfg.active.final_inference {
        let (fwd, _) = train_forward(&ds, &cfg.forward, &mut component_rng(seed, "active-forward"))?;
        let res = approx_infer(&exploitation, &fwd, &ds.ys(), &cfg.infer, None, &mut component_rng(seed, "active-infer"))?;
        let score = oracle.raw_sign() * oracle.evaluate(&res.x_star, None)?;
        (Some(fwd), Some(res), Some(score))
    } else {
        (None, None, None)
    };
    Ok(ActiveOutcome { history, dataset: ds, exploration, exploitation, forward, final_inference, final_score })
}

fn start_checks(oracle: &dyn Oracle, initial: &Dataset, cfg: &LoopConfigs) -> Result<()> {
    cfg.active.validate()?;
    initial.require_nonempty()?;
    if oracle.context_dim().is_some() || initial.contextual() {
        return Err(MinError::invalid("active loops run on non-contextual oracles"));
    }
    if initial.space() != oracle.space() {
        return Err(MinError::ModelMismatch("dataset space differs from the oracle's".into()));
    }
    Ok(())
}

/// Randomized-labeling loop. Both copies start from one initialization with
/// standardizers fitted on the initial dataset and are warm-started across
/// iterations.
pub fn active_loop(
    oracle: &dyn Oracle,
    initial: &Dataset,
    cfg: &LoopConfigs,
    seed: u64,
    csv: Option<&mut HistoryCsv>,
) -> Result<ActiveOutcome> {
    start_checks(oracle, initial, cfg)?;
    let a = &cfg.active;
    let k = a.synthetic_size(initial.len());
    let scalers = fit_scalers(initial)?;
    let mut exploit = GanTrainer::new(initial.space().clone(), None, scalers, cfg.gan.clone(), &mut component_rng(seed, "active-init"))?;
    let mut explore = exploit.clone();
    // Identical streams: with no synthetic records the copies stay identical.
    let mut explore_rng = component_rng(seed, "active-train");
    let mut exploit_rng = component_rng(seed, "active-train");
    let mut synth_rng = component_rng(seed, "active-synthetic");
    let mut query_rng = component_rng(seed, "active-query");

    let mut ds = initial.clone();
    let w0 = weights_for(&ds, cfg)?;
    explore.train(&ds, &w0, a.initial_steps, &mut explore_rng)?;
    exploit.train(&ds, &w0, a.initial_steps, &mut exploit_rng)?;

    let mut tracker = Tracker {
        oracle,
        f_star: oracle.known_optimum().map(|o| o.value),
        best: ds.y_max().expect("nonempty"),
        regret: 0.0,
        start: Instant::now(),
        wall_clock: a.wall_clock,
        history: RunHistory { oracle: oracle.name().to_string(), seed, rows: Vec::new() },
        csv,
    };
    for t in 0..a.iterations {
        let noise = match a.noise_scale {
            Some(s) => s,
            None => adaptive_tau(&ds.ys())?,
        };
        let synth = make_synthetic(&ds, k, noise, a.synthetic_inputs, cfg.reweight.bins, &mut synth_rng)?;
        let aug = AugmentedSet::new(&ds, &synth)?;
        let w_aug = weights_for(&aug.dataset, cfg)?;
        explore.train(&aug.dataset, &w_aug, a.steps_per_iteration, &mut explore_rng)?;
        let real = aug.real_only()?;
        let w_real = weights_for(&real, cfg)?;
        exploit.train(&real, &w_real, a.steps_per_iteration, &mut exploit_rng)?;

        let y_query = aug.dataset.y_max().expect("nonempty");
        let map = explore.inverse_map();
        let (x, y) = query(oracle, || Ok(map.sample(y_query, None, 1, &mut query_rng)?.inputs.remove(0)))?;
        ds.push(Record { context: None, x: x.clone(), y })?;
        tracker.record(t, x, y)?;
    }
    let history = tracker.history;
    let exploration = explore.inverse_map().clone();
    let exploitation = exploit.inverse_map().clone();
    finish(oracle, ds, history, Some(exploration), exploitation, cfg, seed)
}

/// Greedy ablation: no synthetic data, one model, queries at the best
/// observed score with Gaussian input noise of `greedy_noise` times each
/// coordinate's range (categorical: each position resampled with that
/// probability).
pub fn greedy_ablation_loop(
    oracle: &dyn Oracle,
    initial: &Dataset,
    cfg: &LoopConfigs,
    seed: u64,
    csv: Option<&mut HistoryCsv>,
) -> Result<ActiveOutcome> {
    start_checks(oracle, initial, cfg)?;
    let a = &cfg.active;
    let scalers = fit_scalers(initial)?;
    let mut exploit = GanTrainer::new(initial.space().clone(), None, scalers, cfg.gan.clone(), &mut component_rng(seed, "active-init"))?;
    let mut exploit_rng = component_rng(seed, "active-train");
    let mut query_rng = component_rng(seed, "active-query");

    let mut ds = initial.clone();
    let w0 = weights_for(&ds, cfg)?;
    exploit.train(&ds, &w0, a.initial_steps, &mut exploit_rng)?;
    let mut tracker = Tracker {
        oracle,
        f_star: oracle.known_optimum().map(|o| o.value),
        best: ds.y_max().expect("nonempty"),
        regret: 0.0,
        start: Instant::now(),
        wall_clock: a.wall_clock,
        history: RunHistory { oracle: oracle.name().to_string(), seed, rows: Vec::new() },
        csv,
    };
    for t in 0..a.iterations {
        let w = weights_for(&ds, cfg)?;
        exploit.train(&ds, &w, a.steps_per_iteration, &mut exploit_rng)?;
        let y_query = ds.y_max().expect("nonempty");
        let map = exploit.inverse_map();
        let space = ds.space().clone();
        let (x, y) = query(oracle, || {
            let x = map.sample(y_query, None, 1, &mut query_rng)?.inputs.remove(0);
            Ok(add_query_noise(&space, x, a.greedy_noise, &mut query_rng))
        })?;
        ds.push(Record { context: None, x: x.clone(), y })?;
        tracker.record(t, x, y)?;
    }
    let history = tracker.history;
    let exploitation = exploit.inverse_map().clone();
    finish(oracle, ds, history, None, exploitation, cfg, seed)
}

fn add_query_noise(space: &InputSpace, x: Input, sigma: f64, rng: &mut MinRng) -> Input {
    if sigma == 0.0 {
        return x;
    }
    match (space, x) {
        (InputSpace::Continuous { lower, upper }, Input::Continuous(v)) => {
            let mut out = Input::Continuous(
                v.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(xi, (l, u))| xi + sigma * (u - l) * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            space.clip(&mut out);
            out
        }
        (InputSpace::Categorical { alphabet, .. }, Input::Categorical(s)) => Input::Categorical(
            s.into_iter().map(|a| if rng.random_bool(sigma.min(1.0)) { rng.random_range(0..*alphabet) } else { a }).collect(),
        ),
        (_, x) => x,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn regret_arithmetic() {
        assert_eq!(compute_regret(&[1.0, 1.0], Some(1.0)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(compute_regret(&[0.5; 4], Some(1.0)).unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        assert!(compute_regret(&[0.5], None).is_err());
    }

    #[test]
    fn synthetic_scores_exceed_their_base() {
        let space = InputSpace::continuous(vec![-5.0, 0.0], vec![10.0, 15.0]).unwrap();
        let mut ds = Dataset::new(space.clone(), None).unwrap();
        let mut rng = seeded(1);
        for i in 0..200 {
            ds.push(Record { context: None, x: space.sample_uniform(&mut rng), y: (i as f64).sqrt() }).unwrap();
        }
        let s = make_synthetic(&ds, 10_000, 0.3, SyntheticInputs::Uniform, 20, &mut rng).unwrap();
        assert_eq!(s.len(), 10_000);
        let y_max = ds.y_max().unwrap();
        let top_lo = y_max - (y_max - 0.0) / 20.0;
        for (r, &b) in s.records.iter().zip(&s.base_y) {
            assert!(r.y > b && b >= top_lo - 1e-12);
            space.contains(&r.x).unwrap();
        }
        assert!(make_synthetic(&ds, 0, 0.3, SyntheticInputs::Uniform, 20, &mut rng).unwrap().is_empty());
        let p = make_synthetic(&ds, 500, 0.3, SyntheticInputs::PerturbedData, 20, &mut rng).unwrap();
        for r in &p.records {
            space.contains(&r.x).unwrap();
        }
    }

    #[test]
    fn csv_layout() {
        let space = InputSpace::continuous(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let row = HistoryRow {
            iter: 0,
            x: Input::Continuous(vec![0.5, 0.25]),
            y: 1.0,
            best_so_far: 1.0,
            cum_regret: None,
            elapsed_ms: 0,
        };
        let h = RunHistory { oracle: "t".into(), seed: 0, rows: vec![row] };
        let text = history_csv(&h, &space);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,x_0,x_1,y,best_so_far,cum_regret,elapsed_ms");
        assert_eq!(
            lines.next().unwrap(),
            "0,5.0000000000000000e-1,2.5000000000000000e-1,1.0000000000000000e0,1.0000000000000000e0,,0"
        );
        let cat = InputSpace::categorical(3, 4).unwrap();
        assert!(csv_header(&cat).starts_with("iter,x,y,"));
    }
}
