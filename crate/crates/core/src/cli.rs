//! Command-line front end: strict JSON configs with dotted overrides, isolated
//! run directories, and the static, active and ablation pipelines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::active::{active_loop, greedy_ablation_loop, history_csv, ActiveConfig, HistoryCsv, LoopConfigs};
use crate::data::{fmt_f64, generate_static_dataset, load_dataset, save_dataset, Dataset, Input, SamplingPolicy};
use crate::error::{MinError, Result};
use crate::forward::{naive_forward_optimize, train_forward, ForwardConfig, ForwardModel, NaiveConfig};
use crate::infer::{approx_infer, naive_best_y, InferenceConfig, InferenceResult};
use crate::invmap::{train_inverse_map, write_loss_csv, GanConfig, InverseMap};
use crate::oracles::{from_name, Oracle};
use crate::reweight::{importance_weights, percentile, ReweightConfig, ReweightingScheme};
use crate::rng::component_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Static,
    Active,
    GreedyAblation,
    BaselineForward,
    BaselineNoinfer,
    BaselineNoreweight,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Static => "static",
            Mode::Active => "active",
            Mode::GreedyAblation => "greedy-ablation",
            Mode::BaselineForward => "baseline-forward",
            Mode::BaselineNoinfer => "baseline-noinfer",
            Mode::BaselineNoreweight => "baseline-noreweight",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub size: usize,
    pub policy: SamplingPolicy,
    /// Load this dataset file instead of generating one.
    pub path: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { size: 1000, policy: SamplingPolicy::Uniform, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub oracle: String,
    pub mode: Mode,
    pub seed: u64,
    /// Run directory; `None` means `runs/<oracle>-<mode>-seed<seed>`.
    pub out: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub gan: GanConfig,
    pub forward: ForwardConfig,
    pub reweight: ReweightConfig,
    pub infer: InferenceConfig,
    pub active: ActiveConfig,
    pub naive: NaiveConfig,
    /// Contexts drawn to score a contextual oracle's static answer.
    pub eval_contexts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            oracle: "branin".into(),
            mode: Mode::Static,
            seed: 0,
            out: None,
            dataset: DatasetConfig::default(),
            gan: GanConfig::default(),
            forward: ForwardConfig::default(),
            reweight: ReweightConfig::default(),
            infer: InferenceConfig::default(),
            active: ActiveConfig::default(),
            naive: NaiveConfig::default(),
            eval_contexts: 200,
        }
    }
}

/// Config paths whose contents are tagged unions and are checked by serde.
const OPAQUE: &[&str] = &["dataset.policy"];

fn unknown_keys(value: &Value, reference: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(v), Value::Object(r)) = (value, reference) else { return };
    for (k, sub) in v {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match r.get(k) {
            None => out.push(format!("unknown key `{path}`")),
            Some(rsub) if !OPAQUE.contains(&path.as_str()) => unknown_keys(sub, rsub, &path, out),
            Some(_) => {}
        }
    }
}

/// Parses `key=value`; the value is JSON when it parses as JSON, otherwise a string.
fn apply_override(root: &mut Value, assignment: &str) -> std::result::Result<(), String> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| format!("override `{assignment}` is not key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{key}` is malformed"));
    }
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(format!("override `{key}` descends into a non-object"));
        }
        node = node.as_object_mut().expect("object").entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
    }
    match node {
        Value::Object(m) => {
            m.insert(parts[parts.len() - 1].to_string(), value);
            Ok(())
        }
        _ => Err(format!("override `{key}` descends into a non-object")),
    }
}

impl RunConfig {
    /// Builds a config from optional JSON text plus overrides, reporting every
    /// unknown key and every bad override together.
    pub fn resolve(text: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
        let mut errors = Vec::new();
        let mut root = match text {
            Some(t) => serde_json::from_str::<Value>(t).map_err(|e| MinError::Config(vec![format!("config is not valid JSON: {e}")]))?,
            None => Value::Object(Map::new()),
        };
        if !root.is_object() {
            return Err(MinError::Config(vec!["config must be a JSON object".into()]));
        }
        for o in overrides {
            if let Err(e) = apply_override(&mut root, o) {
                errors.push(e);
            }
        }
        let reference = serde_json::to_value(RunConfig::default())?;
        unknown_keys(&root, &reference, "", &mut errors);
        if !errors.is_empty() {
            return Err(MinError::Config(errors));
        }
        let cfg: RunConfig = serde_json::from_value(root).map_err(|e| MinError::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let mut check = |what: &str, r: Result<()>| {
            if let Err(e) = r {
                errors.push(format!("{what}: {e}"));
            }
        };
        check("oracle", from_name(&self.oracle).map(|_| ()));
        check("gan", self.gan.validate());
        check("forward", self.forward.validate());
        check("infer", self.infer.validate());
        check("active", self.active.validate());
        check("reweight", ReweightingScheme::build(&[0.0, 1.0], &self.reweight).map(|_| ()));
        if self.dataset.size == 0 && self.dataset.path.is_none() {
            errors.push("dataset.size must be at least 1".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(MinError::Config(errors))
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            PathBuf::from("runs").join(format!("{}-{}-seed{}", self.oracle.replace(':', "_"), self.mode.name(), self.seed))
        })
    }

    fn loop_configs(&self) -> LoopConfigs {
        LoopConfigs {
            active: self.active.clone(),
            gan: self.gan.clone(),
            reweight: self.reweight.clone(),
            forward: self.forward.clone(),
            infer: self.infer,
            unweighted: self.mode == Mode::BaselineNoreweight,
        }
    }
}

/// Creates an empty run directory. An existing non-empty directory is an
/// error unless `overwrite` is set, in which case it is replaced.
pub fn prepare_run_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let empty = fs::read_dir(dir)?.next().is_none();
        if !empty {
            if !overwrite {
                return Err(MinError::Config(vec![format!(
                    "run directory {} already exists; pass --overwrite or choose another --out",
                    dir.display()
                )]));
            }
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

struct Run {
    cfg: RunConfig,
    dir: PathBuf,
    oracle: Box<dyn Oracle>,
    log: Vec<String>,
}

impl Run {
    fn start(cfg: RunConfig, overwrite: bool) -> Result<Run> {
        let oracle = from_name(&cfg.oracle)?;
        let dir = cfg.run_dir();
        prepare_run_dir(&dir, overwrite)?;
        fs::write(dir.join("resolved-config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
        Ok(Run { cfg, dir, oracle, log: Vec::new() })
    }

    fn note(&mut self, line: String) -> Result<()> {
        self.log.push(line);
        fs::write(self.dir.join("log.txt"), self.log.join("\n") + "\n")?;
        Ok(())
    }

    fn dataset(&mut self) -> Result<Dataset> {
        let ds = match &self.cfg.dataset.path {
            Some(p) => load_dataset(p)?,
            None => generate_static_dataset(
                self.oracle.as_ref(),
                self.cfg.dataset.size,
                self.cfg.dataset.policy,
                &mut component_rng(self.cfg.seed, "data"),
            )?,
        };
        if ds.space() != self.oracle.space() || ds.context_dim() != self.oracle.context_dim() {
            return Err(MinError::ModelMismatch("dataset does not match the oracle".into()));
        }
        save_dataset(&ds, &self.dir.join("dataset.jsonl"))?;
        self.note(format!("dataset: {} records, best score {}", ds.len(), fmt_f64(self.oracle.raw_sign() * ds.y_max().unwrap_or(f64::NAN))))?;
        Ok(ds)
    }

    fn weights(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if self.cfg.mode == Mode::BaselineNoreweight {
            return Ok(vec![1.0; ds.len()]);
        }
        let ys = ds.ys();
        importance_weights(&ReweightingScheme::build(&ys, &self.cfg.reweight)?, &ys)
    }

    fn train(&mut self, ds: &Dataset) -> Result<(InverseMap, ForwardModel)> {
        let w = self.weights(ds)?;
        let (inv, disc, trace) = train_inverse_map(ds, &w, &self.cfg.gan, &mut component_rng(self.cfg.seed, "gan"))?;
        inv.save(&self.dir.join("inverse.ckpt"), Some(&disc))?;
        write_loss_csv(&self.dir.join("loss.csv"), &trace)?;
        let (fwd, mse) = train_forward(ds, &self.cfg.forward, &mut component_rng(self.cfg.seed, "forward"))?;
        fwd.save(&self.dir.join("forward.ckpt"))?;
        self.note(format!("forward validation mse {}", fmt_f64(mse)))?;
        Ok((inv, fwd))
    }
}

/// One static answer: either a plain input or, for contextual oracles, the
/// mean score over sampled contexts.
#[derive(Debug, Clone, Serialize)]
pub struct StaticOutcome {
    pub mode: Mode,
    pub oracle: String,
    pub seed: u64,
    /// Oracle score in its conventional sign (mean over contexts if contextual).
    pub score: f64,
    pub dataset_best: f64,
    pub x: Option<Input>,
    pub feasible: Option<bool>,
    pub inference: Option<InferenceResult>,
}

fn static_answer(run: &mut Run, ds: &Dataset, models: Option<(InverseMap, ForwardModel)>) -> Result<StaticOutcome> {
    let cfg = run.cfg.clone();
    let (inv, fwd) = match (models, cfg.mode) {
        (Some((i, f)), _) => (Some(i), f),
        (None, Mode::BaselineForward) => {
            let (f, mse) = train_forward(ds, &cfg.forward, &mut component_rng(cfg.seed, "forward"))?;
            f.save(&run.dir.join("forward.ckpt"))?;
            run.note(format!("forward validation mse {}", fmt_f64(mse)))?;
            (None, f)
        }
        (None, _) => {
            let (i, f) = run.train(ds)?;
            (Some(i), f)
        }
    };
    let oracle = run.oracle.as_ref();
    let sign = oracle.raw_sign();
    let outcome = |score, x, feasible, inference| StaticOutcome {
        mode: cfg.mode,
        oracle: cfg.oracle.clone(),
        seed: cfg.seed,
        score,
        dataset_best: sign * ds.y_max().expect("nonempty"),
        x,
        feasible,
        inference,
    };

    let Some(inv) = inv else {
        if ds.contextual() {
            return Err(MinError::invalid("baseline-forward needs a non-contextual oracle"));
        }
        let start = ds.records()[ds.argmax().expect("nonempty")].x.as_continuous().map(<[f64]>::to_vec);
        let start = start.ok_or_else(|| MinError::invalid("baseline-forward needs a continuous space"))?;
        let x = Input::Continuous(naive_forward_optimize(&fwd, ds.space(), &[start], &cfg.naive)?.remove(0));
        let score = sign * oracle.evaluate(&x, None)?;
        return Ok(outcome(score, Some(x), None, None));
    };
    let ys = ds.ys();
    if oracle.context_dim().is_some() {
        let mut crng = component_rng(cfg.seed, "eval-contexts");
        let mut irng = component_rng(cfg.seed, "infer");
        let n = cfg.eval_contexts.max(1);
        let mut total = 0.0;
        let mut all_feasible = true;
        for _ in 0..n {
            let c = oracle.sample_context(&mut crng).expect("contextual oracle");
            let x = if cfg.mode == Mode::BaselineNoinfer {
                inv.sample(ds.y_max().expect("nonempty"), Some(&c), 1, &mut irng)?.inputs.remove(0)
            } else {
                let r = approx_infer(&inv, &fwd, &ys, &cfg.infer, Some(&c), &mut irng)?;
                all_feasible &= r.feasible;
                r.x_star
            };
            total += oracle.evaluate(&x, Some(&c))?;
        }
        let feasible = (cfg.mode != Mode::BaselineNoinfer).then_some(all_feasible);
        return Ok(outcome(sign * total / n as f64, None, feasible, None));
    }
    if cfg.mode == Mode::BaselineNoinfer {
        let x = naive_best_y(ds, &inv, None, 1, &mut component_rng(cfg.seed, "noinfer"))?.inputs.remove(0);
        let score = sign * oracle.evaluate(&x, None)?;
        return Ok(outcome(score, Some(x), None, None));
    }
    let r = approx_infer(&inv, &fwd, &ys, &cfg.infer, None, &mut component_rng(cfg.seed, "infer"))?;
    let score = sign * oracle.evaluate(&r.x_star, None)?;
    Ok(outcome(score, Some(r.x_star.clone()), Some(r.feasible), Some(r)))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

pub fn cmd_gen_data(cfg: RunConfig, overwrite: bool) -> Result<PathBuf> {
    let mut run = Run::start(cfg, overwrite)?;
    run.dataset()?;
    Ok(run.dir)
}

pub fn cmd_train(cfg: RunConfig, overwrite: bool) -> Result<PathBuf> {
    let mut run = Run::start(cfg, overwrite)?;
    let ds = run.dataset()?;
    run.train(&ds)?;
    Ok(run.dir)
}

/// Trains (or loads from a `train` run directory) and writes `result.json`.
pub fn cmd_infer(cfg: RunConfig, from: Option<&Path>, overwrite: bool) -> Result<StaticOutcome> {
    let models = match from {
        Some(dir) => {
            let (inv, _) = InverseMap::load(&dir.join("inverse.ckpt"))?;
            let fwd = ForwardModel::load(&dir.join("forward.ckpt"))?;
            Some((inv, fwd, dir.join("dataset.jsonl")))
        }
        None => None,
    };
    let mut cfg = cfg;
    if let Some((_, _, p)) = &models {
        cfg.dataset.path = Some(p.clone());
    }
    let mut run = Run::start(cfg, overwrite)?;
    let ds = run.dataset()?;
    let out = static_answer(&mut run, &ds, models.map(|(i, f, _)| (i, f)))?;
    write_json(&run.dir.join("result.json"), &out)?;
    run.note(format!("{} score {}", out.mode.name(), fmt_f64(out.score)))?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ActiveSummary {
    pub mode: Mode,
    pub oracle: String,
    pub seed: u64,
    pub queries: usize,
    pub best_so_far: f64,
    pub final_score: Option<f64>,
    pub final_inference: Option<InferenceResult>,
}

pub fn cmd_active(cfg: RunConfig, overwrite: bool) -> Result<ActiveSummary> {
    let mut cfg = cfg;
    if cfg.mode != Mode::GreedyAblation {
        cfg.mode = Mode::Active;
    }
    let mut run = Run::start(cfg, overwrite)?;
    let ds = run.dataset()?;
    let lc = run.cfg.loop_configs();
    let mut csv = HistoryCsv::create(&run.dir.join("history.csv"), ds.space())?;
    let out = match run.cfg.mode {
        Mode::GreedyAblation => greedy_ablation_loop(run.oracle.as_ref(), &ds, &lc, run.cfg.seed, Some(&mut csv))?,
        _ => active_loop(run.oracle.as_ref(), &ds, &lc, run.cfg.seed, Some(&mut csv))?,
    };
    out.exploitation.save(&run.dir.join("exploitation.ckpt"), None)?;
    if let Some(e) = &out.exploration {
        e.save(&run.dir.join("exploration.ckpt"), None)?;
    }
    let summary = ActiveSummary {
        mode: run.cfg.mode,
        oracle: run.cfg.oracle.clone(),
        seed: run.cfg.seed,
        queries: out.history.rows.len(),
        best_so_far: out.history.best_so_far().expect("at least one query"),
        final_score: out.final_score,
        final_inference: out.final_inference,
    };
    write_json(&run.dir.join("final.json"), &summary)?;
    run.note(format!("{} queries, best so far {}", summary.queries, fmt_f64(summary.best_so_far)))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spread {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
}

pub fn spread(values: &[f64]) -> Result<Spread> {
    if values.is_empty() {
        return Err(MinError::invalid("no values to summarize"));
    }
    let (q25, median, q75) = (percentile(values, 0.25), percentile(values, 0.5), percentile(values, 0.75));
    Ok(Spread { n: values.len(), median, q25, q75, iqr: q75 - q25 })
}

fn read_best_so_far(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let bad = |detail: String| MinError::Malformed { path: path.to_path_buf(), detail };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty history".into()))?.split(',').collect();
    let col = header.iter().position(|h| *h == "best_so_far").ok_or_else(|| bad("no best_so_far column".into()))?;
    lines
        .map(|l| {
            l.split(',').nth(col).and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("bad row {l:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub runs: Vec<PathBuf>,
    /// Per-iteration best-so-far spread over active runs, truncated to the shortest run.
    pub best_so_far: Vec<Spread>,
    /// Final best-so-far of active runs, or static scores, grouped by mode.
    pub by_mode: BTreeMap<String, Spread>,
}

/// Aggregates run directories: `history.csv` files give per-iteration spreads
/// and `final.json`/`result.json` give per-mode spreads of final scores.
pub fn cmd_report(dirs: &[PathBuf], out: &Path, overwrite: bool) -> Result<Report> {
    if dirs.is_empty() {
        return Err(MinError::Config(vec!["report needs at least one run directory".into()]));
    }
    let mut curves = Vec::new();
    let mut by_mode: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for d in dirs {
        let hist = d.join("history.csv");
        if hist.exists() {
            curves.push(read_best_so_far(&hist)?);
        }
        let (file, key) = if d.join("final.json").exists() {
            (d.join("final.json"), "best_so_far")
        } else if d.join("result.json").exists() {
            (d.join("result.json"), "score")
        } else if hist.exists() {
            continue;
        } else {
            return Err(MinError::Malformed { path: d.clone(), detail: "no history.csv, final.json or result.json".into() });
        };
        let v: Value = serde_json::from_str(&fs::read_to_string(&file)?)?;
        let mode = v["mode"].as_str().unwrap_or("unknown").to_string();
        let score = v[key].as_f64().ok_or_else(|| MinError::Malformed { path: file.clone(), detail: format!("missing {key}") })?;
        by_mode.entry(mode).or_default().push(score);
    }
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let best_so_far = (0..len)
        .map(|t| spread(&curves.iter().map(|c| c[t]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let by_mode = by_mode.into_iter().map(|(k, v)| Ok((k, spread(&v)?))).collect::<Result<BTreeMap<_, _>>>()?;
    let report = Report { runs: dirs.to_vec(), best_so_far, by_mode };

    prepare_run_dir(out, overwrite)?;
    write_json(&out.join("report.json"), &report)?;
    let mut csv = String::from("iter,n,median,q25,q75,iqr\n");
    for (t, s) in report.best_so_far.iter().enumerate() {
        csv.push_str(&format!("{t},{},{},{},{},{}\n", s.n, fmt_f64(s.median), fmt_f64(s.q25), fmt_f64(s.q75), fmt_f64(s.iqr)));
    }
    fs::write(out.join("report.csv"), csv)?;
    Ok(report)
}

/// Renders an active run's history as CSV text, for callers that skip the run directory.
pub fn render_history(out: &crate::active::ActiveOutcome) -> String {
    history_csv(&out.history, out.dataset.space())
}

#[derive(Debug, Parser)]
#[command(name = "min-opt", version, about = "Model inversion networks for model-based optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted override, e.g. `gan.steps=500`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Replace an existing run directory.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a static dataset.
    GenData(RunArgs),
    /// Train the inverse map and forward model.
    Train(RunArgs),
    /// Produce and score a static answer.
    Infer {
        #[command(flatten)]
        run: RunArgs,
        /// Reuse the models and dataset of a `train` run directory.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Run the active loop (or the greedy ablation with `--mode greedy-ablation`).
    Active(RunArgs),
    /// Aggregate run directories.
    Report {
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
}

impl RunArgs {
    /// File, then `--set` overrides, then the dedicated flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let text = match &self.config {
            Some(p) => Some(fs::read_to_string(p).map_err(|e| MinError::Config(vec![format!("cannot read {}: {e}", p.display())]))?),
            None => None,
        };
        let mut sets = self.set.clone();
        if let Some(o) = &self.oracle {
            sets.push(format!("oracle={}", Value::String(o.clone())));
        }
        if let Some(m) = self.mode {
            sets.push(format!("mode=\"{}\"", m.name()));
        }
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        if let Some(o) = &self.out {
            sets.push(format!("out={}", Value::String(o.display().to_string())));
        }
        RunConfig::resolve(text.as_deref(), &sets)
    }
}

/// Runs a parsed command, printing its JSON summary to stdout.
pub fn execute(cli: Cli) -> Result<()> {
    let summary = match cli.command {
        Command::GenData(a) => json!({ "run_dir": cmd_gen_data(a.resolve()?, a.overwrite)? }),
        Command::Train(a) => json!({ "run_dir": cmd_train(a.resolve()?, a.overwrite)? }),
        Command::Infer { run, from } => serde_json::to_value(cmd_infer(run.resolve()?, from.as_deref(), run.overwrite)?)?,
        Command::Active(a) => serde_json::to_value(cmd_active(a.resolve()?, a.overwrite)?)?,
        Command::Report { dirs, out, overwrite } => serde_json::to_value(cmd_report(&dirs, &out, overwrite)?.by_mode)?,
    };
    println!("{summary}");
    Ok(())
}

/// Process exit code for an error: 2 for configuration problems, 3 otherwise.
pub fn exit_code(e: &MinError) -> i32 {
    match e {
        MinError::Config(_) => 2,
        _ => 3,
    }
}

/// One-line machine-parseable error.
pub fn error_line(e: &MinError) -> String {
    let (kind, details) = match e {
        MinError::Config(list) => ("config", list.clone()),
        other => ("runtime", vec![other.to_string()]),
    };
    json!({ "error": kind, "code": exit_code(e), "message": e.to_string(), "details": details }).to_string()
}
