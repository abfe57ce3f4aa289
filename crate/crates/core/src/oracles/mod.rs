//! Ground-truth score functions. Every oracle maximizes; minimization
//! benchmarks are negated and expose `raw_sign = -1` so logs can report the
//! conventional value as well.

pub mod bandit;
pub mod benchmarks;
pub mod manifold;
pub mod sequence;

use std::fmt::Debug;

use crate::data::{Input, InputSpace, SamplingPolicy};
use crate::error::{MinError, Result};
use crate::rng::MinRng;

pub use bandit::BanditTask;
pub use benchmarks::Benchmark;
pub use manifold::ManifoldTask;
pub use sequence::SequenceTask;

#[derive(Debug, Clone, PartialEq)]
pub struct KnownOptimum {
    /// Best achievable score in the maximization convention.
    pub value: f64,
    /// An input attaining it, when one exists independently of context.
    pub witness: Option<Input>,
}

pub trait Oracle: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn space(&self) -> &InputSpace;

    fn evaluate(&self, x: &Input, context: Option<&[f64]>) -> Result<f64>;

    fn known_optimum(&self) -> Option<KnownOptimum>;

    fn context_dim(&self) -> Option<usize> {
        None
    }

    fn sample_context(&self, _rng: &mut MinRng) -> Option<Vec<f64>> {
        None
    }

    /// Multiplier turning a score back into the conventional value.
    fn raw_sign(&self) -> f64 {
        1.0
    }

    /// Tolerance used when re-verifying the known optimum.
    fn optimum_tolerance(&self) -> f64 {
        1e-9
    }

    /// Draws one `(context, x)` pair under a dataset sampling policy.
    fn propose(&self, policy: SamplingPolicy, rng: &mut MinRng) -> Result<(Option<Vec<f64>>, Input)> {
        match policy {
            SamplingPolicy::Uniform => Ok((self.sample_context(rng), self.space().sample_uniform(rng))),
            other => Err(MinError::Oracle(format!("{} does not support sampling policy {other:?}", self.name()))),
        }
    }

    fn as_manifold(&self) -> Option<&ManifoldTask> {
        None
    }

    fn as_sequence(&self) -> Option<&SequenceTask> {
        None
    }

    fn as_bandit(&self) -> Option<&BanditTask> {
        None
    }
}

/// Re-evaluates the known optimum's witness.
pub fn verify_known_optimum(oracle: &dyn Oracle) -> Result<()> {
    if let Some(KnownOptimum { value, witness: Some(x) }) = oracle.known_optimum() {
        let got = oracle.evaluate(&x, None)?;
        if (got - value).abs() > oracle.optimum_tolerance() {
            return Err(MinError::Oracle(format!(
                "{}: known optimum {value} but witness evaluates to {got}",
                oracle.name()
            )));
        }
    }
    Ok(())
}

/// Parses `"k2d32"`-style parameter blocks into values keyed by their letters.
fn parse_block(block: &str, keys: &[&str]) -> Option<Vec<usize>> {
    let mut rest = block;
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        rest = rest.strip_prefix(key)?;
        let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        out.push(rest[..end].parse().ok()?);
        rest = &rest[end..];
    }
    rest.is_empty().then_some(out)
}

fn parse_seed(part: &str) -> Option<u64> {
    part.strip_prefix("seed")?.parse().ok()
}

/// Builds an oracle from its registry name, e.g. `branin`, `hartmann6`,
/// `manifold:k2d32:seed7`, `seq:L8A4:seed3`, `bandit:c2a10:seed1`.
pub fn from_name(name: &str) -> Result<Box<dyn Oracle>> {
    let bad = || MinError::invalid(format!("unknown oracle {name:?}"));
    let parts: Vec<&str> = name.split(':').collect();
    let oracle: Box<dyn Oracle> = match parts.as_slice() {
        ["branin"] => Box::new(Benchmark::branin()),
        ["hartmann6"] => Box::new(Benchmark::hartmann6()),
        ["manifold", dims, seed] => {
            let v = parse_block(dims, &["k", "d"]).ok_or_else(bad)?;
            Box::new(ManifoldTask::new(parse_seed(seed).ok_or_else(bad)?, v[0], v[1])?)
        }
        ["seq", dims, seed] => {
            let v = parse_block(dims, &["L", "A"]).ok_or_else(bad)?;
            Box::new(SequenceTask::new(parse_seed(seed).ok_or_else(bad)?, v[0], v[1])?)
        }
        ["bandit", dims, seed] => {
            let v = parse_block(dims, &["c", "a"]).ok_or_else(bad)?;
            Box::new(BanditTask::new(parse_seed(seed).ok_or_else(bad)?, v[0], v[1])?)
        }
        _ => return Err(bad()),
    };
    verify_known_optimum(oracle.as_ref())?;
    Ok(oracle)
}
