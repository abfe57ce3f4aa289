//! Synthetic contextual bandit. Contexts come from a Gaussian mixture with one
//! component per arm; the correct arm is the nearest mixture center, so the
//! label is a deterministic function of the context and the Bayes-optimal
//! correct-arm rate is exactly 1.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Input, InputSpace, SamplingPolicy};
use crate::error::{MinError, Result};
use crate::rng::{seeded, MinRng};

use super::{KnownOptimum, Oracle};

const CENTER_SCALE: f64 = 2.0;
const CONTEXT_NOISE: f64 = 0.6;

#[derive(Debug, Clone)]
pub struct BanditTask {
    name: String,
    space: InputSpace,
    centers: Vec<Vec<f64>>,
}

impl BanditTask {
    pub fn new(seed: u64, context_dim: usize, arms: usize) -> Result<Self> {
        if !(1..=8).contains(&context_dim) || !(2..=16).contains(&arms) {
            return Err(MinError::invalid("bandit task needs 1 <= context dim <= 8 and 2 <= arms <= 16"));
        }
        let mut rng = seeded(seed ^ 0xBA4D_17);
        let centers = (0..arms)
            .map(|_| (0..context_dim).map(|_| CENTER_SCALE * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        Ok(BanditTask {
            name: format!("bandit:c{context_dim}a{arms}:seed{seed}"),
            space: InputSpace::categorical(1, arms)?,
            centers,
        })
    }

    pub fn arms(&self) -> usize {
        self.centers.len()
    }

    pub fn correct_arm(&self, context: &[f64]) -> usize {
        let dist = |c: &Vec<f64>| c.iter().zip(context).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut best = 0;
        for a in 1..self.centers.len() {
            if dist(&self.centers[a]) < dist(&self.centers[best]) {
                best = a;
            }
        }
        best
    }

    /// Correct-arm rate of the best possible policy.
    pub fn bayes_rate(&self) -> f64 {
        1.0
    }

    fn draw_context(&self, rng: &mut MinRng) -> Vec<f64> {
        let a = rng.random_range(0..self.centers.len());
        self.centers[a].iter().map(|m| m + CONTEXT_NOISE * rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

impl Oracle for BanditTask {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &InputSpace {
        &self.space
    }

    fn context_dim(&self) -> Option<usize> {
        Some(self.centers[0].len())
    }

    fn sample_context(&self, rng: &mut MinRng) -> Option<Vec<f64>> {
        Some(self.draw_context(rng))
    }

    fn evaluate(&self, x: &Input, context: Option<&[f64]>) -> Result<f64> {
        let c = context.ok_or_else(|| MinError::Oracle("bandit task needs a context".into()))?;
        if c.len() != self.centers[0].len() {
            return Err(MinError::Oracle(format!("context must have {} entries", self.centers[0].len())));
        }
        self.space.contains(x)?;
        let arm = x.as_sequence().expect("checked by contains")[0];
        Ok(if arm == self.correct_arm(c) { 1.0 } else { 0.0 })
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum { value: 1.0, witness: None })
    }

    /// `Uniform` picks arms uniformly; `Logging` picks the correct arm with the
    /// given probability and a uniformly chosen wrong arm otherwise.
    fn propose(&self, policy: SamplingPolicy, rng: &mut MinRng) -> Result<(Option<Vec<f64>>, Input)> {
        let c = self.draw_context(rng);
        let k = self.arms();
        let arm = match policy {
            SamplingPolicy::Uniform => rng.random_range(0..k),
            SamplingPolicy::Logging { correct_rate } => {
                if !(0.0..=1.0).contains(&correct_rate) {
                    return Err(MinError::invalid("logging correct rate must be in [0, 1]"));
                }
                let correct = self.correct_arm(&c);
                if rng.random::<f64>() < correct_rate {
                    correct
                } else {
                    let w = rng.random_range(0..k - 1);
                    if w >= correct {
                        w + 1
                    } else {
                        w
                    }
                }
            }
            SamplingPolicy::ManifoldLatent => {
                return Err(MinError::Oracle("bandit task does not support manifold sampling".into()))
            }
        };
        Ok((Some(c), Input::Categorical(vec![arm])))
    }

    fn as_bandit(&self) -> Option<&BanditTask> {
        Some(self)
    }
}
