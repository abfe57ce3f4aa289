//! Synthetic discrete-sequence task: a position weight matrix plus one
//! pairwise interaction, small enough to enumerate exhaustively.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Input, InputSpace};
use crate::error::{MinError, Result};
use crate::rng::seeded;

use super::{KnownOptimum, Oracle};

#[derive(Debug, Clone)]
pub struct SequenceTask {
    name: String,
    space: InputSpace,
    length: usize,
    alphabet: usize,
    /// `pwm[position][symbol]`
    pwm: Vec<Vec<f64>>,
    pair: (usize, usize),
    /// `interaction[symbol at pair.0][symbol at pair.1]`
    interaction: Vec<Vec<f64>>,
    optimum: (f64, Vec<usize>),
}

impl SequenceTask {
    pub fn new(seed: u64, length: usize, alphabet: usize) -> Result<Self> {
        if length < 2 || alphabet < 2 {
            return Err(MinError::invalid("sequence task needs length >= 2 and alphabet >= 2"));
        }
        let mut rng = seeded(seed ^ 0x5EC5_EC5E);
        let pwm = (0..length).map(|_| (0..alphabet).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let i = rng.random_range(0..length);
        let mut j = rng.random_range(0..length - 1);
        if j >= i {
            j += 1;
        }
        let interaction =
            (0..alphabet).map(|_| (0..alphabet).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        Self::from_parts(format!("seq:L{length}A{alphabet}:seed{seed}"), pwm, (i, j), interaction)
    }

    /// Builds a task from explicit tables and finds its optimum by enumeration.
    pub fn from_parts(name: String, pwm: Vec<Vec<f64>>, pair: (usize, usize), interaction: Vec<Vec<f64>>) -> Result<Self> {
        let length = pwm.len();
        let alphabet = pwm.first().map_or(0, Vec::len);
        let space = InputSpace::categorical(length, alphabet)?;
        if (length as f64) * (alphabet as f64).log2() > 24.0 + 1e-9 {
            return Err(MinError::invalid("sequence task too large to enumerate (L*log2(A) > 24)"));
        }
        if pwm.iter().any(|r| r.len() != alphabet)
            || interaction.len() != alphabet
            || interaction.iter().any(|r| r.len() != alphabet)
            || pair.0 >= length
            || pair.1 >= length
            || pair.0 == pair.1
        {
            return Err(MinError::invalid("inconsistent sequence task tables"));
        }
        let mut task = SequenceTask {
            name,
            space,
            length,
            alphabet,
            pwm,
            pair,
            interaction,
            optimum: (f64::NEG_INFINITY, Vec::new()),
        };
        let mut best = (f64::NEG_INFINITY, Vec::new());
        task.for_each_sequence(|s, v| {
            if v > best.0 {
                best = (v, s.to_vec());
            }
        });
        task.optimum = best;
        Ok(task)
    }

    pub fn score(&self, s: &[usize]) -> f64 {
        let base: f64 = s.iter().enumerate().map(|(p, &a)| self.pwm[p][a]).sum();
        base + self.interaction[s[self.pair.0]][s[self.pair.1]]
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn pwm(&self) -> &[Vec<f64>] {
        &self.pwm
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn interaction(&self) -> &[Vec<f64>] {
        &self.interaction
    }

    pub fn optimum(&self) -> (f64, &[usize]) {
        (self.optimum.0, &self.optimum.1)
    }

    pub fn for_each_sequence(&self, mut f: impl FnMut(&[usize], f64)) {
        let mut s = vec![0usize; self.length];
        loop {
            f(&s, self.score(&s));
            let mut p = 0;
            loop {
                if p == self.length {
                    return;
                }
                s[p] += 1;
                if s[p] < self.alphabet {
                    break;
                }
                s[p] = 0;
                p += 1;
            }
        }
    }

    /// Fraction of all sequences scoring strictly higher than `s`.
    pub fn fraction_better(&self, s: &[usize]) -> f64 {
        let v = self.score(s);
        let mut better = 0usize;
        let mut total = 0usize;
        self.for_each_sequence(|_, w| {
            total += 1;
            if w > v {
                better += 1;
            }
        });
        better as f64 / total as f64
    }
}

impl Oracle for SequenceTask {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &InputSpace {
        &self.space
    }

    fn evaluate(&self, x: &Input, context: Option<&[f64]>) -> Result<f64> {
        if context.is_some() {
            return Err(MinError::Oracle("sequence task takes no context".into()));
        }
        self.space.contains(x)?;
        Ok(self.score(x.as_sequence().expect("checked by contains")))
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum { value: self.optimum.0, witness: Some(Input::Categorical(self.optimum.1.clone())) })
    }

    fn as_sequence(&self) -> Option<&SequenceTask> {
        Some(self)
    }
}
