//! Synthetic task whose valid inputs lie on a smooth low-dimensional surface.
//!
//! The surface is the image of the latent box `[-1, 1]^k` under a frozen random
//! two-layer tanh network `phi`. An ambient point scores
//! `g(u_hat) - PENALTY * dist(x)`, where `u_hat` is the latent point whose image
//! is nearest to `x`, `dist` is that distance and `g(u) = 1 - |u - u*|^2`.
//! Datasets drawn with the manifold-latent policy are noisy images of latent
//! points and leave out a ball of radius `HOLE_RADIUS` around `u*`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Input, InputSpace, SamplingPolicy};
use crate::error::{MinError, Result};
use crate::rng::{seeded, MinRng};

use super::{KnownOptimum, Oracle};

const HIDDEN: usize = 16;
pub const PENALTY: f64 = 1.0;
pub const NOISE_STD: f64 = 0.03;
pub const HOLE_RADIUS: f64 = 0.3;
const AMBIENT_BOUND: f64 = 1.5;
const STARTS: usize = 256;
const REFINED: usize = 8;
const LM_ITERS: usize = 60;

#[derive(Debug, Clone)]
pub struct ManifoldTask {
    name: String,
    space: InputSpace,
    k: usize,
    d: usize,
    /// `HIDDEN x k`, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `d x HIDDEN`, row-major
    w2: Vec<f64>,
    b2: Vec<f64>,
    u_star: Vec<f64>,
    starts: Vec<Vec<f64>>,
}

/// Solves the `n x n` system `a x = b` in place by Gaussian elimination with
/// partial pivoting. Returns `None` when singular.
fn solve_small(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        for i in col + 1..n {
            let f = a[i * n + col] / a[col * n + col];
            for j in col..n {
                a[i * n + j] -= f * a[col * n + j];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i * n + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Some(x)
}

impl ManifoldTask {
    pub fn new(seed: u64, k: usize, d: usize) -> Result<Self> {
        if !(1..=4).contains(&k) || d < 16 {
            return Err(MinError::invalid("manifold task needs 1 <= k <= 4 and d >= 16"));
        }
        let mut rng = seeded(seed ^ 0x3A41_F01D);
        let mut normal = |scale: f64, n: usize| -> Vec<f64> {
            (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let w1 = normal(1.5, HIDDEN * k);
        let b1 = normal(0.5, HIDDEN);
        let w2 = normal(1.5 / (HIDDEN as f64).sqrt(), d * HIDDEN);
        let b2 = normal(0.2, d);
        let u_star = (0..k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let starts = (0..STARTS).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        Ok(ManifoldTask {
            name: format!("manifold:k{k}d{d}:seed{seed}"),
            space: InputSpace::continuous(vec![-AMBIENT_BOUND; d], vec![AMBIENT_BOUND; d])?,
            k,
            d,
            w1,
            b1,
            w2,
            b2,
            u_star,
            starts,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.k
    }

    pub fn ambient_dim(&self) -> usize {
        self.d
    }

    pub fn latent_optimum(&self) -> &[f64] {
        &self.u_star
    }

    pub fn latent_score(&self, u: &[f64]) -> f64 {
        1.0 - u.iter().zip(&self.u_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    fn hidden(&self, u: &[f64]) -> Vec<f64> {
        (0..HIDDEN)
            .map(|h| (self.b1[h] + (0..self.k).map(|i| self.w1[h * self.k + i] * u[i]).sum::<f64>()).tanh())
            .collect()
    }

    /// The embedding `phi(u)`.
    pub fn embed(&self, u: &[f64]) -> Vec<f64> {
        let h = self.hidden(u);
        (0..self.d)
            .map(|o| (self.b2[o] + (0..HIDDEN).map(|j| self.w2[o * HIDDEN + j] * h[j]).sum::<f64>()).tanh())
            .collect()
    }

    /// `phi(u)` and its `d x k` Jacobian.
    fn embed_with_jacobian(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden(u);
        let x = self.embed(u);
        let mut jac = vec![0.0; self.d * self.k];
        for o in 0..self.d {
            let outer = 1.0 - x[o] * x[o];
            for i in 0..self.k {
                let s: f64 = (0..HIDDEN).map(|j| self.w2[o * HIDDEN + j] * (1.0 - h[j] * h[j]) * self.w1[j * self.k + i]).sum();
                jac[o * self.k + i] = outer * s;
            }
        }
        (x, jac)
    }

    fn residual_norm(&self, u: &[f64], x: &[f64]) -> f64 {
        self.embed(u).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    /// Box-constrained Levenberg-Marquardt on `|phi(u) - x|^2`.
    fn refine(&self, mut u: Vec<f64>, x: &[f64]) -> (f64, Vec<f64>) {
        let k = self.k;
        let mut mu = 1e-3;
        let mut cur = self.residual_norm(&u, x);
        for _ in 0..LM_ITERS {
            let (phi, jac) = self.embed_with_jacobian(&u);
            let r: Vec<f64> = phi.iter().zip(x).map(|(a, b)| a - b).collect();
            let mut jtj = vec![0.0; k * k];
            let mut jtr = vec![0.0; k];
            for o in 0..self.d {
                for i in 0..k {
                    jtr[i] += jac[o * k + i] * r[o];
                    for j in 0..k {
                        jtj[i * k + j] += jac[o * k + i] * jac[o * k + j];
                    }
                }
            }
            let mut improved = false;
            for _ in 0..8 {
                let mut a = jtj.clone();
                for i in 0..k {
                    a[i * k + i] += mu * (1.0 + jtj[i * k + i]);
                }
                let Some(step) = solve_small(a, jtr.iter().map(|v| -v).collect(), k) else { break };
                let cand: Vec<f64> = u.iter().zip(&step).map(|(a, s)| (a + s).clamp(-1.0, 1.0)).collect();
                let val = self.residual_norm(&cand, x);
                if val < cur {
                    let gain = cur - val;
                    u = cand;
                    cur = val;
                    mu = (mu / 3.0).max(1e-12);
                    improved = gain > 1e-15;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (cur, u)
    }

    /// Distance from `x` to the manifold and the nearest latent point, by
    /// multistart latent search: all fixed starts are scored, the best few are
    /// refined with Levenberg-Marquardt.
    pub fn project(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut scored: Vec<(f64, usize)> =
            self.starts.iter().enumerate().map(|(i, u)| (self.residual_norm(u, x), i)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best = (f64::INFINITY, Vec::new());
        for &(_, i) in scored.iter().take(REFINED) {
            let cand = self.refine(self.starts[i].clone(), x);
            if cand.0 < best.0 {
                best = cand;
            }
        }
        best
    }

    pub fn manifold_distance(&self, x: &[f64]) -> f64 {
        self.project(x).0
    }

    fn in_hole(&self, u: &[f64]) -> bool {
        u.iter().zip(&self.u_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < HOLE_RADIUS * HOLE_RADIUS
    }
}

impl Oracle for ManifoldTask {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &InputSpace {
        &self.space
    }

    fn evaluate(&self, x: &Input, context: Option<&[f64]>) -> Result<f64> {
        if context.is_some() {
            return Err(MinError::Oracle("manifold task takes no context".into()));
        }
        self.space.contains(x)?;
        let (dist, u) = self.project(x.as_continuous().expect("checked by contains"));
        Ok(self.latent_score(&u) - PENALTY * dist)
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum { value: 1.0, witness: Some(Input::Continuous(self.embed(&self.u_star))) })
    }

    fn propose(&self, policy: SamplingPolicy, rng: &mut MinRng) -> Result<(Option<Vec<f64>>, Input)> {
        match policy {
            SamplingPolicy::Uniform => Ok((None, self.space.sample_uniform(rng))),
            SamplingPolicy::ManifoldLatent => {
                let u = loop {
                    let u: Vec<f64> = (0..self.k).map(|_| rng.random_range(-1.0..1.0)).collect();
                    if !self.in_hole(&u) {
                        break u;
                    }
                };
                let mut x = Input::Continuous(
                    self.embed(&u).into_iter().map(|v| v + NOISE_STD * rng.sample::<f64, _>(StandardNormal)).collect(),
                );
                self.space.clip(&mut x);
                Ok((None, x))
            }
            SamplingPolicy::Logging { .. } => Err(MinError::Oracle("manifold task has no logging policy".into())),
        }
    }

    fn as_manifold(&self) -> Option<&ManifoldTask> {
        Some(self)
    }
}
