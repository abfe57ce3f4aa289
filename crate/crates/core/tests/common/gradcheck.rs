//! Central finite-difference reference for reverse-mode gradients.
//!
//! A composition is a random small network built from every op the models use.
//! It is rebuilt from scratch for each perturbed parameter vector, so the
//! reference never touches the backward pass.

use min_opt::diffcore::{Graph, NodeId, Tensor};
use min_opt::rng::seeded;
use min_opt::Result;
use rand::Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub enum Act {
    Relu,
    Leaky,
    Tanh,
    Sigmoid,
    Softplus,
}

#[derive(Debug, Clone, Copy)]
pub enum Head {
    Squared,
    CrossEntropy,
    Softplus,
    LogSumExp,
    Absolute,
    Gumbel,
}

#[derive(Debug, Clone)]
pub struct Composition {
    pub rows: usize,
    pub x_dim: usize,
    pub z_dim: usize,
    pub hidden: usize,
    pub out: usize,
    pub act: Act,
    pub head: Head,
    pub reshape: bool,
    /// Leaves: x, z, w1, b1, w2, b2.
    pub leaves: Vec<Tensor>,
    /// Constants used by the head (targets, noise).
    pub target: Tensor,
}

fn randn<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

impl Composition {
    pub fn random(seed: u64) -> Self {
        let mut rng = seeded(seed);
        let rows = rng.random_range(1..5);
        let x_dim = rng.random_range(1..5);
        let z_dim = rng.random_range(1..4);
        let hidden = rng.random_range(2..7);
        let out = rng.random_range(2..5);
        let act = [Act::Relu, Act::Leaky, Act::Tanh, Act::Sigmoid, Act::Softplus][rng.random_range(0..5)];
        let head = [Head::Squared, Head::CrossEntropy, Head::Softplus, Head::LogSumExp, Head::Absolute, Head::Gumbel]
            [rng.random_range(0..6)];
        let leaves = vec![
            randn(&mut rng, &[rows, x_dim], 1.0),
            randn(&mut rng, &[rows, z_dim], 1.0),
            randn(&mut rng, &[x_dim + z_dim, hidden], 0.8),
            randn(&mut rng, &[1, hidden], 0.3),
            randn(&mut rng, &[hidden, out], 0.8),
            randn(&mut rng, &[1, out], 0.3),
        ];
        let target = match head {
            Head::CrossEntropy => {
                let mut t = vec![0.0; rows * out];
                for r in 0..rows {
                    t[r * out + rng.random_range(0..out)] = 1.0;
                }
                Tensor::new(vec![rows, out], t).unwrap()
            }
            Head::Gumbel => min_opt::diffcore::gumbel_noise(&[rows, out], &mut rng),
            _ => randn(&mut rng, &[rows, out], 1.0),
        };
        Composition { rows, x_dim, z_dim, hidden, out, act, head, reshape: rng.random_bool(0.5), leaves, target }
    }

    /// Builds the scalar loss; every leaf is differentiable.
    pub fn build(&self, g: &mut Graph, leaves: &[Tensor]) -> Result<(NodeId, Vec<NodeId>)> {
        let ids: Vec<NodeId> = leaves.iter().map(|t| g.param(t.clone())).collect();
        let xz = g.concat(&[ids[0], ids[1]])?;
        let h = g.matmul(xz, ids[2])?;
        let h = g.add(h, ids[3])?;
        let h = match self.act {
            Act::Relu => g.relu(h)?,
            Act::Leaky => g.leaky_relu(h, 0.2)?,
            Act::Tanh => g.tanh(h)?,
            Act::Sigmoid => g.sigmoid(h)?,
            Act::Softplus => g.softplus(h)?,
        };
        let y = g.matmul(h, ids[4])?;
        let mut y = g.add(y, ids[5])?;
        y = g.add_scalar(y, 0.1)?;
        let t = g.input(self.target.clone());
        let loss = match self.head {
            Head::Squared => {
                let d = g.sub(y, t)?;
                let sq = g.mul(d, d)?;
                g.mean(sq)?
            }
            Head::CrossEntropy => {
                let p = g.softmax(y)?;
                let lp = g.log(p)?;
                let picked = g.mul(lp, t)?;
                let s = g.sum(picked)?;
                g.scale(s, -1.0 / self.rows as f64)?
            }
            Head::Softplus => {
                let neg = g.scale(y, -1.0)?;
                let sp = g.softplus(neg)?;
                g.mean(sp)?
            }
            Head::LogSumExp => {
                let e = g.exp(y)?;
                let s = g.sum_last(e)?;
                let l = g.log(s)?;
                g.mean(l)?
            }
            Head::Absolute => {
                let d = g.sub(y, t)?;
                let a = g.abs(d)?;
                g.mean(a)?
            }
            Head::Gumbel => {
                let p = g.add(y, t)?;
                let p = g.scale(p, 1.0 / 0.75)?;
                let p = g.softmax(p)?;
                let w = g.mul(p, y)?;
                g.sum(w)?
            }
        };
        let loss = if self.reshape {
            let r = g.reshape(loss, &[1, 1])?;
            g.sum(r)?
        } else {
            loss
        };
        Ok((loss, ids))
    }

    pub fn loss(&self, leaves: &[Tensor]) -> f64 {
        let mut g = Graph::new();
        let (l, _) = self.build(&mut g, leaves).unwrap();
        g.value(l).item()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CheckStats {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst_excess: f64,
}

pub fn within(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= ABS_TOL + REL_TOL * analytic.abs().max(numeric.abs())
}

fn central(c: &Composition, base: &[Tensor], leaf: usize, idx: usize, h: f64) -> f64 {
    let mut plus = base.to_vec();
    let mut minus = base.to_vec();
    plus[leaf].data_mut()[idx] += h;
    minus[leaf].data_mut()[idx] -= h;
    (c.loss(&plus) - c.loss(&minus)) / (2.0 * h)
}

/// Compares every coordinate's backward gradient with a central difference.
/// A coordinate whose difference quotient changes between step `h` and `h/2`
/// straddles a kink (relu, abs) and is skipped rather than compared.
pub fn check(c: &Composition) -> std::result::Result<CheckStats, String> {
    let mut g = Graph::new();
    let (loss, ids) = c.build(&mut g, &c.leaves).map_err(|e| e.to_string())?;
    let grads = g.backward(loss).map_err(|e| e.to_string())?;
    let mut stats = CheckStats::default();
    for (leaf, id) in ids.iter().enumerate() {
        let zeros = Tensor::zeros(c.leaves[leaf].shape());
        let analytic = grads.get(*id).unwrap_or(&zeros);
        for idx in 0..c.leaves[leaf].len() {
            let fd = central(c, &c.leaves, leaf, idx, STEP);
            let fd_half = central(c, &c.leaves, leaf, idx, STEP / 2.0);
            if !within(fd, fd_half) {
                stats.skipped_kinks += 1;
                continue;
            }
            let a = analytic.data()[idx];
            stats.checked += 1;
            let excess = (a - fd).abs() - (ABS_TOL + REL_TOL * a.abs().max(fd.abs()));
            stats.worst_excess = stats.worst_excess.max(excess);
            if !within(a, fd) {
                return Err(format!("{:?}/{:?} leaf {leaf}[{idx}]: analytic {a} vs numeric {fd}", c.act, c.head));
            }
        }
    }
    Ok(stats)
}
