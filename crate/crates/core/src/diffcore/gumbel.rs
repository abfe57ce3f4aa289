use rand::Rng;

use crate::error::{MinError, Result};

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

/// Standard Gumbel noise, `-ln(-ln u)` with `u` uniform on the open unit interval.
pub fn gumbel_noise<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mut u: f64 = rng.random();
            while u <= 0.0 {
                u = rng.random();
            }
            -(-u.ln()).ln()
        })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Relaxed one-hot draw recorded on the graph: `softmax((logits + g) / temperature)`
/// over the last axis. The noise is a constant, so the result is differentiable in
/// `logits`.
pub fn gumbel_softmax<R: Rng + ?Sized>(
    graph: &mut Graph,
    logits: NodeId,
    temperature: f64,
    rng: &mut R,
) -> Result<NodeId> {
    if !(temperature > 0.0) {
        return Err(MinError::invalid(format!("gumbel temperature must be positive, got {temperature}")));
    }
    let noise = gumbel_noise(graph.value(logits).shape(), rng);
    let noise = graph.input(noise);
    let perturbed = graph.add(logits, noise)?;
    let scaled = graph.scale(perturbed, 1.0 / temperature)?;
    graph.softmax(scaled)
}

/// Tensor-level convenience around [`gumbel_softmax`].
pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    logits: &Tensor,
    temperature: f64,
    rng: &mut R,
) -> Result<Tensor> {
    if !logits.all_finite() {
        return Err(MinError::NonFinite { op: "gumbel_softmax logits".into() });
    }
    let mut g = Graph::new();
    let l = g.input(logits.clone());
    let out = gumbel_softmax(&mut g, l, temperature, rng)?;
    Ok(g.value(out).clone())
}
