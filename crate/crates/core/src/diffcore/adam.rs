use serde::{Deserialize, Serialize};

use crate::error::{MinError, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam with zero-initialized moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    shapes: Vec<Vec<usize>>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, config: AdamConfig) -> Self {
        let shapes: Vec<Vec<usize>> = params.into_iter().map(|p| p.shape().to_vec()).collect();
        let m = shapes.iter().map(|s| vec![0.0; s.iter().product()]).collect::<Vec<_>>();
        AdamState { config, step: 0, v: m.clone(), m, shapes }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Tensor>,
        grads: &[Tensor],
    ) -> Result<()> {
        let params: Vec<&mut Tensor> = params.into_iter().collect();
        if params.len() != self.shapes.len() || grads.len() != self.shapes.len() {
            return Err(MinError::shape(
                "adam_step",
                format!("{} params, {} grads, {} moment buffers", params.len(), grads.len(), self.shapes.len()),
            ));
        }
        for ((p, g), s) in params.iter().zip(grads).zip(&self.shapes) {
            if p.shape() != s.as_slice() || g.shape() != s.as_slice() {
                return Err(MinError::shape("adam_step", format!("{:?} / {:?} vs {:?}", p.shape(), g.shape(), s)));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> Tensor {
        Tensor::scalar(w)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![Tensor::new(vec![2], vec![1.5, -2.0]).unwrap()];
        let mut st = AdamState::new(&p, AdamConfig::default());
        st.step(p.iter_mut(), &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p[0].data(), &[1.5, -2.0]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = vec![Tensor::new(vec![2], vec![0.0, 0.0]).unwrap()];
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut st = AdamState::new(&p, cfg);
        st.step(p.iter_mut(), &[Tensor::new(vec![2], vec![3.0, -0.2]).unwrap()]).unwrap();
        assert!((p[0].data()[0] + 0.01).abs() < 1e-8);
        assert!((p[0].data()[1] - 0.01).abs() < 1e-7);
    }

    #[test]
    fn quadratic_distance_strictly_decreases() {
        let mut p = vec![single(0.0)];
        let mut st = AdamState::new(&p, AdamConfig { lr: 0.1, ..AdamConfig::default() });
        let mut last = 3.0;
        for _ in 0..10 {
            let w = p[0].item();
            st.step(p.iter_mut(), &[single(2.0 * (w - 3.0))]).unwrap();
            let d = (p[0].item() - 3.0).abs();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(st.step(p.iter_mut(), &[Tensor::zeros(&[3])]).is_err());
        assert!(st.step(p.iter_mut(), &[]).is_err());
        assert_eq!(st.step_count(), 0);
    }
}
