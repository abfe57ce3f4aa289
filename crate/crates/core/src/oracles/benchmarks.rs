//! Standard closed-form benchmarks. Both are minimization problems in the
//! literature, so the oracles return the negated value and report
//! `raw_sign = -1`.

use std::f64::consts::PI;

use crate::data::{Input, InputSpace};
use crate::error::{MinError, Result};

use super::{KnownOptimum, Oracle};

/// Branin-Hoo on `[-5, 10] x [0, 15]`.
pub fn branin(x: &[f64]) -> Result<f64> {
    if x.len() != 2 || !(-5.0..=10.0).contains(&x[0]) || !(0.0..=15.0).contains(&x[1]) {
        return Err(MinError::OutOfSpace(format!("branin expects a point in [-5,10]x[0,15], got {x:?}")));
    }
    let (a, b, c, r, s, t) = (1.0, 5.1 / (4.0 * PI * PI), 5.0 / PI, 6.0, 10.0, 1.0 / (8.0 * PI));
    let (x1, x2) = (x[0], x[1]);
    Ok(a * (x2 - b * x1 * x1 + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s)
}

pub const BRANIN_MIN: f64 = 0.397887357729738;
pub const BRANIN_MINIMIZERS: [[f64; 2]; 3] = [[-PI, 12.275], [PI, 2.275], [9.42478, 2.475]];

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub const HARTMANN6_MIN: f64 = -3.32237;
pub const HARTMANN6_MINIMIZER: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];

/// Six-dimensional Hartmann function on the unit cube.
pub fn hartmann6(x: &[f64]) -> Result<f64> {
    if x.len() != 6 || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(MinError::OutOfSpace(format!("hartmann6 expects a point in [0,1]^6, got {x:?}")));
    }
    let mut total = 0.0;
    for i in 0..4 {
        let inner: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
        total += HARTMANN_ALPHA[i] * (-inner).exp();
    }
    Ok(-total)
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    name: &'static str,
    space: InputSpace,
    f: fn(&[f64]) -> Result<f64>,
    minimum: f64,
    minimizer: Vec<f64>,
}

impl Benchmark {
    pub fn branin() -> Self {
        Benchmark {
            name: "branin",
            space: InputSpace::continuous(vec![-5.0, 0.0], vec![10.0, 15.0]).expect("valid bounds"),
            f: branin,
            minimum: BRANIN_MIN,
            minimizer: BRANIN_MINIMIZERS[1].to_vec(),
        }
    }

    pub fn hartmann6() -> Self {
        Benchmark {
            name: "hartmann6",
            space: InputSpace::continuous(vec![0.0; 6], vec![1.0; 6]).expect("valid bounds"),
            f: hartmann6,
            minimum: HARTMANN6_MIN,
            minimizer: HARTMANN6_MINIMIZER.to_vec(),
        }
    }
}

impl Oracle for Benchmark {
    fn name(&self) -> &str {
        self.name
    }

    fn space(&self) -> &InputSpace {
        &self.space
    }

    fn evaluate(&self, x: &Input, context: Option<&[f64]>) -> Result<f64> {
        if context.is_some() {
            return Err(MinError::Oracle(format!("{} takes no context", self.name)));
        }
        let v = x.as_continuous().ok_or_else(|| MinError::OutOfSpace("expected a continuous input".into()))?;
        Ok(-(self.f)(v)?)
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum { value: -self.minimum, witness: Some(Input::Continuous(self.minimizer.clone())) })
    }

    fn raw_sign(&self) -> f64 {
        -1.0
    }

    fn optimum_tolerance(&self) -> f64 {
        1e-4
    }
}
