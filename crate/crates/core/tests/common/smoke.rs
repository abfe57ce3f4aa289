//! The one-dimensional `y = -x²` task on `[-1, 1]` with small models.

use min_opt::data::{Dataset, Input, InputSpace, Record};
use min_opt::forward::{train_forward, ForwardConfig, ForwardModel};
use min_opt::invmap::{train_inverse_map, GanConfig, InverseMap};
use min_opt::reweight::{importance_weights, ReweightConfig, ReweightingScheme};
use min_opt::rng::{component_rng, MinRng};
use rand::Rng;

pub fn oracle(x: &Input) -> f64 {
    let v = x.as_continuous().expect("continuous")[0];
    -v * v
}

pub fn dataset(n: usize, rng: &mut MinRng) -> Dataset {
    let mut ds = Dataset::new(InputSpace::continuous(vec![-1.0], vec![1.0]).unwrap(), None).unwrap();
    for _ in 0..n {
        let x = Input::Continuous(vec![rng.random_range(-1.0..1.0)]);
        let y = oracle(&x);
        ds.push(Record { context: None, x, y }).unwrap();
    }
    ds
}

pub fn gan_config() -> GanConfig {
    GanConfig { hidden: vec![64, 64], batch_size: 64, steps: 1500, d_z: Some(4), ..GanConfig::default() }
}

pub fn forward_config() -> ForwardConfig {
    ForwardConfig { hidden: vec![64, 64], batch_size: 64, steps: 1500, ..ForwardConfig::default() }
}

pub struct Trained {
    pub ds: Dataset,
    pub inverse: InverseMap,
    pub forward: ForwardModel,
    pub forward_mse: f64,
}

pub fn train(seed: u64, reweight: bool) -> Trained {
    let ds = dataset(2000, &mut component_rng(seed, "smoke-data"));
    let ys = ds.ys();
    let weights = if reweight {
        let scheme = ReweightingScheme::build(&ys, &ReweightConfig::default()).unwrap();
        importance_weights(&scheme, &ys).unwrap()
    } else {
        vec![1.0; ys.len()]
    };
    let (inverse, _, _) = train_inverse_map(&ds, &weights, &gan_config(), &mut component_rng(seed, "smoke-gan")).unwrap();
    let (forward, forward_mse) = train_forward(&ds, &forward_config(), &mut component_rng(seed, "smoke-fwd")).unwrap();
    Trained { ds, inverse, forward, forward_mse }
}
