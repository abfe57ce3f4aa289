use min_opt::data::{generate_static_dataset, SamplingPolicy};
use min_opt::forward::{train_forward, ForwardConfig};
use min_opt::oracles::from_name;
use min_opt::rng::seeded;

#[test]
fn branin_fit_beats_the_mean() {
    let oracle = from_name("branin").unwrap();
    let ds = generate_static_dataset(oracle.as_ref(), 2000, SamplingPolicy::Uniform, &mut seeded(1)).unwrap();
    let ys = ds.ys();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    let (_, mse) = train_forward(&ds, &ForwardConfig::default(), &mut seeded(2)).unwrap();
    assert!(mse < var, "validation mse {mse} vs variance {var}");
    assert!(mse < 0.05 * var, "validation mse {mse} vs variance {var}");
}
