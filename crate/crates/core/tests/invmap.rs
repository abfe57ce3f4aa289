use min_opt::data::{Dataset, Input, InputSpace, Record};
use min_opt::invmap::{train_inverse_map, GanConfig};
use min_opt::reweight::{importance_weights, ReweightConfig, ReweightingScheme};
use min_opt::rng::seeded;
use rand::Rng;

fn config(steps: usize) -> GanConfig {
    GanConfig { hidden: vec![64, 64], batch_size: 64, steps, d_z: Some(4), ..GanConfig::default() }
}

#[test]
fn parabola_inverse_recovers_both_branches() {
    let mut rng = seeded(10);
    let mut ds = Dataset::new(InputSpace::continuous(vec![-1.0], vec![1.0]).unwrap(), None).unwrap();
    for _ in 0..2000 {
        let x: f64 = rng.random_range(-1.0..1.0);
        ds.push(Record { context: None, x: Input::Continuous(vec![x]), y: -x * x }).unwrap();
    }
    let (map, _, trace) = train_inverse_map(&ds, &vec![1.0; 2000], &config(3000), &mut rng).unwrap();
    assert!(trace.iter().all(|r| r.d_loss.is_finite() && r.g_loss.is_finite()));
    let s = map.sample(-0.25, None, 500, &mut rng).unwrap();
    let xs: Vec<f64> = s.inputs.iter().map(|x| x.as_continuous().unwrap()[0]).collect();
    let err = xs.iter().map(|x| (x.abs() - 0.5).abs()).sum::<f64>() / 500.0;
    let positive = xs.iter().filter(|&&x| x > 0.0).count();
    assert!(err < 0.1, "mean ||x| - 0.5| = {err}");
    assert!((100..400).contains(&positive), "{positive} of 500 on the positive branch");
}

#[test]
fn conditioning_separates_regions() {
    let mut rng = seeded(11);
    let mut ds = Dataset::new(InputSpace::continuous(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), None).unwrap();
    for _ in 0..1000 {
        let y: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x0 = y * rng.random_range(0.05..1.0);
        let x1 = rng.random_range(-1.0..1.0);
        ds.push(Record { context: None, x: Input::Continuous(vec![x0, x1]), y }).unwrap();
    }
    let (map, _, _) = train_inverse_map(&ds, &vec![1.0; 1000], &config(1500), &mut rng).unwrap();
    let s = map.sample(1.0, None, 500, &mut rng).unwrap();
    let right = s.inputs.iter().filter(|x| x.as_continuous().unwrap()[0] > 0.0).count();
    assert!(right as f64 >= 0.9 * 500.0, "{right} of 500");
}

#[test]
fn categorical_head_recovers_unique_maximizer() {
    let space = InputSpace::categorical(3, 4).unwrap();
    let score = |s: &[usize]| s.iter().filter(|&&a| a == 2).count() as f64;
    // Exhaustive check that (2,2,2) is the only maximizer.
    let mut best = Vec::new();
    for code in 0..64usize {
        let s = [code % 4, (code / 4) % 4, code / 16];
        if score(&s) == 3.0 {
            best.push(s);
        }
    }
    assert_eq!(best, vec![[2, 2, 2]]);

    let mut rng = seeded(12);
    let mut ds = Dataset::new(space.clone(), None).unwrap();
    for _ in 0..1500 {
        let x = space.sample_uniform(&mut rng);
        let y = score(x.as_sequence().unwrap());
        ds.push(Record { context: None, x, y }).unwrap();
    }
    let scheme = ReweightingScheme::build(&ds.ys(), &ReweightConfig::default()).unwrap();
    let w = importance_weights(&scheme, &ds.ys()).unwrap();
    let (map, _, _) = train_inverse_map(&ds, &w, &config(1500), &mut rng).unwrap();
    let s = map.sample(3.0, None, 100, &mut rng).unwrap();
    let hits = s.inputs.iter().filter(|x| x.as_sequence().unwrap() == [2, 2, 2]).count();
    assert!(hits >= 80, "{hits} of 100");
}
