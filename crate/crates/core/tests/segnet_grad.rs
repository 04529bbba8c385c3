use mixseg::segnet::{forward, init_params, EncoderConfig};
use mixseg::tensor::{grad_check_with, GradCheckOptions, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(cfg: &EncoderConfig, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(vec![3, cfg.height, cfg.width], |_| rng.random_range(0.0..1.0))
}

#[test]
fn network_gradient_matches_finite_differences() {
    let cfg = EncoderConfig::with_size(32, 32);
    let params = init_params::<f64>(&cfg, 11);
    let x = image(&cfg, 12);
    let opts = GradCheckOptions { max_coords_per_input: Some(8), ..GradCheckOptions::default() };
    let report = grad_check_with(
        |tape, vars| {
            let img = tape.constant(x.clone());
            Ok(forward(&cfg, vars, img)?.logits.sigmoid().sum())
        },
        &params.tensors().cloned().collect::<Vec<_>>(),
        &opts,
    )
    .unwrap();
    assert_eq!(report.coordinates, params.tensors().map(|t| t.len().min(8)).sum::<usize>());
    assert!(report.max_rel_error <= 1e-3, "{report:?}");
}

/// Inputs uniform in [-1, 1] so that no ReLU is silenced by the sign of
/// the data alone.
fn signed_input(cfg: &EncoderConfig, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(vec![3, cfg.height, cfg.width], |_| rng.random_range(-1.0..1.0))
}

#[test]
fn every_parameter_receives_gradient() {
    let cfg = EncoderConfig::default();
    let shapes = cfg.param_shapes();
    let mut touched: Vec<Vec<bool>> = shapes.iter().map(|(_, s)| vec![false; s.iter().product()]).collect();
    for seed in 0..5 {
        let params = init_params::<f64>(&cfg, seed);
        let mut live = vec![false; shapes.len()];
        for k in 0..5 {
            let tape = Tape::new();
            let vars: Vec<_> = params.tensors().map(|t| tape.param(t.clone())).collect();
            let img = tape.constant(signed_input(&cfg, 100 * seed + k));
            let out = forward(&cfg, &vars, img).unwrap().logits.sigmoid().sum();
            let grads = tape.backward(out).unwrap();
            for (i, v) in vars.iter().enumerate() {
                for (flag, g) in touched[i].iter_mut().zip(grads.get_or_zeros(*v).data()) {
                    *flag |= *g != 0.0;
                    live[i] |= *g != 0.0;
                }
            }
        }
        for ((name, _), alive) in shapes.iter().zip(&live) {
            assert!(alive, "seed {seed}: {name} received no gradient");
        }
    }
    for ((name, _), flags) in shapes.iter().zip(&touched) {
        let dead = flags.iter().filter(|f| !**f).count();
        assert_eq!(dead, 0, "{name}: {dead} of {} entries never received gradient", flags.len());
    }
}
