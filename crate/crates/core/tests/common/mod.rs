#![allow(dead_code)]

use okaem::gradengine::{fd_check, Tensor2};
use okaem::model::{
    forward, init_params_with, FrozenMasks, KeyedMasks, ModelConfig, ModelParams, OutputInit,
};
use okaem::rng;
use okaem::training::{paired_distance, selftune_loss};
use rand::Rng;

pub fn uniform(rows: usize, cols: usize, r: &mut impl Rng) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| r.gen::<f64>())
}

pub fn normal_ish(rows: usize, cols: usize, r: &mut impl Rng) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| r.gen_range(-2.0..2.0))
}

/// Small random model configuration in the gradient-check range.
pub fn small_config(r: &mut impl Rng) -> ModelConfig {
    let dim = r.gen_range(1..=10);
    let heads = r.gen_range(1..=2);
    ModelConfig {
        dim,
        embed_dim: heads * r.gen_range(1..=3),
        heads,
        hidden_dim: r.gen_range(1..=6),
        layers: r.gen_range(1..=2),
        crossover_keep: 0.8,
        mutation_keep: 0.8,
        ..ModelConfig::scratch_preset(dim)
    }
}

/// Maximum relative error between the tape gradient of the self-tuning loss
/// through the full forward pass and central differences, masks frozen.
pub fn selftune_gradient_error(cfg: &ModelConfig, n: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    let params = init_params_with(cfg, seed, OutputInit::Xavier { gain: 1.0 }).unwrap();
    let pop = uniform(n, cfg.dim, &mut r);
    let fit = normal_ish(n, 1, &mut r);
    let off_fit = normal_ish(n, 1, &mut r);
    let elites = uniform(n, cfg.dim, &mut r);
    let elite_fit = normal_ish(n, 1, &mut r);

    let mut pass = forward(&pop, &fit, &params, &mut KeyedMasks::new(seed, 1)).unwrap();
    let frozen = FrozenMasks::new(pass.masks.clone());
    let loss = selftune_loss(&mut pass.tape, pass.output, &off_fit, &elites, &elite_fit).unwrap();
    let analytic = pass.tape.backward(loss, &params.shapes()).unwrap();
    fd_check(
        |ts| {
            let p = ModelParams::from_tensors(cfg.clone(), ts.to_vec()).unwrap();
            let out = forward(&pop, &fit, &p, &mut frozen.clone()).unwrap();
            paired_distance(out.offspring(), &off_fit, &elites, &elite_fit).unwrap()
        },
        &params.to_tensors(),
        &analytic,
        1e-6,
    )
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
