mod common;

use common::{normal_ish, selftune_gradient_error, small_config, uniform};
use okaem::evolution::normalize_fitness;
use okaem::gradengine::{DropoutMask, Tensor2};
use okaem::model::{
    forward, init_params, init_params_with, mutate, selection_matrices, FrozenMasks, KeyedMasks,
    ModelConfig, ModelParams, OutputInit,
};
use okaem::rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn cfg_from(seed: u64) -> ModelConfig {
    small_config(&mut rng::seeded(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_output_layers_give_the_identity(seed in any::<u64>(), n in 1usize..9) {
        let cfg = cfg_from(seed);
        let mut r = rng::seeded(seed ^ 1);
        let pop = uniform(n, cfg.dim, &mut r);
        let fit = normal_ish(n, 1, &mut r);
        let params = init_params(&cfg, seed).unwrap();
        let out = forward(&pop, &fit, &params, &mut KeyedMasks::new(seed, 3)).unwrap();
        prop_assert_eq!(out.offspring(), &pop);
    }

    #[test]
    fn permuting_the_population_permutes_the_offspring(seed in any::<u64>(), n in 2usize..9) {
        let cfg = cfg_from(seed);
        let mut r = rng::seeded(seed ^ 2);
        let pop = uniform(n, cfg.dim, &mut r);
        let fit = normal_ish(n, 1, &mut r);
        let params = init_params_with(&cfg, seed, OutputInit::Xavier { gain: 1.0 }).unwrap();
        let base = forward(&pop, &fit, &params, &mut KeyedMasks::new(seed, 0)).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let mut masks = FrozenMasks::new(base.masks.clone()).permuted(&order, cfg.dim);
        let moved = forward(&pop.select_rows(&order), &fit.select_rows(&order), &params, &mut masks)
            .unwrap();
        let expected = base.offspring().select_rows(&order);
        prop_assert!(moved.offspring().max_abs_diff(&expected) <= 1e-10);
    }

    #[test]
    fn mutation_acts_on_each_row_alone(seed in any::<u64>(), n in 2usize..7) {
        let cfg = cfg_from(seed);
        let mut r = rng::seeded(seed ^ 3);
        let params = init_params_with(&cfg, seed, OutputInit::Xavier { gain: 1.0 }).unwrap();
        let layer = &params.layers()[0];
        let mask = DropoutMask::sample(n * cfg.dim, cfg.hidden_dim, 0.7, &mut r).unwrap();
        let pop = uniform(n, cfg.dim, &mut r);
        let (out, _) = mutate(&pop, layer, &cfg, &mask).unwrap();
        let other = Tensor2::from_fn(n, cfg.dim, |i, c| {
            if i == 0 { 1.0 - pop.get(0, c) } else { pop.get(i, c) }
        });
        let (out2, _) = mutate(&other, layer, &cfg, &mask).unwrap();
        for i in 1..n {
            prop_assert_eq!(out.row(i), out2.row(i));
        }
    }

    #[test]
    fn selection_rows_are_distributions(seed in any::<u64>(), n in 1usize..9) {
        let cfg = cfg_from(seed);
        let mut r = rng::seeded(seed ^ 4);
        let params = init_params(&cfg, seed).unwrap();
        let pop = uniform(n, cfg.dim, &mut r);
        let fit = normalize_fitness(&normal_ish(n, 1, &mut r));
        for a in selection_matrices(&pop, &fit, &params.layers()[0], &cfg).unwrap() {
            prop_assert_eq!(a.shape(), (n, n));
            for row in a.row_iter() {
                prop_assert!(row.iter().all(|v| *v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_layers_compose_like_two_single_layer_models(seed in any::<u64>(), n in 1usize..8) {
        let mut cfg = cfg_from(seed);
        cfg.layers = 2;
        let mut r = rng::seeded(seed ^ 5);
        let pop = uniform(n, cfg.dim, &mut r);
        let fit = normal_ish(n, 1, &mut r);
        let params = init_params_with(&cfg, seed, OutputInit::Xavier { gain: 0.5 }).unwrap();
        let whole = forward(&pop, &fit, &params, &mut KeyedMasks::new(seed, 9)).unwrap();

        let single = ModelConfig { layers: 1, ..cfg.clone() };
        let mut tensors = params.to_tensors();
        let second = tensors.split_off(tensors.len() / 2);
        let first = ModelParams::from_tensors(single.clone(), tensors).unwrap();
        let second = ModelParams::from_tensors(single, second).unwrap();
        let mid = forward(
            &pop,
            &fit,
            &first,
            &mut FrozenMasks::new(vec![whole.masks[0].clone()]),
        )
        .unwrap();
        let end = forward(
            mid.offspring(),
            &fit,
            &second,
            &mut FrozenMasks::new(vec![whole.masks[1].clone()]),
        )
        .unwrap();
        prop_assert_eq!(end.offspring(), whole.offspring());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn selftune_gradient_matches_finite_differences(seed in any::<u64>(), n in 2usize..9) {
        let cfg = cfg_from(seed);
        let err = selftune_gradient_error(&cfg, n, seed);
        prop_assert!(err <= 1e-5, "relative error {err} for {cfg:?}");
    }
}

#[test]
fn different_mask_streams_change_offspring() {
    let cfg = ModelConfig::scratch_preset(4);
    let params = init_params_with(&cfg, 0, OutputInit::Xavier { gain: 1.0 }).unwrap();
    let pop = Tensor2::filled(3, 4, 0.5);
    let fit = Tensor2::column(&[1.0, 2.0, 3.0]).unwrap();
    let a = forward(&pop, &fit, &params, &mut KeyedMasks::new(1, 0)).unwrap();
    let b = forward(&pop, &fit, &params, &mut KeyedMasks::new(1, 1)).unwrap();
    let a2 = forward(&pop, &fit, &params, &mut KeyedMasks::new(1, 0)).unwrap();
    assert_ne!(a.offspring(), b.offspring());
    assert_eq!(a.offspring(), a2.offspring());
}
