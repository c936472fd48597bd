use okaem::evolution::{elitism, lhs_init, normalize_fitness};
use okaem::gradengine::Tensor2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lhs_fills_every_stratum_once(n in 1usize..40, d in 1usize..12, seed in any::<u64>()) {
        let x = lhs_init(n, d, seed);
        prop_assert_eq!(x.shape(), (n, d));
        for c in 0..d {
            let mut hist = vec![0usize; n];
            for r in 0..n {
                let v = x.get(r, c);
                prop_assert!((0.0..=1.0).contains(&v));
                hist[((v * n as f64) as usize).min(n - 1)] += 1;
            }
            prop_assert!(hist.iter().all(|&h| h == 1));
        }
    }

    #[test]
    fn normalized_fitness_is_standardized(v in prop::collection::vec(-1e6f64..1e6, 2..30)) {
        let f = normalize_fitness(&Tensor2::column(&v).unwrap());
        let n = v.len() as f64;
        let mean = f.sum() / n;
        let var = f.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!(var < 1e-12 || (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn elitism_keeps_the_n_best_of_the_union(
        a in prop::collection::vec(-10.0f64..10.0, 1..12), seed in any::<u64>()
    ) {
        let n = a.len();
        let b: Vec<f64> = a.iter().enumerate()
            .map(|(i, v)| v + ((seed >> (i % 60)) & 3) as f64 - 1.5)
            .collect();
        let pa = Tensor2::from_fn(n, 1, |r, _| a[r] / 100.0 + 0.5);
        let pb = Tensor2::from_fn(n, 1, |r, _| b[r] / 100.0 + 0.5);
        let (_, fit) = elitism(
            &pa,
            &Tensor2::column(&a).unwrap(),
            &pb,
            &Tensor2::column(&b).unwrap(),
            n,
        )
        .unwrap();
        let mut all: Vec<f64> = a.iter().chain(&b).copied().collect();
        all.sort_by(f64::total_cmp);
        prop_assert_eq!(fit.data(), &all[..n]);
    }
}
