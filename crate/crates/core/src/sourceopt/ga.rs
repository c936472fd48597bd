use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::evolution::elitism;
use crate::gradengine::Tensor2;
use crate::model::fitness_ranking;
use crate::problems::Objective;

/// Real-coded GA with SBX, polynomial mutation and truncation selection.
#[derive(Clone, Debug, PartialEq)]
pub struct GaConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_c: f64,
    /// Per-gene mutation probability; `None` means `1/d`.
    pub mutation_prob: Option<f64>,
    pub eta_m: f64,
}

impl GaConfig {
    pub fn new(pop_size: usize, generations: usize) -> Self {
        Self {
            pop_size,
            generations,
            crossover_prob: 1.0,
            eta_c: 15.0,
            mutation_prob: None,
            eta_m: 15.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [Some(self.crossover_prob), self.mutation_prob];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Parameter(
                "GA probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(self.eta_c > 0.0 && self.eta_m > 0.0) {
            return Err(Error::Parameter(
                "GA distribution indices must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// SBX spread factor for a uniform draw `u`.
pub fn sbx_spread(u: f64, eta: f64) -> f64 {
    let e = 1.0 / (eta + 1.0);
    if u <= 0.5 {
        (2.0 * u).powf(e)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(e)
    }
}

/// Simulated binary crossover, gene by gene; children are clipped to `[0,1]`.
pub fn sbx_crossover<R: Rng + ?Sized>(
    p1: &[f64],
    p2: &[f64],
    eta: f64,
    prob: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        if prob < 1.0 && rng.gen::<f64>() >= prob {
            continue;
        }
        let beta = sbx_spread(rng.gen::<f64>(), eta);
        let (a, b) = (p1[i], p2[i]);
        c1[i] = (0.5 * ((1.0 + beta) * a + (1.0 - beta) * b)).clamp(0.0, 1.0);
        c2[i] = (0.5 * ((1.0 - beta) * a + (1.0 + beta) * b)).clamp(0.0, 1.0);
    }
    (c1, c2)
}

/// Bounded polynomial mutation on `[0,1]`, in place.
pub fn polynomial_mutation<R: Rng + ?Sized>(x: &mut [f64], eta: f64, prob: f64, rng: &mut R) {
    let pow = 1.0 / (eta + 1.0);
    for y in x.iter_mut() {
        if prob <= 0.0 || rng.gen::<f64>() >= prob {
            continue;
        }
        let u = rng.gen::<f64>();
        let (d1, d2) = (*y, 1.0 - *y);
        let dq = if u < 0.5 {
            let xy = 1.0 - d1;
            let val = 2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let xy = 1.0 - d2;
            let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        *y = (*y + dq).clamp(0.0, 1.0);
    }
}

/// Fisher-Yates driven by `gen::<f64>()` draws.
fn shuffle<R: Rng + ?Sized>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = ((rng.gen::<f64>() * (i + 1) as f64) as usize).min(i);
        v.swap(i, j);
    }
}

/// One generation: the best half is duplicated into `N` mating slots, paired
/// at random, recombined and mutated; the best `N` of parents ∪ offspring
/// survive, sorted by fitness.
pub fn ga_generation<R: RngCore>(
    pop: &Tensor2,
    fitness: &Tensor2,
    cfg: &GaConfig,
    problem: &dyn Objective,
    rng: &mut R,
) -> Result<(Tensor2, Tensor2)> {
    cfg.validate()?;
    let (n, d) = pop.shape();
    if n % 2 != 0 || n == 0 {
        return Err(Error::Usage(format!(
            "GA needs an even population, got {n}"
        )));
    }
    if fitness.shape() != (n, 1) {
        return Err(Error::shape(
            "ga_generation",
            "fitness column does not match population",
        ));
    }
    let pm = cfg.mutation_prob.unwrap_or(1.0 / d as f64);
    let order = fitness_ranking(fitness.data());
    let half = &order[..n / 2];
    let mut slots: Vec<usize> = half.iter().chain(half).copied().collect();
    shuffle(&mut slots, rng);
    let mut data = Vec::with_capacity(n * d);
    for pair in slots.chunks_exact(2) {
        let (mut c1, mut c2) = sbx_crossover(
            pop.row(pair[0]),
            pop.row(pair[1]),
            cfg.eta_c,
            cfg.crossover_prob,
            rng,
        );
        polynomial_mutation(&mut c1, cfg.eta_m, pm, rng);
        polynomial_mutation(&mut c2, cfg.eta_m, pm, rng);
        data.extend_from_slice(&c1);
        data.extend_from_slice(&c2);
    }
    let offspring = Tensor2::new(n, d, data)?;
    let off_fit = problem.evaluate(&offspring, rng)?;
    elitism(pop, fitness, &offspring, &off_fit, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Family, Problem};
    use crate::rng;

    /// Replays a fixed list of uniforms through `gen::<f64>()`.
    struct Scripted {
        values: Vec<f64>,
        pos: usize,
    }

    impl Scripted {
        fn new(values: &[f64]) -> Self {
            Self {
                values: values.to_vec(),
                pos: 0,
            }
        }
    }

    impl RngCore for Scripted {
        fn next_u32(&mut self) -> u32 {
            (self.next_u64() >> 32) as u32
        }

        fn next_u64(&mut self) -> u64 {
            let v = self.values[self.pos % self.values.len()];
            self.pos += 1;
            ((v * (1u64 << 53) as f64) as u64) << 11
        }

        fn fill_bytes(&mut self, dest: &mut [u8]) {
            for chunk in dest.chunks_mut(8) {
                let b = self.next_u64().to_le_bytes();
                chunk.copy_from_slice(&b[..chunk.len()]);
            }
        }

        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
            self.fill_bytes(dest);
            Ok(())
        }
    }

    #[test]
    fn scripted_uniforms_round_trip() {
        let mut s = Scripted::new(&[0.25, 0.5, 0.75]);
        assert_eq!(s.gen::<f64>(), 0.25);
        assert_eq!(s.gen::<f64>(), 0.5);
        assert_eq!(s.gen::<f64>(), 0.75);
    }

    #[test]
    fn unit_spread_copies_parents() {
        assert_eq!(sbx_spread(0.5, 15.0), 1.0);
        let mut s = Scripted::new(&[0.5]);
        let (c1, c2) = sbx_crossover(&[0.1, 0.9], &[0.4, 0.2], 15.0, 1.0, &mut s);
        assert_eq!(c1, vec![0.1, 0.9]);
        assert_eq!(c2, vec![0.4, 0.2]);
    }

    #[test]
    fn sbx_preserves_the_parent_mean_before_clipping() {
        let mut r = rng::seeded(4);
        let (p1, p2) = ([0.4, 0.45, 0.5], [0.41, 0.46, 0.505]);
        for _ in 0..200 {
            let (c1, c2) = sbx_crossover(&p1, &p2, 15.0, 1.0, &mut r);
            for i in 0..3 {
                assert!((c1[i] + c2[i] - p1[i] - p2[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sbx_spread_matches_its_density() {
        // Below 1 the CDF of β is β^(η+1)/2; Kolmogorov-Smirnov against it.
        let eta = 15.0;
        let mut r = rng::seeded(11);
        let mut betas: Vec<f64> = (0..20_000)
            .map(|_| sbx_spread(r.gen::<f64>(), eta))
            .filter(|&b| b <= 1.0)
            .collect();
        betas.sort_by(f64::total_cmp);
        let m = betas.len() as f64;
        let ks = betas
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                // Conditional CDF on β ≤ 1.
                let cdf = b.powf(eta + 1.0);
                ((i + 1) as f64 / m - cdf)
                    .abs()
                    .max((cdf - i as f64 / m).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / m.sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn polynomial_mutation_examples() {
        let mut x = vec![0.3, 0.7];
        polynomial_mutation(&mut x, 15.0, 0.0, &mut rng::seeded(0));
        assert_eq!(x, vec![0.3, 0.7]);

        // Draws: gate 0.0 (mutate), u = 0.5.
        let mut y = vec![0.3];
        polynomial_mutation(&mut y, 15.0, 1.0, &mut Scripted::new(&[0.0, 0.5]));
        assert_eq!(y, vec![0.3]);

        let mut r = rng::seeded(1);
        for _ in 0..1000 {
            let mut z = vec![0.0, 1.0];
            polynomial_mutation(&mut z, 15.0, 1.0, &mut r);
            assert!(z.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn unit_spread_offspring_copy_the_best_half() {
        let p = Problem::centered(Family::Sphere, 2).unwrap();
        let pop = Tensor2::from_rows(&[
            vec![0.2, 0.3],
            vec![0.6, 0.9],
            vec![0.4, 0.4],
            vec![0.8, 0.1],
        ])
        .unwrap();
        let fit = p.evaluate(&pop, &mut rng::seeded(0)).unwrap();
        let cfg = GaConfig {
            mutation_prob: Some(0.0),
            ..GaConfig::new(4, 2)
        };
        let mut s = Scripted::new(&[0.5]);
        let (next, nf) = ga_generation(&pop, &fit, &cfg, &p, &mut s).unwrap();
        // Offspring are copies of the best half, so no new point appears.
        let half: Vec<_> = fitness_ranking(fit.data())[..2].to_vec();
        for r in 0..4 {
            assert!(half.iter().any(|&i| pop.row(i) == next.row(r)));
        }
        assert_eq!(nf.get(0, 0), fit.get(half[0], 0));
    }

    /// Hand-traced generation with N=4, d=2.
    #[test]
    fn scripted_trace() {
        let p = Problem::centered(Family::Sphere, 2).unwrap();
        let pop = Tensor2::from_rows(&[
            vec![0.9, 0.9],
            vec![0.5, 0.6],
            vec![0.2, 0.8],
            vec![0.45, 0.5],
        ])
        .unwrap();
        let fit = p.evaluate(&pop, &mut rng::seeded(0)).unwrap();
        assert_eq!(fitness_ranking(fit.data())[..2], [3, 1]);
        // Best half: rows 3 then 1. Shuffle draws of 0.99 keep slots [3,1,3,1].
        // Pair one: gene 0 u=0.5 (copy), gene 1 u=0.25. Mutation (p_m=1/2):
        // child 1 gene 0 gate 0.75 skip, gene 1 gate 0.1 then u=0.25;
        // child 2 both gates skip. Pair two: u=0.5 twice, all gates skip.
        let script = [
            0.99, 0.99, 0.99, 0.5, 0.25, 0.75, 0.1, 0.25, 0.75, 0.75, 0.5, 0.5, 0.75, 0.75, 0.75,
            0.75,
        ];
        let mut s = Scripted::new(&script);
        let (next, nf) = ga_generation(&pop, &fit, &GaConfig::new(4, 2), &p, &mut s).unwrap();
        assert_eq!(s.pos, script.len());

        let beta = 0.5f64.powf(1.0 / 16.0);
        let c1 = 0.5 * ((1.0 + beta) * 0.5 + (1.0 - beta) * 0.6);
        let c2 = 0.5 * ((1.0 - beta) * 0.5 + (1.0 + beta) * 0.6);
        let mutated = c1 + ((0.5 + 0.5 * (1.0 - c1).powi(16)).powf(1.0 / 16.0) - 1.0);
        let offspring = [[0.45, mutated], [0.5, c2], [0.45, 0.5], [0.5, 0.6]];
        let sphere = |x: &[f64]| x.iter().map(|v| (200.0 * v - 100.0).powi(2)).sum::<f64>();
        let mut union: Vec<(f64, usize, Vec<f64>)> = (0..4)
            .map(|i| (fit.get(i, 0), i, pop.row(i).to_vec()))
            .chain(
                offspring
                    .iter()
                    .enumerate()
                    .map(|(i, o)| (sphere(o), 4 + i, o.to_vec())),
            )
            .collect();
        union.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (r, (f, _, x)) in union.iter().take(4).enumerate() {
            assert!((nf.get(r, 0) - f).abs() <= 1e-9 * f.max(1.0));
            for (c, xc) in x.iter().enumerate() {
                assert!((next.get(r, c) - xc).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn best_fitness_never_increases() {
        let p = Problem::new(Family::Ackley, vec![3.0, -7.0, 1.0, 12.0]).unwrap();
        let mut r = rng::seeded(8);
        let mut pop = crate::evolution::lhs_init(10, 4, 2);
        let mut fit = p.evaluate(&pop, &mut r).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..50 {
            let (a, b) = ga_generation(&pop, &fit, &GaConfig::new(10, 50), &p, &mut r).unwrap();
            pop = a;
            fit = b;
            assert!(fit.get(0, 0) <= best);
            best = fit.get(0, 0);
        }
        assert!(pop.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
