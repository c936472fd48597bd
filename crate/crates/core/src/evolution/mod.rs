//! The adaptive optimization loop: Latin hypercube initialisation, learned
//! reproduction, evaluation, elitism and self-tuning.

mod runlog;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

pub use runlog::{GenerationRecord, RunLog, RUNLOG_HEADER};

use crate::error::{Error, Result};
use crate::gradengine::Tensor2;
use crate::model::{forward, init_params_with, KeyedMasks, ModelConfig, ModelParams, OutputInit};
use crate::problems::Objective;
use crate::rng;
use crate::training::{self_tune, AdamWState, SelfTuneBatch, TrainConfig};

/// How offspring leaving `[0,1]^d` are brought back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BoundsMode {
    #[default]
    Clip,
    /// Mirror at the violated bound, then clip whatever is still outside.
    Reflect,
}

impl BoundsMode {
    pub fn name(self) -> &'static str {
        match self {
            BoundsMode::Clip => "clip",
            BoundsMode::Reflect => "reflect",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(BoundsMode::Clip),
            "reflect" => Ok(BoundsMode::Reflect),
            other => Err(Error::Parameter(format!("unknown bounds mode {other:?}"))),
        }
    }

    pub fn apply(self, x: &Tensor2) -> Tensor2 {
        match self {
            BoundsMode::Clip => x.clamp(0.0, 1.0),
            BoundsMode::Reflect => x.map(|v| {
                let r = if v < 0.0 {
                    -v
                } else if v > 1.0 {
                    2.0 - v
                } else {
                    v
                };
                r.clamp(0.0, 1.0)
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvoConfig {
    pub pop_size: usize,
    /// Reproduction generations; the run uses `N·(T+1)` evaluations.
    pub generations: usize,
    pub seed: u64,
    pub bounds: BoundsMode,
    /// Output-layer initialisation when no pre-trained parameters are given.
    pub scratch_init: OutputInit,
}

impl EvoConfig {
    pub fn new(pop_size: usize, generations: usize, seed: u64) -> Self {
        Self {
            pop_size,
            generations,
            seed,
            bounds: BoundsMode::Clip,
            scratch_init: OutputInit::Xavier { gain: 0.3 },
        }
    }

    /// Largest `T` with `N·(T+1) ≤ evaluations`.
    pub fn for_budget(pop_size: usize, evaluations: usize, seed: u64) -> Result<Self> {
        if pop_size == 0 || evaluations < 2 * pop_size {
            return Err(Error::Parameter(format!(
                "budget {evaluations} too small for population {pop_size}"
            )));
        }
        Ok(Self::new(pop_size, evaluations / pop_size - 1, seed))
    }

    pub fn evaluations(&self) -> usize {
        self.pop_size * (self.generations + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(Error::Parameter(
                "population size must be at least 2".into(),
            ));
        }
        if self.generations == 0 {
            return Err(Error::Parameter("generations must be at least 1".into()));
        }
        Ok(())
    }
}

/// One point per stratum `[i/N, (i+1)/N)` in every dimension.
pub fn lhs_init(n: usize, d: usize, seed: u64) -> Tensor2 {
    let mut r = rng::keyed(seed, &[0x1a5]);
    let mut data = vec![0.0; n * d];
    let mut strata: Vec<usize> = (0..n).collect();
    for c in 0..d {
        strata.shuffle(&mut r);
        for (row, &s) in strata.iter().enumerate() {
            let v = (s as f64 + r.gen::<f64>()) / n as f64;
            data[row * d + c] = v.min(1.0);
        }
    }
    Tensor2::new(n, d, data).expect("finite samples")
}

/// Z-score; an all-equal column maps to zeros.
pub fn normalize_fitness(fitness: &Tensor2) -> Tensor2 {
    let n = fitness.len() as f64;
    let mean = fitness.sum() / n;
    let var = fitness
        .data()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n;
    let sd = var.sqrt();
    // Spread at rounding level counts as constant.
    if sd.is_nan() || sd <= 16.0 * f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE) {
        return Tensor2::zeros(fitness.rows(), fitness.cols());
    }
    fitness.map(|v| (v - mean) / sd)
}

/// Best `n` rows of parents ∪ offspring, sorted ascending by fitness.
/// Ties prefer parents, then lower row index.
pub fn elitism(
    parents: &Tensor2,
    parent_fitness: &Tensor2,
    offspring: &Tensor2,
    offspring_fitness: &Tensor2,
    n: usize,
) -> Result<(Tensor2, Tensor2)> {
    let union = Tensor2::vstack(parents, offspring)?;
    let fit = Tensor2::vstack(parent_fitness, offspring_fitness)?;
    if fit.rows() != union.rows() || fit.cols() != 1 {
        return Err(Error::shape(
            "elitism",
            format!("fitness {:?} for {} candidates", fit.shape(), union.rows()),
        ));
    }
    if union.rows() < n {
        return Err(Error::Usage(format!(
            "cannot select {n} survivors from {} candidates",
            union.rows()
        )));
    }
    let f = fit.data();
    let mut idx: Vec<usize> = (0..union.rows()).collect();
    // Parents precede offspring in the union, so a stable sort on fitness
    // realises both tie-breaks.
    idx.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
    idx.truncate(n);
    Ok((union.select_rows(&idx), fit.select_rows(&idx)))
}

/// Result of one optimization run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// Best individual in common coordinates.
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub log: RunLog,
    pub params: ModelParams,
    /// Final population, sorted ascending by fitness.
    pub population: Tensor2,
    pub fitness: Tensor2,
}

fn evaluate_at(
    problem: &dyn Objective,
    x: &Tensor2,
    r: &mut rng::StdRng,
    generation: usize,
) -> Result<Tensor2> {
    problem
        .evaluate(x, r)
        .map_err(|e| e.at_generation(generation))
}

/// Runs the full loop for `evo.generations` generations.
///
/// Without `pretrained`, parameters start from `init_params_with(model_cfg,
/// seed, evo.scratch_init)`.
pub fn run(
    problem: &dyn Objective,
    model_cfg: &ModelConfig,
    train: &TrainConfig,
    evo: &EvoConfig,
    pretrained: Option<&ModelParams>,
) -> Result<RunOutcome> {
    evo.validate()?;
    train.validate()?;
    model_cfg.validate()?;
    if problem.dim() != model_cfg.dim {
        return Err(Error::shape(
            "run",
            format!(
                "problem dimension {} but model dimension {}",
                problem.dim(),
                model_cfg.dim
            ),
        ));
    }
    let mut params = match pretrained {
        Some(p) => {
            if p.config() != model_cfg {
                return Err(Error::Parameter(
                    "pre-trained parameters were built for a different model config".into(),
                ));
            }
            p.clone()
        }
        None => init_params_with(model_cfg, evo.seed, evo.scratch_init)?,
    };
    let mut state = AdamWState::for_params(&params, train.lr, train.weight_decay);
    let n = evo.pop_size;
    let mut eval_rng = rng::keyed(evo.seed, &[0xe7a1]);
    let mask_seed = rng::derive_seed(evo.seed, &[0xd20]);
    let tune_seed = rng::derive_seed(evo.seed, &[0x7e4e]);

    let init = lhs_init(n, model_cfg.dim, rng::derive_seed(evo.seed, &[0x1]));
    let init_fit = evaluate_at(problem, &init, &mut eval_rng, 0)?;
    let empty = Tensor2::zeros(0, model_cfg.dim);
    let (mut pop, mut fit) = elitism(&init, &init_fit, &empty, &Tensor2::zeros(0, 1), n)?;
    let mut evals = n;
    let mut log = RunLog::default();

    for g in 1..=evo.generations {
        let started = Instant::now();
        let mut masks = KeyedMasks::new(mask_seed, g as u64);
        let pass = forward(&pop, &fit, &params, &mut masks).map_err(|e| e.at_generation(g))?;
        if pass.offspring().data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("offspring").at_generation(g));
        }
        let offspring = evo.bounds.apply(pass.offspring());
        let off_fit = evaluate_at(problem, &offspring, &mut eval_rng, g)?;
        evals += n;
        let (elites, elite_fit) = elitism(&pop, &fit, &offspring, &off_fit, n)?;
        let batch = SelfTuneBatch {
            parents: &pop,
            parent_fitness: &fit,
            offspring_fitness: &off_fit,
            elites: &elites,
            elite_fitness: &elite_fit,
        };
        let loss = self_tune(
            &mut params,
            &mut state,
            pass,
            &batch,
            train.selftune_steps_per_gen,
            tune_seed,
            g as u64,
        )
        .map_err(|e| e.at_generation(g))?;
        pop = elites;
        fit = elite_fit;
        log.push(GenerationRecord {
            generation: g,
            best: fit.get(0, 0),
            mean: fit.mean(),
            loss,
            evaluations: evals,
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(RunOutcome {
        best: pop.row(0).to_vec(),
        best_fitness: fit.get(0, 0),
        log,
        params,
        population: pop,
        fitness: fit,
    })
}
