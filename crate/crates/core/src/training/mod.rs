//! Losses, AdamW, archive pre-training and per-generation self-tuning.
//!
//! Both losses compare populations row by row after sorting each by its own
//! fitness, best first.

mod adamw;

pub use adamw::{adamw_step, AdamWState};

use crate::archive::{pair_iterator, KnowledgeArchive, Transition};
use crate::error::{Error, Result};
use crate::gradengine::{NodeId, Tape, Tensor2};
use crate::model::{
    fitness_ranking, forward, init_params, record_forward, ForwardPass, KeyedMasks, MaskSource,
    ModelConfig, ModelParams,
};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub selftune_steps_per_gen: usize,
}

impl TrainConfig {
    /// Defaults for archive pre-training followed by transfer.
    pub fn transfer() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-2,
            batch_size: 256,
            epochs: 50,
            selftune_steps_per_gen: 1,
        }
    }

    /// Defaults for runs without an archive.
    pub fn scratch() -> Self {
        Self {
            weight_decay: 1e-5,
            ..Self::transfer()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Parameter("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// `a` reordered so that its row `i` is the `i`-th best by `fitness`.
fn sorted_by_fitness(a: &Tensor2, fitness: &Tensor2) -> Tensor2 {
    a.select_rows(&fitness_ranking(fitness.data()))
}

/// Target aligned with the unsorted rows of a population: row `i` is the
/// row of `target` whose rank equals the rank of row `i` under `fitness`.
fn aligned_target(
    fitness: &Tensor2,
    target: &Tensor2,
    target_fitness: &Tensor2,
) -> Result<Tensor2> {
    if fitness.rows() != target.rows() || target_fitness.rows() != target.rows() {
        return Err(Error::shape(
            "loss",
            format!(
                "{} ranked rows against a {}-row target",
                fitness.rows(),
                target.rows()
            ),
        ));
    }
    let sorted_target = sorted_by_fitness(target, target_fitness);
    let order = fitness_ranking(fitness.data());
    let mut rank = vec![0; order.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    Ok(sorted_target.select_rows(&rank))
}

/// `‖A_sorted − B_sorted‖²` with each side sorted by its own fitness.
pub fn paired_distance(
    a: &Tensor2,
    a_fitness: &Tensor2,
    b: &Tensor2,
    b_fitness: &Tensor2,
) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "paired_distance",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let target = aligned_target(a_fitness, b, b_fitness)?;
    crate::gradengine::mse(a, &target)
}

/// Appends `‖P̂ − P*‖²` to the tape of a recorded forward pass.
/// `offspring` rows are ranked by `offspring_fitness`, `elites` by
/// `elite_fitness`.
pub fn selftune_loss(
    tape: &mut Tape,
    offspring: NodeId,
    offspring_fitness: &Tensor2,
    elites: &Tensor2,
    elite_fitness: &Tensor2,
) -> Result<NodeId> {
    if tape.value(offspring).shape() != elites.shape() {
        return Err(Error::shape(
            "selftune_loss",
            format!(
                "offspring {:?} vs elites {:?}",
                tape.value(offspring).shape(),
                elites.shape()
            ),
        ));
    }
    let target = aligned_target(offspring_fitness, elites, elite_fitness)?;
    let t = tape.constant(target);
    tape.sq_dist(offspring, t)
}

fn check_transition(t: &Transition<'_>, cfg: &ModelConfig) -> Result<()> {
    let shape = t.population.shape();
    if shape.1 != cfg.dim || t.next_population.shape() != shape {
        return Err(Error::shape(
            "pretrain_loss",
            format!(
                "pair {:?}: populations {:?} -> {:?} for model dimension {}",
                t.pair,
                shape,
                t.next_population.shape(),
                cfg.dim
            ),
        ));
    }
    Ok(())
}

fn triple_masks(seed: u64, stream: u64, index: usize) -> KeyedMasks {
    KeyedMasks::new(seed, rng::derive_seed(stream, &[index as u64]))
}

fn record_triple(
    params: &ModelParams,
    t: &Transition<'_>,
    masks: &mut dyn MaskSource,
) -> Result<(Tape, NodeId)> {
    check_transition(t, params.config())?;
    let mut tape = Tape::new();
    let (out, _, _) = record_forward(&mut tape, t.population, t.fitness, params, masks)?;
    let loss = selftune_loss(&mut tape, out, t.fitness, t.next_population, t.next_fitness)?;
    Ok((tape, loss))
}

/// `Σ ‖P^(t+1) − OKAEM(P^(t), F^(t))‖²` over the batch. Triple `i` uses
/// dropout masks keyed by `(seed, stream, i)`.
pub fn pretrain_loss(
    params: &ModelParams,
    batch: &[Transition<'_>],
    seed: u64,
    stream: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let (tape, loss) = record_triple(params, t, &mut triple_masks(seed, stream, i))?;
        total += tape.value(loss).item();
    }
    Ok(total)
}

/// [`pretrain_loss`] together with its gradient, one triple at a time.
pub fn pretrain_loss_and_grad(
    params: &ModelParams,
    batch: &[Transition<'_>],
    seed: u64,
    stream: u64,
) -> Result<(f64, Vec<Tensor2>)> {
    let shapes = params.shapes();
    let mut grads: Vec<Tensor2> = shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect();
    let mut total = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let (tape, loss) = record_triple(params, t, &mut triple_masks(seed, stream, i))?;
        total += tape.value(loss).item();
        for (acc, g) in grads.iter_mut().zip(tape.backward(loss, &shapes)?) {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("pre-training loss"));
    }
    Ok((total, grads))
}

/// Trained parameters and the mean per-pair loss of every epoch.
#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub params: ModelParams,
    pub epoch_losses: Vec<f64>,
}

/// Pre-trains identity-initialised parameters on `archive`.
pub fn pretrain(
    archive: &KnowledgeArchive,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    model_cfg.validate()?;
    let params = init_params(model_cfg, seed)?;
    pretrain_from(params, archive, cfg, seed)
}

/// Pre-trains `params` in place of a fresh initialisation.
pub fn pretrain_from(
    mut params: ModelParams,
    archive: &KnowledgeArchive,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if archive.dim() != params.config().dim {
        return Err(Error::shape(
            "pretrain",
            format!(
                "archive dimension {} but model dimension {}",
                archive.dim(),
                params.config().dim
            ),
        ));
    }
    if archive.generations() < 2 {
        return Err(Error::Usage(
            "archive needs at least two generations to form training pairs".into(),
        ));
    }
    let mut state = AdamWState::for_params(&params, cfg.lr, cfg.weight_decay);
    let mut order_rng = rng::keyed(seed, &[0x9e7a]);
    let mask_seed = rng::derive_seed(seed, &[0xd0]);
    let pairs = archive.pair_count() as f64;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut batch_counter = 0u64;
    for _ in 0..cfg.epochs {
        let mut sum = 0.0;
        for batch in pair_iterator(archive, cfg.batch_size, &mut order_rng)? {
            let (loss, grads) = pretrain_loss_and_grad(&params, &batch, mask_seed, batch_counter)?;
            batch_counter += 1;
            sum += loss;
            adamw_step(&mut state, &mut params, &grads)?;
        }
        epoch_losses.push(sum / pairs);
    }
    Ok(PretrainOutcome {
        params,
        epoch_losses,
    })
}

/// Parents, offspring fitness and elites of one generation.
#[derive(Clone, Copy, Debug)]
pub struct SelfTuneBatch<'a> {
    pub parents: &'a Tensor2,
    pub parent_fitness: &'a Tensor2,
    pub offspring_fitness: &'a Tensor2,
    pub elites: &'a Tensor2,
    pub elite_fitness: &'a Tensor2,
}

/// One AdamW step on the self-tuning loss of an already recorded pass.
/// Returns the loss before the update.
pub fn selftune_step(
    params: &mut ModelParams,
    state: &mut AdamWState,
    mut pass: ForwardPass,
    batch: &SelfTuneBatch<'_>,
) -> Result<f64> {
    let loss = selftune_loss(
        &mut pass.tape,
        pass.output,
        batch.offspring_fitness,
        batch.elites,
        batch.elite_fitness,
    )?;
    let value = pass.tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite("self-tuning loss"));
    }
    let grads = pass.tape.backward(loss, &params.shapes())?;
    adamw_step(state, params, &grads)?;
    Ok(value)
}

/// Runs `steps` self-tuning updates. The first reuses `pass`, the
/// generation's own forward pass; later steps replay the forward pass on the
/// parents with masks keyed by `(seed, stream, step)`.
/// Returns the loss of `pass` before any update.
pub fn self_tune(
    params: &mut ModelParams,
    state: &mut AdamWState,
    pass: ForwardPass,
    batch: &SelfTuneBatch<'_>,
    steps: usize,
    seed: u64,
    stream: u64,
) -> Result<f64> {
    if steps == 0 {
        return paired_distance(
            pass.offspring(),
            batch.offspring_fitness,
            batch.elites,
            batch.elite_fitness,
        );
    }
    let first = selftune_step(params, state, pass, batch)?;
    for step in 1..steps {
        let mut masks = KeyedMasks::new(seed, rng::derive_seed(stream, &[step as u64]));
        let replay = forward(batch.parents, batch.parent_fitness, params, &mut masks)?;
        selftune_step(params, state, replay, batch)?;
    }
    Ok(first)
}
