//! Classical optimizers run on source tasks to build knowledge archives.

mod ga;
mod pso;

use crate::archive::{ArchiveEntry, KnowledgeArchive, Provenance};
use crate::error::{Error, Result};
use crate::gradengine::Tensor2;
use crate::problems::{Objective, StopInstance};
use crate::rng;

pub use ga::{ga_generation, polynomial_mutation, sbx_crossover, sbx_spread, GaConfig};
pub use pso::{pso_step, PsoConfig, Swarm};

/// Source optimizer together with its settings.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceOptimizer {
    Ga(GaConfig),
    Pso(PsoConfig),
}

impl SourceOptimizer {
    pub fn name(&self) -> &'static str {
        match self {
            SourceOptimizer::Ga(_) => "ga",
            SourceOptimizer::Pso(_) => "pso",
        }
    }

    /// Default settings by id, `N` individuals for `T` recorded generations.
    pub fn by_name(name: &str, pop_size: usize, generations: usize) -> Result<Self> {
        match name {
            "ga" => Ok(SourceOptimizer::Ga(GaConfig::new(pop_size, generations))),
            "pso" => Ok(SourceOptimizer::Pso(PsoConfig::new(pop_size, generations))),
            other => Err(Error::Parameter(format!(
                "unknown source optimizer {other:?}"
            ))),
        }
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            SourceOptimizer::Ga(c) => (c.pop_size, c.generations),
            SourceOptimizer::Pso(c) => (c.pop_size, c.generations),
        }
    }
}

fn sorted(pop: &Tensor2, fit: &Tensor2) -> ArchiveEntry {
    let order = crate::model::fitness_ranking(fit.data());
    ArchiveEntry {
        population: pop.select_rows(&order),
        fitness: fit.select_rows(&order),
    }
}

/// `T` fitness-sorted records of one source task: the initial population
/// followed by `T-1` generations.
pub fn optimize_source(
    problem: &dyn Objective,
    optimizer: &SourceOptimizer,
    seed: u64,
) -> Result<Vec<ArchiveEntry>> {
    let (n, generations) = optimizer.shape();
    if n < 2 || generations == 0 {
        return Err(Error::Parameter(
            "source optimizer needs N >= 2 and T >= 1".into(),
        ));
    }
    let mut r = rng::keyed(seed, &[0x5e]);
    let d = problem.dim();
    let init = crate::evolution::lhs_init(n, d, rng::derive_seed(seed, &[0x1]));
    let fit = problem.evaluate(&init, &mut r)?;
    let mut out = Vec::with_capacity(generations);
    match optimizer {
        SourceOptimizer::Ga(cfg) => {
            if n % 2 != 0 {
                return Err(Error::Usage(format!(
                    "GA needs an even population, got {n}"
                )));
            }
            let first = sorted(&init, &fit);
            let (mut pop, mut f) = (first.population.clone(), first.fitness.clone());
            out.push(first);
            for t in 1..generations {
                let (p, g) = ga_generation(&pop, &f, cfg, problem, &mut r)
                    .map_err(|e| e.at_generation(t))?;
                pop = p;
                f = g;
                out.push(ArchiveEntry {
                    population: pop.clone(),
                    fitness: f.clone(),
                });
            }
        }
        SourceOptimizer::Pso(cfg) => {
            let mut swarm = Swarm::new(init, fit)?;
            out.push(sorted(&swarm.personal_best, &swarm.personal_best_fitness));
            for t in 1..generations {
                pso_step(&mut swarm, cfg, problem, &mut r).map_err(|e| e.at_generation(t))?;
                out.push(sorted(&swarm.personal_best, &swarm.personal_best_fitness));
            }
        }
    }
    Ok(out)
}

/// Runs `optimizer` on every source task of `instance`.
pub fn generate_archive(
    instance: &StopInstance,
    optimizer: &SourceOptimizer,
    seed: u64,
) -> Result<KnowledgeArchive> {
    let (n, generations) = optimizer.shape();
    let d = instance.dim();
    let mut entries = Vec::with_capacity(instance.sources.len() * generations);
    for (k, source) in instance.sources.iter().enumerate() {
        if source.dim() != d {
            return Err(Error::shape(
                "generate_archive",
                format!("source {k} has dimension {} instead of {d}", source.dim()),
            ));
        }
        let task_seed = rng::derive_seed(seed, &[0xa7c, k as u64]);
        let records = optimize_source(source, optimizer, task_seed).map_err(|e| match e {
            Error::Generation { generation, source } => Error::SourceTask {
                task: k,
                generation,
                source,
            },
            other => Error::SourceTask {
                task: k,
                generation: 0,
                source: Box::new(other),
            },
        })?;
        entries.extend(records);
    }
    KnowledgeArchive::new(
        instance.sources.len(),
        generations,
        n,
        d,
        entries,
        Provenance {
            optimizer: optimizer.name().to_string(),
            seed,
            descriptor_hash: instance.descriptor_hash(),
        },
    )
}
