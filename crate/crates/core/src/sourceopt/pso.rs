use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::gradengine::Tensor2;
use crate::problems::Objective;

/// Global-best PSO with constriction-style coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PsoConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Maximum speed per coordinate as a fraction of the unit range.
    pub velocity_clamp: f64,
}

impl PsoConfig {
    pub fn new(pop_size: usize, generations: usize) -> Self {
        Self {
            pop_size,
            generations,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            velocity_clamp: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.inertia) {
            return Err(Error::Parameter("PSO inertia must lie in [0, 1)".into()));
        }
        if self.cognitive < 0.0
            || self.social < 0.0
            || self.velocity_clamp.is_nan()
            || self.velocity_clamp <= 0.0
        {
            return Err(Error::Parameter(
                "PSO coefficients must be non-negative and the clamp positive".into(),
            ));
        }
        Ok(())
    }
}

/// Positions, velocities and best-so-far memory of a swarm.
#[derive(Clone, Debug, PartialEq)]
pub struct Swarm {
    pub positions: Tensor2,
    pub velocities: Tensor2,
    pub personal_best: Tensor2,
    pub personal_best_fitness: Tensor2,
    pub global_best: Vec<f64>,
    pub global_best_fitness: f64,
}

impl Swarm {
    /// Swarm at rest at `positions`.
    pub fn new(positions: Tensor2, fitness: Tensor2) -> Result<Self> {
        if fitness.shape() != (positions.rows(), 1) || positions.rows() == 0 {
            return Err(Error::shape(
                "Swarm::new",
                "fitness column does not match positions",
            ));
        }
        let best = crate::model::fitness_ranking(fitness.data())[0];
        Ok(Self {
            velocities: Tensor2::zeros(positions.rows(), positions.cols()),
            personal_best: positions.clone(),
            personal_best_fitness: fitness.clone(),
            global_best: positions.row(best).to_vec(),
            global_best_fitness: fitness.get(best, 0),
            positions,
        })
    }
}

/// Velocity and position update followed by evaluation and best tracking.
/// Returns the fitness of the new positions.
pub fn pso_step<R: RngCore>(
    swarm: &mut Swarm,
    cfg: &PsoConfig,
    problem: &dyn Objective,
    rng: &mut R,
) -> Result<Tensor2> {
    cfg.validate()?;
    let (n, d) = swarm.positions.shape();
    let vmax = cfg.velocity_clamp;
    let mut x = swarm.positions.clone().into_data();
    let mut v = swarm.velocities.clone().into_data();
    for i in 0..n {
        for j in 0..d {
            let k = i * d + j;
            let (r1, r2) = (rng.gen::<f64>(), rng.gen::<f64>());
            let vel = cfg.inertia * v[k]
                + cfg.cognitive * r1 * (swarm.personal_best.get(i, j) - x[k])
                + cfg.social * r2 * (swarm.global_best[j] - x[k]);
            v[k] = vel.clamp(-vmax, vmax);
            x[k] = (x[k] + v[k]).clamp(0.0, 1.0);
        }
    }
    swarm.positions = Tensor2::new(n, d, x)?;
    swarm.velocities = Tensor2::new(n, d, v)?;
    let fit = problem.evaluate(&swarm.positions, rng)?;
    let mut pb = swarm.personal_best.clone().into_data();
    let mut pf = swarm.personal_best_fitness.clone().into_data();
    for i in 0..n {
        let f = fit.get(i, 0);
        if f < pf[i] {
            pf[i] = f;
            pb[i * d..(i + 1) * d].copy_from_slice(swarm.positions.row(i));
        }
        if f < swarm.global_best_fitness {
            swarm.global_best_fitness = f;
            swarm.global_best = swarm.positions.row(i).to_vec();
        }
    }
    swarm.personal_best = Tensor2::new(n, d, pb)?;
    swarm.personal_best_fitness = Tensor2::new(n, 1, pf)?;
    Ok(fit)
}
