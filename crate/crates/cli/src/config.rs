use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use okaem::evolution::{BoundsMode, EvoConfig};
use okaem::model::{FitnessNorm, ModelConfig, OutputInit, Variant};
use okaem::training::TrainConfig;

use crate::fail::{Failure, EXIT_MISMATCH, EXIT_USAGE};

/// Keys accepted in config files and `--set`.
const KEYS: &[&str] = &[
    "seed",
    "runs",
    "instance_seed",
    "dim",
    "embed_dim",
    "heads",
    "hidden_dim",
    "layers",
    "crossover_keep",
    "mutation_keep",
    "variant",
    "fitness_norm",
    "lr",
    "weight_decay",
    "batch_size",
    "epochs",
    "selftune_steps",
    "pop_size",
    "generations",
    "evaluations",
    "bounds",
    "scratch_gain",
    "optimizer",
    "source_generations",
];

/// Flat `key=value` settings: config file first, then flags in order.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let mut s = Settings::default();
        let Some(path) = path else {
            return Ok(s);
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::new(
                EXIT_USAGE,
                format!("cannot read config {}: {e}", path.display()),
            )
        })?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            s.set_pair(line).map_err(|f| {
                Failure::new(
                    f.code,
                    format!("{}:{}: {}", path.display(), n + 1, f.message),
                )
            })?;
        }
        Ok(s)
    }

    /// Parses `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), Failure> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> Result<(), Failure> {
        if !KEYS.contains(&key) {
            return Err(Failure::usage(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl Display>) -> Result<(), Failure> {
        match value {
            Some(v) => self.set(key, v),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Failure::usage(format!("invalid value {v:?} for {key}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, Failure> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn seed(&self) -> Result<u64, Failure> {
        self.get_or("seed", 0)
    }

    pub fn runs(&self) -> Result<usize, Failure> {
        let runs = self.get_or("runs", 1)?;
        if runs == 0 {
            return Err(Failure::usage("runs must be at least 1"));
        }
        Ok(runs)
    }

    pub fn instance_seed(&self) -> Result<u64, Failure> {
        match self.get("instance_seed")? {
            Some(s) => Ok(s),
            None => self.seed(),
        }
    }

    /// Fails with the mismatch code when `dim` is set and differs.
    pub fn check_dim(&self, actual: usize, what: &str) -> Result<(), Failure> {
        match self.get::<usize>("dim")? {
            Some(d) if d != actual => Err(Failure::new(
                EXIT_MISMATCH,
                format!("configured dim={d} but {what} has dimension {actual}"),
            )),
            _ => Ok(()),
        }
    }

    /// Architecture for dimension `dim`, starting from the transfer or
    /// from-scratch preset.
    pub fn model_config(&self, dim: usize, transfer: bool) -> Result<ModelConfig, Failure> {
        let base = if transfer {
            ModelConfig::transfer_preset(dim)
        } else {
            ModelConfig::scratch_preset(dim)
        };
        let variant = match self.values.get("variant") {
            Some(v) => Variant::parse(v).map_err(Failure::from)?,
            None => base.variant,
        };
        let fitness_norm = match self.values.get("fitness_norm") {
            Some(v) => FitnessNorm::parse(v).map_err(Failure::from)?,
            None => base.fitness_norm,
        };
        Ok(ModelConfig {
            dim,
            embed_dim: self.get_or("embed_dim", base.embed_dim)?,
            heads: self.get_or("heads", base.heads)?,
            hidden_dim: self.get_or("hidden_dim", base.hidden_dim)?,
            layers: self.get_or("layers", base.layers)?,
            crossover_keep: self.get_or("crossover_keep", base.crossover_keep)?,
            mutation_keep: self.get_or("mutation_keep", base.mutation_keep)?,
            variant,
            fitness_norm,
        })
    }

    pub fn train_config(&self, transfer: bool) -> Result<TrainConfig, Failure> {
        let base = if transfer {
            TrainConfig::transfer()
        } else {
            TrainConfig::scratch()
        };
        Ok(TrainConfig {
            lr: self.get_or("lr", base.lr)?,
            weight_decay: self.get_or("weight_decay", base.weight_decay)?,
            batch_size: self.get_or("batch_size", base.batch_size)?,
            epochs: self.get_or("epochs", base.epochs)?,
            selftune_steps_per_gen: self.get_or("selftune_steps", base.selftune_steps_per_gen)?,
        })
    }

    /// `generations` wins over `evaluations` (default 5000) when both are set.
    pub fn evo_config(&self, seed: u64) -> Result<EvoConfig, Failure> {
        let pop: usize = self.get_or("pop_size", 20)?;
        let mut evo = match self.get::<usize>("generations")? {
            Some(t) => EvoConfig::new(pop, t, seed),
            None => EvoConfig::for_budget(pop, self.get_or("evaluations", 5000)?, seed)
                .map_err(Failure::from)?,
        };
        if let Some(b) = self.values.get("bounds") {
            evo.bounds = BoundsMode::parse(b).map_err(Failure::from)?;
        }
        if let Some(g) = self.get::<f64>("scratch_gain")? {
            evo.scratch_init = if g == 0.0 {
                OutputInit::Zero
            } else {
                OutputInit::Xavier { gain: g }
            };
        }
        Ok(evo)
    }
}

pub fn describe_model(c: &ModelConfig) -> String {
    format!(
        "dim={} embed_dim={} heads={} hidden_dim={} layers={} crossover_keep={} mutation_keep={} variant={} fitness_norm={}",
        c.dim,
        c.embed_dim,
        c.heads,
        c.hidden_dim,
        c.layers,
        c.crossover_keep,
        c.mutation_keep,
        c.variant.name(),
        c.fitness_norm.name()
    )
}

pub fn describe_train(c: &TrainConfig) -> String {
    format!(
        "lr={} weight_decay={} batch_size={} epochs={} selftune_steps={}",
        c.lr, c.weight_decay, c.batch_size, c.epochs, c.selftune_steps_per_gen
    )
}

pub fn describe_evo(c: &EvoConfig) -> String {
    let init = match c.scratch_init {
        OutputInit::Zero => 0.0,
        OutputInit::Xavier { gain } => gain,
    };
    format!(
        "pop_size={} generations={} evaluations={} bounds={} scratch_gain={}",
        c.pop_size,
        c.generations,
        c.evaluations(),
        c.bounds.name(),
        init
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_values_override_earlier_ones() {
        let mut s = Settings::default();
        s.set_pair("lr = 0.5").unwrap();
        s.set("lr", 0.25).unwrap();
        assert_eq!(s.train_config(true).unwrap().lr, 0.25);
        assert!(s.set_pair("nonsense=1").is_err());
        assert!(s.set_pair("lr").is_err());
    }

    #[test]
    fn budget_maps_to_generations() {
        let s = Settings::default();
        let evo = s.evo_config(1).unwrap();
        assert_eq!(
            (evo.pop_size, evo.generations, evo.evaluations()),
            (20, 249, 5000)
        );
        let mut s = Settings::default();
        s.set("generations", 7).unwrap();
        s.set("evaluations", 100).unwrap();
        assert_eq!(s.evo_config(1).unwrap().generations, 7);
    }

    #[test]
    fn dim_mismatch_uses_mismatch_code() {
        let mut s = Settings::default();
        s.set("dim", 5).unwrap();
        assert!(s.check_dim(5, "x").is_ok());
        assert_eq!(s.check_dim(6, "x").unwrap_err().code, EXIT_MISMATCH);
    }
}
