use crate::error::{Error, Result};

/// Which reproduction modules a layer runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Full,
    /// Selection and crossover only; mutation is skipped.
    CrossoverOnly,
    /// Crossover output replaced by the input population.
    MutationOnly,
}

impl Variant {
    pub fn all() -> [Variant; 3] {
        [Variant::Full, Variant::CrossoverOnly, Variant::MutationOnly]
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::CrossoverOnly => "crossover_only",
            Variant::MutationOnly => "mutation_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "crossover_only" => Ok(Variant::CrossoverOnly),
            "mutation_only" => Ok(Variant::MutationOnly),
            other => Err(Error::Parameter(format!("unknown model variant {other:?}"))),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Full => 0,
            Variant::CrossoverOnly => 1,
            Variant::MutationOnly => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Full),
            1 => Some(Variant::CrossoverOnly),
            2 => Some(Variant::MutationOnly),
            _ => None,
        }
    }

    pub fn uses_crossover(self) -> bool {
        self != Variant::MutationOnly
    }

    pub fn uses_mutation(self) -> bool {
        self != Variant::CrossoverOnly
    }
}

/// How raw fitness values are rescaled before entering selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FitnessNorm {
    #[default]
    ZScore,
    Raw,
}

impl FitnessNorm {
    pub fn name(self) -> &'static str {
        match self {
            FitnessNorm::ZScore => "zscore",
            FitnessNorm::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(FitnessNorm::ZScore),
            "raw" => Ok(FitnessNorm::Raw),
            other => Err(Error::Parameter(format!(
                "unknown fitness normalization {other:?}"
            ))),
        }
    }
}

/// Architecture of the operator stack.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Problem dimension `d`.
    pub dim: usize,
    /// Attention embedding width `d_A`, split evenly over the heads.
    pub embed_dim: usize,
    pub heads: usize,
    /// MLP hidden width `d_M`.
    pub hidden_dim: usize,
    pub layers: usize,
    /// Keep probability of the crossover dropout.
    pub crossover_keep: f64,
    /// Keep probability of the mutation dropout.
    pub mutation_keep: f64,
    pub variant: Variant,
    pub fitness_norm: FitnessNorm,
}

impl ModelConfig {
    /// Settings used for archive transfer: one layer, four heads, `d_A ≈ d`.
    ///
    /// `d_A` is rounded up to the next multiple of the head count.
    pub fn transfer_preset(dim: usize) -> Self {
        let heads = 4;
        Self {
            dim,
            embed_dim: dim.div_ceil(heads).max(1) * heads,
            heads,
            hidden_dim: 64,
            layers: 1,
            crossover_keep: 0.95,
            mutation_keep: 0.95,
            variant: Variant::Full,
            fitness_norm: FitnessNorm::ZScore,
        }
    }

    /// Settings used when optimizing without any archive.
    pub fn scratch_preset(dim: usize) -> Self {
        Self {
            dim,
            embed_dim: 64,
            heads: 1,
            hidden_dim: 64,
            layers: 1,
            crossover_keep: 0.95,
            mutation_keep: 0.5,
            variant: Variant::Full,
            fitness_norm: FitnessNorm::ZScore,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Parameter(format!("{name} must be positive")));
            }
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Parameter(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        for (name, p) in [
            ("crossover_keep", self.crossover_keep),
            ("mutation_keep", self.mutation_keep),
        ] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Parameter(format!(
                    "{name} must lie in (0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}
