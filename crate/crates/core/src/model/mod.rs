//! The operator stack `P̂ = OKAEM_W(P, F)`: attention selection, MLP
//! crossover and gene-attention mutation, repeated over `L` layers.

mod config;
mod forward;
mod inspect;
mod params;

pub use config::{FitnessNorm, ModelConfig, Variant};
pub use forward::{
    crossover, forward, mutate, record_forward, selection_matrices, ForwardPass, FrozenMasks,
    InspectionTrace, KeyedMasks, LayerMasks, LayerTrace, MaskSource, Site,
};
pub use inspect::{column_mass, export_matrices, fitness_ranking, MatrixKind, MatrixRecord};
pub use params::{
    init_params, init_params_with, layer_shapes, HeadParams, LayerParams, ModelParams, OutputInit,
};
