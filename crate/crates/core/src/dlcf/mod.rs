//! The denoiser: per-target kNN graphs fused around a shared ligand, message passing,
//! per-target equivariant coordinate updates and type heads.

mod config;
mod graph;
mod model;

pub use config::ModelConfig;
pub use graph::{build_dual_graph, complete_ligand_edges, fuse_k_targets, ligand_edge_index, DualGraph};
pub use model::{
    ligand_pair_statistics, timestep_embedding, DenoiseVars, DenoiserModel, DenoiserOutput, LayerParams, Linear, Mlp,
    ModelParams, EDGE_KINDS,
};
