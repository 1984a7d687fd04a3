//! Molecular graphs, canonical labels, validity checks and file formats.

mod canon;
mod graph;
mod io;
mod validity;
mod vocab;

pub use canon::{canonical_hash, graphs_isomorphic, refined_colors};
pub use graph::{centroid, distance, num_pairs, pair_index, pairs, pocket_feature_width, LigandGraph, Pocket, Pose};
pub use io::{read_jsonl, read_jsonl_strict, write_jsonl, write_sdf};
pub use validity::{infer_bonds, valence_sums, validate_assembly, ValidityConfig, ValidityReport};
pub use vocab::{amino_acid_index, is_standard_residue, AtomVocab, BondVocab, AMINO_ACIDS};
