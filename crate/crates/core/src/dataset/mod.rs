//! Complex records, pocket extraction, dual-target pair derivation and synthetic data.

mod derive;
mod mock;
mod records;

pub use derive::{derive_from_jsonl, derive_pairs, DerivationReport};
pub use mock::{generate_records, MockConfig};
pub use records::{extract_pocket, pockets_distinct, ComplexRecord, DualInstance, ProteinAtom};

/// Default pocket selection radius in Å.
pub const POCKET_CUTOFF: f64 = 10.0;
