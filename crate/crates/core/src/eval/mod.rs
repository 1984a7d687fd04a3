//! Set-level metrics and the executable symmetry checks.

mod fingerprint;
mod kabsch;
mod metrics;
mod symmetry;

pub use fingerprint::{
    diversity, diversity_unfolded, fingerprint, path_features, tanimoto_distance, FINGERPRINT_BITS, MAX_PATH_BONDS,
};
pub use kabsch::{kabsch, kabsch_rmsd};
pub use metrics::{dual_validity, drug_likeness, evaluate_samples, sample_metrics, DrugLikeness, MetricsReport, SampleMetrics};
pub use symmetry::{
    denoise_in_frames, random_problem, rigidity, verify_symmetries, RandomProblem, RigidityReport, SymmetryReport,
    SymmetryTolerances, PERTURBATION,
};
