use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{valence_sums, validate_assembly, LigandGraph, ValidityConfig};
use crate::error::{Error, Result};
use crate::eval::fingerprint::diversity;
use crate::sample::GeneratedSample;

/// Mass of an implicit hydrogen in Da.
const HYDROGEN_MASS: f64 = 1.008;

/// Reduced drug-likeness rule set: mass, donor proxy and acceptor proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrugLikeness {
    /// Heavy atoms plus implicit hydrogens filling each atom to its maximum valence.
    pub mass: f64,
    /// N and O atoms with unfilled valence (a hydrogen is assumed on each).
    pub donors: usize,
    /// N and O atoms.
    pub acceptors: usize,
    /// Satisfied rules out of 3: mass ≤ 500, donors ≤ 5, acceptors ≤ 10.
    pub satisfied: usize,
}

pub fn drug_likeness(g: &LigandGraph, cfg: &ValidityConfig) -> DrugLikeness {
    let vocab = &cfg.atom_vocab;
    let sums = valence_sums(g, &cfg.bond_vocab);
    let mut mass = 0.0;
    let mut donors = 0;
    let mut acceptors = 0;
    for (i, &a) in g.atoms().iter().enumerate() {
        let free = vocab.max_valence[a].saturating_sub(sums[i]);
        mass += vocab.mass[a] + HYDROGEN_MASS * free as f64;
        if matches!(vocab.symbol(a), "N" | "O") {
            acceptors += 1;
            if free > 0 {
                donors += 1;
            }
        }
    }
    let satisfied = usize::from(mass <= 500.0) + usize::from(donors <= 5) + usize::from(acceptors <= 10);
    DrugLikeness {
        mass,
        donors,
        acceptors,
        satisfied,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub n_atoms: usize,
    /// Validity of each pose against the graph it is paired with.
    pub pose_valid: Vec<bool>,
    /// One atom/bond assignment, valid in every pose.
    pub dual_valid: bool,
    pub drug_likeness: DrugLikeness,
}

/// Aggregate metrics over a generated set. Fields for externally computed scores
/// (QED, SA, logP, docking) stay `null` until merged in from other tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub dual_validity: f64,
    /// `null` with fewer than two samples.
    pub diversity: Option<f64>,
    pub mean_rules_satisfied: f64,
    pub qed: Option<f64>,
    pub sa: Option<f64>,
    pub logp: Option<f64>,
    pub vina: Option<f64>,
    pub per_sample: Vec<SampleMetrics>,
}

pub fn sample_metrics(s: &GeneratedSample, cfg: &ValidityConfig) -> Result<SampleMetrics> {
    let pose_valid = s
        .poses
        .iter()
        .enumerate()
        .map(|(k, x)| validate_assembly(s.graph_for_pose(k), x, cfg).map(|r| r.valid))
        .collect::<Result<Vec<_>>>()?;
    let shared = (1..s.poses.len()).all(|k| s.graph_for_pose(k) == s.graph_for_pose(0));
    Ok(SampleMetrics {
        index: s.index,
        n_atoms: s.graph.n_atoms(),
        dual_valid: shared && pose_valid.iter().all(|&v| v),
        pose_valid,
        drug_likeness: drug_likeness(&s.graph, cfg),
    })
}

/// Fraction of samples whose shared graph is valid in every pose.
pub fn dual_validity(samples: &[GeneratedSample], cfg: &ValidityConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("dual validity of an empty sample list".into()));
    }
    let ok = samples
        .par_iter()
        .map(|s| sample_metrics(s, cfg).map(|m| m.dual_valid))
        .collect::<Result<Vec<_>>>()?;
    Ok(ok.iter().filter(|&&v| v).count() as f64 / samples.len() as f64)
}

pub fn evaluate_samples(samples: &[GeneratedSample], cfg: &ValidityConfig) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let per_sample = samples
        .par_iter()
        .map(|s| sample_metrics(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let graphs: Vec<LigandGraph> = samples.iter().map(|s| s.graph.clone()).collect();
    Ok(MetricsReport {
        n_samples: samples.len(),
        dual_validity: per_sample.iter().filter(|m| m.dual_valid).count() as f64 / n,
        diversity: if graphs.len() >= 2 { Some(diversity(&graphs)?) } else { None },
        mean_rules_satisfied: per_sample.iter().map(|m| m.drug_likeness.satisfied as f64).sum::<f64>() / n,
        qed: None,
        sa: None,
        logp: None,
        vina: None,
        per_sample,
    })
}
