use serde::{Deserialize, Serialize};

use crate::chem::{distance, is_standard_residue, AtomVocab, LigandGraph, Pocket, Pose, AMINO_ACIDS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinAtom {
    pub element: String,
    pub residue: String,
    pub residue_id: i64,
    #[serde(default)]
    pub chain: String,
    pub coord: [f64; 3],
}

/// One single-target complex: a ligand with its pose and the surrounding protein.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexRecord {
    pub id: String,
    pub target: String,
    pub ligand: LigandGraph,
    pub pose: Pose,
    pub protein: Vec<ProteinAtom>,
}

impl ComplexRecord {
    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::InvalidArgument(format!("record {} has no target", self.id)));
        }
        if self.pose.len() != self.ligand.n_atoms() {
            return Err(Error::SizeMismatch(format!(
                "record {}: pose has {} rows for {} atoms",
                self.id,
                self.pose.len(),
                self.ligand.n_atoms()
            )));
        }
        if !self.pose.is_finite() {
            return Err(Error::NonFinite(format!("record {} pose", self.id)));
        }
        Ok(())
    }
}

/// A shared ligand graph with one pose per target. Pose and pocket lists have equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualInstance {
    pub graph: LigandGraph,
    pub poses: Vec<Pose>,
    pub pockets: Vec<Pocket>,
    /// Source record ids, one per pose.
    pub sources: Vec<String>,
}

impl DualInstance {
    pub fn n_targets(&self) -> usize {
        self.poses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.poses.len();
        if k == 0 || self.pockets.len() != k {
            return Err(Error::SizeMismatch(format!(
                "{} poses and {} pockets",
                self.poses.len(),
                self.pockets.len()
            )));
        }
        for (i, p) in self.poses.iter().enumerate() {
            if p.len() != self.graph.n_atoms() {
                return Err(Error::SizeMismatch(format!(
                    "pose {} has {} rows for {} atoms",
                    i + 1,
                    p.len(),
                    self.graph.n_atoms()
                )));
            }
        }
        for p in &self.pockets {
            p.validate()?;
        }
        Ok(())
    }

    /// Same instance with targets listed in `order`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            graph: self.graph.clone(),
            poses: order.iter().map(|&k| self.poses[k].clone()).collect(),
            pockets: order.iter().map(|&k| self.pockets[k].clone()).collect(),
            sources: order
                .iter()
                .filter_map(|&k| self.sources.get(k).cloned())
                .collect(),
        }
    }
}

/// All atoms of standard residues with any atom within `cutoff` Å (inclusive) of any ligand atom.
pub fn extract_pocket(record: &ComplexRecord, cutoff: f64) -> Result<Pocket> {
    if record.pose.is_empty() {
        return Err(Error::InvalidArgument(format!("record {} has an empty ligand", record.id)));
    }
    let residue_key = |a: &ProteinAtom| (a.chain.clone(), a.residue_id, a.residue.clone());
    let mut selected = std::collections::HashSet::new();
    for a in &record.protein {
        if !is_standard_residue(&a.residue) {
            continue;
        }
        if record.pose.0.iter().any(|l| distance(l, &a.coord) <= cutoff) {
            selected.insert(residue_key(a));
        }
    }
    let vocab = AtomVocab::default();
    let mut pocket = Pocket {
        id: record.target.clone(),
        coords: Vec::new(),
        elements: Vec::new(),
        residues: Vec::new(),
        residue_ids: Vec::new(),
    };
    for a in record.protein.iter().filter(|a| selected.contains(&residue_key(a))) {
        pocket.coords.push(a.coord);
        pocket.elements.push(vocab.index_or_other(&a.element));
        pocket.residues.push(
            AMINO_ACIDS
                .iter()
                .position(|r| r.eq_ignore_ascii_case(&a.residue))
                .unwrap_or(AMINO_ACIDS.len() - 1),
        );
        pocket.residue_ids.push(a.residue_id);
    }
    if pocket.is_empty() {
        return Err(Error::EmptyPocket { cutoff });
    }
    Ok(pocket)
}

/// Pockets count as distinct when their identifiers differ; geometry is not compared.
pub fn pockets_distinct(a: &Pocket, b: &Pocket) -> bool {
    a.id != b.id
}
