use serde::{Deserialize, Serialize};

use crate::chem::graph::{distance, pairs, LigandGraph, Pose};
use crate::chem::vocab::{AtomVocab, BondVocab};
use crate::error::{Error, Result};

/// Thresholds for geometric and valence checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityConfig {
    pub atom_vocab: AtomVocab,
    pub bond_vocab: BondVocab,
    /// Allowed bond length as a multiple of the covalent-radii sum, `[min, max]`.
    pub length_window: [f64; 2],
    /// Pairs closer than this multiple of the radii sum are bonded by [`infer_bonds`].
    pub infer_factor: f64,
}

impl Default for ValidityConfig {
    fn default() -> Self {
        Self {
            atom_vocab: AtomVocab::default(),
            bond_vocab: BondVocab::default(),
            length_window: [0.8, 1.25],
            infer_factor: 1.15,
        }
    }
}

impl ValidityConfig {
    pub fn radii_sum(&self, a: usize, b: usize) -> f64 {
        self.atom_vocab.covalent_radius[a] + self.atom_vocab.covalent_radius[b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valence_ok: Vec<bool>,
    /// Checked bonds as `(i, j)` with `i < j`, aligned with `bond_length_ok`.
    pub bonds: Vec<(usize, usize)>,
    pub bond_length_ok: Vec<bool>,
    pub connected_ok: bool,
    pub valid: bool,
}

/// Bond-order sum per atom, rounded half-up.
pub fn valence_sums(g: &LigandGraph, bond_vocab: &BondVocab) -> Vec<u32> {
    let mut sums = vec![0.0; g.n_atoms()];
    for (i, j, b) in g.bond_list() {
        sums[i] += bond_vocab.order[b];
        sums[j] += bond_vocab.order[b];
    }
    sums.into_iter().map(|s: f64| (s + 0.5).floor() as u32).collect()
}

pub fn validate_assembly(g: &LigandGraph, x: &Pose, cfg: &ValidityConfig) -> Result<ValidityReport> {
    if x.len() != g.n_atoms() {
        return Err(Error::SizeMismatch(format!(
            "pose has {} rows for {} atoms",
            x.len(),
            g.n_atoms()
        )));
    }
    let valence_ok: Vec<bool> = valence_sums(g, &cfg.bond_vocab)
        .into_iter()
        .zip(g.atoms())
        .map(|(s, &a)| s <= cfg.atom_vocab.max_valence[a])
        .collect();
    let [lo, hi] = cfg.length_window;
    let mut bonds = Vec::new();
    let mut bond_length_ok = Vec::new();
    for (i, j, _) in g.bond_list() {
        let d = distance(&x.0[i], &x.0[j]);
        let r = cfg.radii_sum(g.atom(i), g.atom(j));
        bonds.push((i, j));
        bond_length_ok.push(d >= lo * r && d <= hi * r);
    }
    let connected_ok = g.is_connected();
    let valid = connected_ok && valence_ok.iter().all(|&v| v) && bond_length_ok.iter().all(|&v| v);
    Ok(ValidityReport {
        valence_ok,
        bonds,
        bond_length_ok,
        connected_ok,
        valid,
    })
}

/// Distance-based bond perception: single bond wherever the pair is within
/// `infer_factor` times the radii sum.
pub fn infer_bonds(atoms: &[usize], x: &Pose, cfg: &ValidityConfig) -> Result<LigandGraph> {
    if x.len() != atoms.len() {
        return Err(Error::SizeMismatch(format!(
            "pose has {} rows for {} atoms",
            x.len(),
            atoms.len()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("pose coordinates".into()));
    }
    let mut g = LigandGraph::new(atoms.to_vec());
    for (i, j) in pairs(atoms.len()) {
        let d = distance(&x.0[i], &x.0[j]);
        if d <= cfg.infer_factor * cfg.radii_sum(atoms[i], atoms[j]) {
            g.set_bond(i, j, BondVocab::SINGLE)?;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(arms: usize) -> (LigandGraph, Pose) {
        let dirs = [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let mut atoms = vec![0];
        let mut coords = vec![[0.0; 3]];
        let mut bonds = Vec::new();
        for (k, d) in dirs.iter().take(arms).enumerate() {
            atoms.push(0);
            coords.push(d.map(|v| v * 1.52));
            bonds.push((0, k + 1, BondVocab::SINGLE));
        }
        (LigandGraph::from_bond_list(atoms, &bonds).unwrap(), Pose(coords))
    }

    #[test]
    fn four_single_bonds_ok_five_exceed() {
        let cfg = ValidityConfig::default();
        let (g, x) = star(4);
        let r = validate_assembly(&g, &x, &cfg).unwrap();
        assert!(r.valence_ok[0] && r.valid);
        let (g, x) = star(5);
        let r = validate_assembly(&g, &x, &cfg).unwrap();
        assert!(!r.valence_ok[0] && !r.valid);
    }

    #[test]
    fn stretched_bond_fails_window() {
        let g = LigandGraph::from_bond_list(vec![0, 0], &[(0, 1, 1)]).unwrap();
        let x = Pose(vec![[0.0; 3], [5.0, 0.0, 0.0]]);
        let r = validate_assembly(&g, &x, &ValidityConfig::default()).unwrap();
        assert_eq!(r.bond_length_ok, vec![false]);
        assert!(!r.valid);
        // window is [1.216, 1.9] Å for C-C
        let x = Pose(vec![[0.0; 3], [1.9, 0.0, 0.0]]);
        assert!(validate_assembly(&g, &x, &ValidityConfig::default()).unwrap().valid);
    }

    #[test]
    fn aromatic_rounds_half_up() {
        // O with two aromatic bonds: 3.0 > 2
        let g = LigandGraph::from_bond_list(vec![2, 0, 0], &[(0, 1, 4), (0, 2, 4)]).unwrap();
        assert_eq!(valence_sums(&g, &BondVocab::default()), vec![3, 2, 2]);
        // one aromatic bond: 1.5 rounds to 2
        let g = LigandGraph::from_bond_list(vec![3, 0], &[(0, 1, 4)]).unwrap();
        assert_eq!(valence_sums(&g, &BondVocab::default()), vec![2, 2]);
    }

    #[test]
    fn size_mismatch_is_error() {
        let g = LigandGraph::new(vec![0, 0]);
        assert!(validate_assembly(&g, &Pose(vec![[0.0; 3]]), &ValidityConfig::default()).is_err());
    }

    #[test]
    fn inference_threshold() {
        let cfg = ValidityConfig::default();
        let near = infer_bonds(&[0, 0], &Pose(vec![[0.0; 3], [1.5, 0.0, 0.0]]), &cfg).unwrap();
        assert_eq!(near.bond(0, 1), BondVocab::SINGLE);
        let far = infer_bonds(&[0, 0], &Pose(vec![[0.0; 3], [3.0, 0.0, 0.0]]), &cfg).unwrap();
        assert_eq!(far.bond(0, 1), BondVocab::NONE);
        let one = infer_bonds(&[0], &Pose(vec![[0.0; 3]]), &cfg).unwrap();
        assert!(one.bond_list().is_empty());
    }
}
