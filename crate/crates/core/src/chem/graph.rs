use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chem::vocab::{amino_acid_index, AtomVocab, BondVocab, AMINO_ACIDS};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Index of the unordered pair `i < j` in packed upper-triangular order.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// All pairs `i < j` in packed order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

pub fn num_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Heavy-atom molecular graph: one atom type per atom and one bond type per unordered pair.
///
/// Bonds are stored only for `i < j`, so symmetry holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LigandGraph {
    atoms: Vec<usize>,
    bonds: Vec<usize>,
}

impl LigandGraph {
    /// Graph with no bonds.
    pub fn new(atoms: Vec<usize>) -> Self {
        let n = atoms.len();
        Self {
            atoms,
            bonds: vec![BondVocab::NONE; num_pairs(n)],
        }
    }

    pub fn from_parts(atoms: Vec<usize>, bonds: Vec<usize>) -> Result<Self> {
        if bonds.len() != num_pairs(atoms.len()) {
            return Err(Error::SizeMismatch(format!(
                "{} atoms need {} pair entries, got {}",
                atoms.len(),
                num_pairs(atoms.len()),
                bonds.len()
            )));
        }
        Ok(Self { atoms, bonds })
    }

    /// Builds from an explicit bond list `(i, j, type)`.
    pub fn from_bond_list(atoms: Vec<usize>, bonds: &[(usize, usize, usize)]) -> Result<Self> {
        let mut g = Self::new(atoms);
        for &(i, j, b) in bonds {
            g.set_bond(i, j, b)?;
        }
        Ok(g)
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[usize] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> usize {
        self.atoms[i]
    }

    pub fn set_atom(&mut self, i: usize, t: usize) {
        self.atoms[i] = t;
    }

    /// Packed pair bond types.
    pub fn bonds(&self) -> &[usize] {
        &self.bonds
    }

    pub fn bond(&self, i: usize, j: usize) -> usize {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.bonds[pair_index(i, j, self.atoms.len())],
            std::cmp::Ordering::Greater => self.bonds[pair_index(j, i, self.atoms.len())],
            std::cmp::Ordering::Equal => BondVocab::NONE,
        }
    }

    pub fn set_bond(&mut self, i: usize, j: usize, b: usize) -> Result<()> {
        let n = self.atoms.len();
        if i == j || i >= n || j >= n {
            return Err(Error::InvalidArgument(format!("bad bond ({i}, {j}) for {n} atoms")));
        }
        let (a, c) = if i < j { (i, j) } else { (j, i) };
        self.bonds[pair_index(a, c, n)] = b;
        Ok(())
    }

    /// Non-none bonds as `(i, j, type)` with `i < j`.
    pub fn bond_list(&self) -> Vec<(usize, usize, usize)> {
        pairs(self.n_atoms())
            .zip(&self.bonds)
            .filter(|(_, &b)| b != BondVocab::NONE)
            .map(|((i, j), &b)| (i, j, b))
            .collect()
    }

    pub fn neighbors(&self, i: usize) -> Vec<(usize, usize)> {
        (0..self.n_atoms())
            .filter(|&j| j != i)
            .filter_map(|j| {
                let b = self.bond(i, j);
                (b != BondVocab::NONE).then_some((j, b))
            })
            .collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).len()
    }

    /// Graph whose atom `k` is this graph's atom `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n_atoms();
        assert_eq!(order.len(), n, "permutation length");
        let atoms = order.iter().map(|&o| self.atoms[o]).collect();
        let mut g = Self::new(atoms);
        for (i, j) in pairs(n) {
            g.bonds[pair_index(i, j, n)] = self.bond(order[i], order[j]);
        }
        g
    }

    /// Whether the non-none bond subgraph is connected (a single atom counts as connected).
    pub fn is_connected(&self) -> bool {
        let n = self.n_atoms();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for (v, _) in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn atom_one_hot(&self, n_types: usize) -> Tensor {
        Tensor::one_hot(&self.atoms, n_types)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphWire {
    atoms: Vec<String>,
    bonds: Vec<(usize, usize, String)>,
}

impl Serialize for LigandGraph {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let av = AtomVocab::default();
        let bv = BondVocab::default();
        GraphWire {
            atoms: self.atoms.iter().map(|&a| av.symbol(a).to_string()).collect(),
            bonds: self
                .bond_list()
                .into_iter()
                .map(|(i, j, b)| (i, j, bv.name(b).to_string()))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LigandGraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = GraphWire::deserialize(d)?;
        let av = AtomVocab::default();
        let bv = BondVocab::default();
        let atoms = w.atoms.iter().map(|s| av.index_or_other(s)).collect();
        let mut bonds = Vec::with_capacity(w.bonds.len());
        for (i, j, name) in &w.bonds {
            let b = bv
                .index_of(name)
                .ok_or_else(|| D::Error::custom(format!("unknown bond type {name}")))?;
            bonds.push((*i, *j, b));
        }
        LigandGraph::from_bond_list(atoms, &bonds).map_err(D::Error::custom)
    }
}

/// Ligand atom coordinates in Å.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Pose(pub Vec<[f64; 3]>);

impl Pose {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Pose(order.iter().map(|&o| self.0[o]).collect())
    }

    pub fn translated(&self, v: [f64; 3]) -> Self {
        Pose(self.0.iter().map(|p| [p[0] + v[0], p[1] + v[1], p[2] + v[2]]).collect())
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

pub fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    let n = points.len().max(1) as f64;
    c.map(|x| x / n)
}

/// Number of pocket feature channels: element one-hot followed by residue one-hot.
pub fn pocket_feature_width(atom_vocab: &AtomVocab) -> usize {
    atom_vocab.len() + AMINO_ACIDS.len()
}

/// Fixed-coordinate conditioning point cloud for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pocket {
    pub id: String,
    pub coords: Vec<[f64; 3]>,
    /// Element index per atom (into the default [`AtomVocab`]).
    #[serde(with = "element_symbols")]
    pub elements: Vec<usize>,
    /// Amino-acid index per atom (into [`AMINO_ACIDS`]).
    #[serde(with = "residue_names")]
    pub residues: Vec<usize>,
    pub residue_ids: Vec<i64>,
}

impl Pocket {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.coords.len();
        if n == 0 {
            return Err(Error::InvalidArgument(format!("pocket {} has no atoms", self.id)));
        }
        if self.elements.len() != n || self.residues.len() != n || self.residue_ids.len() != n {
            return Err(Error::SizeMismatch(format!("pocket {} per-atom arrays disagree", self.id)));
        }
        Ok(())
    }

    /// `[N_P, N_f]` feature matrix: element one-hot then amino-acid one-hot.
    pub fn features(&self, atom_vocab: &AtomVocab) -> Tensor {
        let nv = atom_vocab.len();
        let w = pocket_feature_width(atom_vocab);
        let mut t = Tensor::zeros(&[self.len(), w]);
        for (r, (&e, &a)) in self.elements.iter().zip(&self.residues).enumerate() {
            t.data_mut()[r * w + e] = 1.0;
            t.data_mut()[r * w + nv + a] = 1.0;
        }
        t
    }

    pub fn centroid(&self) -> [f64; 3] {
        centroid(&self.coords)
    }

    pub fn translated(&self, v: [f64; 3]) -> Self {
        let mut p = self.clone();
        for c in &mut p.coords {
            for k in 0..3 {
                c[k] += v[k];
            }
        }
        p
    }

    pub fn residue_name(&self, i: usize) -> &'static str {
        AMINO_ACIDS[self.residues[i]]
    }

    pub fn residue_index_of(name: &str) -> usize {
        amino_acid_index(name)
    }
}

mod element_symbols {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::chem::vocab::AtomVocab;

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        let av = AtomVocab::default();
        v.iter().map(|&e| av.symbol(e)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let av = AtomVocab::default();
        let v = Vec::<String>::deserialize(d)?;
        Ok(v.iter().map(|s| av.index_or_other(s)).collect())
    }
}

mod residue_names {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::chem::vocab::{amino_acid_index, AMINO_ACIDS};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&a| AMINO_ACIDS[a]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        Ok(v.iter().map(|s| amino_acid_index(s)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_indexing_is_dense() {
        let n = 6;
        let idx: Vec<usize> = pairs(n).map(|(i, j)| pair_index(i, j, n)).collect();
        assert_eq!(idx, (0..num_pairs(n)).collect::<Vec<_>>());
    }

    #[test]
    fn bonds_symmetric_and_no_self_bonds() {
        let mut g = LigandGraph::new(vec![0, 0, 2]);
        g.set_bond(2, 0, BondVocab::DOUBLE).unwrap();
        assert_eq!(g.bond(0, 2), BondVocab::DOUBLE);
        assert_eq!(g.bond(2, 0), BondVocab::DOUBLE);
        assert!(g.set_bond(1, 1, BondVocab::SINGLE).is_err());
        assert_eq!(g.bond(1, 1), BondVocab::NONE);
    }

    #[test]
    fn permutation_relabels_bonds() {
        let g = LigandGraph::from_bond_list(vec![0, 1, 2], &[(0, 1, 1), (1, 2, 2)]).unwrap();
        let p = g.permuted(&[2, 1, 0]);
        assert_eq!(p.atoms(), &[2, 1, 0]);
        assert_eq!(p.bond(0, 1), 2);
        assert_eq!(p.bond(1, 2), 1);
    }

    #[test]
    fn connectivity() {
        let g = LigandGraph::from_bond_list(vec![0, 0, 0], &[(0, 1, 1)]).unwrap();
        assert!(!g.is_connected());
        assert!(LigandGraph::new(vec![0]).is_connected());
    }

    #[test]
    fn json_roundtrip() {
        let g = LigandGraph::from_bond_list(vec![0, 2, 6], &[(0, 1, 1), (0, 2, 4)]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"atoms":["C","O","Cl"],"bonds":[[0,1,"single"],[0,2,"aromatic"]]}"#);
        let back: LigandGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn pocket_features_are_one_hot_blocks() {
        let p = Pocket {
            id: "T1".into(),
            coords: vec![[0.0; 3], [1.0, 0.0, 0.0]],
            elements: vec![0, 1],
            residues: vec![7, 20],
            residue_ids: vec![1, 2],
        };
        let f = p.features(&AtomVocab::default());
        assert_eq!(f.shape(), &[2, 29]);
        for r in 0..2 {
            assert_eq!(f.row(r)[..8].iter().sum::<f64>(), 1.0);
            assert_eq!(f.row(r)[8..].iter().sum::<f64>(), 1.0);
        }
    }
}
