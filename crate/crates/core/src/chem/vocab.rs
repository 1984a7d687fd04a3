use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heavy-atom element vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomVocab {
    pub symbols: Vec<String>,
    pub max_valence: Vec<u32>,
    /// Single-bond covalent radius in Å.
    pub covalent_radius: Vec<f64>,
    /// Standard atomic mass in Da.
    pub mass: Vec<f64>,
}

impl Default for AtomVocab {
    /// C, N, O, F, P, S, Cl and a catch-all slot for other halogens (Br/I), N_v = 8.
    fn default() -> Self {
        let rows: [(&str, u32, f64, f64); 8] = [
            ("C", 4, 0.76, 12.011),
            ("N", 3, 0.71, 14.007),
            ("O", 2, 0.66, 15.999),
            ("F", 1, 0.57, 18.998),
            ("P", 5, 1.07, 30.974),
            ("S", 6, 1.05, 32.06),
            ("Cl", 1, 1.02, 35.45),
            ("X", 1, 1.20, 79.904),
        ];
        Self {
            symbols: rows.iter().map(|r| r.0.to_string()).collect(),
            max_valence: rows.iter().map(|r| r.1).collect(),
            covalent_radius: rows.iter().map(|r| r.2).collect(),
            mass: rows.iter().map(|r| r.3).collect(),
        }
    }
}

impl AtomVocab {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.symbols.len();
        if n < 2 || self.max_valence.len() != n || self.covalent_radius.len() != n || self.mass.len() != n {
            return Err(Error::InvalidArgument("atom vocabulary tables are inconsistent".into()));
        }
        if self.max_valence.contains(&0) {
            return Err(Error::InvalidArgument("valences must be positive".into()));
        }
        if self.covalent_radius.iter().any(|&r| !(r > 0.3 && r < 1.5)) {
            return Err(Error::InvalidArgument("covalent radii must lie in (0.3, 1.5) Å".into()));
        }
        Ok(())
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s.eq_ignore_ascii_case(symbol))
    }

    /// Maps an element symbol onto the vocabulary; unknown heavy elements land in the catch-all slot.
    pub fn index_or_other(&self, symbol: &str) -> usize {
        self.index_of(symbol).unwrap_or(self.len() - 1)
    }

    pub fn symbol(&self, idx: usize) -> &str {
        &self.symbols[idx]
    }

    /// Symbol to write into structure files (the catch-all slot is emitted as Br).
    pub fn file_symbol(&self, idx: usize) -> &str {
        match self.symbols[idx].as_str() {
            "X" => "Br",
            s => s,
        }
    }
}

/// Bond order categories; index 0 is the absorbing "none" type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondVocab {
    pub names: Vec<String>,
    pub order: Vec<f64>,
    pub none_index: usize,
}

impl Default for BondVocab {
    fn default() -> Self {
        Self {
            names: ["none", "single", "double", "triple", "aromatic"].map(String::from).to_vec(),
            order: vec![0.0, 1.0, 2.0, 3.0, 1.5],
            none_index: 0,
        }
    }
}

impl BondVocab {
    pub const NONE: usize = 0;
    pub const SINGLE: usize = 1;
    pub const DOUBLE: usize = 2;
    pub const TRIPLE: usize = 3;
    pub const AROMATIC: usize = 4;

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.len() < 2 || self.order.len() != self.names.len() || self.none_index >= self.names.len() {
            return Err(Error::InvalidArgument("bond vocabulary tables are inconsistent".into()));
        }
        if self.order.iter().filter(|&&o| o == 0.0).count() != 1 || self.order[self.none_index] != 0.0 {
            return Err(Error::InvalidArgument("exactly one none-type bond is required".into()));
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|s| s.eq_ignore_ascii_case(name))
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    /// MDL V2000 bond type code (aromatic = 4).
    pub fn sdf_code(idx: usize) -> u8 {
        match idx {
            Self::SINGLE => 1,
            Self::DOUBLE => 2,
            Self::TRIPLE => 3,
            Self::AROMATIC => 4,
            _ => 0,
        }
    }
}

/// Standard amino acids (three-letter codes) followed by the unknown slot: 21 categories.
pub const AMINO_ACIDS: [&str; 21] = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE", "LEU", "LYS", "MET", "PHE", "PRO", "SER",
    "THR", "TRP", "TYR", "VAL", "UNK",
];

pub fn amino_acid_index(name: &str) -> usize {
    AMINO_ACIDS[..20]
        .iter()
        .position(|a| a.eq_ignore_ascii_case(name))
        .unwrap_or(20)
}

pub fn is_standard_residue(name: &str) -> bool {
    AMINO_ACIDS[..20].iter().any(|a| a.eq_ignore_ascii_case(name))
}
