use serde::{Deserialize, Serialize};

use crate::chem::{
    canonical_hash, distance, graphs_isomorphic, validate_assembly, AtomVocab, BondVocab, LigandGraph, Pose,
    ValidityConfig, AMINO_ACIDS,
};
use crate::dataset::records::{extract_pocket, ComplexRecord, ProteinAtom};
use crate::error::{Error, Result};
use crate::numerics::geom::{random_rotation, rotate, transform};
use crate::numerics::Rng;

/// Synthetic complex generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub ligands: usize,
    pub targets: usize,
    /// How many targets each ligand is planted in (capped at `targets`).
    pub targets_per_ligand: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
    /// Residue count per binding site.
    pub site_residues: [usize; 2],
    pub seed: u64,
    /// Attempts allowed per rejection-sampled object.
    pub budget: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            ligands: 5,
            targets: 3,
            targets_per_ligand: usize::MAX,
            min_atoms: 5,
            max_atoms: 10,
            site_residues: [5, 8],
            seed: 0,
            budget: 500,
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ligands == 0 || self.targets == 0 || self.targets_per_ligand == 0 {
            return Err(Error::InvalidArgument("ligand and target counts must be at least 1".into()));
        }
        if self.min_atoms == 0 || self.min_atoms > self.max_atoms {
            return Err(Error::InvalidArgument("atom range must satisfy 1 <= min <= max".into()));
        }
        if self.max_atoms > 16 {
            return Err(Error::InvalidArgument("mock ligands are limited to 16 atoms".into()));
        }
        if self.site_residues[0] == 0 || self.site_residues[0] > self.site_residues[1] {
            return Err(Error::InvalidArgument("site residue range must satisfy 1 <= min <= max".into()));
        }
        Ok(())
    }

    /// Number of instances `derive_pairs` should produce for this configuration.
    pub fn expected_pairs(&self) -> usize {
        let k = self.targets_per_ligand.min(self.targets);
        self.ligands * k * k.saturating_sub(1) / 2
    }
}

const MIN_NONBONDED: f64 = 2.0;
const NONBONDED_FACTOR: f64 = 1.3;
const MIN_BOND_ANGLE_COS: f64 = -0.2588; // 105 degrees
const CLASH: f64 = 3.0;
const POCKET_SIZE: [usize; 2] = [20, 60];

/// Random acyclic heavy-atom graph with at most three neighbors per atom.
fn random_tree(n: usize, rng: &mut Rng) -> LigandGraph {
    let av = AtomVocab::default();
    // C N O F S Cl weights; terminal-only elements are handled below
    let weights = [0.62, 0.14, 0.14, 0.04, 0.0, 0.03, 0.03, 0.0];
    let mut atoms = vec![0usize; n];
    let mut g = LigandGraph::new(atoms.clone());
    let mut used = vec![0.0f64; n];
    for i in 1..n {
        let t = rng.categorical(&weights);
        atoms[i] = t;
        let parents: Vec<usize> = (0..i)
            .filter(|&p| {
                let cap = av.max_valence[atoms[p]] as f64;
                av.max_valence[atoms[p]] > 1 && used[p] + 1.0 <= cap && g.degree(p) < 3
            })
            .collect();
        let p = if parents.is_empty() {
            atoms[i] = 0;
            (0..i).find(|&p| g.degree(p) < 3 && av.max_valence[atoms[p]] > 1).unwrap_or(0)
        } else {
            parents[rng.below(parents.len())]
        };
        let cap_p = av.max_valence[atoms[p]] as f64 - used[p];
        let cap_i = av.max_valence[atoms[i]] as f64;
        let b = if cap_p >= 2.0 && cap_i >= 2.0 && rng.bernoulli(0.2) {
            BondVocab::DOUBLE
        } else {
            BondVocab::SINGLE
        };
        let order = if b == BondVocab::DOUBLE { 2.0 } else { 1.0 };
        used[p] += order;
        used[i] += order;
        g.set_atom(i, atoms[i]);
        g.set_bond(p, i, b).expect("valid pair");
    }
    g
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|x| x / n)
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Places atoms outward from atom 0 with plausible bond lengths and angles; centered at the origin.
fn embed(g: &LigandGraph, rng: &mut Rng, budget: usize) -> Option<Pose> {
    let cfg = ValidityConfig::default();
    let n = g.n_atoms();
    let mut pos: Vec<Option<[f64; 3]>> = vec![None; n];
    pos[0] = Some([0.0; 3]);
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let pu = pos[u].expect("placed");
        for (w, _) in g.neighbors(u) {
            if pos[w].is_some() {
                continue;
            }
            let len = cfg.radii_sum(g.atom(u), g.atom(w)) * rng.uniform_range(0.97, 1.03);
            let mut placed = false;
            for _ in 0..budget {
                let d = unit([rng.normal(), rng.normal(), rng.normal()]);
                let angle_ok = g.neighbors(u).iter().filter_map(|&(z, _)| pos[z]).all(|pz| {
                    dot(&unit(sub(&pz, &pu)), &d) <= MIN_BOND_ANGLE_COS
                });
                if !angle_ok {
                    continue;
                }
                let cand = [pu[0] + len * d[0], pu[1] + len * d[1], pu[2] + len * d[2]];
                let clear = (0..n).filter(|&z| z != u && z != w).all(|z| match pos[z] {
                    Some(pz) => {
                        let r = cfg.radii_sum(g.atom(z), g.atom(w));
                        distance(&pz, &cand) >= (NONBONDED_FACTOR * r).max(MIN_NONBONDED)
                    }
                    None => true,
                });
                if clear {
                    pos[w] = Some(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return None;
            }
            queue.push_back(w);
        }
    }
    let pts: Vec<[f64; 3]> = pos.into_iter().map(|p| p.expect("tree is connected")).collect();
    let c = crate::chem::centroid(&pts);
    Some(Pose(pts.iter().map(|p| sub(p, &c)).collect()))
}

fn side_chain(res: &str) -> &'static [&'static str] {
    match res {
        "GLY" => &[],
        "ALA" => &["C"],
        "SER" => &["C", "O"],
        "CYS" => &["C", "S"],
        "THR" | "VAL" => &["C", "C", "O"],
        "ASP" | "ASN" => &["C", "C", "O", "O"],
        "LYS" | "ARG" => &["C", "C", "C", "N"],
        "MET" => &["C", "C", "S", "C"],
        _ => &["C", "C", "C"],
    }
}

fn residue_atoms(center: [f64; 3], res: &str, rid: i64, rng: &mut Rng) -> Vec<ProteinAtom> {
    ["N", "C", "C", "O"]
        .iter()
        .chain(side_chain(res))
        .map(|el| ProteinAtom {
            element: el.to_string(),
            residue: res.to_string(),
            residue_id: rid,
            chain: "A".into(),
            coord: [
                center[0] + rng.uniform_range(-1.6, 1.6),
                center[1] + rng.uniform_range(-1.6, 1.6),
                center[2] + rng.uniform_range(-1.6, 1.6),
            ],
        })
        .collect()
}

/// A binding site shell around the origin plus distant residues and one water.
fn protein_template(cfg: &MockConfig, rng: &mut Rng) -> Vec<ProteinAtom> {
    let mut atoms = Vec::new();
    let n_site = rng.between(cfg.site_residues[0], cfg.site_residues[1]);
    let mut rid = 1;
    for _ in 0..n_site {
        let d = unit([rng.normal(), rng.normal(), rng.normal()]);
        let r = rng.uniform_range(8.0, 10.5);
        let res = AMINO_ACIDS[rng.below(20)];
        atoms.extend(residue_atoms(d.map(|x| x * r), res, rid, rng));
        rid += 1;
    }
    for _ in 0..3 {
        let d = unit([rng.normal(), rng.normal(), rng.normal()]);
        let r = rng.uniform_range(24.0, 30.0);
        let res = AMINO_ACIDS[rng.below(20)];
        atoms.extend(residue_atoms(d.map(|x| x * r), res, rid, rng));
        rid += 1;
    }
    let d = unit([rng.normal(), rng.normal(), rng.normal()]);
    atoms.push(ProteinAtom {
        element: "O".into(),
        residue: "HOH".into(),
        residue_id: 900,
        chain: "W".into(),
        coord: d.map(|x| x * 7.5),
    });
    atoms
}

fn clashes(pose: &Pose, protein: &[ProteinAtom]) -> bool {
    pose.0
        .iter()
        .any(|l| protein.iter().any(|a| distance(l, &a.coord) < CLASH))
}

/// Generates distinct valid ligands, each planted in several targets with an independent
/// conformer, random rigid frame and random atom order per record.
pub fn generate_records(cfg: &MockConfig) -> Result<Vec<ComplexRecord>> {
    cfg.validate()?;
    let vcfg = ValidityConfig::default();
    let mut rng = Rng::derive(cfg.seed, &[0x4d4f_434b]);

    let mut templates = Vec::with_capacity(cfg.targets);
    for t in 0..cfg.targets {
        let mut placed = None;
        for _ in 0..cfg.budget {
            let tpl = protein_template(cfg, &mut rng);
            let probe = ComplexRecord {
                id: String::new(),
                target: format!("T{t}"),
                ligand: LigandGraph::new(vec![0]),
                pose: Pose(vec![[0.0; 3]]),
                protein: tpl.clone(),
            };
            let n = extract_pocket(&probe, 10.0).map(|p| p.len()).unwrap_or(0);
            if (POCKET_SIZE[0]..=POCKET_SIZE[1]).contains(&n) && !clashes(&Pose(vec![[0.0; 3]]), &tpl) {
                placed = Some(tpl);
                break;
            }
        }
        templates.push(placed.ok_or(Error::RejectionBudget(cfg.budget))?);
    }

    let mut ligands: Vec<LigandGraph> = Vec::new();
    let mut attempts = 0;
    while ligands.len() < cfg.ligands {
        attempts += 1;
        if attempts > cfg.budget * cfg.ligands {
            return Err(Error::RejectionBudget(cfg.budget));
        }
        let n = rng.between(cfg.min_atoms, cfg.max_atoms);
        let g = random_tree(n, &mut rng);
        let h = canonical_hash(&g);
        if ligands
            .iter()
            .any(|o| canonical_hash(o) == h && graphs_isomorphic(o, &g).is_some())
        {
            continue;
        }
        ligands.push(g);
    }

    let per = cfg.targets_per_ligand.min(cfg.targets);
    let mut records = Vec::new();
    for (li, g) in ligands.iter().enumerate() {
        for k in 0..per {
            let t = (li + k) % cfg.targets;
            let mut pose = None;
            for _ in 0..cfg.budget {
                let Some(x) = embed(g, &mut rng, cfg.budget) else { continue };
                if !validate_assembly(g, &x, &vcfg)?.valid {
                    continue;
                }
                let r = random_rotation(&mut rng);
                let x = Pose(x.0.iter().map(|p| rotate(&r, p)).collect());
                // pockets must be 20-60 atoms around this particular pose
                let probe = ComplexRecord {
                    id: String::new(),
                    target: format!("T{t}"),
                    ligand: g.clone(),
                    pose: x.clone(),
                    protein: templates[t].clone(),
                };
                let size_ok = extract_pocket(&probe, 10.0)
                    .map(|p| (POCKET_SIZE[0]..=POCKET_SIZE[1]).contains(&p.len()))
                    .unwrap_or(false);
                if size_ok && !clashes(&x, &templates[t]) {
                    pose = Some(x);
                    break;
                }
            }
            let pose = pose.ok_or(Error::RejectionBudget(cfg.budget))?;

            let frame = random_rotation(&mut rng);
            let shift = [
                rng.uniform_range(-20.0, 20.0),
                rng.uniform_range(-20.0, 20.0),
                rng.uniform_range(-20.0, 20.0),
            ];
            let mut order: Vec<usize> = (0..g.n_atoms()).collect();
            rng.shuffle(&mut order);
            let protein = templates[t]
                .iter()
                .zip(transform(&frame, shift, &templates[t].iter().map(|a| a.coord).collect::<Vec<_>>()))
                .map(|(a, c)| ProteinAtom { coord: c, ..a.clone() })
                .collect();
            records.push(ComplexRecord {
                id: format!("L{li}_T{t}"),
                target: format!("T{t}"),
                ligand: g.permuted(&order),
                pose: Pose(transform(&frame, shift, &pose.permuted(&order).0)),
                protein,
            });
        }
    }
    Ok(records)
}
