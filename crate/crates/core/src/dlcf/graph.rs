use std::collections::BTreeSet;

use crate::chem::distance;
use crate::error::{Error, Result};

/// Augmented graph over `[ligand, P_1, ..., P_K]`.
///
/// Node `i < n_ligand` is a ligand atom; pocket `k` occupies
/// `pocket_offsets[k] .. pocket_offsets[k] + pocket_sizes[k]`.
/// Edges are directed `(receiver, sender)` pairs sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGraph {
    pub n_ligand: usize,
    pub pocket_offsets: Vec<usize>,
    pub pocket_sizes: Vec<usize>,
    /// Complete ligand block, both directions.
    pub ligand_edges: Vec<(usize, usize)>,
    /// Per target: symmetrized kNN edges that involve at least one pocket atom.
    pub target_edges: Vec<Vec<(usize, usize)>>,
}

impl DualGraph {
    pub fn n_targets(&self) -> usize {
        self.target_edges.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_ligand + self.pocket_sizes.iter().sum::<usize>()
    }

    pub fn is_ligand(&self, u: usize) -> bool {
        u < self.n_ligand
    }

    /// Target owning node `u`, or `None` for ligand nodes.
    pub fn target_of(&self, u: usize) -> Option<usize> {
        if u < self.n_ligand {
            return None;
        }
        self.pocket_offsets
            .iter()
            .zip(&self.pocket_sizes)
            .position(|(&o, &s)| u >= o && u < o + s)
    }

    /// Neighbors of `u` in the graph of target `k` (ligand block included).
    pub fn neighbors_in(&self, u: usize, k: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        if self.is_ligand(u) {
            out.extend(self.ligand_edges.iter().filter(|e| e.0 == u).map(|e| e.1));
        }
        out.extend(self.target_edges[k].iter().filter(|e| e.0 == u).map(|e| e.1));
        out.sort_unstable();
        out
    }

    /// Neighbors of `u` on the augmented graph.
    pub fn fused_neighbors(&self, u: usize) -> Vec<usize> {
        let mut out: BTreeSet<usize> = BTreeSet::new();
        out.extend(self.ligand_edges.iter().filter(|e| e.0 == u).map(|e| e.1));
        for edges in &self.target_edges {
            out.extend(edges.iter().filter(|e| e.0 == u).map(|e| e.1));
        }
        out.into_iter().collect()
    }

    /// Index of directed ligand edge `(receiver i, sender j)` in `ligand_edges`.
    pub fn ligand_edge_index(&self, i: usize, j: usize) -> usize {
        ligand_edge_index(self.n_ligand, i, j)
    }
}

/// Position of directed edge `(receiver i, sender j)` in [`complete_ligand_edges`]`(n)`.
pub fn ligand_edge_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < n && j < n);
    i * (n - 1) + if j < i { j } else { j - 1 }
}

pub fn complete_ligand_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// k nearest candidates, ties broken by lower index.
fn nearest(from: &[f64; 3], candidates: impl Iterator<Item = (usize, [f64; 3])>, k: usize) -> Vec<usize> {
    let mut c: Vec<(f64, usize)> = candidates.map(|(i, p)| (distance(from, &p), i)).collect();
    c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    c.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Symmetrized kNN edges of one target. Ligand nodes choose among pocket atoms only;
/// pocket nodes choose among all other nodes of the component.
fn target_knn(ligand: &[[f64; 3]], pocket: &[[f64; 3]], offset: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    let n = ligand.len();
    let nodes = n + pocket.len();
    if k >= nodes {
        return Err(Error::NeighborCount { k, nodes });
    }
    let coord = |g: usize| if g < n { ligand[g] } else { pocket[g - offset] };
    let pocket_ids = || (offset..offset + pocket.len()).map(|g| (g, coord(g)));
    let mut undirected = BTreeSet::new();
    for u in 0..n {
        for w in nearest(&ligand[u], pocket_ids(), k) {
            undirected.insert((u, w));
        }
    }
    for (pi, p) in pocket.iter().enumerate() {
        let u = offset + pi;
        let cands = (0..n).map(|g| (g, coord(g))).chain(pocket_ids()).filter(|&(g, _)| g != u);
        for w in nearest(p, cands, k) {
            undirected.insert((u.min(w), u.max(w)));
        }
    }
    let mut edges: Vec<(usize, usize)> = undirected.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    edges.sort_unstable();
    Ok(edges)
}

/// Builds the per-target kNN graphs from current coordinates and fuses them with the
/// complete ligand block. Pocket atoms never connect across targets.
pub fn fuse_k_targets(ligand_poses: &[&[[f64; 3]]], pockets: &[&[[f64; 3]]], k: usize) -> Result<DualGraph> {
    if ligand_poses.is_empty() || ligand_poses.len() != pockets.len() {
        return Err(Error::SizeMismatch(format!(
            "{} ligand poses for {} pockets",
            ligand_poses.len(),
            pockets.len()
        )));
    }
    let n = ligand_poses[0].len();
    if ligand_poses.iter().any(|p| p.len() != n) {
        return Err(Error::SizeMismatch("ligand poses differ in atom count".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut offsets = Vec::with_capacity(pockets.len());
    let mut next = n;
    for p in pockets {
        if p.is_empty() {
            return Err(Error::InvalidArgument("pocket has no atoms".into()));
        }
        offsets.push(next);
        next += p.len();
    }
    let target_edges = ligand_poses
        .iter()
        .zip(pockets)
        .zip(&offsets)
        .map(|((l, p), &o)| target_knn(l, p, o, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(DualGraph {
        n_ligand: n,
        pocket_offsets: offsets,
        pocket_sizes: pockets.iter().map(|p| p.len()).collect(),
        ligand_edges: complete_ligand_edges(n),
        target_edges,
    })
}

pub fn build_dual_graph(
    x1: &[[f64; 3]],
    x2: &[[f64; 3]],
    p1: &[[f64; 3]],
    p2: &[[f64; 3]],
    k: usize,
) -> Result<DualGraph> {
    fuse_k_targets(&[x1, x2], &[p1, p2], k)
}
