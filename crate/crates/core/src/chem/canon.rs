use crate::chem::graph::LigandGraph;
use crate::numerics::mix64;

fn combine(h: u64, x: u64) -> u64 {
    mix64(h ^ mix64(x.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Per-atom colors after `rounds` of neighborhood refinement.
///
/// Colors depend only on atom types and the multiset of (bond type, neighbor color),
/// so they are comparable between graphs.
pub fn refined_colors(g: &LigandGraph, rounds: usize) -> Vec<u64> {
    let n = g.n_atoms();
    let adj: Vec<Vec<(usize, usize)>> = (0..n).map(|i| g.neighbors(i)).collect();
    let mut colors: Vec<u64> = g.atoms().iter().map(|&a| combine(0x5eed, a as u64)).collect();
    for _ in 0..rounds {
        let next = (0..n)
            .map(|i| {
                let mut nb: Vec<u64> = adj[i]
                    .iter()
                    .map(|&(j, b)| combine(b as u64 + 1, colors[j]))
                    .collect();
                nb.sort_unstable();
                nb.into_iter().fold(combine(colors[i], adj[i].len() as u64), combine)
            })
            .collect();
        colors = next;
    }
    colors
}

/// Permutation-invariant 64-bit label. Equal for isomorphic graphs; collisions are possible.
pub fn canonical_hash(g: &LigandGraph) -> u64 {
    let mut colors = refined_colors(g, g.n_atoms());
    colors.sort_unstable();
    let bonds = g.bond_list();
    let mut bond_keys: Vec<u64> = bonds.iter().map(|&(_, _, b)| b as u64).collect();
    bond_keys.sort_unstable();
    let h = combine(g.n_atoms() as u64, bonds.len() as u64);
    let h = colors.into_iter().fold(h, combine);
    bond_keys.into_iter().fold(h, combine)
}

/// Finds a bijection `m` with `g1.atom(i) == g2.atom(m[i])` and `g1.bond(i, j) == g2.bond(m[i], m[j])`.
///
/// Atoms of `g1` are assigned in index order and candidates tried in ascending order,
/// so the returned mapping is the lexicographically smallest valid one.
pub fn graphs_isomorphic(g1: &LigandGraph, g2: &LigandGraph) -> Option<Vec<usize>> {
    let n = g1.n_atoms();
    if n != g2.n_atoms() || g1.bond_list().len() != g2.bond_list().len() {
        return None;
    }
    let c1 = refined_colors(g1, n);
    let c2 = refined_colors(g2, n);
    let (mut s1, mut s2) = (c1.clone(), c2.clone());
    s1.sort_unstable();
    s2.sort_unstable();
    if s1 != s2 {
        return None;
    }
    let mut mapping = vec![usize::MAX; n];
    let mut used = vec![false; n];
    search(g1, g2, &c1, &c2, 0, &mut mapping, &mut used).then_some(mapping)
}

fn search(
    g1: &LigandGraph,
    g2: &LigandGraph,
    c1: &[u64],
    c2: &[u64],
    i: usize,
    mapping: &mut [usize],
    used: &mut [bool],
) -> bool {
    let n = g1.n_atoms();
    if i == n {
        return true;
    }
    for j in 0..n {
        if used[j] || c1[i] != c2[j] || g1.atom(i) != g2.atom(j) {
            continue;
        }
        if (0..i).any(|p| g1.bond(i, p) != g2.bond(j, mapping[p])) {
            continue;
        }
        mapping[i] = j;
        used[j] = true;
        if search(g1, g2, c1, c2, i + 1, mapping, used) {
            return true;
        }
        used[j] = false;
    }
    mapping[i] = usize::MAX;
    false
}
