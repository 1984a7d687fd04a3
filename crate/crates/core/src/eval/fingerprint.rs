use std::collections::BTreeSet;

use crate::chem::LigandGraph;
use crate::error::{Error, Result};
use crate::numerics::mix64;

/// Longest bonded path (in bonds) contributing to a fingerprint.
pub const MAX_PATH_BONDS: usize = 3;
/// Folded fingerprint width.
pub const FINGERPRINT_BITS: usize = 1024;

fn label_hash(label: &[u64]) -> u64 {
    label.iter().fold(0x9e37_79b9_7f4a_7c15, |h, &x| mix64(h ^ mix64(x)))
}

/// Hashes of every simple bonded path with 0..=3 bonds, labelled by atom types and bond
/// types and read in the lexicographically smaller direction.
pub fn path_features(g: &LigandGraph) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    let mut path = Vec::new();
    for start in 0..g.n_atoms() {
        path.push(start);
        walk(g, &mut path, &mut out);
        path.pop();
    }
    out
}

fn walk(g: &LigandGraph, path: &mut Vec<usize>, out: &mut BTreeSet<u64>) {
    out.insert(path_label(g, path));
    if path.len() > MAX_PATH_BONDS {
        return;
    }
    let last = *path.last().expect("nonempty path");
    for (next, _) in g.neighbors(last) {
        if !path.contains(&next) {
            path.push(next);
            walk(g, path, out);
            path.pop();
        }
    }
}

fn path_label(g: &LigandGraph, path: &[usize]) -> u64 {
    let encode = |p: &mut dyn Iterator<Item = &usize>| {
        let p: Vec<usize> = p.copied().collect();
        let mut l = Vec::with_capacity(2 * p.len());
        for (i, &a) in p.iter().enumerate() {
            if i > 0 {
                l.push(100 + g.bond(p[i - 1], a) as u64);
            }
            l.push(g.atom(a) as u64);
        }
        l
    };
    let fwd = encode(&mut path.iter());
    let rev = encode(&mut path.iter().rev());
    label_hash(fwd.min(rev).as_slice())
}

/// Path features folded into [`FINGERPRINT_BITS`] bits.
pub fn fingerprint(g: &LigandGraph) -> BTreeSet<usize> {
    path_features(g)
        .into_iter()
        .map(|h| (h % FINGERPRINT_BITS as u64) as usize)
        .collect()
}

/// `1 − |A∩B| / |A∪B|`; two empty sets are at distance 0.
pub fn tanimoto_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - a.intersection(b).count() as f64 / union as f64
}

fn mean_pairwise<T: Ord>(fps: &[BTreeSet<T>]) -> Result<f64> {
    if fps.len() < 2 {
        return Err(Error::InvalidArgument("diversity needs at least two graphs".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..fps.len() {
        for j in i + 1..fps.len() {
            total += tanimoto_distance(&fps[i], &fps[j]);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean pairwise Tanimoto distance of folded path fingerprints.
pub fn diversity(graphs: &[LigandGraph]) -> Result<f64> {
    mean_pairwise(&graphs.iter().map(fingerprint).collect::<Vec<_>>())
}

/// As [`diversity`] on unfolded path features (no bit collisions).
pub fn diversity_unfolded(graphs: &[LigandGraph]) -> Result<f64> {
    mean_pairwise(&graphs.iter().map(path_features).collect::<Vec<_>>())
}
