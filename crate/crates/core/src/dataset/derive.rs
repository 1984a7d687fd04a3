use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::chem::{canonical_hash, graphs_isomorphic, read_jsonl, Pocket};
use crate::dataset::records::{extract_pocket, pockets_distinct, ComplexRecord, DualInstance};
use crate::error::Result;

/// Counts per derivation stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivationReport {
    pub records_read: usize,
    pub parse_failures: usize,
    pub invalid_records: usize,
    pub pocket_failures: usize,
    /// Distinct ligands after isomorphism confirmation.
    pub total_ligands: usize,
    /// Hash buckets that split into several isomorphism classes.
    pub hash_collisions: usize,
    /// Extra occurrences of a ligand under a target it was already seen with.
    pub duplicate_occurrences: usize,
    pub multi_target_ligands: usize,
    pub tuples: usize,
    pub pocket_cutoff: f64,
    pub notes: Vec<String>,
}

struct Occurrence {
    record: usize,
    pocket: Pocket,
}

/// Groups records by ligand identity and emits one instance per unordered pair of targets
/// sharing a ligand. Pose 2 is re-indexed so both poses follow the first ligand's atom order.
pub fn derive_pairs(records: &[ComplexRecord], cutoff: f64) -> (Vec<DualInstance>, DerivationReport) {
    let mut report = DerivationReport {
        records_read: records.len(),
        pocket_cutoff: cutoff,
        notes: vec!["pocket distinctness uses target identifiers only; no geometric near-duplicate screening".into()],
        ..Default::default()
    };

    // hash -> isomorphism classes (each a list of record indices, first is the class reference)
    let mut buckets: HashMap<u64, Vec<Vec<usize>>> = HashMap::new();
    let mut class_order: Vec<(u64, usize)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.validate().is_err() {
            report.invalid_records += 1;
            continue;
        }
        let h = canonical_hash(&r.ligand);
        let classes = buckets.entry(h).or_default();
        match classes
            .iter_mut()
            .find(|c| graphs_isomorphic(&records[c[0]].ligand, &r.ligand).is_some())
        {
            Some(c) => c.push(i),
            None => {
                class_order.push((h, classes.len()));
                classes.push(vec![i]);
            }
        }
    }
    report.total_ligands = class_order.len();
    report.hash_collisions = buckets.values().filter(|c| c.len() > 1).count();

    let mut out = Vec::new();
    let mut seen_pairs = HashSet::new();
    for (h, ci) in class_order {
        let members = &buckets[&h][ci];
        let mut reps: Vec<Occurrence> = Vec::new();
        let mut targets = HashSet::new();
        for &i in members {
            if !targets.insert(records[i].target.clone()) {
                report.duplicate_occurrences += 1;
                continue;
            }
            match extract_pocket(&records[i], cutoff) {
                Ok(pocket) => reps.push(Occurrence { record: i, pocket }),
                Err(_) => report.pocket_failures += 1,
            }
        }
        if reps.len() >= 2 {
            report.multi_target_ligands += 1;
        }
        for a in 0..reps.len() {
            for b in a + 1..reps.len() {
                let (ra, rb) = (&records[reps[a].record], &records[reps[b].record]);
                if !pockets_distinct(&reps[a].pocket, &reps[b].pocket) {
                    continue;
                }
                let key = if ra.id <= rb.id {
                    (ra.id.clone(), rb.id.clone())
                } else {
                    (rb.id.clone(), ra.id.clone())
                };
                if !seen_pairs.insert(key) {
                    continue;
                }
                let Some(mapping) = graphs_isomorphic(&ra.ligand, &rb.ligand) else {
                    continue;
                };
                out.push(DualInstance {
                    graph: ra.ligand.clone(),
                    poses: vec![ra.pose.clone(), rb.pose.permuted(&mapping)],
                    pockets: vec![reps[a].pocket.clone(), reps[b].pocket.clone()],
                    sources: vec![ra.id.clone(), rb.id.clone()],
                });
            }
        }
    }
    report.tuples = out.len();
    (out, report)
}

/// Parses JSON-Lines records, counting unparseable lines, then runs [`derive_pairs`].
pub fn derive_from_jsonl(reader: impl BufRead, cutoff: f64) -> Result<(Vec<DualInstance>, DerivationReport)> {
    let mut records = Vec::new();
    let mut failures = 0;
    for r in read_jsonl::<ComplexRecord>(reader) {
        match r {
            Ok(r) => records.push(r),
            Err(crate::Error::Io(e)) => return Err(e.into()),
            Err(_) => failures += 1,
        }
    }
    let (out, mut report) = derive_pairs(&records, cutoff);
    report.parse_failures = failures;
    report.records_read += failures;
    Ok((out, report))
}
