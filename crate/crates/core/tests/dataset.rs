use std::collections::HashMap;

use fuse_core::chem::{graphs_isomorphic, write_jsonl};
use fuse_core::dataset::{
    derive_from_jsonl, derive_pairs, generate_records, pockets_distinct, ComplexRecord, DualInstance, MockConfig,
    POCKET_CUTOFF,
};
use proptest::prelude::*;

/// Checks an instance against the records it claims to come from.
fn reverify(m: &DualInstance, by_id: &HashMap<&str, &ComplexRecord>) -> Result<(), String> {
    m.validate().map_err(|e| e.to_string())?;
    for (k, src) in m.sources.iter().enumerate() {
        let r = by_id.get(src.as_str()).ok_or(format!("unknown source {src}"))?;
        let map = graphs_isomorphic(&m.graph, &r.ligand).ok_or(format!("{src} is not isomorphic"))?;
        for (i, &j) in map.iter().enumerate() {
            if m.poses[k].0[i] != r.pose.0[j] {
                return Err(format!("pose {k} row {i} is not record row {j}"));
            }
        }
        if m.pockets[k].id != r.target {
            return Err(format!("pocket {k} is {} but record target is {}", m.pockets[k].id, r.target));
        }
    }
    if !pockets_distinct(&m.pockets[0], &m.pockets[1]) {
        return Err("pockets are not distinct".into());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn derived_count_is_combinatorial(ligands in 1usize..5, targets in 1usize..5, per in 1usize..5, seed in 0u64..1000) {
        let cfg = MockConfig { ligands, targets, targets_per_ligand: per, seed, max_atoms: 8, ..MockConfig::default() };
        let records = generate_records(&cfg).unwrap();
        let (pairs, report) = derive_pairs(&records, POCKET_CUTOFF);
        prop_assert_eq!(pairs.len(), cfg.expected_pairs());
        prop_assert_eq!(report.tuples, pairs.len());
        prop_assert_eq!(report.total_ligands, ligands);
        let by_id: HashMap<&str, &ComplexRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
        for m in &pairs {
            prop_assert!(reverify(m, &by_id).is_ok(), "{:?}", reverify(m, &by_id));
        }
    }
}

#[test]
fn jsonl_path_counts_bad_lines() {
    let cfg = MockConfig { ligands: 2, targets: 2, ..MockConfig::default() };
    let records = generate_records(&cfg).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records).unwrap();
    buf.extend_from_slice(b"{not json}\n");
    let (pairs, report) = derive_from_jsonl(buf.as_slice(), POCKET_CUTOFF).unwrap();
    assert_eq!(pairs.len(), 2);
    assert_eq!(report.parse_failures, 1);
    assert_eq!(report.records_read, 5);
}

#[test]
fn repeated_occurrence_under_one_target_is_not_a_pair() {
    let cfg = MockConfig { ligands: 1, targets: 1, ..MockConfig::default() };
    let mut records = generate_records(&cfg).unwrap();
    let mut dup = records[0].clone();
    dup.id.push_str("-again");
    records.push(dup);
    let (pairs, report) = derive_pairs(&records, POCKET_CUTOFF);
    assert!(pairs.is_empty());
    assert_eq!(report.duplicate_occurrences, 1);
}

#[test]
fn invalid_records_are_skipped() {
    let cfg = MockConfig { ligands: 1, targets: 2, ..MockConfig::default() };
    let mut records = generate_records(&cfg).unwrap();
    let mut broken = records[0].clone();
    broken.id = "broken".into();
    broken.pose.0.pop();
    records.push(broken);
    let (pairs, report) = derive_pairs(&records, POCKET_CUTOFF);
    assert_eq!(pairs.len(), 1);
    assert_eq!(report.invalid_records, 1);
}
