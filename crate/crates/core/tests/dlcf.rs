use fuse_core::chem::{num_pairs, LigandGraph, Pocket, Pose};
use fuse_core::dataset::DualInstance;
use fuse_core::dlcf::{ligand_pair_statistics, DenoiserModel, ModelConfig};
use fuse_core::eval::random_problem;
use fuse_core::numerics::geom::{random_rotation, transform};
use fuse_core::numerics::{finite_diff_check_with, Rng, Tape};
use fuse_core::schedule::{forward_sample, NoiseSchedule, NoisyState};
use fuse_core::train::{loss_on_tape, LossWeights};

const T: usize = 100;

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn pose_dev(a: &Pose, b: &Pose) -> f64 {
    a.0.iter().zip(&b.0).map(|(p, q)| max_dev(p, q)).fold(0.0, f64::max)
}

fn centered_pocket(rng: &mut Rng, size: usize, n_types: usize) -> Pocket {
    let mut coords: Vec<[f64; 3]> = (0..size).map(|_| [rng.normal() * 3.0, rng.normal() * 3.0, rng.normal() * 3.0]).collect();
    let c = fuse_core::chem::centroid(&coords);
    for p in &mut coords {
        for d in 0..3 {
            p[d] -= c[d];
        }
    }
    Pocket {
        id: format!("p{size}"),
        coords,
        elements: (0..size).map(|_| rng.below(n_types)).collect(),
        residues: (0..size).map(|_| rng.below(20)).collect(),
        residue_ids: (0..size as i64).collect(),
    }
}

fn centered_problem(model: &DenoiserModel, n: usize, sizes: &[usize], rng: &mut Rng) -> (NoisyState, Vec<Pocket>) {
    let c = &model.config;
    let pockets: Vec<Pocket> = sizes.iter().map(|&s| centered_pocket(rng, s, c.n_atom_types)).collect();
    let state = NoisyState {
        t: rng.between(1, T),
        atoms: (0..n).map(|_| rng.below(c.n_atom_types)).collect(),
        bonds: (0..num_pairs(n)).map(|_| rng.below(c.n_bond_types)).collect(),
        positions: sizes
            .iter()
            .map(|_| Pose((0..n).map(|_| [rng.normal() * 1.5, rng.normal() * 1.5, rng.normal() * 1.5]).collect()))
            .collect(),
    };
    (state, pockets)
}

#[test]
fn outputs_are_simplices() {
    let model = DenoiserModel::new(ModelConfig::small(), 3).unwrap();
    let mut rng = Rng::new(1);
    for _ in 0..5 {
        let (state, pockets) = centered_problem(&model, 7, &[15, 20], &mut rng);
        let out = model.denoise(&state, &pockets, T).unwrap();
        for probs in [&out.atom_probs, &out.bond_probs] {
            let k = probs.cols();
            for row in probs.data().chunks(k) {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(out.bond_probs.data().len(), num_pairs(7) * model.config.n_bond_types);
    }
}

#[test]
fn swapping_targets_swaps_poses() {
    let model = DenoiserModel::new(ModelConfig::small(), 4).unwrap();
    let mut rng = Rng::new(2);
    for _ in 0..10 {
        let (state, pockets) = centered_problem(&model, 6, &[14, 19], &mut rng);
        let a = model.denoise(&state, &pockets, T).unwrap();
        let swapped: Vec<Pocket> = vec![pockets[1].clone(), pockets[0].clone()];
        let b = model.denoise(&state.reordered(&[1, 0]), &swapped, T).unwrap();
        assert!(max_dev(a.atom_probs.data(), b.atom_probs.data()) < 1e-12);
        assert!(max_dev(a.bond_probs.data(), b.bond_probs.data()) < 1e-12);
        assert!(pose_dev(&a.positions[0], &b.positions[1]) < 1e-12);
        assert!(pose_dev(&a.positions[1], &b.positions[0]) < 1e-12);
    }
}

#[test]
fn rotating_one_complex_rotates_its_pose_only() {
    let model = DenoiserModel::new(ModelConfig::small(), 5).unwrap();
    let mut rng = Rng::new(3);
    for _ in 0..10 {
        let (state, pockets) = centered_problem(&model, 6, &[14, 19], &mut rng);
        let base = model.denoise(&state, &pockets, T).unwrap();
        let r = random_rotation(&mut rng);
        let mut moved = state.clone();
        moved.positions[1] = Pose(transform(&r, [0.0; 3], &state.positions[1].0));
        let mut mp = pockets.clone();
        mp[1].coords = transform(&r, [0.0; 3], &pockets[1].coords);
        let out = model.denoise(&moved, &mp, T).unwrap();
        assert!(pose_dev(&out.positions[0], &base.positions[0]) < 1e-9);
        assert!(pose_dev(&out.positions[1], &Pose(transform(&r, [0.0; 3], &base.positions[1].0))) < 1e-9);
        assert!(max_dev(out.atom_probs.data(), base.atom_probs.data()) < 1e-12);
    }
}

#[test]
fn three_target_model_is_permutation_equivariant() {
    let cfg = ModelConfig {
        targets: 3,
        ..ModelConfig::small()
    };
    let model = DenoiserModel::new(cfg, 6).unwrap();
    let mut rng = Rng::new(4);
    let (state, pockets) = centered_problem(&model, 5, &[12, 15, 18], &mut rng);
    let base = model.denoise(&state, &pockets, T).unwrap();
    for order in [[1, 2, 0], [2, 0, 1], [0, 2, 1]] {
        let p: Vec<Pocket> = order.iter().map(|&k| pockets[k].clone()).collect();
        let out = model.denoise(&state.reordered(&order), &p, T).unwrap();
        assert!(max_dev(out.atom_probs.data(), base.atom_probs.data()) < 1e-12);
        for (pos, &k) in order.iter().enumerate() {
            assert!(pose_dev(&out.positions[pos], &base.positions[k]) < 1e-12);
        }
    }
}

#[test]
fn other_target_influences_pose() {
    let model = DenoiserModel::new(ModelConfig::small(), 7).unwrap();
    let mut rng = Rng::new(5);
    let (state, pockets) = centered_problem(&model, 6, &[14, 19], &mut rng);
    let base = model.denoise(&state, &pockets, T).unwrap();
    let mut nudged = state.clone();
    nudged.positions[1].0[2][0] += 0.1;
    let out = model.denoise(&nudged, &pockets, T).unwrap();
    assert!(pose_dev(&out.positions[0], &base.positions[0]) > 1e-8);
}

#[test]
fn pair_statistics_examples() {
    let (m, g) = ligand_pair_statistics(&[2.0, 5.0]);
    assert_eq!(m, 3.5);
    assert_eq!(g, vec![3.0]);
    let (m, g) = ligand_pair_statistics(&[1.0, 4.0, 2.0]);
    assert!((m - 7.0 / 3.0).abs() < 1e-15);
    assert_eq!(g, vec![1.0, 2.0, 3.0]);
    assert_eq!(ligand_pair_statistics(&[1.5]), (1.5, vec![0.0]));
    assert_eq!(ligand_pair_statistics(&[5.0, 2.0]), ligand_pair_statistics(&[2.0, 5.0]));
}

#[test]
fn rejects_bad_inputs() {
    let model = DenoiserModel::new(ModelConfig::small(), 8).unwrap();
    let mut rng = Rng::new(6);
    let (state, pockets) = centered_problem(&model, 5, &[14, 19], &mut rng);
    assert!(model.denoise(&state, &pockets[..1], T).is_err());
    let mut bad = state.clone();
    bad.t = 0;
    assert!(model.denoise(&bad, &pockets, T).is_err());
    let mut bad = state.clone();
    bad.atoms[0] = model.config.n_atom_types;
    assert!(model.denoise(&bad, &pockets, T).is_err());
    let mut bad = state;
    bad.bonds.pop();
    assert!(model.denoise(&bad, &pockets, T).is_err());
}

#[test]
fn uncentered_problems_from_the_harness_are_accepted() {
    let model = DenoiserModel::new(ModelConfig::small(), 9).unwrap();
    let mut rng = Rng::new(7);
    let p = random_problem(&model, T, &mut rng);
    assert!(fuse_core::eval::denoise_in_frames(&model, &p.state, &p.pockets, T).is_ok());
}

/// Loss of the full denoiser on a 6-atom ligand between two 5-atom pockets.
fn gradcheck_fixture(seed: u64) -> (DenoiserModel, DualInstance, NoisyState, NoiseSchedule) {
    let model = DenoiserModel::new(ModelConfig::small(), seed).unwrap();
    let mut rng = Rng::new(seed);
    let n = 6;
    let pockets: Vec<Pocket> = (0..2).map(|_| centered_pocket(&mut rng, 5, model.config.n_atom_types)).collect();
    let graph = LigandGraph::from_bond_list(
        (0..n).map(|_| rng.below(4)).collect(),
        &[(0, 1, 1), (1, 2, 1), (2, 3, 2), (3, 4, 1), (4, 5, 1)],
    )
    .unwrap();
    let m0 = DualInstance {
        graph,
        poses: (0..2)
            .map(|_| Pose((0..n).map(|i| [i as f64 * 1.4 + 0.3 * rng.normal() - 3.5, rng.normal(), rng.normal()]).collect()))
            .collect(),
        pockets,
        sources: vec!["a".into(), "b".into()],
    };
    let sched = NoiseSchedule::cosine(T).unwrap();
    let state = forward_sample(&m0, 30, &sched, model.config.n_atom_types, &mut rng).unwrap();
    (model, m0, state, sched)
}

#[test]
fn gradients_match_central_differences() {
    let (model, m0, state, sched) = gradcheck_fixture(11);
    let w = LossWeights::default();
    let store = &model.params;
    let report = finite_diff_check_with(
        |tape: &mut Tape, params| {
            let mut m = model.clone();
            m.params = params.clone();
            let vars = m.forward(tape, &state, &m0.pockets, T)?;
            Ok(loss_on_tape(tape, &vars, &m0, &state, &w, &sched)?.0)
        },
        store,
        |id, k| k % (store.value(id).len() / 6).max(1) == 0,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.pass, "{report:?}");
    assert!(report.coordinates > 300);
}
