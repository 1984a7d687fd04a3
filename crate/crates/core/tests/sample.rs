use std::sync::OnceLock;

use fuse_core::chem::Pose;
use fuse_core::dataset::{derive_pairs, generate_records, DualInstance, MockConfig, POCKET_CUTOFF};
use fuse_core::dlcf::DenoiserOutput;
use fuse_core::numerics::Tensor;
use fuse_core::sample::{
    generate, generate_with_order, reverse_step, AtomCount, SampleConfig, SampleMode, SampleStreams,
};
use fuse_core::schedule::{categorical_posterior, Channel, NoiseSchedule, NoisyState};
use fuse_core::train::{fit, Checkpoint, TrainConfig};
use fuse_core::Error;

const T: usize = 20;

fn data() -> &'static Vec<DualInstance> {
    static D: OnceLock<Vec<DualInstance>> = OnceLock::new();
    D.get_or_init(|| {
        let records = generate_records(&MockConfig { ligands: 2, targets: 2, seed: 8, ..MockConfig::default() }).unwrap();
        derive_pairs(&records, POCKET_CUTOFF).0
    })
}

fn checkpoint(no_bond_gen: bool, no_dlcf: bool) -> Checkpoint {
    let cfg = TrainConfig { steps: 2, schedule_steps: T, no_bond_gen, no_dlcf, ..TrainConfig::default() };
    fit(data(), &cfg, None).unwrap().checkpoint
}

fn full() -> &'static Checkpoint {
    static C: OnceLock<Checkpoint> = OnceLock::new();
    C.get_or_init(|| checkpoint(false, false))
}

fn config(count: usize, n: usize, mode: SampleMode) -> SampleConfig {
    SampleConfig { n_atoms: AtomCount::Fixed(n), steps: T, seed: 4, count, mode }
}

#[test]
fn reverse_step_draws_follow_the_posterior() {
    let sched = NoiseSchedule::cosine(100).unwrap();
    let k = 8;
    let x0: Vec<f64> = (0..k).map(|j| (j + 1) as f64).collect();
    let z: f64 = x0.iter().sum();
    let x0: Vec<f64> = x0.iter().map(|v| v / z).collect();
    let mut probs = x0.clone();
    probs.extend(vec![1.0 / k as f64; k]);
    let state = NoisyState {
        t: 10,
        atoms: vec![3, 5],
        bonds: vec![2],
        positions: vec![Pose(vec![[0.0; 3], [1.0, 0.0, 0.0]])],
    };
    let out = DenoiserOutput {
        positions: vec![Pose(vec![[0.1, 0.0, 0.0], [1.2, 0.0, 0.0]])],
        atom_probs: Tensor::matrix(2, k, probs).unwrap(),
        bond_probs: Tensor::matrix(1, 5, vec![0.1, 0.2, 0.4, 0.2, 0.1]).unwrap(),
    };
    let expect = categorical_posterior(3, &x0, 10, Channel::Atom, &sched).unwrap();
    let expect_bond = categorical_posterior(2, &[0.1, 0.2, 0.4, 0.2, 0.1], 10, Channel::Bond, &sched).unwrap();
    let n = 10_000;
    let mut counts = vec![0usize; k];
    let mut bond_counts = vec![0usize; 5];
    for i in 0..n {
        let mut streams = SampleStreams::for_sample(99, i, &[0]);
        let next = reverse_step(&state, &out, &sched, &mut streams).unwrap();
        assert_eq!(next.t, 9);
        counts[next.atoms[0]] += 1;
        bond_counts[next.bonds[0]] += 1;
    }
    for (c, p) in counts.iter().zip(&expect).chain(bond_counts.iter().zip(&expect_bond)) {
        let freq = *c as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * sigma + 1e-12, "freq {freq} vs {p}");
    }
}

#[test]
fn fixed_size_and_reproducible() {
    let pockets = &data()[0].pockets;
    let a = generate(pockets, full(), &config(3, 6, SampleMode::Full)).unwrap();
    let b = generate(pockets, full(), &config(3, 6, SampleMode::Full)).unwrap();
    assert_eq!(a, b);
    for (i, s) in a.iter().enumerate() {
        assert_eq!(s.index, i);
        assert_eq!(s.graph.n_atoms(), 6);
        assert_eq!(s.poses.len(), 2);
        assert!(s.poses.iter().all(|p| p.len() == 6 && p.is_finite()));
        assert_eq!(s.pockets, vec![pockets[0].id.clone(), pockets[1].id.clone()]);
    }
}

#[test]
fn swapped_pockets_with_mirrored_streams_swap_poses() {
    let pockets = &data()[0].pockets;
    let cfg = config(4, 5, SampleMode::Full);
    let a = generate(pockets, full(), &cfg).unwrap();
    let swapped = vec![pockets[1].clone(), pockets[0].clone()];
    let b = generate_with_order(&swapped, full(), &cfg, &[1, 0]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.graph, y.graph);
        for (p, q) in [(0, 1), (1, 0)] {
            for (u, v) in x.poses[p].0.iter().zip(&y.poses[q].0) {
                for d in 0..3 {
                    assert!((u[d] - v[d]).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn translating_a_pocket_translates_its_pose() {
    let pockets = &data()[0].pockets;
    let cfg = config(2, 5, SampleMode::Full);
    let a = generate(pockets, full(), &cfg).unwrap();
    let shift = [12.5, -3.0, 7.25];
    let mut moved = pockets.clone();
    moved[1] = pockets[1].translated(shift);
    let b = generate(&moved, full(), &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.graph, y.graph);
        for (k, s) in [(0, [0.0; 3]), (1, shift)] {
            for (u, v) in x.poses[k].0.iter().zip(&y.poses[k].0) {
                for d in 0..3 {
                    assert!((u[d] + s[d] - v[d]).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn ablation_modes_need_matching_models() {
    let pockets = &data()[0].pockets;
    assert!(generate(pockets, full(), &config(1, 5, SampleMode::NoBondGen)).is_err());
    assert!(generate(pockets, full(), &config(1, 5, SampleMode::NoDlcfSequential)).is_err());

    let nobond = checkpoint(true, false);
    let s = generate(pockets, &nobond, &config(2, 5, SampleMode::NoBondGen)).unwrap();
    for x in &s {
        let pg = x.pose_graphs.as_ref().unwrap();
        assert_eq!(pg.len(), 2);
        assert_eq!(&x.graph, &pg[0]);
    }

    let single = checkpoint(false, true);
    let s = generate(pockets, &single, &config(2, 5, SampleMode::NoDlcfSequential)).unwrap();
    assert!(s.iter().all(|x| x.poses.len() == 2 && x.pose_graphs.is_none()));
}

#[test]
fn schedule_length_must_match() {
    let pockets = &data()[0].pockets;
    let cfg = SampleConfig { steps: T + 1, ..config(1, 5, SampleMode::Full) };
    assert!(matches!(generate(pockets, full(), &cfg), Err(Error::ScheduleMismatch { .. })));
}

#[test]
fn histogram_sizes_come_from_training_data() {
    let pockets = &data()[0].pockets;
    let hist = full().meta.n_atoms_histogram.clone();
    let cfg = SampleConfig { n_atoms: AtomCount::Histogram(hist.clone()), ..config(6, 1, SampleMode::Full) };
    for s in generate(pockets, full(), &cfg).unwrap() {
        assert!(hist[s.graph.n_atoms()] > 0);
    }
}
