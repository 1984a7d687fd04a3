use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::chem::{num_pairs, pairs, AtomVocab, Pocket, Pose};
use crate::dlcf::config::ModelConfig;
use crate::dlcf::graph::{complete_ligand_edges, fuse_k_targets, ligand_edge_index};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Rng, Tape, Tensor, Var};
use crate::schedule::{Channel, NoiseSchedule, NoisyState};

/// Affine map `x W (+ b)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

/// Two-layer perceptron whose input is a concatenation of blocks. The first layer is
/// stored per block so that node-level blocks can be projected before gathering to edges.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub blocks: Vec<ParamId>,
    pub tau: Option<ParamId>,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone)]
pub struct LayerParams {
    /// Ligand edges: persistent edge embedding, mean distance, sorted gaps.
    pub phi_dv: Mlp,
    /// Pocket edges: edge kind, distance.
    pub phi_dp: Mlp,
    /// Messages: sender embedding, distance-aware edge embedding, time.
    pub phi_m: Mlp,
    pub node: Linear,
    pub edge_recv: Linear,
    pub edge_send: Linear,
    pub edge_self: Linear,
    /// Maps aggregated node messages into edge space.
    pub edge_msg: Linear,
    /// Coordinate weights: receiver, sender, edge embedding, time.
    pub phi_r: Mlp,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub atom_embed: Linear,
    pub pocket_embed: Linear,
    pub bond_embed: Linear,
    pub node_time: Linear,
    pub edge_time: Linear,
    pub layers: Vec<LayerParams>,
    pub atom_head: Linear,
    pub bond_head: Linear,
}

/// Number of pocket edge kinds: ligand←pocket, pocket←ligand, pocket←pocket.
pub const EDGE_KINDS: usize = 3;

/// Multiplies summed messages so node magnitudes stay bounded over layers.
const MESSAGE_SCALE: f64 = 0.1;

/// Network weights plus the hyperparameters that shaped them.
#[derive(Debug, Clone)]
pub struct DenoiserModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    ids: ModelParams,
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone)]
pub struct DenoiseVars {
    /// Predicted clean coordinates per target, `[n, 3]` each.
    pub positions: Vec<Var>,
    /// `[n, n_atom_types]` rows summing to 1.
    pub atom_probs: Var,
    /// `[n (n - 1) / 2, n_bond_types]` in packed pair order; absent when bonds are not modeled.
    pub bond_probs: Option<Var>,
}

/// Denoiser predictions as plain values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserOutput {
    pub positions: Vec<Pose>,
    pub atom_probs: Tensor,
    /// All mass on the none type when bonds are not modeled.
    pub bond_probs: Tensor,
}

/// Sinusoidal embedding of `t / steps`.
pub fn timestep_embedding(t: usize, steps: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let x = t as f64 / steps as f64 * 1000.0;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (x * freq).sin();
        out[half + i] = (x * freq).cos();
    }
    out
}

/// Symmetric statistics of one ligand pair's per-target distances:
/// the mean and the ascending absolute pairwise gaps (a single zero for one target).
pub fn ligand_pair_statistics(d: &[f64]) -> (f64, Vec<f64>) {
    let k = d.len();
    let mean = d.iter().sum::<f64>() / k as f64;
    let mut gaps: Vec<f64> = (0..k)
        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
        .map(|(a, b)| (d[a] - d[b]).abs())
        .collect();
    if gaps.is_empty() {
        gaps.push(0.0);
    }
    gaps.sort_by(f64::total_cmp);
    (mean, gaps)
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> Result<ParamId> {
        let data = (0..rows * cols).map(|_| std * self.rng.normal()).collect();
        self.store.add(name, Tensor::matrix(rows, cols, data)?)
    }

    fn zeros(&mut self, name: &str, cols: usize) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(&[1, cols]))
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize, bias: bool) -> Result<Linear> {
        let w = self.weight(&format!("{name}.w"), din, dout, 1.0 / (din as f64).sqrt())?;
        let b = if bias { Some(self.zeros(&format!("{name}.b"), dout)?) } else { None };
        Ok(Linear { w, b })
    }

    fn mlp(&mut self, name: &str, blocks: &[usize], tau: Option<usize>, hidden: usize, dout: usize, out_scale: f64) -> Result<Mlp> {
        let fan_in = blocks.iter().sum::<usize>() + tau.unwrap_or(0);
        let std = 1.0 / (fan_in as f64).sqrt();
        let ids = blocks
            .iter()
            .enumerate()
            .map(|(i, &w)| self.weight(&format!("{name}.w1.{i}"), w, hidden, std))
            .collect::<Result<Vec<_>>>()?;
        let tau = match tau {
            Some(w) => Some(self.weight(&format!("{name}.w1.tau"), w, hidden, std)?),
            None => None,
        };
        Ok(Mlp {
            blocks: ids,
            tau,
            b1: self.zeros(&format!("{name}.b1"), hidden)?,
            w2: self.weight(&format!("{name}.w2"), hidden, dout, out_scale / (hidden as f64).sqrt())?,
            b2: self.zeros(&format!("{name}.b2"), dout)?,
        })
    }
}

impl DenoiserModel {
    /// Randomly initialized model; parameter registration order is fixed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = Rng::derive(seed, &[0x1417]);
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
        };
        let r1 = c.rbf + 1;
        let atom_embed = b.linear("embed.atom", c.n_atom_types, c.d_v, true)?;
        let pocket_embed = b.linear("embed.pocket", c.pocket_features, c.d_v, true)?;
        let bond_embed = b.linear("embed.bond", c.n_bond_types, c.d_e, true)?;
        let node_time = b.linear("embed.node_time", c.tau_dim, c.d_v, false)?;
        let edge_time = b.linear("embed.edge_time", c.tau_dim, c.d_e, false)?;
        let mut layers = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let p = format!("layer{l}");
            let mut dv_blocks = vec![c.d_e, r1];
            dv_blocks.extend(std::iter::repeat_n(r1, c.n_gaps()));
            layers.push(LayerParams {
                phi_dv: b.mlp(&format!("{p}.phi_dv"), &dv_blocks, None, c.hidden, c.d_e, 1.0)?,
                phi_dp: b.mlp(&format!("{p}.phi_dp"), &[EDGE_KINDS, r1], None, c.hidden, c.d_e, 1.0)?,
                phi_m: b.mlp(&format!("{p}.phi_m"), &[c.d_v, c.d_e], Some(c.tau_dim), c.hidden, c.d_v, 1.0)?,
                node: b.linear(&format!("{p}.node"), c.d_v, c.d_v, true)?,
                edge_recv: b.linear(&format!("{p}.edge_recv"), c.d_v, c.d_e, true)?,
                edge_send: b.linear(&format!("{p}.edge_send"), c.d_v, c.d_e, false)?,
                edge_self: b.linear(&format!("{p}.edge_self"), c.d_e, c.d_e, false)?,
                edge_msg: b.linear(&format!("{p}.edge_msg"), c.d_v, c.d_e, false)?,
                phi_r: b.mlp(
                    &format!("{p}.phi_r"),
                    &[c.d_v, c.d_v, c.d_e],
                    Some(c.tau_dim),
                    c.hidden,
                    1,
                    c.coord_init_scale,
                )?,
            });
        }
        let atom_head = b.linear("head.atom", c.d_v, c.n_atom_types, true)?;
        let bond_head = b.linear("head.bond", c.d_e, c.n_bond_types, true)?;
        let ids = ModelParams {
            atom_embed,
            pocket_embed,
            bond_embed,
            node_time,
            edge_time,
            layers,
            atom_head,
            bond_head,
        };
        Ok(Self {
            config,
            params: b.store,
            ids,
        })
    }

    /// Model with the given configuration and weights taken from named tensors.
    pub fn from_tensors<'a>(config: ModelConfig, tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.params.load_values(tensors)?;
        Ok(m)
    }

    pub fn ids(&self) -> &ModelParams {
        &self.ids
    }

    fn lin(&self, tape: &mut Tape, l: &Linear, x: Var) -> Var {
        let w = tape.param(&self.params, l.w);
        let y = tape.matmul(x, w);
        match l.b {
            Some(b) => {
                let b = tape.param(&self.params, b);
                tape.add_row(y, b)
            }
            None => y,
        }
    }

    fn project(&self, tape: &mut Tape, m: &Mlp, block: usize, x: Var) -> Var {
        let w = tape.param(&self.params, m.blocks[block]);
        tape.matmul(x, w)
    }

    /// Adds bias and time contribution to the summed block projections, then applies
    /// the nonlinearity and the second layer.
    fn finish(&self, tape: &mut Tape, m: &Mlp, pre: Var, tau: Var) -> Var {
        let mut row = tape.param(&self.params, m.b1);
        if let Some(wt) = m.tau {
            let wt = tape.param(&self.params, wt);
            let tproj = tape.matmul(tau, wt);
            row = tape.add(row, tproj);
        }
        let pre = tape.add_row(pre, row);
        let h = tape.silu(pre);
        let w2 = tape.param(&self.params, m.w2);
        let out = tape.matmul(h, w2);
        let b2 = tape.param(&self.params, m.b2);
        tape.add_row(out, b2)
    }

    fn rbf(&self, tape: &mut Tape, d: Var) -> Var {
        let r = self.config.rbf;
        let max = self.config.rbf_max;
        let centers: Rc<[f64]> = (0..r).map(|i| max * i as f64 / (r - 1).max(1) as f64).collect();
        let width = max / r as f64;
        tape.radial_basis(d, centers, width, 1.0 / max)
    }

    /// Message aggregation and node update on an explicit edge list.
    ///
    /// Returns `(summed messages, updated node embeddings)`; sums follow edge order.
    pub fn message_pass(
        &self,
        tape: &mut Tape,
        layer: usize,
        v: Var,
        receivers: Rc<[usize]>,
        senders: Rc<[usize]>,
        edge_emb: Var,
        tau: Var,
    ) -> (Var, Var) {
        let lp = &self.ids.layers[layer];
        let n = tape.shape(v).0;
        let pv = self.project(tape, &lp.phi_m, 0, v);
        let pv_e = tape.gather_rows(pv, senders);
        let pe = self.project(tape, &lp.phi_m, 1, edge_emb);
        let pre = tape.add(pv_e, pe);
        let msg = self.finish(tape, &lp.phi_m, pre, tau);
        let agg = tape.scatter_add_rows(msg, receivers, n);
        let agg = tape.scale(agg, MESSAGE_SCALE);
        let lin = self.lin(tape, &lp.node, v);
        let v_new = tape.add(lin, agg);
        (agg, v_new)
    }

    /// Records a full denoiser pass. `pockets` and `state.positions` must already be
    /// expressed in per-target centered frames.
    pub fn forward(&self, tape: &mut Tape, state: &NoisyState, pockets: &[Pocket], steps: usize) -> Result<DenoiseVars> {
        let c = &self.config;
        let k_t = c.targets;
        let n = state.n_atoms();
        if state.positions.len() != k_t || pockets.len() != k_t {
            return Err(Error::SizeMismatch(format!(
                "model expects {k_t} targets, got {} poses and {} pockets",
                state.positions.len(),
                pockets.len()
            )));
        }
        if n == 0 || state.bonds.len() != num_pairs(n) || state.positions.iter().any(|p| p.len() != n) {
            return Err(Error::SizeMismatch("inconsistent noisy state".into()));
        }
        if state.t == 0 || state.t > steps {
            return Err(Error::TimestepOutOfRange { t: state.t, lo: 1, hi: steps });
        }
        if state.atoms.iter().any(|&a| a >= c.n_atom_types) || state.bonds.iter().any(|&b| b >= c.n_bond_types) {
            return Err(Error::InvalidArgument("category index outside the model vocabulary".into()));
        }
        let vocab = AtomVocab::default();

        let tau = tape.constant(Tensor::matrix(1, c.tau_dim, timestep_embedding(state.t, steps, c.tau_dim))?);

        // initial node embeddings: [ligand, P_1, ..., P_K]
        let atoms_oh = tape.constant(Tensor::one_hot(&state.atoms, c.n_atom_types));
        let v_lig = self.lin(tape, &self.ids.atom_embed, atoms_oh);
        let nt = self.lin(tape, &self.ids.node_time, tau);
        let v_lig = tape.add_row(v_lig, nt);
        let mut parts = vec![v_lig];
        let mut pocket_coords = Vec::with_capacity(k_t);
        for p in pockets {
            let f = p.features(&vocab);
            if f.cols() != c.pocket_features {
                return Err(Error::SizeMismatch(format!(
                    "pocket features have width {}, model expects {}",
                    f.cols(),
                    c.pocket_features
                )));
            }
            let f = tape.constant(f);
            parts.push(self.lin(tape, &self.ids.pocket_embed, f));
            pocket_coords.push(tape.constant(Tensor::from_rows(&p.coords)));
        }
        let mut v = tape.concat_rows(&parts);
        let n_nodes = tape.shape(v).0;

        // persistent ligand edge embeddings, one per directed pair
        let lig_edges = complete_ligand_edges(n);
        let recv_l: Rc<[usize]> = lig_edges.iter().map(|e| e.0).collect();
        let send_l: Rc<[usize]> = lig_edges.iter().map(|e| e.1).collect();
        let bond_of_edge: Vec<usize> = lig_edges
            .iter()
            .map(|&(i, j)| {
                if c.use_bonds {
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    state.bonds[crate::chem::pair_index(a, b, n)]
                } else {
                    0
                }
            })
            .collect();
        let bonds_oh = tape.constant(Tensor::one_hot(&bond_of_edge, c.n_bond_types));
        let e_l = self.lin(tape, &self.ids.bond_embed, bonds_oh);
        let et = self.lin(tape, &self.ids.edge_time, tau);
        let mut e_l = tape.add_row(e_l, et);

        let mut r: Vec<Var> = state
            .positions
            .iter()
            .map(|p| tape.constant(Tensor::from_rows(&p.0)))
            .collect();

        let x_t = r.clone();
        for layer in 0..c.layers {
            let (v_new, e_new, r_new) = self.layer(tape, layer, v, e_l, &r, &pocket_coords, pockets, tau, n, n_nodes, &recv_l, &send_l)?;
            v = v_new;
            e_l = e_new;
            r = r_new;
        }

        // displacement shrinks with the noise level so near-clean inputs stay near-clean
        let sigma = (1.0 - NoiseSchedule::cosine(steps)?.alpha_bar(Channel::Position, state.t)).sqrt();
        let r: Vec<Var> = r
            .iter()
            .zip(&x_t)
            .map(|(&out, &x)| {
                let d = tape.sub(out, x);
                let d = tape.scale(d, sigma);
                tape.add(x, d)
            })
            .collect();

        let lig_rows: Rc<[usize]> = (0..n).collect();
        let v_lig = tape.gather_rows(v, lig_rows);
        let atom_logits = self.lin(tape, &self.ids.atom_head, v_lig);
        let atom_probs = tape.softmax_rows(atom_logits);
        let bond_probs = if c.use_bonds {
            let logits = self.lin(tape, &self.ids.bond_head, e_l);
            let ij: Rc<[usize]> = pairs(n).map(|(i, j)| ligand_edge_index(n, i, j)).collect();
            let ji: Rc<[usize]> = pairs(n).map(|(i, j)| ligand_edge_index(n, j, i)).collect();
            let a = tape.gather_rows(logits, ij);
            let b = tape.gather_rows(logits, ji);
            let s = tape.add(a, b);
            let sym = tape.scale(s, 0.5);
            Some(tape.softmax_rows(sym))
        } else {
            None
        };
        Ok(DenoiseVars {
            positions: r,
            atom_probs,
            bond_probs,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn layer(
        &self,
        tape: &mut Tape,
        layer: usize,
        v: Var,
        e_l: Var,
        r: &[Var],
        pocket_coords: &[Var],
        pockets: &[Pocket],
        tau: Var,
        n: usize,
        n_nodes: usize,
        recv_l: &Rc<[usize]>,
        send_l: &Rc<[usize]>,
    ) -> Result<(Var, Var, Vec<Var>)> {
        let c = &self.config;
        let lp = &self.ids.layers[layer];
        let k_t = c.targets;
        let eps = c.coord_eps;

        // graphs from current coordinates
        let poses: Vec<Vec<[f64; 3]>> = r.iter().map(|&x| rows3(tape.value(x))).collect();
        let pose_refs: Vec<&[[f64; 3]]> = poses.iter().map(|p| p.as_slice()).collect();
        let pocket_refs: Vec<&[[f64; 3]]> = pockets.iter().map(|p| p.coords.as_slice()).collect();
        let graph = fuse_k_targets(&pose_refs, &pocket_refs, c.knn)?;

        // ligand edges: per-target geometry and symmetric statistics
        let mut diff_l = Vec::with_capacity(k_t);
        let mut d2_l = Vec::with_capacity(k_t);
        let mut d_l = Vec::with_capacity(k_t);
        for &x in r {
            let a = tape.gather_rows(x, recv_l.clone());
            let b = tape.gather_rows(x, send_l.clone());
            let diff = tape.sub(a, b);
            let sq = tape.square(diff);
            let d2 = tape.row_sum(sq);
            d_l.push(tape.sqrt(d2));
            d2_l.push(d2);
            diff_l.push(diff);
        }
        let mut s = d_l[0];
        for &d in &d_l[1..] {
            s = tape.add(s, d);
        }
        let mean = tape.scale(s, 1.0 / k_t as f64);
        let gaps = if k_t == 1 {
            tape.constant(Tensor::zeros(&[recv_l.len(), 1]))
        } else {
            let mut cols = Vec::new();
            for a in 0..k_t {
                for b in a + 1..k_t {
                    let d = tape.sub(d_l[a], d_l[b]);
                    cols.push(tape.abs(d));
                }
            }
            let g = tape.concat_cols(&cols);
            tape.sort_rows(g)
        };
        let mut pre = self.project(tape, &lp.phi_dv, 0, e_l);
        let rm = self.rbf(tape, mean);
        let p = self.project(tape, &lp.phi_dv, 1, rm);
        pre = tape.add(pre, p);
        for g in 0..c.n_gaps() {
            let col = tape.slice_cols(gaps, g, 1);
            let rg = self.rbf(tape, col);
            let p = self.project(tape, &lp.phi_dv, 2 + g, rg);
            pre = tape.add(pre, p);
        }
        let e_tilde_l = self.finish(tape, &lp.phi_dv, pre, tau);

        // pocket edges of every target, concatenated in target order
        let mut recv_p = Vec::new();
        let mut send_p = Vec::new();
        let mut kinds = Vec::new();
        let mut diff_p = Vec::with_capacity(k_t);
        let mut d2_p = Vec::with_capacity(k_t);
        let mut d_p = Vec::with_capacity(k_t);
        for k in 0..k_t {
            let edges = &graph.target_edges[k];
            let off = graph.pocket_offsets[k];
            let local = |g: usize| if g < n { g } else { g - off + n };
            let all = tape.concat_rows(&[r[k], pocket_coords[k]]);
            let ri: Rc<[usize]> = edges.iter().map(|e| local(e.0)).collect();
            let si: Rc<[usize]> = edges.iter().map(|e| local(e.1)).collect();
            let a = tape.gather_rows(all, ri);
            let b = tape.gather_rows(all, si);
            let diff = tape.sub(a, b);
            let sq = tape.square(diff);
            let d2 = tape.row_sum(sq);
            d_p.push(tape.sqrt(d2));
            d2_p.push(d2);
            diff_p.push(diff);
            for &(u, w) in edges {
                recv_p.push(u);
                send_p.push(w);
                kinds.push(match (u < n, w < n) {
                    (true, _) => 0,
                    (false, true) => 1,
                    (false, false) => 2,
                });
            }
        }
        let d_all = tape.concat_rows(&d_p);
        let kind_oh = tape.constant(Tensor::one_hot(&kinds, EDGE_KINDS));
        let pk = self.project(tape, &lp.phi_dp, 0, kind_oh);
        let rd = self.rbf(tape, d_all);
        let pd = self.project(tape, &lp.phi_dp, 1, rd);
        let pre = tape.add(pk, pd);
        let e_tilde_p = self.finish(tape, &lp.phi_dp, pre, tau);

        // messages over the augmented graph
        let e_tilde = tape.concat_rows(&[e_tilde_l, e_tilde_p]);
        let receivers: Rc<[usize]> = recv_l.iter().chain(&recv_p).copied().collect();
        let senders: Rc<[usize]> = send_l.iter().chain(&send_p).copied().collect();
        let (agg, v_new) = self.message_pass(tape, layer, v, receivers, senders, e_tilde, tau);
        debug_assert_eq!(tape.shape(v_new).0, n_nodes);

        // ligand edge update from pre-update endpoints, the edge itself and endpoint messages
        let pu = self.lin(tape, &lp.edge_recv, v);
        let pw = self.lin(tape, &lp.edge_send, v);
        let pm = self.lin(tape, &lp.edge_msg, agg);
        let a = tape.gather_rows(pu, recv_l.clone());
        let b = tape.gather_rows(pw, send_l.clone());
        let me = self.lin(tape, &lp.edge_self, e_l);
        let mu = tape.gather_rows(pm, recv_l.clone());
        let mw = tape.gather_rows(pm, send_l.clone());
        let e_new = {
            let x = tape.add(a, b);
            let x = tape.add(x, me);
            let x = tape.add(x, mu);
            tape.add(x, mw)
        };

        // coordinate weights for edges whose receiver is a ligand atom
        let qa = self.project(tape, &lp.phi_r, 0, v_new);
        let qb = self.project(tape, &lp.phi_r, 1, v_new);
        let lig_sel: Vec<usize> = (0..recv_p.len()).filter(|&i| recv_p[i] < n).collect();
        let recv_c: Rc<[usize]> = recv_l.iter().copied().chain(lig_sel.iter().map(|&i| recv_p[i])).collect();
        let send_c: Rc<[usize]> = send_l.iter().copied().chain(lig_sel.iter().map(|&i| send_p[i])).collect();
        let sel: Rc<[usize]> = lig_sel.iter().copied().collect();
        let e_sel = tape.gather_rows(e_tilde_p, sel);
        let e_c = tape.concat_rows(&[e_tilde_l, e_sel]);
        let a = tape.gather_rows(qa, recv_c.clone());
        let b = tape.gather_rows(qb, send_c);
        let pe = self.project(tape, &lp.phi_r, 2, e_c);
        let pre = tape.add(a, b);
        let pre = tape.add(pre, pe);
        let w_all = self.finish(tape, &lp.phi_r, pre, tau);
        let n_l = recv_l.len();
        let w_l = tape.gather_rows(w_all, (0..n_l).collect());

        let mut r_new = Vec::with_capacity(k_t);
        let mut start = 0;
        for k in 0..k_t {
            let len = graph.target_edges[k].len();
            // rows of this target's pocket edges that have a ligand receiver
            let rows_k: Vec<usize> = lig_sel
                .iter()
                .enumerate()
                .filter(|&(_, &i)| i >= start && i < start + len)
                .map(|(pos, _)| pos)
                .collect();
            let local: Rc<[usize]> = rows_k.iter().map(|&pos| lig_sel[pos] - start).collect();
            let wk_rows: Rc<[usize]> = rows_k.iter().map(|&pos| n_l + pos).collect();
            let recv_k: Rc<[usize]> = recv_l
                .iter()
                .copied()
                .chain(rows_k.iter().map(|&pos| recv_p[lig_sel[pos]]))
                .collect();
            start += len;

            let inv_l = tape.add_scalar(d2_l[k], eps);
            let inv_l = tape.recip(inv_l);
            let coef_l = tape.mul(w_l, inv_l);
            let contrib_l = tape.mul_col(diff_l[k], coef_l);

            let w_p = tape.gather_rows(w_all, wk_rows);
            let d2 = tape.gather_rows(d2_p[k], local.clone());
            let diff = tape.gather_rows(diff_p[k], local);
            let inv_p = tape.add_scalar(d2, eps);
            let inv_p = tape.recip(inv_p);
            let coef_p = tape.mul(w_p, inv_p);
            let contrib_p = tape.mul_col(diff, coef_p);

            let contrib = tape.concat_rows(&[contrib_l, contrib_p]);
            let delta = tape.scatter_add_rows(contrib, recv_k, n);
            r_new.push(tape.add(r[k], delta));
        }
        Ok((v_new, e_new, r_new))
    }

    /// Runs a forward pass and returns plain values.
    pub fn denoise(&self, state: &NoisyState, pockets: &[Pocket], steps: usize) -> Result<DenoiserOutput> {
        let mut tape = Tape::new();
        let vars = self.forward(&mut tape, state, pockets, steps)?;
        let positions = vars.positions.iter().map(|&x| Pose(rows3(tape.value(x)))).collect();
        let atom_probs = tape.value(vars.atom_probs).clone();
        let bond_probs = match vars.bond_probs {
            Some(b) => tape.value(b).clone(),
            None => {
                let np = num_pairs(state.n_atoms());
                Tensor::one_hot(&vec![0; np], self.config.n_bond_types)
            }
        };
        let out = DenoiserOutput {
            positions,
            atom_probs,
            bond_probs,
        };
        if !out.atom_probs.is_finite() || !out.bond_probs.is_finite() || !out.positions.iter().all(Pose::is_finite) {
            return Err(Error::NonFinite("denoiser output".into()));
        }
        Ok(out)
    }
}

fn rows3(t: &Tensor) -> Vec<[f64; 3]> {
    t.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}
