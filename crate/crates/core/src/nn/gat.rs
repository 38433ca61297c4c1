use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::masked_mse_value;
use super::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Adjacency;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Identity,
}

/// One single-head attention layer: `act(attend(X W) + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerParams {
    /// `[in_dim x out_dim]`
    pub weight: Tensor,
    /// `[2 out_dim]`, left half scores the receiving node, right half the sender.
    pub attention_vec: Tensor,
    /// `[out_dim]`
    pub bias: Tensor,
    pub leaky_slope: f64,
    pub activation: Activation,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

impl GatLayerParams {
    pub fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let weight = Tensor::matrix(in_dim, out_dim, glorot(rng, in_dim, out_dim, in_dim * out_dim))
            .expect("shape matches by construction");
        let attention_vec = Tensor::vector(glorot(rng, 2 * out_dim, 1, 2 * out_dim));
        Self {
            weight,
            attention_vec,
            bias: Tensor::vector(vec![0.0; out_dim]),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (i, o) = (self.in_dim(), self.out_dim());
        if self.weight.shape() != [i, o] || self.attention_vec.len() != 2 * o || self.bias.len() != o {
            return Err(Error::Shape(format!(
                "layer weight {:?}, attention {:?}, bias {:?}",
                self.weight.shape(),
                self.attention_vec.shape(),
                self.bias.shape()
            )));
        }
        let finite = self.weight.is_finite() && self.attention_vec.is_finite() && self.bias.is_finite();
        if !finite || !self.leaky_slope.is_finite() {
            return Err(Error::invalid("layer", "parameters must be finite"));
        }
        Ok(())
    }

    pub fn params(&self) -> [&Tensor; 3] {
        [&self.weight, &self.attention_vec, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.weight, &mut self.attention_vec, &mut self.bias]
    }

    /// Records the layer on `tape`. Returns the output and the attention node.
    fn record(&self, tape: &mut Tape, vars: [Var; 3], x: Var, adj: &Adjacency) -> Result<(Var, Var)> {
        let [w, a, b] = vars;
        let h = tape.matmul(x, w)?;
        let att = tape.attention(h, a, adj, self.leaky_slope)?;
        let z = tape.add_bias(att, b)?;
        let out = match self.activation {
            Activation::Elu => tape.elu(z),
            Activation::Identity => z,
        };
        Ok((out, att))
    }
}

fn check_features(features: &Tensor, in_dim: usize, adj: &Adjacency) -> Result<()> {
    if features.shape().len() != 2 || features.cols() != in_dim || features.rows() != adj.node_count() {
        return Err(Error::Shape(format!(
            "features {:?} for a layer of input width {in_dim} over {} nodes",
            features.shape(),
            adj.node_count()
        )));
    }
    Ok(())
}

/// Forward pass of a single layer.
pub fn gat_layer_forward(params: &GatLayerParams, features: &Tensor, adj: &Adjacency) -> Result<Tensor> {
    params.validate()?;
    check_features(features, params.in_dim(), adj)?;
    let mut tape = Tape::new();
    let vars = params.params().map(|p| tape.leaf(p.clone()));
    let x = tape.leaf(features.clone());
    let (out, _) = params.record(&mut tape, vars, x, adj)?;
    Ok(tape.value(out).clone())
}

/// Attention weights of a single layer: for each node, `(j, alpha_ij)` over
/// `{i} ∪ N(i)` with the self entry first.
pub fn attention_weights(
    params: &GatLayerParams,
    features: &Tensor,
    adj: &Adjacency,
) -> Result<Vec<Vec<(usize, f64)>>> {
    params.validate()?;
    check_features(features, params.in_dim(), adj)?;
    let mut tape = Tape::new();
    let vars = params.params().map(|p| tape.leaf(p.clone()));
    let x = tape.leaf(features.clone());
    let (_, att) = params.record(&mut tape, vars, x, adj)?;
    let cache = tape.attention_cache(att).expect("attention node");
    Ok((0..adj.node_count()).map(|i| cache.weights_of(i).collect()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            in_dim: 5,
            hidden_dim: 32,
        }
    }
}

/// Three attention layers: `in -> hidden -> hidden -> 1`. The first layer
/// runs on the observed-band graph, the other two on the target-band graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GatModel {
    pub layers: [GatLayerParams; 3],
}

/// Loss value and one gradient per parameter, in [`GatModel::params`] order.
#[derive(Debug, Clone)]
pub struct LossAndGrads {
    pub loss: f64,
    pub grads: Vec<Tensor>,
}

impl GatModel {
    pub fn init(cfg: GatConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden_dim;
        Self {
            layers: [
                GatLayerParams::init(cfg.in_dim, h, Activation::Elu, &mut rng),
                GatLayerParams::init(h, h, Activation::Elu, &mut rng),
                GatLayerParams::init(h, 1, Activation::Identity, &mut rng),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            l.validate()?;
        }
        for w in self.layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer widths {} -> {} do not chain",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        if self.layers[2].out_dim() != 1 {
            return Err(Error::Shape("final layer must output one value per node".into()));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Parameters in declaration order: per layer weight, attention, bias.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Records the full model; returns parameter vars and the `[n x 1]` output.
    pub fn record(
        &self,
        tape: &mut Tape,
        features: &Tensor,
        adj_obv: &Adjacency,
        adj_target: &Adjacency,
    ) -> Result<(Vec<Var>, Var)> {
        self.validate()?;
        check_features(features, self.in_dim(), adj_obv)?;
        if adj_target.node_count() != adj_obv.node_count() {
            return Err(Error::Shape(format!(
                "observed-band graph has {} nodes, target-band graph {}",
                adj_obv.node_count(),
                adj_target.node_count()
            )));
        }
        let mut vars = Vec::with_capacity(9);
        let mut x = tape.leaf(features.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let lv = layer.params().map(|p| tape.leaf(p.clone()));
            vars.extend(lv);
            let adj = if i == 0 { adj_obv } else { adj_target };
            x = layer.record(tape, lv, x, adj)?.0;
        }
        Ok((vars, x))
    }

    pub fn forward(&self, features: &Tensor, adj_obv: &Adjacency, adj_target: &Adjacency) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (_, out) = self.record(&mut tape, features, adj_obv, adj_target)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Masked squared-error loss and its parameter gradients.
    pub fn loss_and_grads(
        &self,
        features: &Tensor,
        adj_obv: &Adjacency,
        adj_target: &Adjacency,
        target: &[f64],
        mask: &[bool],
    ) -> Result<LossAndGrads> {
        let mut tape = Tape::new();
        let (vars, out) = self.record(&mut tape, features, adj_obv, adj_target)?;
        let loss = tape.masked_mse(out, target, mask)?;
        let g: Gradients = tape.backward(loss)?;
        let grads = vars
            .iter()
            .zip(self.params())
            .map(|(&v, p)| g.get_or_zeros(v, p))
            .collect();
        Ok(LossAndGrads {
            loss: tape.value(loss).data()[0],
            grads,
        })
    }

    /// Loss only, without recording gradients.
    pub fn loss(
        &self,
        features: &Tensor,
        adj_obv: &Adjacency,
        adj_target: &Adjacency,
        target: &[f64],
        mask: &[bool],
    ) -> Result<f64> {
        let pred = self.forward(features, adj_obv, adj_target)?;
        if pred.len() != target.len() || pred.len() != mask.len() {
            return Err(Error::Shape("prediction, target and mask lengths differ".into()));
        }
        Ok(masked_mse_value(&pred, target, mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Adjacency {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        Adjacency::from_edges(n, edges).unwrap()
    }

    /// Dense O(n^2) evaluation written directly from the layer definition.
    fn dense_reference(p: &GatLayerParams, x: &Tensor, adj: &Adjacency) -> Vec<f64> {
        let n = x.rows();
        let (din, d) = (p.in_dim(), p.out_dim());
        let dense = adj.to_dense();
        let mut h = vec![vec![0.0; d]; n];
        for i in 0..n {
            for c in 0..d {
                h[i][c] = (0..din).map(|k| x.at(i, k) * p.weight.at(k, c)).sum();
            }
        }
        let a = p.attention_vec.data();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let mut e = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                if i == j || dense[i][j] {
                    let s: f64 = (0..d).map(|c| a[c] * h[i][c] + a[d + c] * h[j][c]).sum();
                    e[j] = if s > 0.0 { s } else { p.leaky_slope * s };
                }
            }
            let z: f64 = e.iter().map(|v| v.exp()).sum();
            for c in 0..d {
                let mut v: f64 = (0..n).map(|j| e[j].exp() / z * h[j][c]).sum();
                v += p.bias.data()[c];
                out[i * d + c] = match p.activation {
                    Activation::Elu if v <= 0.0 => v.exp_m1(),
                    _ => v,
                };
            }
        }
        out
    }

    #[test]
    fn isolated_node_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GatLayerParams::init(3, 4, Activation::Identity, &mut rng);
        let x = random_features(&mut rng, 1, 3);
        let adj = Adjacency::empty(1);
        let w = attention_weights(&p, &x, &adj).unwrap();
        assert_eq!(w, vec![vec![(0, 1.0)]]);
        let out = gat_layer_forward(&p, &x, &adj).unwrap();
        let wx = x.matmul(&p.weight).unwrap();
        assert_eq!(out.data(), wx.data());
    }

    #[test]
    fn identical_pair_splits_attention_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GatLayerParams::init(2, 3, Activation::Elu, &mut rng);
        let x = Tensor::matrix(2, 2, vec![0.3, -0.7, 0.3, -0.7]).unwrap();
        let adj = Adjacency::from_edges(2, [(0, 1)]).unwrap();
        for row in attention_weights(&p, &x, &adj).unwrap() {
            for (_, a) in row {
                assert_eq!(a, 0.5);
            }
        }
    }

    #[test]
    fn matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for act in [Activation::Elu, Activation::Identity] {
            let mut p = GatLayerParams::init(4, 3, act, &mut rng);
            p.bias = Tensor::vector(vec![0.1, -0.3, 0.05]);
            let x = random_features(&mut rng, 5, 4);
            let adj = random_graph(&mut rng, 5, 0.5);
            let out = gat_layer_forward(&p, &x, &adj).unwrap();
            for (a, b) in out.data().iter().zip(dense_reference(&p, &x, &adj)) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = GatLayerParams::init(4, 3, Activation::Elu, &mut rng);
        let x = random_features(&mut rng, 5, 3);
        assert!(gat_layer_forward(&p, &x, &Adjacency::empty(5)).is_err());
        let x = random_features(&mut rng, 5, 4);
        assert!(gat_layer_forward(&p, &x, &Adjacency::empty(4)).is_err());
    }

    fn finite_difference_check(model: &GatModel, x: &Tensor, a1: &Adjacency, a2: &Adjacency, t: &[f64], m: &[bool]) {
        let lg = model.loss_and_grads(x, a1, a2, t, m).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (pi, g) in lg.grads.iter().enumerate() {
            for k in 0..g.len() {
                let eval = |delta: f64| {
                    let mut mm = model.clone();
                    mm.params_mut()[pi].data_mut()[k] += delta;
                    mm.loss(x, a1, a2, t, m).unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = g.data()[k];
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = GatModel::init(GatConfig { in_dim: 5, hidden_dim: 4 }, 5);
        let n = 6;
        let x = random_features(&mut rng, n, 5);
        let a1 = random_graph(&mut rng, n, 0.4);
        let a2 = random_graph(&mut rng, n, 0.4);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = [true, false, true, true, false, true];
        finite_difference_check(&model, &x, &a1, &a2, &t, &m);
    }

    #[test]
    fn constant_output_has_zero_gradients() {
        // Zero weights make every layer output a constant bias.
        let mut model = GatModel::init(GatConfig { in_dim: 2, hidden_dim: 3 }, 0);
        for p in model.params_mut() {
            p.data_mut().fill(0.0);
        }
        let x = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let adj = Adjacency::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let lg = model.loss_and_grads(&x, &adj, &adj, &[0.0; 3], &[true; 3]).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn doubling_the_loss_doubles_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = GatModel::init(GatConfig { in_dim: 3, hidden_dim: 4 }, 1);
        let x = random_features(&mut rng, 4, 3);
        let adj = random_graph(&mut rng, 4, 0.6);
        let t = [0.2, -0.1, 0.4, 0.0];
        let mask = [true; 4];
        let mut tape = Tape::new();
        let (vars, out) = model.record(&mut tape, &x, &adj, &adj).unwrap();
        let loss = tape.masked_mse(out, &t, &mask).unwrap();
        let twice = tape.scale(loss, 2.0);
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(twice).unwrap();
        for v in vars {
            for (a, b) in g1.get(v).unwrap().data().iter().zip(g2.get(v).unwrap().data()) {
                assert_eq!(2.0 * a, *b);
            }
        }
    }

    #[test]
    fn permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = GatModel::init(GatConfig { in_dim: 3, hidden_dim: 4 }, 2);
        let n = 7;
        let x = random_features(&mut rng, n, 3);
        let adj = random_graph(&mut rng, n, 0.4);
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let mut px = vec![0.0; n * 3];
        for i in 0..n {
            px[perm[i] * 3..perm[i] * 3 + 3].copy_from_slice(x.row(i));
        }
        let px = Tensor::matrix(n, 3, px).unwrap();
        let padj = adj.permuted(&perm).unwrap();
        let y = model.forward(&x, &adj, &adj).unwrap();
        let py = model.forward(&px, &padj, &padj).unwrap();
        for i in 0..n {
            assert!((y[i] - py[perm[i]]).abs() < 1e-12);
        }
    }
}
