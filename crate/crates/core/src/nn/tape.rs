//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Operations are coarse (a whole matrix product, a whole attention layer)
//! so the tape stays short and each backward rule is written out by hand.

use super::Tensor;
use crate::error::{Error, Result};
use crate::graph::Adjacency;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Per-node attention support `{i} ∪ N(i)` in CSR form, plus the cached
/// pre-activation scores and normalized weights of the forward pass.
#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    pub offsets: Vec<usize>,
    pub support: Vec<u32>,
    pub score: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl AttentionCache {
    fn support_of(adj: &Adjacency) -> (Vec<usize>, Vec<u32>) {
        let n = adj.node_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut support = Vec::with_capacity(n + 2 * adj.edge_count());
        offsets.push(0);
        for i in 0..n {
            support.push(i as u32);
            support.extend_from_slice(adj.neighbors(i));
            offsets.push(support.len());
        }
        (offsets, support)
    }

    /// Weights `alpha_ij` of node `i` as `(j, alpha)` pairs, self first.
    pub fn weights_of(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.support[r.clone()]
            .iter()
            .zip(&self.alpha[r])
            .map(|(&j, &a)| (j as usize, a))
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Elu(usize),
    Scale(usize, f64),
    Attention {
        h: usize,
        att: usize,
        slope: f64,
        cache: AttentionCache,
    },
    MaskedMse {
        pred: usize,
        target: Vec<f64>,
        mask: Vec<bool>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` where nothing flowed.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing flowed.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    /// Adds a length-`d` bias to every row of an `[n x d]` value.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.len() != x.cols() {
            return Err(Error::Shape(format!(
                "bias of length {} for {} columns",
                b.len(),
                x.cols()
            )));
        }
        let d = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += b.data()[i % d];
        }
        Ok(self.push(out, Op::AddBias(a.0, bias.0)))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            if *v <= 0.0 {
                *v = v.exp_m1();
            }
        }
        self.push(out, Op::Elu(a.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scaled(c);
        self.push(out, Op::Scale(a.0, c))
    }

    /// Single-head graph attention aggregation over `h` (`[n x d]`).
    ///
    /// `att` holds `2d` values `[a_l ; a_r]`; the score of edge `i <- j` is
    /// `LeakyReLU(a_l . h_i + a_r . h_j)` and weights are softmax-normalized
    /// over `{i} ∪ N(i)`.
    pub fn attention(&mut self, h: Var, att: Var, adj: &Adjacency, slope: f64) -> Result<Var> {
        let hv = self.value(h);
        let av = self.value(att);
        let (n, d) = (hv.rows(), hv.cols());
        if hv.shape().len() != 2 || adj.node_count() != n {
            return Err(Error::Shape(format!(
                "attention over {:?} features with a {}-node adjacency",
                hv.shape(),
                adj.node_count()
            )));
        }
        if av.len() != 2 * d {
            return Err(Error::Shape(format!(
                "attention vector of length {} for width {d}",
                av.len()
            )));
        }
        let (al, ar) = av.data().split_at(d);
        let dot = |row: &[f64], a: &[f64]| row.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
        let left: Vec<f64> = (0..n).map(|i| dot(hv.row(i), al)).collect();
        let right: Vec<f64> = (0..n).map(|i| dot(hv.row(i), ar)).collect();

        let (offsets, support) = AttentionCache::support_of(adj);
        let mut score = vec![0.0; support.len()];
        let mut alpha = vec![0.0; support.len()];
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let r = offsets[i]..offsets[i + 1];
            let mut max = f64::NEG_INFINITY;
            for p in r.clone() {
                let s = left[i] + right[support[p] as usize];
                score[p] = s;
                max = max.max(leaky(s, slope));
            }
            let mut sum = 0.0;
            for p in r.clone() {
                let e = (leaky(score[p], slope) - max).exp();
                alpha[p] = e;
                sum += e;
            }
            let row = &mut out[i * d..(i + 1) * d];
            for p in r {
                alpha[p] /= sum;
                let hj = hv.row(support[p] as usize);
                for (o, x) in row.iter_mut().zip(hj) {
                    *o += alpha[p] * x;
                }
            }
        }
        let cache = AttentionCache {
            offsets,
            support,
            score,
            alpha,
        };
        let out = Tensor::matrix(n, d, out)?;
        Ok(self.push(
            out,
            Op::Attention {
                h: h.0,
                att: att.0,
                slope,
                cache,
            },
        ))
    }

    /// Attention weights recorded by an [`Tape::attention`] node.
    pub(crate) fn attention_cache(&self, v: Var) -> Option<&AttentionCache> {
        match &self.nodes[v.0].op {
            Op::Attention { cache, .. } => Some(cache),
            _ => None,
        }
    }

    /// `(1/N) Σ_i mask_i (pred_i - target_i)^2` with `N` the total node count.
    pub fn masked_mse(&mut self, pred: Var, target: &[f64], mask: &[bool]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() || p.len() != mask.len() {
            return Err(Error::Shape(format!(
                "{} predictions, {} targets, {} mask entries",
                p.len(),
                target.len(),
                mask.len()
            )));
        }
        if p.is_empty() {
            return Err(Error::Empty("masked loss over zero nodes"));
        }
        let loss = masked_mse_value(p.data(), target, mask);
        Ok(self.push(
            Tensor::vector(vec![loss]),
            Op::MaskedMse {
                pred: pred.0,
                target: target.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }

    /// Back-propagates from a scalar output with seed gradient 1.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let seed = Tensor::new(self.check_out(out)?.shape().to_vec(), vec![1.0; self.value(out).len()])?;
        self.backward_with(out, seed)
    }

    fn check_out(&self, out: Var) -> Result<&Tensor> {
        if self.nodes.is_empty() || out.0 >= self.nodes.len() {
            return Err(Error::NoForward);
        }
        Ok(self.value(out))
    }

    /// Back-propagates an arbitrary output gradient.
    pub fn backward_with(&self, out: Var, seed: Tensor) -> Result<Gradients> {
        let v = self.check_out(out)?;
        if v.len() != seed.len() {
            return Err(Error::Shape(format!(
                "output gradient of {} values for an output of {}",
                seed.len(),
                v.len()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Tensor::new(v.shape().to_vec(), seed.into_data())?);

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            // Leaf gradients stay in place for the caller.
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.nodes[*b].value.transpose())?;
                    let gb = self.nodes[*a].value.transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias(a, b) => {
                    let d = g.cols();
                    let mut gb = vec![0.0; d];
                    for (i, v) in g.data().iter().enumerate() {
                        gb[i % d] += v;
                    }
                    let bshape = self.nodes[*b].value.shape().to_vec();
                    accumulate(&mut grads, *b, Tensor::new(bshape, gb)?);
                    accumulate(&mut grads, *a, g);
                }
                Op::Elu(a) => {
                    let mut ga = g;
                    for (gv, y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        if *y <= 0.0 {
                            *gv *= y + 1.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.scaled(*c)),
                Op::Attention {
                    h,
                    att,
                    slope,
                    cache,
                } => {
                    let (gh, gatt) = attention_backward(
                        &self.nodes[*h].value,
                        &self.nodes[*att].value,
                        *slope,
                        cache,
                        &g,
                    )?;
                    accumulate(&mut grads, *h, gh);
                    accumulate(&mut grads, *att, gatt);
                }
                Op::MaskedMse { pred, target, mask } => {
                    let p = &self.nodes[*pred].value;
                    let scale = g.data()[0] * 2.0 / p.len() as f64;
                    let gp: Vec<f64> = p
                        .data()
                        .iter()
                        .zip(target)
                        .zip(mask)
                        .map(|((y, t), &m)| if m { scale * (y - t) } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *pred, Tensor::new(p.shape().to_vec(), gp)?);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], i: usize, g: Tensor) {
    match &mut grads[i] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn masked_mse_value(pred: &[f64], target: &[f64], mask: &[bool]) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((p, t), _)| (p - t) * (p - t))
        .sum();
    sum / pred.len() as f64
}

fn attention_backward(
    h: &Tensor,
    att: &Tensor,
    slope: f64,
    cache: &AttentionCache,
    g: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (n, d) = (h.rows(), h.cols());
    let (al, ar) = att.data().split_at(d);
    let mut gh = vec![0.0; n * d];
    let mut gal = vec![0.0; d];
    let mut gar = vec![0.0; d];
    let mut dalpha = Vec::new();
    for i in 0..n {
        let r = cache.offsets[i]..cache.offsets[i + 1];
        let gi = g.row(i);
        dalpha.clear();
        let mut weighted = 0.0;
        for p in r.clone() {
            let j = cache.support[p] as usize;
            let da: f64 = gi.iter().zip(h.row(j)).map(|(x, y)| x * y).sum();
            weighted += cache.alpha[p] * da;
            dalpha.push(da);
            // Direct path: out_i = Σ_j alpha_ij h_j.
            for (o, x) in gh[j * d..(j + 1) * d].iter_mut().zip(gi) {
                *o += cache.alpha[p] * x;
            }
        }
        let mut ds_sum = 0.0;
        for (q, p) in r.enumerate() {
            let j = cache.support[p] as usize;
            let de = cache.alpha[p] * (dalpha[q] - weighted);
            let ds = de * if cache.score[p] > 0.0 { 1.0 } else { slope };
            ds_sum += ds;
            for c in 0..d {
                gar[c] += ds * h.at(j, c);
                gh[j * d + c] += ds * ar[c];
            }
        }
        for c in 0..d {
            gal[c] += ds_sum * h.at(i, c);
            gh[i * d + c] += ds_sum * al[c];
        }
    }
    let mut ga = gal;
    ga.extend(gar);
    Ok((Tensor::matrix(n, d, gh)?, Tensor::new(att.shape().to_vec(), ga)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_before_forward_fails() {
        let tape = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(Error::NoForward)));
    }

    #[test]
    fn masked_mse_gradient_is_zero_off_mask() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
        let loss = tape
            .masked_mse(p, &[0.0, 0.0, 0.0, 1.0], &[false, true, false, true])
            .unwrap();
        assert_eq!(tape.value(loss).data()[0], (4.0 + 9.0) / 4.0);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[0.0, 1.0, 0.0, 1.5]);
    }

    #[test]
    fn one_masked_node_gives_e2_over_n() {
        let mut tape = Tape::new();
        let n = 7;
        let p = tape.leaf(Tensor::vector(vec![0.5; n]));
        let mut mask = vec![false; n];
        mask[3] = true;
        let target = vec![2.0; n];
        let loss = tape.masked_mse(p, &target, &mask).unwrap();
        assert!((tape.value(loss).data()[0] - 1.5 * 1.5 / n as f64).abs() < 1e-15);
        let mut none = Tape::new();
        let p = none.leaf(Tensor::vector(vec![0.5; n]));
        let l = none.masked_mse(p, &target, &vec![false; n]).unwrap();
        assert_eq!(none.value(l).data()[0], 0.0);
    }

    #[test]
    fn elu_and_bias_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 2, vec![-1.0, 0.5, 2.0, -0.25]).unwrap());
        let b = tape.leaf(Tensor::vector(vec![0.1, -0.2]));
        let y = tape.add_bias(x, b).unwrap();
        let z = tape.elu(y);
        let g = tape.backward_with(z, Tensor::matrix(2, 2, vec![1.0; 4]).unwrap()).unwrap();
        let gx = g.get(x).unwrap().data().to_vec();
        assert!((gx[0] - (-0.9f64).exp()).abs() < 1e-15);
        assert_eq!(gx[1], 1.0);
        assert_eq!(gx[2], 1.0);
        assert!((gx[3] - (-0.45f64).exp()).abs() < 1e-15);
        let gb = g.get(b).unwrap().data();
        assert!((gb[0] - ((-0.9f64).exp() + 1.0)).abs() < 1e-15);
    }
}
