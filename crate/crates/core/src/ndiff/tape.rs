//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Every operation records its forward value and a closure producing the
//! vector-Jacobian products for its parents. Nodes are appended in
//! topological order, so one reverse sweep visits each node exactly once;
//! a second backward without rebuilding the graph is an error.
//!
//! Saved activations are cloned into the closures — histories are tens of
//! events, so memory is not a concern and checkpointing is unnecessary.

use super::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NdiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward already ran on this tape; rebuild the graph first")]
    BackwardTwice,
    #[error("backward target must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient encountered")]
    NonFiniteGrad,
    #[error("{op}: {message}")]
    Domain { op: &'static str, message: String },
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackFn>,
    needs_grad: bool,
}

/// Gradients of a scalar output with respect to every tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Differentiable input (gradient leaf).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, vec![], None, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, vec![], None, false)
    }

    fn push(
        &mut self,
        value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackFn>,
        leaf_grad: bool,
    ) -> Var {
        let needs_grad = leaf_grad || parents.iter().any(|&p| self.nodes[p].needs_grad);
        self.nodes.push(Node {
            value,
            parents,
            backward,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> NdiffError {
        NdiffError::Shape {
            op,
            lhs: lhs.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Self::shape_err("add", av, bv));
        }
        let value = av.zip_map(bv, |x, y| x + y);
        Ok(self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g| vec![g.clone(), g.clone()])),
            false,
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Self::shape_err("sub", av, bv));
        }
        let value = av.zip_map(bv, |x, y| x - y);
        Ok(self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g| vec![g.clone(), g.map(|x| -x)])),
            false,
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        if av.shape() != bv.shape() {
            return Err(Self::shape_err("mul", &av, &bv));
        }
        let value = av.zip_map(&bv, |x, y| x * y);
        Ok(self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g| {
                vec![
                    g.zip_map(&bv, |gi, y| gi * y),
                    g.zip_map(&av, |gi, x| gi * x),
                ]
            })),
            false,
        ))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        if av.shape() != bv.shape() {
            return Err(Self::shape_err("div", &av, &bv));
        }
        let value = av.zip_map(&bv, |x, y| x / y);
        Ok(self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g| {
                let da = g.zip_map(&bv, |gi, y| gi / y);
                let db_raw = g.zip_map(&av, |gi, x| gi * x);
                let db = db_raw.zip_map(&bv, |v, y| -v / (y * y));
                vec![da, db]
            })),
            false,
        ))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| -x);
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g| vec![g.map(|x| -x)])),
            false,
        )
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| vec![g.map(|x| c * x)])),
            false,
        )
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, vec![a.0], Some(Box::new(|g| vec![g.clone()])), false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(Self::shape_err("matmul", &av, &bv));
        }
        let value = av.matmul(&bv);
        Ok(self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g| {
                vec![g.matmul(&bv.transpose()), av.transpose().matmul(g)]
            })),
            false,
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g| vec![g.transpose()])),
            false,
        )
    }

    /// Adds a length-`d` vector to every row of an `[n, d]` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NdiffError> {
        let (av, bv) = (self.value(a), self.value(bias));
        if av.shape().len() != 2 || bv.shape() != [av.cols()] {
            return Err(Self::shape_err("add_row", av, bv));
        }
        let (n, d) = (av.rows(), av.cols());
        let mut data = av.data().to_vec();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] += bv.data()[j];
            }
        }
        Ok(self.push(
            Tensor::matrix(n, d, data),
            vec![a.0, bias.0],
            Some(Box::new(move |g| {
                let mut col = vec![0.0; d];
                for i in 0..n {
                    for (j, c) in col.iter_mut().enumerate() {
                        *c += g.data()[i * d + j];
                    }
                }
                vec![g.clone(), Tensor::vector(col)]
            })),
            false,
        ))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let av = self.value(a).clone();
        let value = av.map(stable_softplus);
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| {
                vec![g.zip_map(&av, |gi, x| gi * sigmoid(x))]
            })),
            false,
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let out = value.clone();
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| vec![g.zip_map(&out, |gi, y| gi * y)])),
            false,
        )
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, NdiffError> {
        let av = self.value(a).clone();
        if av.data().iter().any(|&x| x <= 0.0) {
            return Err(NdiffError::Domain {
                op: "ln",
                message: "input has non-positive entries".into(),
            });
        }
        let value = av.map(f64::ln);
        Ok(self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| vec![g.zip_map(&av, |gi, x| gi / x)])),
            false,
        ))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        let value = Tensor::scalar(av.data().iter().sum());
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| {
                vec![Tensor::filled(shape.clone(), g.item())]
            })),
            false,
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.len() as f64;
        let shape = av.shape().to_vec();
        let value = Tensor::scalar(av.data().iter().sum::<f64>() / n);
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| {
                vec![Tensor::filled(shape.clone(), g.item() / n)]
            })),
            false,
        )
    }

    /// Mean over rows of an `[n, d]` matrix, producing `[1, d]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, NdiffError> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Self::shape_err("mean_rows", av, av));
        }
        let (n, d) = (av.rows(), av.cols());
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (j, o) in out.iter_mut().enumerate() {
                *o += av.at(i, j) / n as f64;
            }
        }
        Ok(self.push(
            Tensor::matrix(1, d, out),
            vec![a.0],
            Some(Box::new(move |g| {
                let mut grad = vec![0.0; n * d];
                for i in 0..n {
                    for j in 0..d {
                        grad[i * d + j] = g.data()[j] / n as f64;
                    }
                }
                vec![Tensor::matrix(n, d, grad)]
            })),
            false,
        ))
    }

    /// Row-wise softmax of an `[n, m]` matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NdiffError> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Self::shape_err("softmax_rows", av, av));
        }
        let (n, m) = (av.rows(), av.cols());
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let row = &av.data()[i * m..(i + 1) * m];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                data[i * m + j] = e;
                denom += e;
            }
            for v in &mut data[i * m..(i + 1) * m] {
                *v /= denom;
            }
        }
        let value = Tensor::matrix(n, m, data);
        let out = value.clone();
        Ok(self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| {
                let mut grad = vec![0.0; n * m];
                for i in 0..n {
                    let y = &out.data()[i * m..(i + 1) * m];
                    let gr = &g.data()[i * m..(i + 1) * m];
                    let inner: f64 = y.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                    for j in 0..m {
                        grad[i * m + j] = y[j] * (gr[j] - inner);
                    }
                }
                vec![Tensor::matrix(n, m, grad)]
            })),
            false,
        ))
    }

    /// Row-wise layer normalization with learned gain and bias (length `d`).
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NdiffError> {
        const EPS: f64 = 1e-5;
        let xv = self.value(x).clone();
        let gv = self.value(gain).clone();
        let bv = self.value(bias);
        if xv.shape().len() != 2 || gv.shape() != [xv.cols()] || bv.shape() != [xv.cols()] {
            return Err(Self::shape_err("layer_norm_rows", &xv, &gv));
        }
        let (n, d) = (xv.rows(), xv.cols());
        let mut normalized = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let row = &xv.data()[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + EPS).sqrt();
            inv_std[i] = inv;
            for j in 0..d {
                normalized[i * d + j] = (row[j] - mean) * inv;
            }
        }
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                out[i * d + j] = normalized[i * d + j] * gv.data()[j] + bv.data()[j];
            }
        }
        let xhat = Tensor::matrix(n, d, normalized);
        Ok(self.push(
            Tensor::matrix(n, d, out),
            vec![x.0, gain.0, bias.0],
            Some(Box::new(move |g| {
                let mut dx = vec![0.0; n * d];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for i in 0..n {
                    let gr = &g.data()[i * d..(i + 1) * d];
                    let xh = &xhat.data()[i * d..(i + 1) * d];
                    let dxhat: Vec<f64> =
                        gr.iter().zip(gv.data()).map(|(gi, ga)| gi * ga).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
                    let mean_dxhat_xhat =
                        dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        dx[i * d + j] =
                            inv_std[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
                        dgain[j] += gr[j] * xh[j];
                        dbias[j] += gr[j];
                    }
                }
                vec![
                    Tensor::matrix(n, d, dx),
                    Tensor::vector(dgain),
                    Tensor::vector(dbias),
                ]
            })),
            false,
        ))
    }

    /// Concatenates `[n, dᵢ]` matrices along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NdiffError> {
        assert!(!parts.is_empty());
        let n = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 2 || v.rows() != n {
                return Err(Self::shape_err("concat_cols", self.value(parts[0]), v));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; n * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = self.value(p);
            for i in 0..n {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&v.data()[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let parents: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let widths_back = widths.clone();
        Ok(self.push(
            Tensor::matrix(n, total, data),
            parents,
            Some(Box::new(move |g| {
                let mut grads = Vec::with_capacity(widths_back.len());
                let mut offset = 0;
                for &w in &widths_back {
                    let mut part = vec![0.0; n * w];
                    for i in 0..n {
                        part[i * w..(i + 1) * w]
                            .copy_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                    }
                    grads.push(Tensor::matrix(n, w, part));
                    offset += w;
                }
                grads
            })),
            false,
        ))
    }

    /// Columns `[lo, hi)` of an `[n, d]` matrix.
    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Result<Var, NdiffError> {
        let av = self.value(a);
        if av.shape().len() != 2 || hi > av.cols() || lo >= hi {
            return Err(NdiffError::Domain {
                op: "slice_cols",
                message: format!("range {lo}..{hi} on shape {:?}", av.shape()),
            });
        }
        let (n, d) = (av.rows(), av.cols());
        let w = hi - lo;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            data[i * w..(i + 1) * w].copy_from_slice(&av.data()[i * d + lo..i * d + hi]);
        }
        Ok(self.push(
            Tensor::matrix(n, w, data),
            vec![a.0],
            Some(Box::new(move |g| {
                let mut grad = vec![0.0; n * d];
                for i in 0..n {
                    grad[i * d + lo..i * d + hi].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                vec![Tensor::matrix(n, d, grad)]
            })),
            false,
        ))
    }

    /// Elementwise `max(x, c)`; subgradient zero at or below the clamp.
    pub fn clamp_min(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a).clone();
        let value = av.map(|x| x.max(c));
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| {
                vec![g.zip_map(&av, |gi, x| if x > c { gi } else { 0.0 })]
            })),
            false,
        )
    }

    /// Elementwise `min(x, c)`; subgradient zero at or above the clamp.
    pub fn clamp_max(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a).clone();
        let value = av.map(|x| x.min(c));
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| {
                vec![g.zip_map(&av, |gi, x| if x < c { gi } else { 0.0 })]
            })),
            false,
        )
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, k: &Tensor) -> Result<Var, NdiffError> {
        let av = self.value(a);
        if av.shape() != k.shape() {
            return Err(Self::shape_err("mul_const", av, k));
        }
        let value = av.zip_map(k, |x, y| x * y);
        let k = k.clone();
        Ok(self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g| vec![g.zip_map(&k, |gi, y| gi * y)])),
            false,
        ))
    }

    /// Custom elementwise function given per-element `(value, dvalue/dx)`.
    pub fn map_with(&mut self, a: Var, f: impl Fn(usize, f64) -> (f64, f64)) -> Var {
        let av = self.value(a);
        let mut vals = Vec::with_capacity(av.len());
        let mut derivs = Vec::with_capacity(av.len());
        for (i, &x) in av.data().iter().enumerate() {
            let (v, d) = f(i, x);
            vals.push(v);
            derivs.push(d);
        }
        let shape = av.shape().to_vec();
        let deriv = Tensor::new(shape.clone(), derivs);
        self.push(
            Tensor::new(shape, vals),
            vec![a.0],
            Some(Box::new(move |g| vec![g.zip_map(&deriv, |gi, d| gi * d)])),
            false,
        )
    }

    /// Reverse sweep from a scalar loss. Each node is visited exactly once;
    /// a second call without rebuilding the graph fails.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NdiffError> {
        if self.consumed {
            return Err(NdiffError::BackwardTwice);
        }
        self.consumed = true;
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(NdiffError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(loss_value.shape().to_vec(), 1.0));
        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let Some(backward) = self.nodes[id].backward.as_ref() else {
                continue;
            };
            let g = grads[id].as_ref().expect("checked above");
            if !g.all_finite() {
                return Err(NdiffError::NonFiniteGrad);
            }
            let contributions = backward(g);
            debug_assert_eq!(contributions.len(), self.nodes[id].parents.len());
            for (parent, contribution) in self.nodes[id]
                .parents
                .clone()
                .into_iter()
                .zip(contributions)
            {
                if !self.nodes[parent].needs_grad {
                    continue;
                }
                match &mut grads[parent] {
                    Some(acc) => acc.add_scaled(&contribution, 1.0),
                    slot => *slot = Some(contribution),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub(crate) fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
