use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::{ParamId, ParamStore, Real, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MatMulKind {
    /// `[m,k] · [k,n]`
    Plain,
    /// `[b,m,k] · [k,n]`, one right operand shared across the batch.
    SharedRhs,
    /// `[b,m,k] · [b,k,n]`
    Batched,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        kind: MatMulKind,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Mean {
        x: Var,
        outer: usize,
        n: usize,
        inner: usize,
    },
    Sum(Var),
    Concat {
        parts: Vec<Var>,
    },
    Scale {
        x: Var,
        factor: T,
    },
    Transpose {
        x: Var,
        batch: usize,
        rows: usize,
        cols: usize,
    },
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    SegmentSum {
        x: Var,
        segments: Vec<usize>,
    },
    Reshape(Var),
    Mse {
        pred: Var,
        target: Var,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    /// True when some leaf upstream of this node requires a gradient.
    needs_grad: bool,
    param: Option<ParamId>,
}

/// Define-by-run record of one forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    /// Accumulated gradients of gradient-requiring leaves.
    leaf_grads: Vec<Option<Vec<T>>>,
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// `small` is a trailing suffix of `big` (including equal shapes).
fn is_suffix(big: &[usize], small: &[usize]) -> bool {
    small.len() <= big.len() && big[big.len() - small.len()..] == *small
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Run `f` on the adjoint buffer of `v`, allocating it on first use. Inputs
/// that need no gradient are skipped.
fn with_adj<T: Real>(adj: &mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var, f: impl FnOnce(&mut [T])) {
    if !nodes[v.0].needs_grad {
        return;
    }
    let len = nodes[v.0].value.len();
    f(adj[v.0].get_or_insert_with(|| vec![T::zero(); len]));
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            param: None,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf created with `requires_grad`, if any
    /// backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[T])> {
        self.nodes
            .iter()
            .zip(&self.leaf_grads)
            .filter_map(|(n, g)| match (n.param, g) {
                (Some(id), Some(g)) => Some((id, g.as_slice())),
                _ => None,
            })
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Copy a stored parameter onto the tape as a gradient-requiring leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Matrix product over the last two axes. Supports `[m,k]·[k,n]`,
    /// `[b,m,k]·[k,n]` and `[b,m,k]·[b,k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (kind, batch, m, k, n) = match (sa.as_slice(), sb.as_slice()) {
            (&[m, k], &[k2, n]) if k == k2 => (MatMulKind::Plain, 1, m, k, n),
            (&[bt, m, k], &[k2, n]) if k == k2 => (MatMulKind::SharedRhs, bt, m, k, n),
            (&[bt, m, k], &[bt2, k2, n]) if k == k2 && bt == bt2 => (MatMulKind::Batched, bt, m, k, n),
            _ => return Err(mismatch("matmul", &sa, &sb)),
        };
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (da, db) = (self.value(a).data(), self.value(b).data());
            match kind {
                MatMulKind::Plain => gemm_nn(da, db, &mut out, m, k, n),
                // Shared weight: the batch folds into the row dimension.
                MatMulKind::SharedRhs => gemm_nn(da, db, &mut out, batch * m, k, n),
                MatMulKind::Batched => {
                    for t in 0..batch {
                        gemm_nn(
                            &da[t * m * k..(t + 1) * m * k],
                            &db[t * k * n..(t + 1) * k * n],
                            &mut out[t * m * n..(t + 1) * m * n],
                            m,
                            k,
                            n,
                        );
                    }
                }
            }
        }
        let shape = if kind == MatMulKind::Plain {
            vec![m, n]
        } else {
            vec![batch, m, n]
        };
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::MatMul {
                a,
                b,
                kind,
                batch,
                m,
                k,
                n,
            },
            ng,
        ))
    }

    /// Elementwise sum; `b` may match a trailing suffix of `a`'s shape and is
    /// then broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if !is_suffix(&sa, &sb) {
            return Err(mismatch("add", &sa, &sb));
        }
        let db = self.value(b).data();
        let period = db.len();
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + db[i % period])
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(&sa, out)?, Op::Add { a, b }, ng))
    }

    /// Elementwise product with the same suffix broadcasting as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if !is_suffix(&sa, &sb) {
            return Err(mismatch("mul", &sa, &sb));
        }
        let db = self.value(b).data();
        let period = db.len();
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * db[i % period])
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(&sa, out)?, Op::Mul { a, b }, ng))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(x);
        let out = Tensor::new(value.shape(), value.data().iter().map(|&v| f(v)).collect()).expect("same shape");
        let ng = self.ng(x);
        self.push(out, op, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        self.unary(x, |v| v * factor, Op::Scale { x, factor })
    }

    /// Softmax over the last axis, shifted by the row maximum.
    pub fn softmax(&mut self, x: Var) -> Var {
        let value = self.value(x);
        let d = value.last_dim();
        let mut out = value.data().to_vec();
        for row in out.chunks_mut(d) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let out = Tensor::new(value.shape(), out).expect("same shape");
        let ng = self.ng(x);
        self.push(out, Op::Softmax(x), ng)
    }

    /// Normalize over the last axis (biased variance), then `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().ok_or_else(|| mismatch("layer_norm", &sx, &[]))?;
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(mismatch("layer_norm", &sx, self.shape(p)));
            }
        }
        let eps = T::lit(eps);
        let n = T::from_usize(d).expect("width");
        let xs = self.value(x).data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = xs.len() / d;
        let mut xhat = vec![T::zero(); xs.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xs.len()];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = g[j] * h + b[j];
            }
        }
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        Ok(self.push(
            Tensor::new(&sx, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() || sx[axis] == 0 {
            return Err(mismatch("mean", &sx, &[axis]));
        }
        let outer: usize = sx[..axis].iter().product();
        let n = sx[axis];
        let inner: usize = sx[axis + 1..].iter().product();
        let xs = self.value(x).data();
        let scale = T::one() / T::from_usize(n).expect("axis length");
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let base = (o * n + j) * inner;
                for i in 0..inner {
                    out[o * inner + i] += xs[base + i];
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= scale);
        let mut shape = sx.clone();
        shape.remove(axis);
        let ng = self.ng(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Mean { x, outer, n, inner }, ng))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(total), Op::Sum(x), ng)
    }

    /// Concatenate along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::EmptyInput("concat"))?;
        let lead = {
            let s = self.shape(first);
            if s.is_empty() {
                return Err(mismatch("concat", s, &[]));
            }
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(mismatch("concat", self.shape(first), s));
            }
            widths.push(s[lead.len()]);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(&shape, out)?, Op::Concat { parts: parts.to_vec() }, ng))
    }

    /// Swap the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        let (batch, rows, cols) = match sx.as_slice() {
            &[r, c] => (1, r, c),
            &[b, r, c] => (b, r, c),
            _ => return Err(mismatch("transpose", &sx, &[])),
        };
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); xs.len()];
        for t in 0..batch {
            let off = t * rows * cols;
            for i in 0..rows {
                for j in 0..cols {
                    out[off + j * rows + i] = xs[off + i * cols + j];
                }
            }
        }
        let mut shape = sx.clone();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        let ng = self.ng(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Transpose { x, batch, rows, cols }, ng))
    }

    /// Row gather from a `[rows, d]` table: `out[k] = table[indices[k]]`.
    pub fn embedding_lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let st = self.shape(table).to_vec();
        let &[rows, d] = st.as_slice() else {
            return Err(mismatch("embedding_lookup", &st, &[]));
        };
        let data = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding_lookup",
                    index: i,
                    bound: rows,
                });
            }
            out.extend_from_slice(&data[i * d..(i + 1) * d]);
        }
        let ng = self.ng(table);
        Ok(self.push(
            Tensor::new(&[indices.len(), d], out)?,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            ng,
        ))
    }

    /// Scatter-add rows of `[e, d]` into `num_segments` output rows:
    /// `out[segments[k]] += x[k]`.
    pub fn segment_sum(&mut self, x: Var, segments: &[usize], num_segments: usize) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        let &[e, d] = sx.as_slice() else {
            return Err(mismatch("segment_sum", &sx, &[]));
        };
        if segments.len() != e {
            return Err(mismatch("segment_sum", &sx, &[segments.len()]));
        }
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); num_segments * d];
        for (k, &s) in segments.iter().enumerate() {
            if s >= num_segments {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_sum",
                    index: s,
                    bound: num_segments,
                });
            }
            for j in 0..d {
                out[s * d + j] += xs[k * d + j];
            }
        }
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::new(&[num_segments, d], out)?,
            Op::SegmentSum {
                x,
                segments: segments.to_vec(),
            },
            ng,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshaped(shape)?;
        let ng = self.ng(x);
        Ok(self.push(value, Op::Reshape(x), ng))
    }

    /// Mean squared error over all elements, as a rank-0 tensor.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(mismatch("mse", sp, st));
        }
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let n = T::from_usize(p.len().max(1)).expect("count");
        let loss = p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / n;
        let ng = self.ng(pred) || self.ng(target);
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target }, ng))
    }

    /// Reverse sweep from a one-element `output`. Adjoints of intermediate
    /// nodes are rebuilt on every call; leaf gradients are accumulated, so a
    /// second call without clearing doubles them.
    pub fn backward(&mut self, output: Var) -> Result<(), TensorError> {
        let out_shape = self.shape(output).to_vec();
        if self.value(output).len() != 1 {
            return Err(TensorError::NonScalarOutput(out_shape));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![T::one()]);

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let nodes = &self.nodes;
            match &node.op {
                Op::Leaf => {
                    let acc = self.leaf_grads[idx].get_or_insert_with(|| vec![T::zero(); g.len()]);
                    for (a, &v) in acc.iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                &Op::MatMul {
                    a,
                    b,
                    kind,
                    batch,
                    m,
                    k,
                    n,
                } => {
                    let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    with_adj(&mut adj, nodes, a, |da: &mut [T]| match kind {
                        MatMulKind::Plain => gemm_nt(&g, vb, da, m, n, k),
                        MatMulKind::SharedRhs => gemm_nt(&g, vb, da, batch * m, n, k),
                        MatMulKind::Batched => {
                            for t in 0..batch {
                                gemm_nt(
                                    &g[t * m * n..(t + 1) * m * n],
                                    &vb[t * k * n..(t + 1) * k * n],
                                    &mut da[t * m * k..(t + 1) * m * k],
                                    m,
                                    n,
                                    k,
                                );
                            }
                        }
                    });
                    with_adj(&mut adj, nodes, b, |db: &mut [T]| match kind {
                        MatMulKind::Plain => gemm_tn(va, &g, db, m, k, n),
                        MatMulKind::SharedRhs => gemm_tn(va, &g, db, batch * m, k, n),
                        MatMulKind::Batched => {
                            for t in 0..batch {
                                gemm_tn(
                                    &va[t * m * k..(t + 1) * m * k],
                                    &g[t * m * n..(t + 1) * m * n],
                                    &mut db[t * k * n..(t + 1) * k * n],
                                    m,
                                    k,
                                    n,
                                );
                            }
                        }
                    });
                }
                &Op::Add { a, b } => {
                    with_adj(&mut adj, nodes, a, |da: &mut [T]| {
                        for (d, &v) in da.iter_mut().zip(&g) {
                            *d += v;
                        }
                    });
                    with_adj(&mut adj, nodes, b, |db: &mut [T]| {
                        let period = db.len();
                        for (i, &v) in g.iter().enumerate() {
                            db[i % period] += v;
                        }
                    });
                }
                &Op::Mul { a, b } => {
                    let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    let period = vb.len();
                    with_adj(&mut adj, nodes, a, |da: &mut [T]| {
                        for (i, &v) in g.iter().enumerate() {
                            da[i] += v * vb[i % period];
                        }
                    });
                    with_adj(&mut adj, nodes, b, |db: &mut [T]| {
                        for (i, &v) in g.iter().enumerate() {
                            db[i % period] += v * va[i];
                        }
                    });
                }
                &Op::Relu(x) => {
                    let vx = self.nodes[x.0].value.data();
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        for i in 0..g.len() {
                            if vx[i] > T::zero() {
                                dx[i] += g[i];
                            }
                        }
                    });
                }
                &Op::Sigmoid(x) => {
                    let y = node.value.data();
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        for i in 0..g.len() {
                            dx[i] += g[i] * y[i] * (T::one() - y[i]);
                        }
                    });
                }
                &Op::Softplus(x) => {
                    let vx = self.nodes[x.0].value.data();
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        for i in 0..g.len() {
                            dx[i] += g[i] * sigmoid(vx[i]);
                        }
                    });
                }
                &Op::Scale { x, factor } => {
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        for (d, &v) in dx.iter_mut().zip(&g) {
                            *d += v * factor;
                        }
                    });
                }
                &Op::Softmax(x) => {
                    let y = node.value.data();
                    let d = node.value.last_dim();
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        for r in 0..y.len() / d {
                            let (yr, gr) = (&y[r * d..(r + 1) * d], &g[r * d..(r + 1) * d]);
                            let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                            for j in 0..d {
                                dx[r * d + j] += yr[j] * (gr[j] - dot);
                            }
                        }
                    });
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let d = node.value.last_dim();
                    let rows = xhat.len() / d;
                    let gv = self.nodes[gain.0].value.data();
                    with_adj(&mut adj, nodes, *gain, |dg: &mut [T]| {
                        for r in 0..rows {
                            for j in 0..d {
                                dg[j] += g[r * d + j] * xhat[r * d + j];
                            }
                        }
                    });
                    with_adj(&mut adj, nodes, *bias, |db: &mut [T]| {
                        for r in 0..rows {
                            for j in 0..d {
                                db[j] += g[r * d + j];
                            }
                        }
                    });
                    with_adj(&mut adj, nodes, *x, |dx: &mut [T]| {
                        let n = T::from_usize(d).expect("width");
                        for r in 0..rows {
                            let mut sum_dh = T::zero();
                            let mut sum_dh_h = T::zero();
                            for j in 0..d {
                                let dh = g[r * d + j] * gv[j];
                                sum_dh += dh;
                                sum_dh_h += dh * xhat[r * d + j];
                            }
                            let scale = inv_std[r] / n;
                            for j in 0..d {
                                let dh = g[r * d + j] * gv[j];
                                dx[r * d + j] += scale * (n * dh - sum_dh - xhat[r * d + j] * sum_dh_h);
                            }
                        }
                    });
                }
                &Op::Mean { x, outer, n, inner } => {
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        let scale = T::one() / T::from_usize(n).expect("axis length");
                        for o in 0..outer {
                            for j in 0..n {
                                for i in 0..inner {
                                    dx[(o * n + j) * inner + i] += g[o * inner + i] * scale;
                                }
                            }
                        }
                    });
                }
                &Op::Sum(x) => {
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        for d in dx.iter_mut() {
                            *d += g[0];
                        }
                    });
                }
                Op::Concat { parts } => {
                    let total = node.value.last_dim();
                    let rows = node.value.len() / total.max(1);
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.nodes[p.0].value.last_dim();
                        with_adj(&mut adj, nodes, p, |dp: &mut [T]| {
                            for r in 0..rows {
                                for j in 0..w {
                                    dp[r * w + j] += g[r * total + offset + j];
                                }
                            }
                        });
                        offset += w;
                    }
                }
                &Op::Transpose { x, batch, rows, cols } => {
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        for t in 0..batch {
                            let off = t * rows * cols;
                            for i in 0..rows {
                                for j in 0..cols {
                                    dx[off + i * cols + j] += g[off + j * rows + i];
                                }
                            }
                        }
                    });
                }
                Op::Gather { table, indices } => {
                    let d = node.value.last_dim();
                    with_adj(&mut adj, nodes, *table, |dt: &mut [T]| {
                        for (k, &i) in indices.iter().enumerate() {
                            for j in 0..d {
                                dt[i * d + j] += g[k * d + j];
                            }
                        }
                    });
                }
                Op::SegmentSum { x, segments } => {
                    let d = node.value.last_dim();
                    with_adj(&mut adj, nodes, *x, |dx: &mut [T]| {
                        for (k, &s) in segments.iter().enumerate() {
                            for j in 0..d {
                                dx[k * d + j] += g[s * d + j];
                            }
                        }
                    });
                }
                &Op::Reshape(x) => {
                    with_adj(&mut adj, nodes, x, |dx: &mut [T]| {
                        for (d, &v) in dx.iter_mut().zip(&g) {
                            *d += v;
                        }
                    });
                }
                &Op::Mse { pred, target } => {
                    let (p, t) = (self.nodes[pred.0].value.data(), self.nodes[target.0].value.data());
                    let scale = T::lit(2.0) / T::from_usize(p.len().max(1)).expect("count") * g[0];
                    with_adj(&mut adj, nodes, pred, |dp: &mut [T]| {
                        for i in 0..p.len() {
                            dp[i] += scale * (p[i] - t[i]);
                        }
                    });
                    with_adj(&mut adj, nodes, target, |dt: &mut [T]| {
                        for i in 0..p.len() {
                            dt[i] -= scale * (p[i] - t[i]);
                        }
                    });
                }
            }
        }
        Ok(())
    }
}
