//! Reverse-mode automatic differentiation on batched `f64` matrices.
//!
//! The tape is a flat Wengert list of `Array2<f64>` nodes. The backward pass
//! appends adjoint computations as ordinary tape nodes, so gradients of
//! gradients (and third-order quantities such as ∇_x Δs) come out exact:
//! calling [`Tape::grad`] on a node produced by an earlier `grad` call
//! differentiates through the whole extended graph.
//!
//! Per-sample independence: every op treats the row axis as a batch axis
//! (matmuls contract only the column axis), so the gradient of a summed
//! scalar w.r.t. a batched input recovers the per-row gradients.

use ndarray::{concatenate, Array2, Axis};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// `a: n×q` plus a row `b: 1×q` broadcast over rows.
    AddRow(NodeId, NodeId),
    /// n×q → 1×1
    SumAll(NodeId),
    /// n×q → 1×q (sum down each column)
    ColSum(NodeId),
    /// n×q → n×1 (sum across each row)
    RowSum(NodeId),
    /// 1×1 → n×q
    BroadcastScalar(NodeId),
    /// 1×q → n×q
    BroadcastRow(NodeId),
    /// n×1 → n×q
    BroadcastCol(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    /// Place `a` at column offset into an otherwise-zero n×total matrix.
    PadCols(NodeId, usize),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let s = self.nodes[id].value.dim();
        (s.0, s.1)
    }

    pub fn constant(&mut self, v: Array2<f64>) -> NodeId {
        self.push(v, Op::Leaf)
    }

    pub fn zeros(&mut self, n: usize, q: usize) -> NodeId {
        self.constant(Array2::zeros((n, q)))
    }

    pub fn ones(&mut self, n: usize, q: usize) -> NodeId {
        self.constant(Array2::ones((n, q)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let v = &self.nodes[a].value - &self.nodes[b].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let v = &self.nodes[a].value * &self.nodes[b].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = -&self.nodes[a].value;
        self.push(v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = &self.nodes[a].value * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(
            self.shape(a).1,
            self.shape(b).0,
            "matmul: inner dimension mismatch"
        );
        let v = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, q) = self.shape(a);
        assert_eq!(self.shape(b), (1, q), "add_row: bias must be 1×q");
        let _ = n;
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(v, Op::AddRow(a, b))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a].value.sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    pub fn col_sum(&mut self, a: NodeId) -> NodeId {
        let v = self
            .nodes[a]
            .value
            .sum_axis(Axis(0))
            .insert_axis(Axis(0));
        self.push(v, Op::ColSum(a))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let v = self
            .nodes[a]
            .value
            .sum_axis(Axis(1))
            .insert_axis(Axis(1));
        self.push(v, Op::RowSum(a))
    }

    pub fn broadcast_scalar(&mut self, a: NodeId, n: usize, q: usize) -> NodeId {
        assert_eq!(self.shape(a), (1, 1));
        let v = Array2::from_elem((n, q), self.nodes[a].value[(0, 0)]);
        self.push(v, Op::BroadcastScalar(a))
    }

    pub fn broadcast_row(&mut self, a: NodeId, n: usize) -> NodeId {
        let (one, q) = self.shape(a);
        assert_eq!(one, 1);
        let row = self.nodes[a].value.row(0).to_owned();
        let v = Array2::from_shape_fn((n, q), |(_, j)| row[j]);
        self.push(v, Op::BroadcastRow(a))
    }

    pub fn broadcast_col(&mut self, a: NodeId, q: usize) -> NodeId {
        let (n, one) = self.shape(a);
        assert_eq!(one, 1);
        let col = self.nodes[a].value.column(0).to_owned();
        let v = Array2::from_shape_fn((n, q), |(i, _)| col[i]);
        self.push(v, Op::BroadcastCol(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        // ln(1 + e^x), computed stably.
        let v = self.nodes[a]
            .value
            .mapv(|x| if x > 30.0 { x } else { (1.0 + x.exp()).ln() });
        self.push(v, Op::Softplus(a))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::sin);
        self.push(v, Op::Sin(a))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::cos);
        self.push(v, Op::Cos(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.nodes[p].value.view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (_, q) = self.shape(a);
        assert!(start + len <= q, "slice_cols out of range");
        let v = self.nodes[a]
            .value
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn pad_cols(&mut self, a: NodeId, start: usize, total: usize) -> NodeId {
        let (n, q) = self.shape(a);
        assert!(start + q <= total, "pad_cols out of range");
        let mut v = Array2::zeros((n, total));
        v.slice_mut(ndarray::s![.., start..start + q])
            .assign(&self.nodes[a].value);
        self.push(v, Op::PadCols(a, start))
    }

    /// Square elementwise (sugar over `mul`).
    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a)
    }

    /// Mean over all entries of an n×1 column: sum_all scaled by 1/n.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let (n, q) = self.shape(a);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (n as f64 * q as f64))
    }

    /// Gradient of the scalar node `y` (must be 1×1) with respect to each of
    /// `wrt`. The adjoints are built out of tape nodes, so the returned ids
    /// can be differentiated again.
    pub fn grad(&mut self, y: NodeId, wrt: &[NodeId]) -> Vec<NodeId> {
        assert_eq!(self.shape(y), (1, 1), "grad: output must be a 1×1 scalar");
        let mut adj: Vec<Option<NodeId>> = vec![None; y + 1];
        let seed = self.ones(1, 1);
        adj[y] = Some(seed);

        for i in (0..=y).rev() {
            let g = match adj[i] {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accum(&mut adj, a, g);
                    self.accum(&mut adj, b, g);
                }
                Op::Sub(a, b) => {
                    self.accum(&mut adj, a, g);
                    let ng = self.neg(g);
                    self.accum(&mut adj, b, ng);
                }
                Op::Mul(a, b) => {
                    let da = self.mul(g, b);
                    let db = self.mul(g, a);
                    self.accum(&mut adj, a, da);
                    self.accum(&mut adj, b, db);
                }
                Op::Neg(a) => {
                    let da = self.neg(g);
                    self.accum(&mut adj, a, da);
                }
                Op::Scale(a, c) => {
                    let da = self.scale(g, c);
                    self.accum(&mut adj, a, da);
                }
                Op::MatMul(a, b) => {
                    let bt = self.transpose(b);
                    let da = self.matmul(g, bt);
                    let at = self.transpose(a);
                    let db = self.matmul(at, g);
                    self.accum(&mut adj, a, da);
                    self.accum(&mut adj, b, db);
                }
                Op::Transpose(a) => {
                    let da = self.transpose(g);
                    self.accum(&mut adj, a, da);
                }
                Op::AddRow(a, b) => {
                    self.accum(&mut adj, a, g);
                    let db = self.col_sum(g);
                    self.accum(&mut adj, b, db);
                }
                Op::SumAll(a) => {
                    let (n, q) = self.shape(a);
                    let da = self.broadcast_scalar(g, n, q);
                    self.accum(&mut adj, a, da);
                }
                Op::ColSum(a) => {
                    let (n, _) = self.shape(a);
                    let da = self.broadcast_row(g, n);
                    self.accum(&mut adj, a, da);
                }
                Op::RowSum(a) => {
                    let (_, q) = self.shape(a);
                    let da = self.broadcast_col(g, q);
                    self.accum(&mut adj, a, da);
                }
                Op::BroadcastScalar(a) => {
                    let da = self.sum_all(g);
                    self.accum(&mut adj, a, da);
                }
                Op::BroadcastRow(a) => {
                    let da = self.col_sum(g);
                    self.accum(&mut adj, a, da);
                }
                Op::BroadcastCol(a) => {
                    let da = self.row_sum(g);
                    self.accum(&mut adj, a, da);
                }
                Op::Tanh(a) => {
                    // d tanh = 1 - tanh^2, with `i` holding tanh(a).
                    let (n, q) = self.shape(i);
                    let one = self.ones(n, q);
                    let v2 = self.mul(i, i);
                    let d = self.sub(one, v2);
                    let da = self.mul(g, d);
                    self.accum(&mut adj, a, da);
                }
                Op::Sigmoid(a) => {
                    let (n, q) = self.shape(i);
                    let one = self.ones(n, q);
                    let omv = self.sub(one, i);
                    let d = self.mul(i, omv);
                    let da = self.mul(g, d);
                    self.accum(&mut adj, a, da);
                }
                Op::Softplus(a) => {
                    let s = self.sigmoid(a);
                    let da = self.mul(g, s);
                    self.accum(&mut adj, a, da);
                }
                Op::Sin(a) => {
                    let c = self.cos(a);
                    let da = self.mul(g, c);
                    self.accum(&mut adj, a, da);
                }
                Op::Cos(a) => {
                    let s = self.sin(a);
                    let gs = self.mul(g, s);
                    let da = self.neg(gs);
                    self.accum(&mut adj, a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.shape(p).1;
                        let dp = self.slice_cols(g, off, w);
                        self.accum(&mut adj, p, dp);
                        off += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let total = self.shape(a).1;
                    let da = self.pad_cols(g, start, total);
                    self.accum(&mut adj, a, da);
                }
                Op::PadCols(a, start) => {
                    let w = self.shape(a).1;
                    let da = self.slice_cols(g, start, w);
                    self.accum(&mut adj, a, da);
                }
            }
        }

        wrt.iter()
            .map(|&w| match adj.get(w).copied().flatten() {
                Some(g) => g,
                None => {
                    let (n, q) = self.shape(w);
                    self.zeros(n, q)
                }
            })
            .collect()
    }

    fn accum(&mut self, adj: &mut [Option<NodeId>], target: NodeId, contribution: NodeId) {
        if target >= adj.len() {
            // Adjoint of a node created during this backward pass; only
            // nodes at or below the differentiated output carry adjoints.
            return;
        }
        adj[target] = Some(match adj[target] {
            Some(existing) => self.add(existing, contribution),
            None => contribution,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_scalar(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn first_order_matches_finite_differences() {
        // y = sum(tanh(x * w)) with x 2×3, w 3×2
        let x0 = array![[0.3, -0.2, 0.7], [0.1, 0.5, -0.4]];
        let w0 = array![[0.2, -0.1], [0.4, 0.3], [-0.6, 0.9]];

        let eval = |x: &Array2<f64>, w: &Array2<f64>| {
            let mut t = Tape::new();
            let xn = t.constant(x.clone());
            let wn = t.constant(w.clone());
            let h = t.matmul(xn, wn);
            let a = t.tanh(h);
            let y = t.sum_all(a);
            t.value(y)[(0, 0)]
        };

        let mut t = Tape::new();
        let xn = t.constant(x0.clone());
        let wn = t.constant(w0.clone());
        let h = t.matmul(xn, wn);
        let a = t.tanh(h);
        let y = t.sum_all(a);
        let grads = t.grad(y, &[xn, wn]);

        for i in 0..2 {
            for j in 0..3 {
                let fd = fd_scalar(
                    |v| {
                        let mut xp = x0.clone();
                        xp[(i, j)] = v;
                        eval(&xp, &w0)
                    },
                    x0[(i, j)],
                    1e-6,
                );
                let ad = t.value(grads[0])[(i, j)];
                assert!((fd - ad).abs() < 1e-8, "x grad mismatch: {fd} vs {ad}");
            }
        }
        for i in 0..3 {
            for j in 0..2 {
                let fd = fd_scalar(
                    |v| {
                        let mut wp = w0.clone();
                        wp[(i, j)] = v;
                        eval(&x0, &wp)
                    },
                    w0[(i, j)],
                    1e-6,
                );
                let ad = t.value(grads[1])[(i, j)];
                assert!((fd - ad).abs() < 1e-8, "w grad mismatch: {fd} vs {ad}");
            }
        }
    }

    #[test]
    fn second_order_through_grad_nodes() {
        // y = sum((x^2)) ; g = dy/dx = 2x ; d(sum g)/dx = 2
        let x0 = array![[1.5, -0.7], [0.25, 2.0]];
        let mut t = Tape::new();
        let xn = t.constant(x0.clone());
        let sq = t.mul(xn, xn);
        let y = t.sum_all(sq);
        let g = t.grad(y, &[xn])[0];
        let gs = t.sum_all(g);
        let h = t.grad(gs, &[xn])[0];
        for v in t.value(h).iter() {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn third_order_tanh() {
        // y = tanh(x); third derivative at 0 is -2.
        let mut t = Tape::new();
        let xn = t.constant(array![[0.0]]);
        let y = t.tanh(xn);
        let ys = t.sum_all(y);
        let g1 = t.grad(ys, &[xn])[0];
        let g1s = t.sum_all(g1);
        let g2 = t.grad(g1s, &[xn])[0];
        let g2s = t.sum_all(g2);
        let g3 = t.grad(g2s, &[xn])[0];
        assert!((t.value(g3)[(0, 0)] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn concat_slice_roundtrip_gradients() {
        let a0 = array![[1.0, 2.0], [3.0, 4.0]];
        let b0 = array![[5.0], [6.0]];
        let mut t = Tape::new();
        let a = t.constant(a0);
        let b = t.constant(b0);
        let c = t.concat_cols(&[a, b]);
        let s = t.slice_cols(c, 1, 2); // columns 1,2 -> [a[:,1], b[:,0]]
        let m = t.mul(s, s);
        let y = t.sum_all(m);
        let g = t.grad(y, &[a, b]);
        assert_eq!(t.value(g[0]), &array![[0.0, 4.0], [0.0, 8.0]]);
        assert_eq!(t.value(g[1]), &array![[10.0], [12.0]]);
    }
}
