use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{matmul_nn_acc, matmul_nt_acc, matmul_tn_acc};
use super::{AdError, Tensor};
use crate::fmath;

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`]. Cheap to copy; only valid for
/// the tape that produced it (checked on every use).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: u32,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    /// k * x + c, elementwise with constants.
    Affine(u32, f64),
    Matmul(u32, u32),
    /// [r,c] + [c] with the bias broadcast across rows.
    AddRowBroadcast(u32, u32),
    /// [r,c] * [r,1] with the column broadcast across columns.
    MulColBroadcast(u32, u32),
    /// [r,c] / [r,1]
    DivColBroadcast(u32, u32),
    GatherRows(u32, Vec<u32>),
    GatherCols(u32, Vec<u32>),
    ConcatCols(u32, u32),
    StackRows(Vec<u32>),
    Reshape(u32),
    RowSum(u32),
    /// Column-wise max over rows; frozen argmax rows recorded at forward.
    ColMax(u32, Vec<u32>),
    Sum(u32),
    Mean(u32),
    Relu(u32),
    Sigmoid(u32),
    Sin(u32),
    Cos(u32),
    Sqrt(u32),
    Abs(u32),
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

/// Record of one forward pass. Rebuilt per pass; operations append nodes in
/// topological order, so the reverse sweep of [`Tape::backward`] sees every
/// output before its inputs.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, rg: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node { op, shape, data, requires_grad: rg });
        Var { tape: self.id, idx }
    }

    fn check(&self, v: Var) -> u32 {
        assert_eq!(v.tape, self.id, "Var belongs to a different tape");
        v.idx
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[self.check(v) as usize]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let s = self.shape(v);
        assert_eq!(s.len(), 2, "expected a 2-d value, got shape {:?}", s);
        (s[0], s[1])
    }

    // ── Leaves ──────────────────────────────────────────────────────

    /// Record a tensor as a leaf, copying its data and grad flag.
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape.clone(), t.data.clone(), t.requires_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Var {
        self.push(Op::Leaf, shape, data, false)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.push(Op::Leaf, vec![], vec![x], false)
    }

    /// Leaf with explicit grad participation (used when a struct field is
    /// trainable only in some stages).
    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Var {
        self.push(Op::Leaf, shape, data, requires_grad)
    }

    // ── Elementwise ─────────────────────────────────────────────────

    fn binary_same_shape(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        assert_eq!(
            self.nodes[ia as usize].shape, self.nodes[ib as usize].shape,
            "elementwise op on mismatched shapes"
        );
        let out: Vec<f64> = self.nodes[ia as usize]
            .data
            .iter()
            .zip(&self.nodes[ib as usize].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.nodes[ia as usize].requires_grad || self.nodes[ib as usize].requires_grad;
        let shape = self.nodes[ia as usize].shape.clone();
        self.push(op, shape, out, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        self.binary_same_shape(a, b, |x, y| x + y, Op::Add(ia, ib))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        self.binary_same_shape(a, b, |x, y| x - y, Op::Sub(ia, ib))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        self.binary_same_shape(a, b, |x, y| x * y, Op::Mul(ia, ib))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        self.binary_same_shape(a, b, |x, y| x / y, Op::Div(ia, ib))
    }

    /// k * x + c elementwise. Covers negation, scalar scaling, and constant
    /// offsets in one node.
    pub fn affine(&mut self, a: Var, k: f64, c: f64) -> Var {
        let ia = self.check(a);
        let n = &self.nodes[ia as usize];
        let out: Vec<f64> = n.data.iter().map(|&x| k * x + c).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(Op::Affine(ia, k), shape, out, rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ia = self.check(a);
        let n = &self.nodes[ia as usize];
        let out: Vec<f64> = n.data.iter().map(|&x| f(x)).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(op, shape, out, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(ia))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        self.unary(a, fmath::sigmoid, Op::Sigmoid(ia))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        self.unary(a, fmath::sin, Op::Sin(ia))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        self.unary(a, fmath::cos, Op::Cos(ia))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        self.unary(a, fmath::sqrt, Op::Sqrt(ia))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        self.unary(a, fmath::abs, Op::Abs(ia))
    }

    // ── Matrix ops ─────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.rows_cols(a);
        let (k2, n) = self.rows_cols(b);
        assert_eq!(k, k2, "matmul inner dimensions differ: {} vs {}", k, k2);
        let (ia, ib) = (self.check(a), self.check(b));
        let mut out = vec![0.0; m * n];
        matmul_nn_acc(
            &self.nodes[ia as usize].data,
            &self.nodes[ib as usize].data,
            m,
            k,
            n,
            &mut out,
        );
        let rg = self.nodes[ia as usize].requires_grad || self.nodes[ib as usize].requires_grad;
        self.push(Op::Matmul(ia, ib), vec![m, n], out, rg)
    }

    /// `[r,c] + bias` where bias has shape `[c]` or `[1,c]`.
    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Var {
        let (r, c) = self.rows_cols(a);
        let bn = self.node(bias).data.len();
        assert_eq!(bn, c, "bias length {} does not match {} columns", bn, c);
        let (ia, ib) = (self.check(a), self.check(bias));
        let bd = &self.nodes[ib as usize].data;
        let mut out = Vec::with_capacity(r * c);
        for row in self.nodes[ia as usize].data.chunks_exact(c) {
            for (x, b) in row.iter().zip(bd) {
                out.push(x + b);
            }
        }
        let rg = self.nodes[ia as usize].requires_grad || self.nodes[ib as usize].requires_grad;
        self.push(Op::AddRowBroadcast(ia, ib), vec![r, c], out, rg)
    }

    fn col_broadcast(&mut self, a: Var, s: Var, divide: bool) -> Var {
        let (r, c) = self.rows_cols(a);
        let (rs, cs) = self.rows_cols(s);
        assert_eq!((rs, cs), (r, 1), "column operand must be [{},1], got [{},{}]", r, rs, cs);
        let (ia, is) = (self.check(a), self.check(s));
        let sd = &self.nodes[is as usize].data;
        let mut out = Vec::with_capacity(r * c);
        for (i, row) in self.nodes[ia as usize].data.chunks_exact(c).enumerate() {
            let sv = sd[i];
            for &x in row {
                out.push(if divide { x / sv } else { x * sv });
            }
        }
        let rg = self.nodes[ia as usize].requires_grad || self.nodes[is as usize].requires_grad;
        let op = if divide { Op::DivColBroadcast(ia, is) } else { Op::MulColBroadcast(ia, is) };
        self.push(op, vec![r, c], out, rg)
    }

    /// `[r,c] * [r,1]`, the per-row scale broadcast across columns.
    pub fn mul_col_broadcast(&mut self, a: Var, s: Var) -> Var {
        self.col_broadcast(a, s, false)
    }

    /// `[r,c] / [r,1]`
    pub fn div_col_broadcast(&mut self, a: Var, s: Var) -> Var {
        self.col_broadcast(a, s, true)
    }

    // ── Indexing / layout ───────────────────────────────────────────

    pub fn gather_rows(&mut self, a: Var, rows: &[u32]) -> Var {
        let (r, c) = self.rows_cols(a);
        let ia = self.check(a);
        let src = &self.nodes[ia as usize].data;
        let mut out = Vec::with_capacity(rows.len() * c);
        for &ri in rows {
            let ri = ri as usize;
            assert!(ri < r, "row index {} out of range ({} rows)", ri, r);
            out.extend_from_slice(&src[ri * c..(ri + 1) * c]);
        }
        let rg = self.nodes[ia as usize].requires_grad;
        self.push(Op::GatherRows(ia, rows.to_vec()), vec![rows.len(), c], out, rg)
    }

    pub fn gather_cols(&mut self, a: Var, cols: &[u32]) -> Var {
        let (r, c) = self.rows_cols(a);
        let ia = self.check(a);
        let src = &self.nodes[ia as usize].data;
        let mut out = Vec::with_capacity(cols.len() * r);
        for row in src.chunks_exact(c) {
            for &ci in cols {
                assert!((ci as usize) < c, "column index {} out of range ({} cols)", ci, c);
                out.push(row[ci as usize]);
            }
        }
        let rg = self.nodes[ia as usize].requires_grad;
        self.push(Op::GatherCols(ia, cols.to_vec()), vec![r, cols.len()], out, rg)
    }

    /// Single column as an `[r,1]` value.
    pub fn col(&mut self, a: Var, j: usize) -> Var {
        self.gather_cols(a, &[j as u32])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.rows_cols(a);
        let (rb, cb) = self.rows_cols(b);
        assert_eq!(ra, rb, "concat_cols row counts differ");
        let (ia, ib) = (self.check(a), self.check(b));
        let da = &self.nodes[ia as usize].data;
        let db = &self.nodes[ib as usize].data;
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&da[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&db[i * cb..(i + 1) * cb]);
        }
        let rg = self.nodes[ia as usize].requires_grad || self.nodes[ib as usize].requires_grad;
        self.push(Op::ConcatCols(ia, ib), vec![ra, ca + cb], out, rg)
    }

    /// Stack 2-d values with equal column counts into one matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "stack_rows needs at least one input");
        let (_, c) = self.rows_cols(parts[0]);
        let mut rows = 0;
        let mut rg = false;
        let mut idxs = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, pc) = self.rows_cols(p);
            assert_eq!(pc, c, "stack_rows column counts differ");
            rows += r;
            rg |= self.node(p).requires_grad;
            idxs.push(self.check(p));
        }
        let mut out = Vec::with_capacity(rows * c);
        for &i in &idxs {
            out.extend_from_slice(&self.nodes[i as usize].data);
        }
        self.push(Op::StackRows(idxs), vec![rows, c], out, rg)
    }

    /// Reinterpret the data in a new shape (same element count, row-major).
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let ia = self.check(a);
        let n = &self.nodes[ia as usize];
        assert_eq!(
            shape.iter().product::<usize>(),
            n.data.len(),
            "reshape to {:?} changes element count",
            shape
        );
        let (data, rg) = (n.data.clone(), n.requires_grad);
        self.push(Op::Reshape(ia), shape, data, rg)
    }

    // ── Reductions ──────────────────────────────────────────────────

    pub fn row_sum(&mut self, a: Var) -> Var {
        let (r, c) = self.rows_cols(a);
        let ia = self.check(a);
        let out: Vec<f64> = self.nodes[ia as usize]
            .data
            .chunks_exact(c)
            .map(|row| row.iter().sum())
            .collect();
        let rg = self.nodes[ia as usize].requires_grad;
        self.push(Op::RowSum(ia), vec![r, 1], out, rg)
    }

    /// Column-wise max over rows. The argmax row per column is frozen at
    /// forward time; backward routes each gradient to that row alone.
    pub fn col_max(&mut self, a: Var) -> Var {
        let (r, c) = self.rows_cols(a);
        assert!(r > 0, "col_max of an empty matrix");
        let ia = self.check(a);
        let src = &self.nodes[ia as usize].data;
        let mut best = src[..c].to_vec();
        let mut arg = vec![0u32; c];
        for i in 1..r {
            for j in 0..c {
                let x = src[i * c + j];
                if x > best[j] {
                    best[j] = x;
                    arg[j] = i as u32;
                }
            }
        }
        let rg = self.nodes[ia as usize].requires_grad;
        self.push(Op::ColMax(ia, arg), vec![1, c], best, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let total: f64 = self.nodes[ia as usize].data.iter().sum();
        let rg = self.nodes[ia as usize].requires_grad;
        self.push(Op::Sum(ia), vec![], vec![total], rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let n = self.nodes[ia as usize].data.len();
        assert!(n > 0, "mean of an empty value");
        let total: f64 = self.nodes[ia as usize].data.iter().sum();
        let rg = self.nodes[ia as usize].requires_grad;
        self.push(Op::Mean(ia), vec![], vec![total / n as f64], rg)
    }

    // ── Compositions ────────────────────────────────────────────────

    /// x @ w + bias
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row_broadcast(xw, bias)
    }

    /// Sum of absolute values.
    pub fn l1(&mut self, a: Var) -> Var {
        let abs = self.abs(a);
        self.sum(abs)
    }

    /// Euclidean norm of all elements.
    pub fn l2(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a);
        let s = self.sum(sq);
        self.sqrt(s)
    }

    /// Row-wise dot product: `[r,c] x [r,c] -> [r,1]`.
    pub fn dot_rows(&mut self, a: Var, b: Var) -> Var {
        let p = self.mul(a, b);
        self.row_sum(p)
    }

    /// max(x, c) composed from relu: relu(x - c) + c.
    pub fn clamp_min(&mut self, a: Var, c: f64) -> Var {
        let shifted = self.affine(a, 1.0, -c);
        let r = self.relu(shifted);
        self.affine(r, 1.0, c)
    }

    /// Rows scaled to unit Euclidean length. `floor` guards degenerate rows
    /// (a zero row maps to zero instead of NaN).
    pub fn normalize_rows(&mut self, a: Var, floor: f64) -> Var {
        let sq = self.sq_norm_rows(a);
        let n = self.sqrt(sq);
        let n = self.clamp_min(n, floor);
        self.div_col_broadcast(a, n)
    }

    /// Row-wise squared norm: `[r,c] -> [r,1]`.
    pub fn sq_norm_rows(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a);
        self.row_sum(sq)
    }

    /// Row-wise cross product of two `[r,3]` matrices.
    pub fn cross_rows(&mut self, a: Var, b: Var) -> Var {
        let (_, ca) = self.rows_cols(a);
        let (_, cb) = self.rows_cols(b);
        assert_eq!((ca, cb), (3, 3), "cross_rows expects [r,3] inputs");
        let a0 = self.col(a, 0);
        let a1 = self.col(a, 1);
        let a2 = self.col(a, 2);
        let b0 = self.col(b, 0);
        let b1 = self.col(b, 1);
        let b2 = self.col(b, 2);
        let c0 = {
            let p = self.mul(a1, b2);
            let q = self.mul(a2, b1);
            self.sub(p, q)
        };
        let c1 = {
            let p = self.mul(a2, b0);
            let q = self.mul(a0, b2);
            self.sub(p, q)
        };
        let c2 = {
            let p = self.mul(a0, b1);
            let q = self.mul(a1, b0);
            self.sub(p, q)
        };
        let c01 = self.concat_cols(c0, c1);
        self.concat_cols(c01, c2)
    }

    /// Positional encoding over columns: `[x | sin(2^0 pi x) | cos(2^0 pi x)
    /// | ... | sin(2^(freq-1) pi x) | cos(2^(freq-1) pi x)]`.
    /// `freq = 0` is the identity.
    pub fn positional_encode(&mut self, x: Var, freq: usize) -> Var {
        let mut out = x;
        let mut scale = core::f64::consts::PI;
        for _ in 0..freq {
            let sx = self.affine(x, scale, 0.0);
            let s = self.sin(sx);
            let c = self.cos(sx);
            let sc = self.concat_cols(s, c);
            out = self.concat_cols(out, sc);
            scale *= 2.0;
        }
        out
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Populate gradients of every `requires_grad` value on the tape with
    /// d(root)/d(value). Gradients accumulate additively across uses within
    /// the tape; calling `backward` again resets them first.
    pub fn backward(&mut self, root: Var) -> Result<(), AdError> {
        if root.tape != self.id {
            return Err(AdError::NotOnTape);
        }
        let ridx = root.idx as usize;
        if self.nodes[ridx].data.len() != 1 {
            return Err(AdError::NonScalarRoot);
        }

        self.grads.clear();
        self.grads.resize(self.nodes.len(), None);
        for (i, n) in self.nodes.iter().enumerate() {
            if n.requires_grad {
                self.grads[i] = Some(vec![0.0; n.data.len()]);
            }
        }
        if self.grads[ridx].is_none() {
            // Root does not depend on any trainable leaf; nothing to do.
            return Ok(());
        }
        self.grads[ridx].as_mut().unwrap()[0] = 1.0;

        for i in (0..=ridx).rev() {
            if self.grads[i].is_none() {
                continue;
            }
            let g = self.grads[i].take().unwrap();
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        macro_rules! acc {
            ($idx:expr, $f:expr) => {{
                let idx = $idx as usize;
                if let Some(buf) = self.grads[idx].as_mut() {
                    #[allow(clippy::redundant_closure_call)]
                    $f(buf);
                }
            }};
        }

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, g, 1.0));
                acc!(b, |buf: &mut Vec<f64>| add_into(buf, g, 1.0));
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, g, 1.0));
                acc!(b, |buf: &mut Vec<f64>| add_into(buf, g, -1.0));
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let (da, db): (Vec<f64>, Vec<f64>) = {
                    let ad = &self.nodes[a as usize].data;
                    let bd = &self.nodes[b as usize].data;
                    (
                        g.iter().zip(bd).map(|(&gi, &bi)| gi * bi).collect(),
                        g.iter().zip(ad).map(|(&gi, &ai)| gi * ai).collect(),
                    )
                };
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
                acc!(b, |buf: &mut Vec<f64>| add_into(buf, &db, 1.0));
            }
            Op::Div(a, b) => {
                let (a, b) = (*a, *b);
                let (da, db): (Vec<f64>, Vec<f64>) = {
                    let bd = &self.nodes[b as usize].data;
                    let out = &self.nodes[i].data;
                    (
                        g.iter().zip(bd).map(|(&gi, &bi)| gi / bi).collect(),
                        g.iter()
                            .zip(out.iter().zip(bd))
                            .map(|(&gi, (&oi, &bi))| -gi * oi / bi)
                            .collect(),
                    )
                };
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
                acc!(b, |buf: &mut Vec<f64>| add_into(buf, &db, 1.0));
            }
            Op::Affine(a, k) => {
                let (a, k) = (*a, *k);
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, g, k));
            }
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let m = self.nodes[a as usize].shape[0];
                let k = self.nodes[a as usize].shape[1];
                let n = self.nodes[b as usize].shape[1];
                if self.grads[a as usize].is_some() {
                    let mut da = vec![0.0; m * k];
                    matmul_nt_acc(g, &self.nodes[b as usize].data, m, n, k, &mut da);
                    acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
                }
                if self.grads[b as usize].is_some() {
                    let mut db = vec![0.0; k * n];
                    matmul_tn_acc(&self.nodes[a as usize].data, g, m, k, n, &mut db);
                    acc!(b, |buf: &mut Vec<f64>| add_into(buf, &db, 1.0));
                }
            }
            Op::AddRowBroadcast(a, bias) => {
                let (a, bias) = (*a, *bias);
                let c = self.nodes[i].shape[1];
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, g, 1.0));
                acc!(bias, |buf: &mut Vec<f64>| {
                    for row in g.chunks_exact(c) {
                        for (b, &gi) in buf.iter_mut().zip(row) {
                            *b += gi;
                        }
                    }
                });
            }
            Op::MulColBroadcast(a, s) => {
                let (a, s) = (*a, *s);
                let c = self.nodes[i].shape[1];
                if self.grads[a as usize].is_some() {
                    let sd = self.nodes[s as usize].data.clone();
                    acc!(a, |buf: &mut Vec<f64>| {
                        for (ri, row) in g.chunks_exact(c).enumerate() {
                            let sv = sd[ri];
                            for (b, &gi) in buf[ri * c..(ri + 1) * c].iter_mut().zip(row) {
                                *b += gi * sv;
                            }
                        }
                    });
                }
                if self.grads[s as usize].is_some() {
                    let ad = &self.nodes[a as usize].data;
                    let ds: Vec<f64> = g
                        .chunks_exact(c)
                        .zip(ad.chunks_exact(c))
                        .map(|(gr, ar)| gr.iter().zip(ar).map(|(&gi, &ai)| gi * ai).sum())
                        .collect();
                    acc!(s, |buf: &mut Vec<f64>| add_into(buf, &ds, 1.0));
                }
            }
            Op::DivColBroadcast(a, s) => {
                let (a, s) = (*a, *s);
                let c = self.nodes[i].shape[1];
                if self.grads[a as usize].is_some() {
                    let sd = self.nodes[s as usize].data.clone();
                    acc!(a, |buf: &mut Vec<f64>| {
                        for (ri, row) in g.chunks_exact(c).enumerate() {
                            let sv = sd[ri];
                            for (b, &gi) in buf[ri * c..(ri + 1) * c].iter_mut().zip(row) {
                                *b += gi / sv;
                            }
                        }
                    });
                }
                if self.grads[s as usize].is_some() {
                    let out = &self.nodes[i].data;
                    let sd = &self.nodes[s as usize].data;
                    let ds: Vec<f64> = g
                        .chunks_exact(c)
                        .zip(out.chunks_exact(c))
                        .enumerate()
                        .map(|(ri, (gr, or))| {
                            let dot: f64 = gr.iter().zip(or).map(|(&gi, &oi)| gi * oi).sum();
                            -dot / sd[ri]
                        })
                        .collect();
                    acc!(s, |buf: &mut Vec<f64>| add_into(buf, &ds, 1.0));
                }
            }
            Op::GatherRows(a, rows) => {
                let a = *a;
                let rows = rows.clone();
                let c = self.nodes[i].shape[1];
                acc!(a, |buf: &mut Vec<f64>| {
                    for (k, &ri) in rows.iter().enumerate() {
                        let ri = ri as usize;
                        for (b, &gi) in
                            buf[ri * c..(ri + 1) * c].iter_mut().zip(&g[k * c..(k + 1) * c])
                        {
                            *b += gi;
                        }
                    }
                });
            }
            Op::GatherCols(a, cols) => {
                let a = *a;
                let cols = cols.clone();
                let r = self.nodes[i].shape[0];
                let oc = self.nodes[i].shape[1];
                let ac = self.nodes[a as usize].shape[1];
                acc!(a, |buf: &mut Vec<f64>| {
                    for ri in 0..r {
                        for (k, &ci) in cols.iter().enumerate() {
                            buf[ri * ac + ci as usize] += g[ri * oc + k];
                        }
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let (a, b) = (*a, *b);
                let r = self.nodes[i].shape[0];
                let ca = self.nodes[a as usize].shape[1];
                let cb = self.nodes[b as usize].shape[1];
                acc!(a, |buf: &mut Vec<f64>| {
                    for ri in 0..r {
                        for j in 0..ca {
                            buf[ri * ca + j] += g[ri * (ca + cb) + j];
                        }
                    }
                });
                acc!(b, |buf: &mut Vec<f64>| {
                    for ri in 0..r {
                        for j in 0..cb {
                            buf[ri * cb + j] += g[ri * (ca + cb) + ca + j];
                        }
                    }
                });
            }
            Op::StackRows(parts) => {
                let parts = parts.clone();
                let c = self.nodes[i].shape[1];
                let mut offset = 0;
                for p in parts {
                    let pr = self.nodes[p as usize].shape[0];
                    let block = &g[offset * c..(offset + pr) * c];
                    acc!(p, |buf: &mut Vec<f64>| add_into(buf, block, 1.0));
                    offset += pr;
                }
            }
            Op::Reshape(a) => {
                let a = *a;
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, g, 1.0));
            }
            Op::RowSum(a) => {
                let a = *a;
                let c = self.nodes[a as usize].shape[1];
                acc!(a, |buf: &mut Vec<f64>| {
                    for (ri, &gi) in g.iter().enumerate() {
                        for b in buf[ri * c..(ri + 1) * c].iter_mut() {
                            *b += gi;
                        }
                    }
                });
            }
            Op::ColMax(a, arg) => {
                let a = *a;
                let arg = arg.clone();
                let c = self.nodes[i].shape[1];
                acc!(a, |buf: &mut Vec<f64>| {
                    for j in 0..c {
                        buf[arg[j] as usize * c + j] += g[j];
                    }
                });
            }
            Op::Sum(a) => {
                let a = *a;
                let gs = g[0];
                acc!(a, |buf: &mut Vec<f64>| {
                    for b in buf.iter_mut() {
                        *b += gs;
                    }
                });
            }
            Op::Mean(a) => {
                let a = *a;
                let n = self.nodes[a as usize].data.len() as f64;
                let gs = g[0] / n;
                acc!(a, |buf: &mut Vec<f64>| {
                    for b in buf.iter_mut() {
                        *b += gs;
                    }
                });
            }
            Op::Relu(a) => {
                let a = *a;
                let da: Vec<f64> = {
                    let ad = &self.nodes[a as usize].data;
                    g.iter().zip(ad).map(|(&gi, &ai)| if ai > 0.0 { gi } else { 0.0 }).collect()
                };
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
            }
            Op::Sigmoid(a) => {
                let a = *a;
                let da: Vec<f64> = {
                    let out = &self.nodes[i].data;
                    g.iter().zip(out).map(|(&gi, &oi)| gi * oi * (1.0 - oi)).collect()
                };
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
            }
            Op::Sin(a) => {
                let a = *a;
                let da: Vec<f64> = {
                    let ad = &self.nodes[a as usize].data;
                    g.iter().zip(ad).map(|(&gi, &ai)| gi * fmath::cos(ai)).collect()
                };
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
            }
            Op::Cos(a) => {
                let a = *a;
                let da: Vec<f64> = {
                    let ad = &self.nodes[a as usize].data;
                    g.iter().zip(ad).map(|(&gi, &ai)| -gi * fmath::sin(ai)).collect()
                };
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
            }
            Op::Sqrt(a) => {
                let a = *a;
                let da: Vec<f64> = {
                    let out = &self.nodes[i].data;
                    g.iter().zip(out).map(|(&gi, &oi)| gi * 0.5 / oi).collect()
                };
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
            }
            Op::Abs(a) => {
                let a = *a;
                let da: Vec<f64> = {
                    let ad = &self.nodes[a as usize].data;
                    g.iter()
                        .zip(ad)
                        .map(|(&gi, &ai)| {
                            if ai > 0.0 {
                                gi
                            } else if ai < 0.0 {
                                -gi
                            } else {
                                0.0
                            }
                        })
                        .collect()
                };
                acc!(a, |buf: &mut Vec<f64>| add_into(buf, &da, 1.0));
            }
        }
    }

    /// Gradient of the last `backward` root w.r.t. `v`, if `v` participates.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        let i = self.check(v) as usize;
        self.grads.get(i).and_then(|g| g.as_deref())
    }

    /// Whether `target`'s value depends on `leaf` through the recorded graph.
    pub fn depends_on(&self, target: Var, leaf: Var) -> bool {
        let t = self.check(target) as usize;
        let l = self.check(leaf);
        let mut reachable = vec![false; t + 1];
        reachable[t] = true;
        for i in (0..=t).rev() {
            if !reachable[i] {
                continue;
            }
            if i as u32 == l {
                return true;
            }
            self.for_each_input(i, |j| {
                reachable[j as usize] = true;
            });
        }
        false
    }

    fn for_each_input(&self, i: usize, mut f: impl FnMut(u32)) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::Matmul(a, b)
            | Op::AddRowBroadcast(a, b)
            | Op::MulColBroadcast(a, b)
            | Op::DivColBroadcast(a, b)
            | Op::ConcatCols(a, b) => {
                f(*a);
                f(*b);
            }
            Op::StackRows(parts) => parts.iter().for_each(|&p| f(p)),
            Op::Affine(a, _)
            | Op::GatherRows(a, _)
            | Op::GatherCols(a, _)
            | Op::Reshape(a)
            | Op::RowSum(a)
            | Op::ColMax(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Sqrt(a)
            | Op::Abs(a) => f(*a),
        }
    }
}

fn add_into(buf: &mut [f64], src: &[f64], scale: f64) {
    debug_assert_eq!(buf.len(), src.len());
    for (b, &s) in buf.iter_mut().zip(src) {
        *b += scale * s;
    }
}

/// Register a parameter set as leaves (in order). Pass `trainable = false`
/// to freeze the whole set for this pass regardless of each tensor's flag.
pub fn leaf_vars(tape: &mut Tape, params: &[&Tensor], trainable: bool) -> Vec<Var> {
    params
        .iter()
        .map(|p| tape.leaf(p.shape.clone(), p.data.clone(), trainable && p.requires_grad))
        .collect()
}

/// Copy tape gradients back into the matching parameters (same order as the
/// `leaf_vars` call that produced `vars`). Gradients accumulate, so several
/// tapes can contribute to one optimizer step.
pub fn harvest_grads(tape: &Tape, vars: &[Var], params: &mut [&mut Tensor]) {
    assert_eq!(vars.len(), params.len());
    for (v, p) in vars.iter().zip(params.iter_mut()) {
        if let Some(g) = tape.grad(*v) {
            p.accum_grad(g);
        }
    }
}
