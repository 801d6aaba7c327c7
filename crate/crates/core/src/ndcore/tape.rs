//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Every node stores its forward value. Pointwise and reducing primitives
//! record their local derivative at forward time, so the backward sweep is a
//! single pass of products over the node list in reverse order.

use std::sync::atomic::{AtomicU64, Ordering};

use super::activations::{relu_scalar, sigmoid_scalar, softplus_scalar};
use super::matrix::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    /// `a` (n x k) plus a broadcast 1 x k row.
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    /// Output has the shape of every input; `d out / d input_i = local_i` pointwise.
    Pointwise(Vec<(usize, Matrix)>),
    /// Scalar output; `d out / d input_i = local_i` entrywise.
    Reduce(Vec<(usize, Matrix)>),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// A recording of primitive operations that can produce exact gradients of a
/// scalar output with respect to any recorded leaf.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::UnrecordedVariable);
        }
        Ok(v.index)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input (data, labels, noise).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> Result<&Matrix> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = matmul(&self.nodes[ia].value, &self.nodes[ib].value)?;
        let needs = self.needs(ia) || self.needs(ib);
        Ok(self.push(value, Op::MatMul(ia, ib), needs))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ia, ir) = (self.idx(a)?, self.idx(row)?);
        let (x, r) = (&self.nodes[ia].value, &self.nodes[ir].value);
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::Shape {
                op: "add_row",
                left: x.shape(),
                right: r.shape(),
            });
        }
        let mut value = x.clone();
        let bias = r.as_slice();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(bias) {
                *v += b;
            }
        }
        let needs = self.needs(ia) || self.needs(ir);
        Ok(self.push(value, Op::AddRow(ia, ir), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia]
            .value
            .zip_map(&self.nodes[ib].value, "add", |x, y| x + y)?;
        let needs = self.needs(ia) || self.needs(ib);
        Ok(self.push(value, Op::Add(ia, ib), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia]
            .value
            .zip_map(&self.nodes[ib].value, "sub", |x, y| x - y)?;
        let needs = self.needs(ia) || self.needs(ib);
        Ok(self.push(value, Op::Sub(ia, ib), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.map(|x| x * factor);
        let needs = self.needs(ia);
        Ok(self.push(value, Op::Scale(ia, factor), needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (x, y) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let value = x.zip_map(y, "mul", |p, q| p * q)?;
        let locals = vec![(ia, y.clone()), (ib, x.clone())];
        let needs = self.needs(ia) || self.needs(ib);
        Ok(self.push(value, Op::Pointwise(locals), needs))
    }

    /// Applies `f` elementwise; `f` returns `(value, derivative)`.
    pub fn pointwise(&mut self, a: Var, f: impl Fn(f64) -> (f64, f64)) -> Result<Var> {
        let ia = self.idx(a)?;
        let x = &self.nodes[ia].value;
        let (rows, cols) = x.shape();
        let mut value = Vec::with_capacity(x.len());
        let mut local = Vec::with_capacity(x.len());
        for &v in x.as_slice() {
            let (y, d) = f(v);
            value.push(y);
            local.push(d);
        }
        let value = Matrix::from_vec_unchecked(rows, cols, value);
        let local = Matrix::from_vec_unchecked(rows, cols, local);
        let needs = self.needs(ia);
        Ok(self.push(value, Op::Pointwise(vec![(ia, local)]), needs))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.pointwise(a, |x| (relu_scalar(x), if x > 0.0 { 1.0 } else { 0.0 }))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.pointwise(a, |x| {
            let s = sigmoid_scalar(x);
            (s, s * (1.0 - s))
        })
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.pointwise(a, |x| (softplus_scalar(x), sigmoid_scalar(x)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let x = &self.nodes[ia].value;
        let value = Matrix::scalar(x.sum());
        let local = Matrix::filled(x.rows(), x.cols(), 1.0);
        let needs = self.needs(ia);
        Ok(self.push(value, Op::Reduce(vec![(ia, local)]), needs))
    }

    /// Records a scalar-valued primitive whose partial derivatives with
    /// respect to each input have already been evaluated. Every `local`
    /// must have the shape of its input.
    pub fn reduce(&mut self, value: f64, inputs: Vec<(Var, Matrix)>) -> Result<Var> {
        let mut locals = Vec::with_capacity(inputs.len());
        let mut needs = false;
        for (v, local) in inputs {
            let i = self.idx(v)?;
            self.nodes[i].value.check_same_shape(&local, "reduce")?;
            needs |= self.needs(i);
            locals.push((i, local));
        }
        Ok(self.push(Matrix::scalar(value), Op::Reduce(locals), needs))
    }

    /// `Σ_i softplus(z_i) - y_i z_i`, the summed binary cross-entropy of
    /// logits `z` against 0/1 targets `y`.
    pub fn bce_with_logits_sum(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let il = self.idx(logits)?;
        let z = &self.nodes[il].value;
        if z.len() != targets.len() {
            return Err(Error::Shape {
                op: "bce_with_logits_sum",
                left: z.shape(),
                right: (targets.len(), 1),
            });
        }
        let mut total = 0.0;
        let mut local = Vec::with_capacity(z.len());
        for (&zi, &yi) in z.as_slice().iter().zip(targets) {
            total += softplus_scalar(zi) - yi * zi;
            local.push(sigmoid_scalar(zi) - yi);
        }
        let local = Matrix::from_vec_unchecked(z.rows(), z.cols(), local);
        let needs = self.needs(il);
        Ok(self.push(Matrix::scalar(total), Op::Reduce(vec![(il, local)]), needs))
    }

    /// Reverse sweep from a scalar node. Returns one gradient per requested
    /// variable, in order; variables the output does not depend on get zeros.
    pub fn gradient(&self, output: Var, wrt: &[Var]) -> Result<Vec<Matrix>> {
        let out = self.idx(output)?;
        let wrt_idx = wrt.iter().map(|&v| self.idx(v)).collect::<Result<Vec<_>>>()?;
        let shape = self.nodes[out].value.shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape.0, shape.1));
        }

        let mut grads: Vec<Option<Matrix>> = (0..=out).map(|_| None).collect();
        grads[out] = Some(Matrix::scalar(1.0));

        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Constant => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = matmul_nt(&g, &self.nodes[*b].value)?;
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = matmul_tn(&self.nodes[*a].value, &g)?;
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::AddRow(a, r) => {
                    if self.needs(*r) {
                        accumulate(&mut grads, *r, g.column_sums());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.map(|x| -x));
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Scale(a, f) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.map(|x| x * f));
                    }
                }
                Op::Pointwise(locals) => {
                    for (j, local) in locals {
                        if self.needs(*j) {
                            let d = g.zip_map(local, "pointwise backward", |u, l| u * l)?;
                            accumulate(&mut grads, *j, d);
                        }
                    }
                }
                Op::Reduce(locals) => {
                    let u = g.as_slice()[0];
                    for (j, local) in locals {
                        if self.needs(*j) {
                            accumulate(&mut grads, *j, local.map(|l| u * l));
                        }
                    }
                }
            }
        }

        Ok(wrt_idx
            .into_iter()
            .map(|i| {
                grads[i].clone().unwrap_or_else(|| {
                    let (r, c) = self.nodes[i].value.shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], i: usize, g: Matrix) {
    match &mut grads[i] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
