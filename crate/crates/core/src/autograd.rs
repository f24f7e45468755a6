//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Trainable
//! values live in a [`ParamStore`]; the tape only borrows them, so many
//! tapes (one per example) can be built concurrently against the same
//! store and their [`Gradients`] summed afterwards.
//!
//! Every value on the tape is a 2-D matrix; row vectors are `1 x n` and
//! scalars are `1 x 1`.

use std::collections::{BTreeMap, HashMap};

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

pub type Matrix = Array2<f64>;

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable matrices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParamSnapshot>", into = "Vec<ParamSnapshot>")]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn to_snapshot(&self) -> Vec<ParamSnapshot> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, value)| ParamSnapshot {
                name: name.clone(),
                rows: value.nrows(),
                cols: value.ncols(),
                data: value.iter().copied().collect(),
            })
            .collect()
    }

    pub fn from_snapshot(snapshot: &[ParamSnapshot]) -> Option<Self> {
        let mut store = ParamStore::new();
        for p in snapshot {
            let value = Array2::from_shape_vec((p.rows, p.cols), p.data.clone()).ok()?;
            store.add(p.name.clone(), value);
        }
        Some(store)
    }
}

impl From<ParamStore> for Vec<ParamSnapshot> {
    fn from(store: ParamStore) -> Self {
        store.to_snapshot()
    }
}

impl TryFrom<Vec<ParamSnapshot>> for ParamStore {
    type Error = String;

    fn try_from(snapshot: Vec<ParamSnapshot>) -> Result<Self, Self::Error> {
        ParamStore::from_snapshot(&snapshot).ok_or_else(|| "parameter data does not match its shape".to_string())
    }
}

/// Serializable form of one parameter matrix (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    SoftmaxRows(Var),
    MaskedLogSoftmax {
        x: Var,
        mask: Vec<bool>,
    },
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    Row(Var, usize),
    GatherRows(Var, Vec<usize>),
    ReverseGrad(Var),
    Pick(Var, usize, usize),
    LogSumExp(Var),
    Sum(Var),
}

struct Node {
    value: Option<Matrix>,
    op: Op,
}

/// One forward pass worth of recorded operations.
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Matrix {
        let node = &self.nodes[var.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(id)) => self.store.get(*id),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    /// The scalar held by a `1 x 1` node.
    pub fn scalar(&self, var: Var) -> f64 {
        let v = self.value(var);
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let var = Var(self.nodes.len() - 1);
        self.params.insert(id, var);
        var
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).row(0).to_owned();
        let value = self.value(a) + &r;
        self.push(value, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        self.push(value, Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        self.push(value, Op::Gelu(a))
    }

    /// Row-wise layer normalisation with affine `1 x n` gamma and beta.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let g = self.value(gamma).row(0).to_owned();
        let b = self.value(beta).row(0).to_owned();
        let value = &xhat * &g + &b;
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            row.mapv_inplace(|v| (v - max).exp());
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Row-wise log-softmax restricted to `mask`; masked-out entries are
    /// `-inf` (probability exactly zero).
    pub fn masked_log_softmax(&mut self, a: Var, mask: &[bool]) -> Var {
        let mut value = self.value(a).clone();
        assert_eq!(value.ncols(), mask.len(), "mask length must match columns");
        for mut row in value.rows_mut() {
            let lse = masked_logsumexp(row.iter().copied(), mask);
            for (v, &m) in row.iter_mut().zip(mask) {
                *v = if m { *v - lse } else { f64::NEG_INFINITY };
            }
        }
        self.push(
            value,
            Op::MaskedLogSoftmax {
                x: a,
                mask: mask.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn row(&mut self, a: Var, index: usize) -> Var {
        let value = self.value(a).slice(s![index..index + 1, ..]).to_owned();
        self.push(value, Op::Row(a, index))
    }

    /// Stacks rows `ids` of `table` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Array2::zeros((ids.len(), t.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            value.row_mut(i).assign(&t.row(id));
        }
        self.push(value, Op::GatherRows(table, ids.to_vec()))
    }

    /// Identity on the forward pass; negates the gradient on the way back.
    pub fn reverse_gradient(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.push(value, Op::ReverseGrad(a))
    }

    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a)[[row, col]]);
        self.push(value, Op::Pick(a, row, col))
    }

    /// `log(sum(exp(a)))` over every entry; `-inf` entries contribute nothing.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let lse = masked_logsumexp(v.iter().copied(), &vec![true; v.len()]);
        self.push(Array2::from_elem((1, 1), lse), Op::LogSumExp(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a))
    }

    /// Back-propagates from the scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).dim(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Array2::ones((1, 1)));
        let mut out = Gradients::default();

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(id) => out.add_dense(*id, &g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.t().to_owned()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, factor) => accumulate(&mut grads, *a, g * *factor),
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let ga = &g * &y.mapv(|t| 1.0 - t * t);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gelu(a) => {
                    let ga = &g * &self.value(*a).mapv(gelu_grad);
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma).row(0).to_owned();
                    let n = xhat.ncols() as f64;
                    let dgamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * &gv;
                    let mut dx = Array2::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_dh = dh.sum();
                        let sum_dh_xh = dh.dot(&xh);
                        let inv = inv_std[r];
                        for c in 0..xhat.ncols() {
                            dx[[r, c]] = inv / n * (n * dh[c] - sum_dh - xh[c] * sum_dh_xh);
                        }
                    }
                    accumulate(&mut grads, *gamma, dgamma);
                    accumulate(&mut grads, *beta, dbeta);
                    accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let mut ga = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot = g.row(r).dot(&y.row(r));
                        for c in 0..y.ncols() {
                            ga[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MaskedLogSoftmax { x, mask } => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let mut ga = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let total: f64 = (0..y.ncols()).filter(|&c| mask[c]).map(|c| g[[r, c]]).sum();
                        for c in 0..y.ncols() {
                            if mask[c] {
                                ga[[r, c]] = g[[r, c]] - y[[r, c]].exp() * total;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, ga);
                }
                Op::SliceCols(a, start, end) => {
                    let shape = self.value(*a).dim();
                    let mut ga = Array2::zeros(shape);
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let gp = g.slice(s![.., offset..offset + w]).to_owned();
                        offset += w;
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::Row(a, index) => {
                    let shape = self.value(*a).dim();
                    let mut ga = Array2::zeros(shape);
                    ga.row_mut(*index).assign(&g.row(0));
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(table, ids) => {
                    if let Op::Param(pid) = self.nodes[table.0].op {
                        for (r, &id) in ids.iter().enumerate() {
                            out.add_row(pid, id, g.row(r).to_owned());
                        }
                    } else {
                        let mut gt = Array2::zeros(self.value(*table).dim());
                        for (r, &id) in ids.iter().enumerate() {
                            let mut dst = gt.row_mut(id);
                            dst += &g.row(r);
                        }
                        accumulate(&mut grads, *table, gt);
                    }
                }
                Op::ReverseGrad(a) => accumulate(&mut grads, *a, -g),
                Op::Pick(a, row, col) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga[[*row, *col]] = g[[0, 0]];
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSumExp(a) => {
                    let v = self.value(*a);
                    let lse = self.nodes[i].value.as_ref().unwrap()[[0, 0]];
                    let ga = v.mapv(|x| if x == f64::NEG_INFINITY { 0.0 } else { (x - lse).exp() })
                        * g[[0, 0]];
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Matrix>], var: Var, g: Matrix) {
    match &mut grads[var.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn masked_logsumexp(values: impl Iterator<Item = f64> + Clone, mask: &[bool]) -> f64 {
    let max = values
        .clone()
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold(f64::NEG_INFINITY, |acc, (v, _)| acc.max(v));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let total: f64 = values
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| (v - max).exp())
        .sum();
    max + total.ln()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Parameter gradients produced by one backward pass.
///
/// Embedding lookups produce sparse row updates which are kept apart from
/// dense gradients until [`Gradients::dense`] is asked for.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    dense: BTreeMap<ParamId, Matrix>,
    rows: BTreeMap<ParamId, BTreeMap<usize, Array1<f64>>>,
}

impl Gradients {
    fn add_dense(&mut self, id: ParamId, g: &Matrix) {
        match self.dense.get_mut(&id) {
            Some(existing) => *existing += g,
            None => {
                self.dense.insert(id, g.clone());
            }
        }
    }

    fn add_row(&mut self, id: ParamId, row: usize, g: Array1<f64>) {
        let rows = self.rows.entry(id).or_default();
        match rows.get_mut(&row) {
            Some(existing) => *existing += &g,
            None => {
                rows.insert(row, g);
            }
        }
    }

    /// Adds `scale * other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (id, g) in &other.dense {
            self.add_dense(*id, &(g * scale));
        }
        for (id, rows) in &other.rows {
            for (r, g) in rows {
                self.add_row(*id, *r, g * scale);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.dense.values_mut() {
            *g *= factor;
        }
        for rows in self.rows.values_mut() {
            for g in rows.values_mut() {
                *g *= factor;
            }
        }
    }

    /// Ids that received any gradient.
    pub fn touched(&self) -> Vec<ParamId> {
        let mut ids: Vec<_> = self.dense.keys().chain(self.rows.keys()).copied().collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Full dense gradient for `id`, zeros where nothing flowed.
    pub fn dense(&self, id: ParamId, shape: (usize, usize)) -> Matrix {
        let mut out = self.dense.get(&id).cloned().unwrap_or_else(|| Array2::zeros(shape));
        if let Some(rows) = self.rows.get(&id) {
            for (r, g) in rows {
                let mut dst = out.row_mut(*r);
                dst += g;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.dense.values().all(|g| g.iter().all(|v| v.is_finite()))
            && self
                .rows
                .values()
                .all(|rows| rows.values().all(|g| g.iter().all(|v| v.is_finite())))
    }
}
