//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation in creation order. Each node keeps its
//! forward value, which doubles as the saved activation for its backward rule.
//! [`Tape::backward`] walks the nodes in exact reverse order and accumulates
//! gradients in tape order, so results are bit-for-bit reproducible.
//!
//! Vectors are carried either as `[n]` or as single-row `[1, n]` matrices;
//! there is no implicit broadcasting. The only row-broadcast is
//! [`Tape::add_row_bias`], which must be requested explicitly.

use std::fmt;

/// Slope of the negative branch of [`Tape::leaky_relu`].
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GradError {
    #[error("dimension error in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("index error in {op}: id {id} out of range for {len} rows")]
    Index {
        op: &'static str,
        id: usize,
        len: usize,
    },
    #[error("contract error: {0}")]
    Contract(String),
    #[error("state error: {0}")]
    State(String),
}

pub type Result<T> = std::result::Result<T, GradError>;

/// Dense row-major tensor with an optional gradient slot.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("values", &self.values)
            .field("requires_grad", &self.requires_grad)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.contains(&0) || numel != values.len() {
            return Err(GradError::Shape {
                op: "tensor",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(Tensor {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            values: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    /// Row vector `[1, n]`.
    pub fn row(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, values.len()],
            values,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(rows, cols)` for a rank-2 tensor; `[n]` and scalars read as one row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => (self.shape[0], self.shape[1..].iter().product()),
        }
    }

    fn is_single_row(&self) -> bool {
        self.shape.len() <= 1 || (self.shape.len() == 2 && self.shape[0] == 1)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Tanh,
    Sigmoid,
    LeakyRelu,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryKind, Var, Var),
    AddRowBias(Var, Var),
    Unary(UnaryKind, Var),
    Softmax(Var),
    LogSoftmax(Var),
    GatherRows(Var, Vec<usize>),
    Concat(Vec<Var>),
    Slice(Var, usize),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Scale(Var, f64),
    Pick(Var, usize),
}

/// One recorded operation: kind, parents and the forward value.
#[derive(Clone, Debug)]
pub struct TapeNode {
    op: Op,
    value: Tensor,
}

impl TapeNode {
    pub fn value(&self) -> &Tensor {
        &self.value
    }
}

#[derive(Default, Clone, Debug)]
pub struct Tape {
    nodes: Vec<TapeNode>,
    backward_done: bool,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value.values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.values[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn node(&self, v: Var) -> &TapeNode {
        &self.nodes[v.0]
    }

    /// Clear gradients so `backward` may run again on the same graph.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, values: Vec<f64>) -> Var {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Binary(_, a, b) | Op::AddRowBias(a, b) => {
                self.rg(*a) || self.rg(*b)
            }
            Op::Unary(_, a)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::GatherRows(a, _)
            | Op::Slice(a, _)
            | Op::Row(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Scale(a, _)
            | Op::Pick(a, _) => self.rg(*a),
            Op::Concat(vs) | Op::StackRows(vs) => vs.iter().any(|v| self.rg(*v)),
        };
        self.nodes.push(TapeNode {
            op,
            value: Tensor {
                shape,
                values,
                requires_grad,
                grad: None,
            },
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    /// Record a tensor as a leaf. Its `requires_grad` flag is kept.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad;
        let v = self.push(Op::Leaf, t.shape, t.values);
        self.nodes[v.0].value.requires_grad = rg;
        v
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_grad())
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let mut t = t;
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        if k != k2 || self.shape(a).len() != 2 || self.shape(b).len() != 2 {
            return Err(GradError::Shape {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let av = self.values(a);
        let bv = self.values(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), vec![m, n], out))
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(GradError::Shape {
                op: "elementwise",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let av = self.values(a);
        let bv = self.values(b);
        let out: Vec<f64> = match kind {
            BinaryKind::Add => av.iter().zip(bv).map(|(x, y)| x + y).collect(),
            BinaryKind::Sub => av.iter().zip(bv).map(|(x, y)| x - y).collect(),
            BinaryKind::Mul => av.iter().zip(bv).map(|(x, y)| x * y).collect(),
        };
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Binary(kind, a, b), shape, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    /// `a[m×n] + b[n]` with `b` repeated for each row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2();
        if !self.value(bias).is_single_row() || self.value(bias).len() != n {
            return Err(GradError::Shape {
                op: "add_row_bias",
                left: self.shape(a).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let av = self.values(a);
        let bv = self.values(bias);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(av[i * n..(i + 1) * n].iter().zip(bv).map(|(x, y)| x + y));
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::AddRowBias(a, bias), shape, out))
    }

    pub fn unary(&mut self, kind: UnaryKind, a: Var) -> Var {
        let av = self.values(a);
        let out: Vec<f64> = match kind {
            UnaryKind::Tanh => av.iter().map(|x| x.tanh()).collect(),
            UnaryKind::Sigmoid => av.iter().map(|&x| sigmoid(x)).collect(),
            UnaryKind::LeakyRelu => av
                .iter()
                .map(|&x| if x >= 0.0 { x } else { LEAKY_RELU_SLOPE * x })
                .collect(),
            UnaryKind::Exp => av.iter().map(|x| x.exp()).collect(),
        };
        let shape = self.shape(a).to_vec();
        self.push(Op::Unary(kind, a), shape, out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn leaky_relu(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::LeakyRelu, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Exp, a)
    }

    fn require_row(&self, op: &'static str, a: Var) -> Result<()> {
        if self.value(a).is_single_row() {
            Ok(())
        } else {
            Err(GradError::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: vec![1, self.value(a).len()],
            })
        }
    }

    pub fn softmax_row(&mut self, a: Var) -> Result<Var> {
        self.require_row("softmax_row", a)?;
        let out = softmax(self.values(a));
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Softmax(a), shape, out))
    }

    pub fn log_softmax_row(&mut self, a: Var) -> Result<Var> {
        self.require_row("log_softmax_row", a)?;
        let out = log_softmax(self.values(a));
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::LogSoftmax(a), shape, out))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, d) = self.value(table).dims2();
        if let Some(&id) = ids.iter().find(|&&id| id >= rows) {
            return Err(GradError::Index {
                op: "gather_rows",
                id,
                len: rows,
            });
        }
        if ids.is_empty() {
            return Err(GradError::Contract("gather_rows needs at least one id".into()));
        }
        let tv = self.values(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        Ok(self.push(Op::GatherRows(table, ids.to_vec()), vec![ids.len(), d], out))
    }

    /// Join single-row tensors end to end into a `[1, n]` row.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            self.require_row("concat", p)?;
            out.extend_from_slice(self.values(p));
        }
        let n = out.len();
        Ok(self.push(Op::Concat(parts.to_vec()), vec![1, n], out))
    }

    /// Columns `[start, start+len)` of a single-row tensor.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.require_row("slice", a)?;
        let n = self.value(a).len();
        if start + len > n || len == 0 {
            return Err(GradError::Shape {
                op: "slice",
                left: self.shape(a).to_vec(),
                right: vec![start, len],
            });
        }
        let out = self.values(a)[start..start + len].to_vec();
        Ok(self.push(Op::Slice(a, start), vec![1, len], out))
    }

    /// Stack single-row tensors of equal width into a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(GradError::Contract("stack_rows needs at least one row".into()));
        };
        let d = self.value(first).len();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            self.require_row("stack_rows", r)?;
            if self.value(r).len() != d {
                return Err(GradError::Shape {
                    op: "stack_rows",
                    left: vec![d],
                    right: self.shape(r).to_vec(),
                });
            }
            out.extend_from_slice(self.values(r));
        }
        Ok(self.push(Op::StackRows(rows.to_vec()), vec![rows.len(), d], out))
    }

    /// Row `i` of a matrix as `[1, d]`.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (m, d) = self.value(a).dims2();
        if i >= m {
            return Err(GradError::Index {
                op: "row",
                id: i,
                len: m,
            });
        }
        let out = self.values(a)[i * d..(i + 1) * d].to_vec();
        Ok(self.push(Op::Row(a, i), vec![1, d], out))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        let av = self.values(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        self.push(Op::Transpose(a), vec![n, m], out)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(GradError::Shape {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape.to_vec(),
            });
        }
        let out = self.values(a).to_vec();
        Ok(self.push(Op::Reshape(a), shape.to_vec(), out))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.values(a).iter().sum();
        self.push(Op::Sum(a), vec![], vec![s])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.values(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Scale(a, c), shape, out)
    }

    /// Flat element `i` as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let n = self.value(a).len();
        if i >= n {
            return Err(GradError::Index {
                op: "pick",
                id: i,
                len: n,
            });
        }
        let x = self.values(a)[i];
        Ok(self.push(Op::Pick(a, i), vec![], vec![x]))
    }

    /// Sum of scalars, folded left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = terms.split_first() else {
            return Err(GradError::Contract("add_all needs at least one term".into()));
        };
        let mut acc = first;
        for &t in rest {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Populate gradients of every `requires_grad` node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(GradError::State(
                "backward already ran on this tape; call reset_grads first".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(GradError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.value.requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            self.nodes[idx].value.grad = Some(g);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value.values;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let (_, n) = self.value(*b).dims2();
                let av = self.values(*a);
                let bv = self.values(*b);
                if self.rg(*a) {
                    let ga = slot(grads, *a, m * k);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] += dot(grow, brow);
                        }
                    }
                }
                if self.rg(*b) {
                    let gb = slot(grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, &y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                }
            }
            Op::Binary(kind, a, b) => {
                let n = g.len();
                match kind {
                    BinaryKind::Add | BinaryKind::Sub => {
                        if self.rg(*a) {
                            axpy(slot(grads, *a, n), 1.0, g);
                        }
                        if self.rg(*b) {
                            let sign = if *kind == BinaryKind::Add { 1.0 } else { -1.0 };
                            axpy(slot(grads, *b, n), sign, g);
                        }
                    }
                    BinaryKind::Mul => {
                        if self.rg(*a) {
                            let bv = self.values(*b);
                            for ((o, &gi), &y) in slot(grads, *a, n).iter_mut().zip(g).zip(bv) {
                                *o += gi * y;
                            }
                        }
                        if self.rg(*b) {
                            let av = self.values(*a);
                            for ((o, &gi), &x) in slot(grads, *b, n).iter_mut().zip(g).zip(av) {
                                *o += gi * x;
                            }
                        }
                    }
                }
            }
            Op::AddRowBias(a, bias) => {
                let (m, n) = self.value(*a).dims2();
                if self.rg(*a) {
                    axpy(slot(grads, *a, m * n), 1.0, g);
                }
                if self.rg(*bias) {
                    let gb = slot(grads, *bias, n);
                    for i in 0..m {
                        axpy(gb, 1.0, &g[i * n..(i + 1) * n]);
                    }
                }
            }
            Op::Unary(kind, a) => {
                let n = g.len();
                let ga = slot(grads, *a, n);
                match kind {
                    UnaryKind::Tanh => {
                        for i in 0..n {
                            ga[i] += g[i] * (1.0 - out[i] * out[i]);
                        }
                    }
                    UnaryKind::Sigmoid => {
                        for i in 0..n {
                            ga[i] += g[i] * out[i] * (1.0 - out[i]);
                        }
                    }
                    UnaryKind::LeakyRelu => {
                        let av = self.values(*a);
                        for i in 0..n {
                            let d = if av[i] >= 0.0 { 1.0 } else { LEAKY_RELU_SLOPE };
                            ga[i] += g[i] * d;
                        }
                    }
                    UnaryKind::Exp => {
                        for i in 0..n {
                            ga[i] += g[i] * out[i];
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let n = g.len();
                let s = dot(g, out);
                let ga = slot(grads, *a, n);
                for i in 0..n {
                    ga[i] += out[i] * (g[i] - s);
                }
            }
            Op::LogSoftmax(a) => {
                let n = g.len();
                let gsum: f64 = g.iter().sum();
                let ga = slot(grads, *a, n);
                for i in 0..n {
                    ga[i] += g[i] - out[i].exp() * gsum;
                }
            }
            Op::GatherRows(table, ids) => {
                let (rows, d) = self.value(*table).dims2();
                let gt = slot(grads, *table, rows * d);
                for (r, &id) in ids.iter().enumerate() {
                    axpy(&mut gt[id * d..(id + 1) * d], 1.0, &g[r * d..(r + 1) * d]);
                }
            }
            Op::Concat(parts) | Op::StackRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.rg(p) {
                        axpy(slot(grads, p, n), 1.0, &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::Slice(a, start) => {
                let n = self.value(*a).len();
                let ga = slot(grads, *a, n);
                axpy(&mut ga[*start..*start + g.len()], 1.0, g);
            }
            Op::Row(a, i) => {
                let (m, d) = self.value(*a).dims2();
                let ga = slot(grads, *a, m * d);
                axpy(&mut ga[i * d..(i + 1) * d], 1.0, g);
            }
            Op::Transpose(a) => {
                let (m, n) = self.value(*a).dims2();
                let ga = slot(grads, *a, m * n);
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] += g[j * m + i];
                    }
                }
            }
            Op::Reshape(a) => {
                axpy(slot(grads, *a, g.len()), 1.0, g);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                for o in slot(grads, *a, n).iter_mut() {
                    *o += g[0];
                }
            }
            Op::Scale(a, c) => {
                axpy(slot(grads, *a, g.len()), *c, g);
            }
            Op::Pick(a, i) => {
                let n = self.value(*a).len();
                slot(grads, *a, n)[*i] += g[0];
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (o, &xi) in y.iter_mut().zip(x) {
        *o += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax over a flat slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - mx).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Max-shifted log-softmax over a flat slice.
pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lz = xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
    xs.iter().map(|x| x - mx - lz).collect()
}
