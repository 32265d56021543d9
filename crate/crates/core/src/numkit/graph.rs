//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A `Graph` is a Wengert tape: every operation appends one node holding its
//! result, and `backward` walks the tape in reverse accumulating gradients
//! into parents. Nodes are plain indices into the graph that created them.
//!
//! Evaluation is eager and pure: node values are fixed at creation, so
//! rebuilding the same graph from the same leaves reproduces identical bits.
//! Gradients are materialized lazily during `backward`; nodes the output does
//! not depend on keep `grad == None`.

use super::matrix::{matmul_nn, matmul_nt, matmul_tn};
use super::{Matrix, NumError};

/// Handle into a `Graph`. Only meaningful for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node(usize);

/// Boolean attention pattern: `allowed(p, q)` says whether query row p may
/// attend to key row q. Kept separate from `Matrix` because matrices must be
/// finite everywhere and the conventional additive -inf encoding is not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttnMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttnMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self, NumError> {
        if rows == 0 || cols == 0 {
            return Err(NumError::ZeroDim { rows, cols });
        }
        if allowed.len() != rows * cols {
            return Err(NumError::LengthMismatch { rows, cols, len: allowed.len() });
        }
        if allowed.chunks(cols).any(|row| row.iter().all(|&a| !a)) {
            return Err(NumError::Invalid(
                "attention mask has a fully-masked row".into(),
            ));
        }
        Ok(Self { rows, cols, allowed })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn allowed(&self, p: usize, q: usize) -> bool {
        self.allowed[p * self.cols + q]
    }

    /// Number of unmasked entries in row p.
    pub fn row_allowed_count(&self, p: usize) -> usize {
        self.allowed[p * self.cols..(p + 1) * self.cols]
            .iter()
            .filter(|&&a| a)
            .count()
    }
}

enum Op {
    Leaf,
    Matmul(Node, Node),
    Transpose(Node),
    Add(Node, Node),
    Sub(Node, Node),
    Mul(Node, Node),
    Scale(Node, f64),
    AddRowBroadcast(Node, Node),
    Relu(Node),
    Exp(Node),
    Ln(Node),
    Clamp(Node, f64, f64),
    MinElem(Node, Node),
    SoftmaxRows(Node, Option<AttnMask>),
    LayerNorm { x: Node, gain: Node, bias: Node, eps: f64 },
    ConcatRows(Vec<Node>),
    ConcatCols(Vec<Node>),
    RowSums(Node),
    SumAll(Node),
}

pub struct Graph {
    values: Vec<Matrix>,
    ops: Vec<Op>,
    grads: Vec<Option<Matrix>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { values: Vec::new(), ops: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, n: Node) -> &Matrix {
        &self.values[n.0]
    }

    /// None until `backward` runs, and for nodes the loss does not reach.
    pub fn grad(&self, n: Node) -> Option<&Matrix> {
        self.grads[n.0].as_ref()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Node {
        self.values.push(value);
        self.ops.push(op);
        self.grads.push(None);
        Node(self.values.len() - 1)
    }

    /// Insert an input. Leaves participate in gradients like any node; which
    /// ones the caller treats as parameters is its own business.
    pub fn leaf(&mut self, value: Matrix) -> Node {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Node, b: Node) -> Result<Node, NumError> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.cols() != vb.rows() {
            return Err(NumError::ShapeMismatch { op: "matmul", a: va.dims(), b: vb.dims() });
        }
        let out = Matrix::checked(va.rows(), vb.cols(), matmul_nn(va, vb), "matmul")?;
        Ok(self.push(out, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: Node) -> Result<Node, NumError> {
        let out = self.values[a.0].transposed();
        Ok(self.push(out, Op::Transpose(a)))
    }

    fn binary_same_shape(
        &self,
        op: &'static str,
        a: Node,
        b: Node,
    ) -> Result<(usize, usize), NumError> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if !va.same_shape(vb) {
            return Err(NumError::ShapeMismatch { op, a: va.dims(), b: vb.dims() });
        }
        Ok((va.rows(), va.cols()))
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: Node,
        b: Node,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Node, NumError> {
        let (r, c) = self.binary_same_shape(name, a, b)?;
        let data = self.values[a.0]
            .as_slice()
            .iter()
            .zip(self.values[b.0].as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Matrix::checked(r, c, data, name)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Node, b: Node) -> Result<Node, NumError> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Result<Node, NumError> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Node, b: Node) -> Result<Node, NumError> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum. Gradient follows the `a` branch on exact ties.
    pub fn min_elem(&mut self, a: Node, b: Node) -> Result<Node, NumError> {
        self.zip("min_elem", a, b, |x, y| if x <= y { x } else { y }, Op::MinElem(a, b))
    }

    fn map(
        &mut self,
        name: &'static str,
        a: Node,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Node, NumError> {
        let va = &self.values[a.0];
        let (r, c) = (va.rows(), va.cols());
        let data = va.as_slice().iter().map(|&x| f(x)).collect();
        let out = Matrix::checked(r, c, data, name)?;
        Ok(self.push(out, op))
    }

    pub fn scale(&mut self, a: Node, c: f64) -> Result<Node, NumError> {
        if !c.is_finite() {
            return Err(NumError::Invalid(format!("non-finite scale factor {c}")));
        }
        self.map("scale", a, |x| x * c, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Node) -> Result<Node, NumError> {
        self.map("relu", a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Node) -> Result<Node, NumError> {
        self.map("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Node) -> Result<Node, NumError> {
        let va = &self.values[a.0];
        for r in 0..va.rows() {
            for c in 0..va.cols() {
                let v = va.get(r, c);
                if v <= 0.0 {
                    return Err(NumError::LnDomain { value: v, row: r, col: c });
                }
            }
        }
        self.map("ln", a, f64::ln, Op::Ln(a))
    }

    /// Elementwise clamp to [lo, hi]. Gradient is 1 inside the band
    /// (inclusive), 0 strictly outside.
    pub fn clamp(&mut self, a: Node, lo: f64, hi: f64) -> Result<Node, NumError> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(NumError::Invalid(format!("bad clamp bounds [{lo}, {hi}]")));
        }
        self.map("clamp", a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// a (m x n) + bias (1 x n) added to every row.
    pub fn add_row_broadcast(&mut self, a: Node, bias: Node) -> Result<Node, NumError> {
        let (va, vb) = (&self.values[a.0], &self.values[bias.0]);
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(NumError::ShapeMismatch {
                op: "add_row_broadcast",
                a: va.dims(),
                b: vb.dims(),
            });
        }
        let (r, c) = (va.rows(), va.cols());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for (x, y) in va.row(i).iter().zip(vb.row(0)) {
                data.push(x + y);
            }
        }
        let out = Matrix::checked(r, c, data, "add_row_broadcast")?;
        Ok(self.push(out, Op::AddRowBroadcast(a, bias)))
    }

    /// Row-wise softmax, stabilized by subtracting each row's max before
    /// exponentiation.
    pub fn softmax_rows(&mut self, a: Node) -> Result<Node, NumError> {
        self.softmax_rows_impl(a, None)
    }

    /// Row-wise softmax over the mask's allowed entries only; masked entries
    /// get exactly zero weight and never enter the max or the sum.
    pub fn softmax_rows_masked(&mut self, a: Node, mask: &AttnMask) -> Result<Node, NumError> {
        let va = &self.values[a.0];
        if va.rows() != mask.rows() || va.cols() != mask.cols() {
            return Err(NumError::ShapeMismatch {
                op: "softmax_rows_masked",
                a: va.dims(),
                b: format!("{}x{} mask", mask.rows(), mask.cols()),
            });
        }
        self.softmax_rows_impl(a, Some(mask.clone()))
    }

    fn softmax_rows_impl(&mut self, a: Node, mask: Option<AttnMask>) -> Result<Node, NumError> {
        let va = &self.values[a.0];
        let (r, c) = (va.rows(), va.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = va.row(i);
            let out = &mut data[i * c..(i + 1) * c];
            let active = |j: usize| mask.as_ref().map_or(true, |m| m.allowed(i, j));
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if active(j) && v > max {
                    max = v;
                }
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if active(j) {
                    let e = (v - max).exp();
                    out[j] = e;
                    sum += e;
                }
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        let out = Matrix::checked(r, c, data, "softmax_rows")?;
        Ok(self.push(out, Op::SoftmaxRows(a, mask)))
    }

    /// Per-row normalization with learned gain and bias (both 1 x n):
    /// out = (x - mean) / sqrt(var + eps) * gain + bias, population variance.
    pub fn layer_norm(
        &mut self,
        x: Node,
        gain: Node,
        bias: Node,
        eps: f64,
    ) -> Result<Node, NumError> {
        let (vx, vg, vb) = (&self.values[x.0], &self.values[gain.0], &self.values[bias.0]);
        let n = vx.cols();
        for (name, v) in [("gain", vg), ("bias", vb)] {
            if v.rows() != 1 || v.cols() != n {
                return Err(NumError::ShapeMismatch {
                    op: "layer_norm",
                    a: vx.dims(),
                    b: format!("{} {}", v.dims(), name),
                });
            }
        }
        if !(eps > 0.0) {
            return Err(NumError::Invalid(format!("layer_norm eps must be positive, got {eps}")));
        }
        let r = vx.rows();
        let mut data = Vec::with_capacity(r * n);
        for i in 0..r {
            let row = vx.row(i);
            let (mean, var) = mean_var(row);
            let inv = 1.0 / (var + eps).sqrt();
            for (j, &v) in row.iter().enumerate() {
                data.push((v - mean) * inv * vg.get(0, j) + vb.get(0, j));
            }
        }
        let out = Matrix::checked(r, n, data, "layer_norm")?;
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, eps }))
    }

    /// Vertical concatenation; all parts share a column count.
    pub fn concat_rows(&mut self, parts: &[Node]) -> Result<Node, NumError> {
        if parts.is_empty() {
            return Err(NumError::Invalid("concat_rows of zero parts".into()));
        }
        let cols = self.values[parts[0].0].cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = &self.values[p.0];
            if v.cols() != cols {
                return Err(NumError::ShapeMismatch {
                    op: "concat_rows",
                    a: format!("{cols} cols"),
                    b: v.dims(),
                });
            }
            rows += v.rows();
            data.extend_from_slice(v.as_slice());
        }
        let out = Matrix::checked(rows, cols, data, "concat_rows")?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Horizontal concatenation; all parts share a row count.
    pub fn concat_cols(&mut self, parts: &[Node]) -> Result<Node, NumError> {
        if parts.is_empty() {
            return Err(NumError::Invalid("concat_cols of zero parts".into()));
        }
        let rows = self.values[parts[0].0].rows();
        let total_cols: usize = parts.iter().map(|&p| self.values[p.0].cols()).sum();
        let mut data = Vec::with_capacity(rows * total_cols);
        for i in 0..rows {
            for &p in parts {
                let v = &self.values[p.0];
                if v.rows() != rows {
                    return Err(NumError::ShapeMismatch {
                        op: "concat_cols",
                        a: format!("{rows} rows"),
                        b: v.dims(),
                    });
                }
                data.extend_from_slice(v.row(i));
            }
        }
        let out = Matrix::checked(rows, total_cols, data, "concat_cols")?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// m x n -> m x 1, each row summed.
    pub fn row_sums(&mut self, a: Node) -> Result<Node, NumError> {
        let va = &self.values[a.0];
        let data: Vec<f64> = (0..va.rows()).map(|i| va.row(i).iter().sum()).collect();
        let out = Matrix::checked(va.rows(), 1, data, "row_sums")?;
        Ok(self.push(out, Op::RowSums(a)))
    }

    /// m x n -> 1 x 1 total.
    pub fn sum_all(&mut self, a: Node) -> Result<Node, NumError> {
        let total: f64 = self.values[a.0].as_slice().iter().sum();
        let out = Matrix::checked(1, 1, vec![total], "sum_all")?;
        Ok(self.push(out, Op::SumAll(a)))
    }

    /// Mean of all entries, as a 1 x 1 node.
    pub fn mean_all(&mut self, a: Node) -> Result<Node, NumError> {
        let n = self.values[a.0].as_slice().len();
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Reverse pass from a scalar (1 x 1) node. Clears previous gradients.
    pub fn backward(&mut self, out: Node) -> Result<(), NumError> {
        let v = &self.values[out.0];
        if v.rows() != 1 || v.cols() != 1 {
            return Err(NumError::Invalid(format!(
                "backward root must be 1x1, got {}",
                v.dims()
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[out.0] = Some(Matrix::scalar(1.0));

        for idx in (0..self.ops.len()).rev() {
            // Parents are always earlier on the tape, so split at idx to hold
            // this node's gradient while mutating parents'.
            let (parent_grads, rest) = self.grads.split_at_mut(idx);
            let g = match &rest[0] {
                Some(g) => g,
                None => continue,
            };
            let values = &self.values;
            match &self.ops[idx] {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (va, vb) = (&values[a.0], &values[b.0]);
                    let da = matmul_nt(g, vb);
                    let db = matmul_tn(va, g);
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    add_into(ga, &da);
                    let gb = acc(&mut parent_grads[b.0], vb.rows(), vb.cols());
                    add_into(gb, &db);
                }
                Op::Transpose(a) => {
                    let va = &values[a.0];
                    let gt = g.transposed();
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    add_into(ga, gt.as_slice());
                }
                Op::Add(a, b) => {
                    for &p in [a, b] {
                        let vp = &values[p.0];
                        let gp = acc(&mut parent_grads[p.0], vp.rows(), vp.cols());
                        add_into(gp, g.as_slice());
                    }
                }
                Op::Sub(a, b) => {
                    let va = &values[a.0];
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    add_into(ga, g.as_slice());
                    let vb = &values[b.0];
                    let gb = acc(&mut parent_grads[b.0], vb.rows(), vb.cols());
                    sub_into(gb, g.as_slice());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&values[a.0], &values[b.0]);
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    for ((o, &gv), &bv) in
                        ga_iter(ga).zip(g.as_slice()).zip(vb.as_slice())
                    {
                        *o += gv * bv;
                    }
                    let gb = acc(&mut parent_grads[b.0], vb.rows(), vb.cols());
                    for ((o, &gv), &av) in
                        ga_iter(gb).zip(g.as_slice()).zip(va.as_slice())
                    {
                        *o += gv * av;
                    }
                }
                Op::Scale(a, c) => {
                    let va = &values[a.0];
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    for (o, &gv) in ga_iter(ga).zip(g.as_slice()) {
                        *o += gv * c;
                    }
                }
                Op::AddRowBroadcast(a, bias) => {
                    let va = &values[a.0];
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    add_into(ga, g.as_slice());
                    let vb = &values[bias.0];
                    let gb = acc(&mut parent_grads[bias.0], 1, vb.cols());
                    for i in 0..g.rows() {
                        for (o, &gv) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += gv;
                        }
                    }
                }
                Op::Relu(a) => {
                    let va = &values[a.0];
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    for ((o, &gv), &xv) in
                        ga_iter(ga).zip(g.as_slice()).zip(va.as_slice())
                    {
                        if xv > 0.0 {
                            *o += gv;
                        }
                    }
                }
                Op::Exp(a) => {
                    let va = &values[a.0];
                    let out_v = &values[idx];
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    for ((o, &gv), &ev) in
                        ga_iter(ga).zip(g.as_slice()).zip(out_v.as_slice())
                    {
                        *o += gv * ev;
                    }
                }
                Op::Ln(a) => {
                    let va = &values[a.0];
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    for ((o, &gv), &xv) in
                        ga_iter(ga).zip(g.as_slice()).zip(va.as_slice())
                    {
                        *o += gv / xv;
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let va = &values[a.0];
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    for ((o, &gv), &xv) in
                        ga_iter(ga).zip(g.as_slice()).zip(va.as_slice())
                    {
                        if xv >= *lo && xv <= *hi {
                            *o += gv;
                        }
                    }
                }
                Op::MinElem(a, b) => {
                    let (va, vb) = (&values[a.0], &values[b.0]);
                    {
                        let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                        for (((o, &gv), &av), &bv) in ga_iter(ga)
                            .zip(g.as_slice())
                            .zip(va.as_slice())
                            .zip(vb.as_slice())
                        {
                            if av <= bv {
                                *o += gv;
                            }
                        }
                    }
                    let gb = acc(&mut parent_grads[b.0], vb.rows(), vb.cols());
                    for (((o, &gv), &av), &bv) in ga_iter(gb)
                        .zip(g.as_slice())
                        .zip(va.as_slice())
                        .zip(vb.as_slice())
                    {
                        if av > bv {
                            *o += gv;
                        }
                    }
                }
                Op::SoftmaxRows(a, _mask) => {
                    // dx_j = y_j * (g_j - sum_k g_k y_k); masked entries have
                    // y == 0 and drop out on their own.
                    let va = &values[a.0];
                    let y = &values[idx];
                    let (r, c) = (va.rows(), va.cols());
                    let ga = acc(&mut parent_grads[a.0], r, c);
                    for i in 0..r {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                        for ((o, &yv), &gv) in ga.row_mut(i).iter_mut().zip(yr).zip(gr) {
                            *o += yv * (gv - dot);
                        }
                    }
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let vx = &values[x.0];
                    let vg = &values[gain.0];
                    let (r, n) = (vx.rows(), vx.cols());
                    {
                        let gx = acc(&mut parent_grads[x.0], r, n);
                        for i in 0..r {
                            let row = vx.row(i);
                            let (mean, var) = mean_var(row);
                            let inv = 1.0 / (var + eps).sqrt();
                            // h = dL/dx_hat
                            let mut m1 = 0.0;
                            let mut m2 = 0.0;
                            for (j, &v) in row.iter().enumerate() {
                                let h = g.get(i, j) * vg.get(0, j);
                                let xh = (v - mean) * inv;
                                m1 += h;
                                m2 += h * xh;
                            }
                            m1 /= n as f64;
                            m2 /= n as f64;
                            for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                                let h = g.get(i, j) * vg.get(0, j);
                                let xh = (row[j] - mean) * inv;
                                *o += (h - m1 - xh * m2) * inv;
                            }
                        }
                    }
                    {
                        let gg = acc(&mut parent_grads[gain.0], 1, n);
                        for i in 0..r {
                            let row = vx.row(i);
                            let (mean, var) = mean_var(row);
                            let inv = 1.0 / (var + eps).sqrt();
                            for (j, o) in gg.row_mut(0).iter_mut().enumerate() {
                                *o += g.get(i, j) * (row[j] - mean) * inv;
                            }
                        }
                    }
                    let gb = acc(&mut parent_grads[bias.0], 1, n);
                    for i in 0..r {
                        for (o, &gv) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += gv;
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut row0 = 0;
                    for &p in parts {
                        let vp = &values[p.0];
                        let (pr, pc) = (vp.rows(), vp.cols());
                        let gp = acc(&mut parent_grads[p.0], pr, pc);
                        for i in 0..pr {
                            for (o, &gv) in gp.row_mut(i).iter_mut().zip(g.row(row0 + i)) {
                                *o += gv;
                            }
                        }
                        row0 += pr;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut col0 = 0;
                    for &p in parts {
                        let vp = &values[p.0];
                        let (pr, pc) = (vp.rows(), vp.cols());
                        let gp = acc(&mut parent_grads[p.0], pr, pc);
                        for i in 0..pr {
                            let gr = g.row(i);
                            for (j, o) in gp.row_mut(i).iter_mut().enumerate() {
                                *o += gr[col0 + j];
                            }
                        }
                        col0 += pc;
                    }
                }
                Op::RowSums(a) => {
                    let va = &values[a.0];
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    for i in 0..va.rows() {
                        let gv = g.get(i, 0);
                        for o in ga.row_mut(i) {
                            *o += gv;
                        }
                    }
                }
                Op::SumAll(a) => {
                    let va = &values[a.0];
                    let gv = g.item();
                    let ga = acc(&mut parent_grads[a.0], va.rows(), va.cols());
                    for o in ga_iter(ga) {
                        *o += gv;
                    }
                }
            }
        }
        Ok(())
    }
}

fn acc(slot: &mut Option<Matrix>, rows: usize, cols: usize) -> &mut Matrix {
    slot.get_or_insert_with(|| Matrix::zeros(rows, cols))
}

fn mean_var(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn add_into(dst: &mut Matrix, src: &[f64]) {
    for (o, &v) in dst.data_mut().iter_mut().zip(src) {
        *o += v;
    }
}

fn sub_into(dst: &mut Matrix, src: &[f64]) {
    for (o, &v) in dst.data_mut().iter_mut().zip(src) {
        *o -= v;
    }
}

fn ga_iter(m: &mut Matrix) -> std::slice::IterMut<'_, f64> {
    m.data_mut().iter_mut()
}
