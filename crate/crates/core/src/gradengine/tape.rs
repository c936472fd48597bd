//! Reverse-mode differentiation over a linear tape of matrix primitives.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and [`Tape::backward`] is a single reverse sweep.

use rand::Rng;

use super::tensor::{gemm, MatRef, Tensor2};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Binary keep/drop pattern applied by inverted dropout.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    rows: usize,
    cols: usize,
    keep_prob: f64,
    keep: Vec<bool>,
}

impl DropoutMask {
    pub fn new(rows: usize, cols: usize, keep_prob: f64, keep: Vec<bool>) -> Result<Self> {
        check_keep_prob(keep_prob)?;
        if keep.len() != rows * cols {
            return Err(Error::shape(
                "DropoutMask::new",
                format!("{rows}x{cols} mask with {} entries", keep.len()),
            ));
        }
        Ok(Self {
            rows,
            cols,
            keep_prob,
            keep,
        })
    }

    pub fn all_kept(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            keep_prob: 1.0,
            keep: vec![true; rows * cols],
        }
    }

    /// Draws each entry independently: kept with probability `keep_prob`.
    pub fn sample<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        keep_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_keep_prob(keep_prob)?;
        let keep = if keep_prob >= 1.0 {
            vec![true; rows * cols]
        } else {
            (0..rows * cols)
                .map(|_| rng.gen::<f64>() < keep_prob)
                .collect()
        };
        Ok(Self {
            rows,
            cols,
            keep_prob,
            keep,
        })
    }

    /// Stacks masks vertically; all parts must share width and keep probability.
    pub fn vstack(parts: &[DropoutMask]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("vstack of zero masks".into()))?;
        let mut keep = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != first.cols || p.keep_prob != first.keep_prob {
                return Err(Error::shape("DropoutMask::vstack", "inconsistent parts"));
            }
            rows += p.rows;
            keep.extend_from_slice(&p.keep);
        }
        Ok(Self {
            rows,
            cols: first.cols,
            keep_prob: first.keep_prob,
            keep,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    pub fn kept(&self) -> &[bool] {
        &self.keep
    }

    /// Rows `[start, start + count)` as their own mask.
    pub fn row_block(&self, start: usize, count: usize) -> DropoutMask {
        DropoutMask {
            rows: count,
            cols: self.cols,
            keep_prob: self.keep_prob,
            keep: self.keep[start * self.cols..(start + count) * self.cols].to_vec(),
        }
    }

    fn scale(&self, i: usize) -> f64 {
        if self.keep[i] {
            1.0 / self.keep_prob
        } else {
            0.0
        }
    }

    pub fn apply(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.shape() != self.shape() {
            return Err(Error::shape(
                "dropout",
                format!("input {:?} vs mask {:?}", x.shape(), self.shape()),
            ));
        }
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * self.scale(i))
            .collect();
        Ok(Tensor2::from_raw(self.rows, self.cols, data))
    }
}

fn check_keep_prob(keep_prob: f64) -> Result<()> {
    if keep_prob > 0.0 && keep_prob <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "keep probability must lie in (0, 1], got {keep_prob}"
        )))
    }
}

/// Samples a fresh mask for `x` and applies it (inverted dropout).
pub fn dropout_apply<R: Rng + ?Sized>(
    x: &Tensor2,
    keep_prob: f64,
    rng: &mut R,
) -> Result<(Tensor2, DropoutMask)> {
    let mask = DropoutMask::sample(x.rows(), x.cols(), keep_prob, rng)?;
    let y = mask.apply(x)?;
    Ok((y, mask))
}

/// Entrywise hyperbolic tangent.
pub fn tanh_map(x: &Tensor2) -> Tensor2 {
    x.map(f64::tanh)
}

/// Softmax of every row, computed after subtracting the row maximum.
pub fn row_softmax(m: &Tensor2) -> Tensor2 {
    let mut data = m.data().to_vec();
    if m.cols() > 0 {
        for row in data.chunks_exact_mut(m.cols()) {
            softmax_in_place(row);
        }
    }
    Tensor2::from_raw(m.rows(), m.cols(), data)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Squared Frobenius distance `Σ (a - b)²`.
pub fn mse(a: &Tensor2, b: &Tensor2) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "mse",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    MatMulNt {
        a: NodeId,
        b: NodeId,
    },
    BlockMatMulNt {
        a: NodeId,
        b: NodeId,
        block: usize,
    },
    BlockMatMul {
        a: NodeId,
        b: NodeId,
        block: usize,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        a: NodeId,
        factor: f64,
    },
    RowSoftmax {
        a: NodeId,
    },
    Tanh {
        a: NodeId,
    },
    Dropout {
        a: NodeId,
        mask: DropoutMask,
    },
    ConcatCols {
        parts: Vec<NodeId>,
    },
    Reshape {
        a: NodeId,
    },
    SqDist {
        a: NodeId,
        b: NodeId,
    },
    SumScalars {
        parts: Vec<NodeId>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive applications for one logical computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Records a value that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    /// Records trainable parameter number `index` of the gradient table.
    pub fn param(&mut self, value: Tensor2, index: usize) -> NodeId {
        self.push(value, Op::Param(index), true)
    }

    /// `X W (+ b)`, with `b` a `1×cols` row broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.rows() {
            return Err(Error::shape(
                "affine",
                format!("X {:?} . W {:?}", xv.shape(), wv.shape()),
            ));
        }
        let mut y = xv.matmul(wv)?;
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != (1, y.cols()) {
                return Err(Error::shape(
                    "affine",
                    format!("bias {:?} for output {:?}", bv.shape(), y.shape()),
                ));
            }
            let cols = y.cols();
            if cols > 0 {
                let bias = bv.data().to_vec();
                for row in y.data_mut().chunks_exact_mut(cols) {
                    for (v, bj) in row.iter_mut().zip(&bias) {
                        *v += bj;
                    }
                }
            }
        }
        let rg = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(y, Op::Affine { x, w, b }, rg))
    }

    /// `A Bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::shape(
                "matmul_nt",
                format!("{:?} . {:?}^T", av.shape(), bv.shape()),
            ));
        }
        let (n, k, m) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            MatRef::row_major(av.data(), k),
            MatRef::transposed(bv.data(), k),
            &mut out,
            m,
            false,
        );
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor2::from_raw(n, m, out), Op::MatMulNt { a, b }, rg))
    }

    /// Per-block `A_i B_iᵀ` where both inputs stack blocks of `block` rows.
    /// The result stacks the `block×block` products.
    pub fn block_matmul_nt(&mut self, a: NodeId, b: NodeId, block: usize) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() || block == 0 || av.rows() % block != 0 {
            return Err(Error::shape(
                "block_matmul_nt",
                format!("{:?} vs {:?} with block {block}", av.shape(), bv.shape()),
            ));
        }
        let k = av.cols();
        let blocks = av.rows() / block;
        let mut out = vec![0.0; av.rows() * block];
        for i in 0..blocks {
            let span = i * block * k..(i + 1) * block * k;
            gemm(
                block,
                k,
                block,
                MatRef::row_major(&av.data()[span.clone()], k),
                MatRef::transposed(&bv.data()[span], k),
                &mut out[i * block * block..(i + 1) * block * block],
                block,
                false,
            );
        }
        let rg = self.needs(a) || self.needs(b);
        let y = Tensor2::from_raw(av.rows(), block, out);
        Ok(self.push(y, Op::BlockMatMulNt { a, b, block }, rg))
    }

    /// Per-block `A_i B_i` with `A` stacking `block×block` squares and `B`
    /// stacking `block×k` blocks.
    pub fn block_matmul(&mut self, a: NodeId, b: NodeId, block: usize) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if block == 0 || av.cols() != block || av.rows() != bv.rows() || av.rows() % block != 0 {
            return Err(Error::shape(
                "block_matmul",
                format!("{:?} vs {:?} with block {block}", av.shape(), bv.shape()),
            ));
        }
        let k = bv.cols();
        let blocks = av.rows() / block;
        let mut out = vec![0.0; av.rows() * k];
        for i in 0..blocks {
            gemm(
                block,
                block,
                k,
                MatRef::row_major(
                    &av.data()[i * block * block..(i + 1) * block * block],
                    block,
                ),
                MatRef::row_major(&bv.data()[i * block * k..(i + 1) * block * k], k),
                &mut out[i * block * k..(i + 1) * block * k],
                k,
                false,
            );
        }
        let rg = self.needs(a) || self.needs(b);
        let y = Tensor2::from_raw(av.rows(), k, out);
        Ok(self.push(y, Op::BlockMatMul { a, b, block }, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x + y)
            .collect();
        let y = Tensor2::from_raw(av.rows(), av.cols(), data);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Add { a, b }, rg))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let y = self.value(a).map(|v| v * factor);
        let rg = self.needs(a);
        self.push(y, Op::Scale { a, factor }, rg)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let y = row_softmax(self.value(a));
        let rg = self.needs(a);
        self.push(y, Op::RowSoftmax { a }, rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let y = tanh_map(self.value(a));
        let rg = self.needs(a);
        self.push(y, Op::Tanh { a }, rg)
    }

    /// Applies a pre-drawn mask; the mask is stored so backward reuses it.
    pub fn dropout(&mut self, a: NodeId, mask: DropoutMask) -> Result<NodeId> {
        let y = mask.apply(self.value(a))?;
        let rg = self.needs(a);
        Ok(self.push(y, Op::Dropout { a, mask }, rg))
    }

    /// Horizontal concatenation of equally tall blocks.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero parts".into()))?;
        let rows = self.value(*first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", "parts differ in row count"));
        }
        if parts.len() == 1 {
            return Ok(*first);
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        let y = Tensor2::from_raw(rows, cols, data);
        Ok(self.push(
            y,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Row-major reinterpretation with a new shape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let y = self.value(a).reshaped(rows, cols)?;
        let rg = self.needs(a);
        Ok(self.push(y, Op::Reshape { a }, rg))
    }

    /// Scalar `Σ (a - b)²`.
    pub fn sq_dist(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = mse(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor2::from_raw(1, 1, vec![v]), Op::SqDist { a, b }, rg))
    }

    pub fn sum_scalars(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.iter().any(|&p| self.value(p).shape() != (1, 1)) {
            return Err(Error::shape("sum_scalars", "non-scalar part"));
        }
        let v = parts.iter().map(|&p| self.value(p).item()).sum();
        let rg = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor2::from_raw(1, 1, vec![v]),
            Op::SumScalars {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Returns one gradient per entry of `param_shapes`; parameters that the
    /// loss does not reach get zeros.
    pub fn backward(&self, loss: NodeId, param_shapes: &[(usize, usize)]) -> Result<Vec<Tensor2>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut table: Vec<Tensor2> = param_shapes
            .iter()
            .map(|&(r, c)| Tensor2::zeros(r, c))
            .collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(index) => {
                    let slot = table.get_mut(*index).ok_or_else(|| {
                        Error::Usage(format!("parameter {index} outside gradient table"))
                    })?;
                    if slot.shape() != node.value.shape() {
                        return Err(Error::shape(
                            "backward",
                            format!(
                                "parameter {index} is {:?} on tape, {:?} in table",
                                node.value.shape(),
                                slot.shape()
                            ),
                        ));
                    }
                    for (s, v) in slot.data_mut().iter_mut().zip(&g) {
                        *s += v;
                    }
                }
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, a, m) = (xv.rows(), xv.cols(), wv.cols());
                    if self.needs(*x) {
                        let dst = slot(&mut grads, *x, n * a);
                        gemm(
                            n,
                            m,
                            a,
                            MatRef::row_major(&g, m),
                            MatRef::transposed(wv.data(), m),
                            dst,
                            a,
                            true,
                        );
                    }
                    if self.needs(*w) {
                        let dst = slot(&mut grads, *w, a * m);
                        gemm(
                            a,
                            n,
                            m,
                            MatRef::transposed(xv.data(), a),
                            MatRef::row_major(&g, m),
                            dst,
                            m,
                            true,
                        );
                    }
                    if let Some(b) = b {
                        if self.needs(*b) && m > 0 {
                            let dst = slot(&mut grads, *b, m);
                            for row in g.chunks_exact(m) {
                                for (d, v) in dst.iter_mut().zip(row) {
                                    *d += v;
                                }
                            }
                        }
                    }
                }
                Op::MatMulNt { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.rows());
                    if self.needs(*a) {
                        let dst = slot(&mut grads, *a, n * k);
                        gemm(
                            n,
                            m,
                            k,
                            MatRef::row_major(&g, m),
                            MatRef::row_major(bv.data(), k),
                            dst,
                            k,
                            true,
                        );
                    }
                    if self.needs(*b) {
                        let dst = slot(&mut grads, *b, m * k);
                        gemm(
                            m,
                            n,
                            k,
                            MatRef::transposed(&g, m),
                            MatRef::row_major(av.data(), k),
                            dst,
                            k,
                            true,
                        );
                    }
                }
                Op::BlockMatMulNt { a, b, block } => {
                    let s = *block;
                    let (rows, k) = self.value(*a).shape();
                    let blocks = rows / s;
                    // Y_i = A_i B_iᵀ, so dA_i = G_i B_i and dB_i = G_iᵀ A_i.
                    for (target, other, transpose_g) in [(*a, *b, false), (*b, *a, true)] {
                        if !self.needs(target) {
                            continue;
                        }
                        let ov = self.value(other);
                        let dst = slot(&mut grads, target, rows * k);
                        for i in 0..blocks {
                            let gi = &g[i * s * s..(i + 1) * s * s];
                            let gref = if transpose_g {
                                MatRef::transposed(gi, s)
                            } else {
                                MatRef::row_major(gi, s)
                            };
                            gemm(
                                s,
                                s,
                                k,
                                gref,
                                MatRef::row_major(&ov.data()[i * s * k..(i + 1) * s * k], k),
                                &mut dst[i * s * k..(i + 1) * s * k],
                                k,
                                true,
                            );
                        }
                    }
                }
                Op::BlockMatMul { a, b, block } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (s, k) = (*block, bv.cols());
                    let blocks = av.rows() / s;
                    if self.needs(*a) {
                        // dA_i = G_i B_iᵀ
                        let dst = slot(&mut grads, *a, av.rows() * s);
                        for i in 0..blocks {
                            gemm(
                                s,
                                k,
                                s,
                                MatRef::row_major(&g[i * s * k..(i + 1) * s * k], k),
                                MatRef::transposed(&bv.data()[i * s * k..(i + 1) * s * k], k),
                                &mut dst[i * s * s..(i + 1) * s * s],
                                s,
                                true,
                            );
                        }
                    }
                    if self.needs(*b) {
                        // dB_i = A_iᵀ G_i
                        let dst = slot(&mut grads, *b, bv.rows() * k);
                        for i in 0..blocks {
                            gemm(
                                s,
                                s,
                                k,
                                MatRef::transposed(&av.data()[i * s * s..(i + 1) * s * s], s),
                                MatRef::row_major(&g[i * s * k..(i + 1) * s * k], k),
                                &mut dst[i * s * k..(i + 1) * s * k],
                                k,
                                true,
                            );
                        }
                    }
                }
                Op::Add { a, b } => {
                    for t in [a, b] {
                        if self.needs(*t) {
                            add_into(slot(&mut grads, *t, g.len()), &g);
                        }
                    }
                }
                Op::Scale { a, factor } => {
                    let dst = slot(&mut grads, *a, g.len());
                    for (d, v) in dst.iter_mut().zip(&g) {
                        *d += v * factor;
                    }
                }
                Op::RowSoftmax { a } => {
                    let y = &node.value;
                    let cols = y.cols();
                    let dst = slot(&mut grads, *a, g.len());
                    if cols > 0 {
                        for ((yr, gr), dr) in y
                            .data()
                            .chunks_exact(cols)
                            .zip(g.chunks_exact(cols))
                            .zip(dst.chunks_exact_mut(cols))
                        {
                            let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                            for j in 0..cols {
                                dr[j] += yr[j] * (gr[j] - dot);
                            }
                        }
                    }
                }
                Op::Tanh { a } => {
                    let y = node.value.data();
                    let dst = slot(&mut grads, *a, g.len());
                    for ((d, gv), yv) in dst.iter_mut().zip(&g).zip(y) {
                        *d += gv * (1.0 - yv * yv);
                    }
                }
                Op::Dropout { a, mask } => {
                    let dst = slot(&mut grads, *a, g.len());
                    for (i, (d, gv)) in dst.iter_mut().zip(&g).enumerate() {
                        *d += gv * mask.scale(i);
                    }
                }
                Op::ConcatCols { parts } => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.needs(p) {
                            let dst = slot(&mut grads, p, rows * w);
                            for r in 0..rows {
                                let src = &g[r * total + offset..r * total + offset + w];
                                add_into(&mut dst[r * w..(r + 1) * w], src);
                            }
                        }
                        offset += w;
                    }
                }
                Op::Reshape { a } => {
                    add_into(slot(&mut grads, *a, g.len()), &g);
                }
                Op::SqDist { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let g0 = g[0];
                    for (t, sign) in [(a, 1.0), (b, -1.0)] {
                        if self.needs(*t) {
                            let dst = slot(&mut grads, *t, av.len());
                            for ((d, x), y) in dst.iter_mut().zip(av.data()).zip(bv.data()) {
                                *d += sign * 2.0 * (x - y) * g0;
                            }
                        }
                    }
                }
                Op::SumScalars { parts } => {
                    for &p in parts {
                        if self.needs(p) {
                            slot(&mut grads, p, 1)[0] += g[0];
                        }
                    }
                }
            }
        }
        Ok(table)
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor2 {
        Tensor2::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn affine_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor2::identity(2));
        let w = tape.constant(t(&[&[2.0, 0.0], &[0.0, 3.0]]));
        let y = tape.affine(x, w, None).unwrap();
        assert_eq!(tape.value(y), &t(&[&[2.0, 0.0], &[0.0, 3.0]]));

        let x = tape.constant(t(&[&[1.0, 1.0]]));
        let w = tape.constant(t(&[&[1.0], &[1.0]]));
        let b = tape.constant(t(&[&[1.0]]));
        let y = tape.affine(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).item(), 3.0);

        let bad = tape.constant(Tensor2::zeros(3, 1));
        assert!(matches!(
            tape.affine(x, bad, None),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        let u = row_softmax(&Tensor2::zeros(3, 3));
        assert!(u.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        let s = row_softmax(&t(&[&[0.0, 3f64.ln()]]));
        assert!((s.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-15);

        let base = t(&[&[0.3, -1.0, 2.0], &[1.0, 1.0, 0.0]]);
        let shifted = t(&[&[100.3, 99.0, 102.0], &[1.0, 1.0, 0.0]]);
        let (a, b) = (row_softmax(&base), row_softmax(&shifted));
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn dropout_keep_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor2::from_fn(3, 4, |i, j| i as f64 - j as f64 * 0.5);
        let (y, mask) = dropout_apply(&x, 1.0, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.kept().iter().all(|&k| k));
        assert!(dropout_apply(&x, 0.0, &mut rng).is_err());
        assert!(dropout_apply(&x, -0.5, &mut rng).is_err());
        assert!(dropout_apply(&x, 1.5, &mut rng).is_err());
        assert_eq!(tanh_map(&Tensor2::zeros(2, 2)), Tensor2::zeros(2, 2));
    }

    #[test]
    fn dropout_survivor_fraction() {
        // 3-sigma binomial bound at n = 1e5, p = 0.95 is ~0.0021; the
        // allowed band of 0.01 is far wider.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor2::filled(1000, 100, 1.0);
        let (y, mask) = dropout_apply(&x, 0.95, &mut rng).unwrap();
        let kept = mask.kept().iter().filter(|&&k| k).count() as f64 / 1e5;
        assert!((kept - 0.95).abs() < 0.01, "kept fraction {kept}");
        // Inverted scaling keeps the mean: E[y] = 1, sd of mean ≈ sqrt(p(1-p)/n)/p.
        let sigma = (0.95f64 * 0.05 / 1e5).sqrt() / 0.95;
        assert!((y.mean() - 1.0).abs() < 3.0 * sigma, "mean {}", y.mean());
    }

    #[test]
    fn mse_examples() {
        let a = t(&[&[1.0, 0.0]]);
        let z = Tensor2::zeros(1, 2);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &z).unwrap(), 1.0);
        assert!(mse(&a, &Tensor2::zeros(2, 1)).is_err());
    }

    #[test]
    fn quadratic_gradient_is_two_x() {
        let x0 = Tensor2::from_fn(2, 3, |i, j| i as f64 * 0.7 - j as f64 * 1.3);
        let mut tape = Tape::new();
        let x = tape.param(x0.clone(), 0);
        let z = tape.constant(Tensor2::zeros(2, 3));
        let loss = tape.sq_dist(x, z).unwrap();
        let grads = tape.backward(loss, &[(2, 3), (4, 1)]).unwrap();
        assert!(grads[0].max_abs_diff(&x0.map(|v| 2.0 * v)) < 1e-15);
        assert_eq!(grads[1], Tensor2::zeros(4, 1));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor2::zeros(2, 2), 0);
        assert!(matches!(tape.backward(x, &[(2, 2)]), Err(Error::Usage(_))));
    }
}
