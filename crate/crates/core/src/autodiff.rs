//! Tape-based reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! Every operation appends a node to a [`Tape`] and returns a [`Var`] handle.
//! Because nodes are appended in evaluation order, the tape is already a
//! topological order of the graph; [`Tape::backward`] walks it once in
//! reverse, accumulating exact analytic partials into each parent.
//!
//! There is no broadcasting. Every binary operation requires the exact
//! shapes it documents and reports the offending shapes otherwise.
//!
//! ```
//! use neutucf::autodiff::{Array, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Array::vector(vec![1.0, 2.0]));
//! let y = tape.dot(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[2.0, 4.0]);
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: index {index} out of range for length {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op} needs at least one operand")]
    NoOperands { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("array data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::DataLength {
                len: data.len(),
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// A one-element array of shape `[1]`; the scalar convention of this module.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element array.
    ///
    /// # Panics
    /// If the array holds more or fewer than one element.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on array of shape {:?}", self.shape);
        self.data[0]
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    MatVec(Var, Var),
    Outer(Vec<Var>),
    Flatten(Var),
    Dot(Var, Var),
    Sigmoid(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Mse(Var, Var),
    Row(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array,
    op: Op,
}

/// Records operations during the forward pass.
#[derive(Debug, Default, Clone)]
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

    pub fn value(&self, var: Var) -> &Array {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Array, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, var: Var) -> &[usize] {
        &self.nodes[var.0].value.shape
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn vector_len(&self, op: &'static str, v: Var) -> Result<usize> {
        match self.shape(v) {
            [n] => Ok(*n),
            other => Err(AutodiffError::Rank {
                op,
                expected: 1,
                shape: other.to_vec(),
            }),
        }
    }

    /// Input or parameter node.
    pub fn leaf(&mut self, value: Array) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect();
        let value = Array {
            shape: va.shape.clone(),
            data,
        };
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let value = Array {
            shape: va.shape.clone(),
            data,
        };
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// `[rows, cols] x [cols] -> [rows]`.
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (rows, cols) = match self.shape(m) {
            [r, c] => (*r, *c),
            other => {
                return Err(AutodiffError::Rank {
                    op: "matvec",
                    expected: 2,
                    shape: other.to_vec(),
                })
            }
        };
        let n = self.vector_len("matvec", v)?;
        if n != cols {
            return Err(AutodiffError::Shape {
                op: "matvec",
                left: self.shape(m).to_vec(),
                right: self.shape(v).to_vec(),
            });
        }
        let mv = &self.value(m).data;
        let vv = &self.value(v).data;
        let data = mv
            .chunks_exact(cols)
            .map(|row| row.iter().zip(vv).map(|(a, b)| a * b).sum())
            .collect::<Vec<f64>>();
        debug_assert_eq!(data.len(), rows);
        Ok(self.push(Array::vector(data), Op::MatVec(m, v)))
    }

    /// N-ary outer product of vectors; output shape is the list of their lengths.
    pub fn outer(&mut self, factors: &[Var]) -> Result<Var> {
        if factors.is_empty() {
            return Err(AutodiffError::NoOperands { op: "outer" });
        }
        let mut shape = Vec::with_capacity(factors.len());
        for &f in factors {
            shape.push(self.vector_len("outer", f)?);
        }
        let mut data = vec![1.0];
        for &f in factors {
            let v = &self.value(f).data;
            let mut next = Vec::with_capacity(data.len() * v.len());
            for &a in &data {
                next.extend(v.iter().map(|&b| a * b));
            }
            data = next;
        }
        Ok(self.push(Array { shape, data }, Op::Outer(factors.to_vec())))
    }

    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let value = Array::vector(self.value(a).data.clone());
        Ok(self.push(value, Op::Flatten(a)))
    }

    /// Inner product of two vectors, returning shape `[1]`.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.vector_len("dot", a)?;
        self.vector_len("dot", b)?;
        self.same_shape("dot", a, b)?;
        let s = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Array::scalar(s), Op::Dot(a, b)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let value = Array {
            shape: va.shape.clone(),
            data: va.data.iter().map(|&x| sigmoid(x)).collect(),
        };
        Ok(self.push(value, Op::Sigmoid(a)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let value = Array {
            shape: va.shape.clone(),
            data: va.data.iter().map(|&x| x.max(0.0)).collect(),
        };
        Ok(self.push(value, Op::Relu(a)))
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::NoOperands { op: "concat" });
        }
        let mut data = Vec::new();
        for &p in parts {
            self.vector_len("concat", p)?;
            data.extend_from_slice(&self.value(p).data);
        }
        Ok(self.push(Array::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Mean squared difference of two same-shape arrays, returning shape `[1]`.
    pub fn mse_loss(&mut self, prediction: Var, target: Var) -> Result<Var> {
        self.same_shape("mse_loss", prediction, target)?;
        let p = &self.value(prediction).data;
        let t = &self.value(target).data;
        if p.is_empty() {
            return Err(AutodiffError::NoOperands { op: "mse_loss" });
        }
        let s: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let value = Array::scalar(s / p.len() as f64);
        Ok(self.push(value, Op::Mse(prediction, target)))
    }

    /// Row `index` of a matrix, as a vector. This is the embedding lookup.
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let (rows, cols) = match self.shape(table) {
            [r, c] => (*r, *c),
            other => {
                return Err(AutodiffError::Rank {
                    op: "row",
                    expected: 2,
                    shape: other.to_vec(),
                })
            }
        };
        if index >= rows {
            return Err(AutodiffError::Index {
                op: "row",
                index,
                len: rows,
            });
        }
        let data = self.value(table).data[index * cols..(index + 1) * cols].to_vec();
        Ok(self.push(Array::vector(data), Op::Row(table, index)))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0].value;
        if !root.is_scalar() {
            return Err(AutodiffError::NotScalar {
                shape: root.shape.clone(),
            });
        }
        let mut grads: Vec<Vec<f64>> = self.nodes[..=loss.0]
            .iter()
            .map(|n| vec![0.0; n.value.data.len()])
            .collect();
        grads[loss.0][0] = 1.0;

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut grads[id]);
            self.propagate(node, &g, &mut grads);
            grads[id] = g;
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes[..=loss.0]
                .iter()
                .map(|n| n.value.shape.clone())
                .collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Vec<f64>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(&mut grads[a.0], g);
                accumulate(&mut grads[b.0], g);
            }
            Op::Mul(a, b) => {
                let va = &self.nodes[a.0].value.data;
                let vb = &self.nodes[b.0].value.data;
                for (i, gi) in g.iter().enumerate() {
                    grads[a.0][i] += gi * vb[i];
                }
                for (i, gi) in g.iter().enumerate() {
                    grads[b.0][i] += gi * va[i];
                }
            }
            Op::MatVec(m, v) => {
                let mv = &self.nodes[m.0].value.data;
                let vv = &self.nodes[v.0].value.data;
                let cols = vv.len();
                for (r, gr) in g.iter().enumerate() {
                    let row = &mut grads[m.0][r * cols..(r + 1) * cols];
                    for (slot, x) in row.iter_mut().zip(vv) {
                        *slot += gr * x;
                    }
                }
                for (r, gr) in g.iter().enumerate() {
                    let row = &mv[r * cols..(r + 1) * cols];
                    for (slot, w) in grads[v.0].iter_mut().zip(row) {
                        *slot += gr * w;
                    }
                }
            }
            Op::Outer(factors) => self.outer_backward(factors, g, grads),
            Op::Flatten(a) => accumulate(&mut grads[a.0], g),
            Op::Dot(a, b) => {
                let va = &self.nodes[a.0].value.data;
                let vb = &self.nodes[b.0].value.data;
                for (slot, x) in grads[a.0].iter_mut().zip(vb) {
                    *slot += g[0] * x;
                }
                for (slot, x) in grads[b.0].iter_mut().zip(va) {
                    *slot += g[0] * x;
                }
            }
            Op::Sigmoid(a) => {
                let out = &node.value.data;
                for (i, gi) in g.iter().enumerate() {
                    grads[a.0][i] += gi * out[i] * (1.0 - out[i]);
                }
            }
            Op::Relu(a) => {
                let input = &self.nodes[a.0].value.data;
                for (i, gi) in g.iter().enumerate() {
                    if input[i] > 0.0 {
                        grads[a.0][i] += gi;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = grads[p.0].len();
                    accumulate(&mut grads[p.0], &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::Mse(p, t) => {
                let vp = &self.nodes[p.0].value.data;
                let vt = &self.nodes[t.0].value.data;
                let scale = 2.0 * g[0] / vp.len() as f64;
                for i in 0..vp.len() {
                    let d = scale * (vp[i] - vt[i]);
                    grads[p.0][i] += d;
                    grads[t.0][i] -= d;
                }
            }
            Op::Row(table, index) => {
                let cols = g.len();
                let row = &mut grads[table.0][index * cols..(index + 1) * cols];
                accumulate(row, g);
            }
        }
    }

    // For factor t, d out[idx] / d v_t[idx_t] is the product of the other
    // factors at idx; prefix/suffix products give all of them in O(m) per cell.
    fn outer_backward(&self, factors: &[Var], g: &[f64], grads: &mut [Vec<f64>]) {
        let m = factors.len();
        let values: Vec<&[f64]> = factors
            .iter()
            .map(|f| self.nodes[f.0].value.data.as_slice())
            .collect();
        let dims: Vec<usize> = values.iter().map(|v| v.len()).collect();
        let mut idx = vec![0usize; m];
        let mut prefix = vec![1.0; m + 1];
        let mut suffix = vec![1.0; m + 1];
        let mut partial: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();

        for &gv in g {
            if gv != 0.0 {
                for t in 0..m {
                    prefix[t + 1] = prefix[t] * values[t][idx[t]];
                }
                for t in (0..m).rev() {
                    suffix[t] = suffix[t + 1] * values[t][idx[t]];
                }
                for t in 0..m {
                    partial[t][idx[t]] += gv * prefix[t] * suffix[t + 1];
                }
            }
            for t in (0..m).rev() {
                idx[t] += 1;
                if idx[t] < dims[t] {
                    break;
                }
                idx[t] = 0;
            }
        }
        for (f, p) in factors.iter().zip(partial) {
            accumulate(&mut grads[f.0], &p);
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`]: one gradient per node up to the loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`. Nodes recorded after the
    /// loss do not influence it and get zeros.
    pub fn wrt(&self, var: Var) -> Array {
        match self.grads.get(var.0) {
            Some(g) => Array {
                shape: self.shapes[var.0].clone(),
                data: g.clone(),
            },
            None => Array::vector(Vec::new()),
        }
    }

    pub fn wrt_slice(&self, var: Var) -> &[f64] {
        self.grads.get(var.0).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Below this magnitude gradients are compared absolutely rather than relatively.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// (leaf position, flat coordinate) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// Compares the tape gradient of `f` against central differences with the given step.
///
/// Relative error per coordinate is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn grad_check<F>(f: F, leaves: &[Array], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    assert!(step > 0.0, "grad_check step must be positive");
    let eval = |values: &[Array]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|v| tape.leaf(v.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let mut probe: Vec<Array> = leaves.to_vec();
    for (li, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for c in 0..leaves[li].len() {
            let original = leaves[li].data[c];
            probe[li].data[c] = original + step;
            let plus = eval(&probe)?;
            probe[li].data[c] = original - step;
            let minus = eval(&probe)?;
            probe[li].data[c] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data[c];
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            let err = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((li, c));
            }
        }
    }
    Ok(report)
}
