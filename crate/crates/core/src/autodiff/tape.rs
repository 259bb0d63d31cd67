use crate::scalar::Scalar;

use super::tensor::{finite_or, matmul_raw};
use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `m×n` plus a length-`n` vector added to every row.
    AddRow(Var, Var),
    /// `a · b`, or `a · bᵀ` when the flag is set.
    MatMul(Var, Var, bool),
    Relu(Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    LogSoftmax(Var),
    /// Picks `a[i, idx[i]]` for every row `i`.
    Pick(Var, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of one forward pass.
///
/// Nodes are appended in evaluation order, so every input precedes its
/// consumer and the reverse sweep is a plain backwards walk.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Gradients of a scalar root with respect to every recorded node.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` when no path connects it to the root.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, with unreachable nodes reported as zeros.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf whose gradient is wanted.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Registers a leaf that gradients do not flow into.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Sign pattern of every relu input (`true` = strictly positive) plus
    /// whether any input sat exactly on the kink.
    pub fn relu_pattern(&self) -> (Vec<bool>, bool) {
        let mut pattern = Vec::new();
        let mut on_kink = false;
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                for &x in self.nodes[a.0].value.data() {
                    pattern.push(x > T::zero());
                    on_kink |= x == T::zero();
                }
            }
        }
        (pattern, on_kink)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&Node<T>, AutodiffError> {
        self.nodes.get(v.0).ok_or(AutodiffError::UnknownVar(v.0))
    }

    fn record(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var, AutodiffError> {
        let (ta, tb) = (&self.check(a)?.value, &self.check(b)?.value);
        if ta.shape() != tb.shape() {
            return Err(AutodiffError::Shape(format!(
                "{name}: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = finite_or(ta.shape().to_vec(), data, name)?;
        Ok(self.record(out, op, &[a, b]))
    }

    /// Elementwise sum. A rank-1 (or `1×n`) right operand is broadcast over
    /// the rows of a matrix left operand.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (
            self.check(a)?.value.shape().to_vec(),
            self.check(b)?.value.shape().to_vec(),
        );
        if sa == sb {
            return self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b));
        }
        match (&sa[..], &sb[..]) {
            ([_, n], [k]) | ([_, n], [1, k]) if n == k => self.add_row(a, b),
            _ => Err(AutodiffError::Shape(format!(
                "add: {sa:?} does not broadcast with {sb:?}"
            ))),
        }
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let ta = &self.nodes[a.0].value;
        let tb = &self.nodes[b.0].value;
        let (_, n) = ta.dims2()?;
        let bias = tb.data();
        let data = ta
            .data()
            .chunks(n.max(1))
            .flat_map(|row| row.iter().zip(bias).map(|(&x, &y)| x + y))
            .collect();
        let out = finite_or(ta.shape().to_vec(), data, "add")?;
        Ok(self.record(out, Op::AddRow(a, b), &[a, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = matmul_raw(&self.check(a)?.value, false, &self.check(b)?.value, false)?;
        Ok(self.record(out, Op::MatMul(a, b, false), &[a, b]))
    }

    /// `a · bᵀ`, the layout used by `out×in` weight matrices.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = matmul_raw(&self.check(a)?.value, false, &self.check(b)?.value, true)?;
        Ok(self.record(out, Op::MatMul(a, b, true), &[a, b]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = self.check(a)?.value.map(|x| x.max(T::zero()))?;
        Ok(self.record(out, Op::Relu(a), &[a]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var, AutodiffError> {
        let t = &self.check(a)?.value;
        let data = t.data().iter().map(|&x| x * c).collect();
        let out = finite_or(t.shape().to_vec(), data, "scale")?;
        Ok(self.record(out, Op::Scale(a, c), &[a]))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.scale(a, -T::one())
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = &self.check(a)?.value;
        let s: T = t.data().iter().copied().sum();
        let out = finite_or(vec![], vec![s], "sum")?;
        Ok(self.record(out, Op::Sum(a), &[a]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = &self.check(a)?.value;
        if t.is_empty() {
            return Err(AutodiffError::Shape("mean of an empty tensor".into()));
        }
        let s: T = t.data().iter().copied().sum();
        let out = finite_or(vec![], vec![s / T::lit(t.len() as f64)], "mean")?;
        Ok(self.record(out, Op::Mean(a), &[a]))
    }

    /// Row-wise log-softmax with max-shift stabilization. A rank-1 input is
    /// treated as a single row.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = &self.check(a)?.value;
        let cols = row_width(t)?;
        let mut data = Vec::with_capacity(t.len());
        for row in t.data().chunks(cols) {
            let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
            data.extend(row.iter().map(|&x| x - lse));
        }
        let out = finite_or(t.shape().to_vec(), data, "log_softmax")?;
        Ok(self.record(out, Op::LogSoftmax(a), &[a]))
    }

    /// Gathers one column per row: `out[i] = a[i, idx[i]]`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var, AutodiffError> {
        let t = &self.check(a)?.value;
        let (rows, cols) = t.dims2()?;
        if idx.len() != rows {
            return Err(AutodiffError::Shape(format!(
                "pick: {} indices for {} rows",
                idx.len(),
                rows
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= cols) {
            return Err(AutodiffError::Index { index: bad, len: cols });
        }
        let data = idx.iter().enumerate().map(|(i, &j)| t.data()[i * cols + j]).collect();
        let out = Tensor::new(vec![rows], data)?;
        Ok(self.record(out, Op::Pick(a, idx.to_vec()), &[a]))
    }

    /// Reverse sweep from a scalar root. A tape supports exactly one sweep.
    pub fn backward(&mut self, root: Var) -> Result<Gradients<T>, AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::BackwardConsumed);
        }
        let root_shape = self.check(root)?.value.shape().to_vec();
        if root_shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NonScalarRoot(root_shape));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[root.0] = Some(Tensor::full(&root_shape, T::one()));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let contributions = self.local_grads(i, &g)?;
            grads[i] = Some(g);
            for (v, contrib) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                accumulate(&mut grads[v.0], contrib)?;
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>, AutodiffError> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x)?)],
            Op::Mul(a, b) => {
                let ga = zip(g, val(*b), |x, y| x * y, "mul backward")?;
                let gb = zip(g, val(*a), |x, y| x * y, "mul backward")?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::AddRow(a, b) => {
                let bshape = val(*b).shape().to_vec();
                let n = bshape.iter().product::<usize>();
                let mut gb = vec![T::zero(); n];
                for row in g.data().chunks(n.max(1)) {
                    for (acc, &x) in gb.iter_mut().zip(row) {
                        *acc = *acc + x;
                    }
                }
                vec![(*a, g.clone()), (*b, finite_or(bshape, gb, "add backward")?)]
            }
            Op::MatMul(a, b, trans_b) => {
                let mut out = Vec::with_capacity(2);
                if wants(*a) {
                    // out = a·op(b)  ⇒  ga = g·op(b)ᵀ
                    out.push((*a, matmul_raw(g, false, val(*b), !trans_b)?));
                }
                if wants(*b) {
                    let gb = if *trans_b {
                        matmul_raw(g, true, val(*a), false)?
                    } else {
                        matmul_raw(val(*a), true, g, false)?
                    };
                    out.push((*b, gb));
                }
                out
            }
            Op::Relu(a) => {
                let ga = zip(
                    g,
                    val(*a),
                    |gx, x| if x > T::zero() { gx } else { T::zero() },
                    "relu backward",
                )?;
                vec![(*a, ga)]
            }
            Op::Scale(a, c) => {
                let c = *c;
                vec![(
                    *a,
                    finite_or(
                        g.shape().to_vec(),
                        g.data().iter().map(|&x| x * c).collect(),
                        "scale backward",
                    )?,
                )]
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                vec![(*a, Tensor::full(val(*a).shape(), gv))]
            }
            Op::Mean(a) => {
                let t = val(*a);
                let gv = g.data()[0] / T::lit(t.len() as f64);
                vec![(*a, Tensor::full(t.shape(), gv))]
            }
            Op::LogSoftmax(a) => {
                // ga = g − softmax · Σ_row g
                let y = &node.value;
                let cols = row_width(y)?;
                let mut ga = Vec::with_capacity(y.len());
                for (yrow, grow) in y.data().chunks(cols).zip(g.data().chunks(cols)) {
                    let gsum: T = grow.iter().copied().sum();
                    ga.extend(yrow.iter().zip(grow).map(|(&yv, &gv)| gv - yv.exp() * gsum));
                }
                vec![(*a, finite_or(y.shape().to_vec(), ga, "log_softmax backward")?)]
            }
            Op::Pick(a, idx) => {
                let t = val(*a);
                let (_, cols) = t.dims2()?;
                let mut ga = vec![T::zero(); t.len()];
                for (i, (&j, &gv)) in idx.iter().zip(g.data()).enumerate() {
                    ga[i * cols + j] = gv;
                }
                vec![(*a, Tensor::new(t.shape().to_vec(), ga)?)]
            }
        })
    }
}

fn row_width<T: Scalar>(t: &Tensor<T>) -> Result<usize, AutodiffError> {
    match t.shape() {
        [n] if *n > 0 => Ok(*n),
        [_, c] if *c > 0 => Ok(*c),
        s => Err(AutodiffError::Shape(format!("log_softmax over shape {s:?}"))),
    }
}

fn zip<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T, name: &str) -> Result<Tensor<T>, AutodiffError> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    finite_or(a.shape().to_vec(), data, name)
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, contrib: Tensor<T>) -> Result<(), AutodiffError> {
    match slot {
        None => *slot = Some(contrib),
        Some(acc) => {
            *acc = zip(acc, &contrib, |x, y| x + y, "gradient accumulation")?;
        }
    }
    Ok(())
}
