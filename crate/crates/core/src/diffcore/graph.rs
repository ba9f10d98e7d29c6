//! Tape of array operations with reverse-mode gradients.
//!
//! Values are computed eagerly as ops are recorded. Every recorded value is
//! checked for finiteness; [`Graph::backward`] replays the tape in reverse and
//! only visits nodes that depend on a parameter.

use std::rc::Rc;

use super::array::NdArray;
use super::kernels::{self, Boundary, ConvShape};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Sine,
    /// No nonlinearity; used for linearity checks.
    Identity,
}

#[derive(Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Relu(Var),
    Sin(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Dense { x: Var, w: Var, b: Option<Var> },
    Conv { x: Var, w: Var, b: Option<Var>, ksize: usize },
    AvgPool2(Var),
    Upsample2(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Reshape(Var),
    ChannelAffine { x: Var, scale: Vec<f64> },
    Filter { x: Var, lead: usize, taps: Rc<Vec<Vec<f64>>>, boundary: Boundary },
    Diff { x: Var, axis: usize },
    Warp { image: Var, coords: Var },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Sin(..) => "sin",
            Op::Sqrt(..) => "sqrt",
            Op::Square(..) => "square",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Dense { .. } => "dense",
            Op::Conv { .. } => "conv",
            Op::AvgPool2(..) => "avg_pool2",
            Op::Upsample2(..) => "upsample2",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(..) => "reshape",
            Op::ChannelAffine { .. } => "channel_affine",
            Op::Filter { .. } => "filter",
            Op::Diff { .. } => "diff",
            Op::Warp { .. } => "warp",
        }
    }
}

struct Node {
    value: NdArray,
    op: Op,
    requires_grad: bool,
}

/// A computation recorded over [`NdArray`] values.
///
/// A graph is single-owner; build one per loss evaluation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every parameter-dependent node.
pub struct Gradients {
    grads: Vec<Option<NdArray>>,
}

impl Gradients {
    /// Gradient for `v`; `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&NdArray> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zeros of `shape` when `v` does not influence the loss.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> NdArray {
        self.get(v).cloned().unwrap_or_else(|| NdArray::zeros(shape))
    }
}

fn same_shape(op: &'static str, a: &NdArray, b: &NdArray) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip_map(a: &NdArray, b: &NdArray, f: impl Fn(f64, f64) -> f64) -> NdArray {
    NdArray::from_parts(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &NdArray {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: NdArray, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = self.parents(&op).iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn parents(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Sin(a)
            | Op::Sqrt(a)
            | Op::Square(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::AvgPool2(a)
            | Op::Upsample2(a)
            | Op::Reshape(a) => vec![*a],
            Op::Dense { x, w, b } | Op::Conv { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Op::Concat(xs) => xs.clone(),
            Op::Slice { x, .. }
            | Op::ChannelAffine { x, .. }
            | Op::Filter { x, .. }
            | Op::Diff { x, .. } => vec![*x],
            Op::Warp { image, coords } => vec![*image, *coords],
        }
    }

    fn leaf(&mut self, value: NdArray, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: NdArray) -> Result<Var> {
        self.leaf(value, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: NdArray) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let v = zip_map(x, y, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let v = zip_map(x, y, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let v = zip_map(x, y, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("div", x, y)?;
        let v = zip_map(x, y, |p, q| p / q);
        self.push(v, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let v = self.value(a).map(|x| k * x);
        self.push(v, Op::Scale(a, k))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// `max(0, x)`.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::sin);
        self.push(v, Op::Sin(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(Error::Precondition("sqrt of a non-positive value".into()));
        }
        let v = self.value(a).map(f64::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var> {
        match act {
            Activation::Tanh => self.tanh(a),
            Activation::Relu => self.relu(a),
            Activation::Sine => self.sin(a),
            Activation::Identity => Ok(a),
        }
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = NdArray::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let v = NdArray::scalar(x.sum() / x.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Dense map over the leading axis: `x: [k, ...]`, `w: [n, k]`, `b: [n]` gives `[n, ...]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ndim() < 1 || wv.ndim() != 2 || wv.shape()[1] != xv.shape()[0] {
            return Err(Error::shape("dense", format!("weight {:?} on input {:?}", wv.shape(), xv.shape())));
        }
        let (n, k) = (wv.shape()[0], wv.shape()[1]);
        let m = xv.len() / k;
        if let Some(b) = b {
            if self.shape(b) != [n] {
                return Err(Error::shape("dense", format!("bias {:?} for {n} outputs", self.shape(b))));
            }
        }
        let bias = b.map(|b| self.value(b).data());
        let out = kernels::dense(xv.data(), k, m, wv.data(), n, bias);
        let mut shape = xv.shape().to_vec();
        shape[0] = n;
        self.push(NdArray::from_parts(shape, out), Op::Dense { x, w, b })
    }

    /// Same-size convolution with zero padding: `x: [cin, *S]`, `w: [cout, cin, k, ..]`.
    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let nd = xv.ndim().saturating_sub(1);
        let ok = nd >= 1
            && wv.ndim() == nd + 2
            && wv.shape()[1] == xv.shape()[0]
            && wv.shape()[2] % 2 == 1
            && wv.shape()[2..].iter().all(|&k| k == wv.shape()[2]);
        if !ok {
            return Err(Error::shape("conv", format!("weight {:?} on input {:?}", wv.shape(), xv.shape())));
        }
        let cout = wv.shape()[0];
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape("conv", format!("bias {:?} for {cout} outputs", self.shape(b))));
            }
        }
        let ksize = wv.shape()[2];
        let cs = ConvShape { spatial: &xv.shape()[1..], cin: xv.shape()[0], cout, ksize };
        let out = kernels::conv(xv.data(), wv.data(), b.map(|b| self.value(b).data()), &cs);
        let mut shape = xv.shape().to_vec();
        shape[0] = cout;
        self.push(NdArray::from_parts(shape, out), Op::Conv { x, w, b, ksize })
    }

    /// 2x block mean over the spatial axes of `[c, *S]`.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.ndim() < 2 || xv.shape()[1..].iter().any(|n| n % 2 != 0) {
            return Err(Error::shape("avg_pool2", format!("{:?} not even", xv.shape())));
        }
        let c = xv.shape()[0];
        let out = kernels::avg_pool2(xv.data(), c, &xv.shape()[1..]);
        let mut shape = xv.shape().to_vec();
        shape[1..].iter_mut().for_each(|n| *n /= 2);
        self.push(NdArray::from_parts(shape, out), Op::AvgPool2(x))
    }

    /// 2x nearest-neighbour upsampling over the spatial axes of `[c, *S]`.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.ndim() < 2 {
            return Err(Error::shape("upsample2", format!("{:?}", xv.shape())));
        }
        let c = xv.shape()[0];
        let fine: Vec<usize> = xv.shape()[1..].iter().map(|n| n * 2).collect();
        let out = kernels::upsample2(xv.data(), c, &fine);
        let mut shape = vec![c];
        shape.extend(fine);
        self.push(NdArray::from_parts(shape, out), Op::Upsample2(x))
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &x in xs {
            let v = self.value(x);
            if v.ndim() == 0 || v.shape()[1..] != tail[..] {
                return Err(Error::shape("concat", format!("{:?} vs trailing {tail:?}", v.shape())));
            }
            lead += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        self.push(NdArray::from_parts(shape, data), Op::Concat(xs.to_vec()))
    }

    /// Entries `start..start + len` along the leading axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x).slice_leading(start, len)?;
        self.push(v, Op::Slice { x, start })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshape(shape.to_vec())?;
        self.push(v, Op::Reshape(x))
    }

    /// `out[c, ..] = scale[c] * x[c, ..] + offset[c]`.
    pub fn channel_affine(&mut self, x: Var, scale: &[f64], offset: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.shape().first().copied().unwrap_or(0);
        if scale.len() != c || offset.len() != c {
            return Err(Error::shape("channel_affine", format!("{c} channels, {} scales", scale.len())));
        }
        let m = xv.len() / c;
        let data: Vec<f64> = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| scale[i / m] * v + offset[i / m])
            .collect();
        let v = NdArray::from_parts(xv.shape().to_vec(), data);
        self.push(v, Op::ChannelAffine { x, scale: scale.to_vec() })
    }

    /// Separable filter over every axis after the first `lead` axes.
    /// `taps[a]` is the odd-length 1-D stencil for spatial axis `a`.
    pub fn filter(&mut self, x: Var, lead: usize, taps: Rc<Vec<Vec<f64>>>, boundary: Boundary) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        if shape.len() != lead + taps.len() {
            return Err(Error::shape("filter", format!("{} stencils for {shape:?} with {lead} leading axes", taps.len())));
        }
        for (a, t) in taps.iter().enumerate() {
            if t.len() % 2 == 0 || t.len() > 2 * shape[lead + a] - 1 {
                return Err(Error::shape("filter", format!("stencil {} on extent {}", t.len(), shape[lead + a])));
            }
        }
        let mut data = xv.data().to_vec();
        for (a, t) in taps.iter().enumerate() {
            data = kernels::filter_axis(&data, &shape, lead + a, t, boundary);
        }
        self.push(NdArray::from_parts(shape, data), Op::Filter { x, lead, taps, boundary })
    }

    /// Finite difference along `axis`, central inside and one-sided on the faces.
    pub fn diff(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.ndim() || xv.shape()[axis] < 2 {
            return Err(Error::shape("diff", format!("axis {axis} of {:?}", xv.shape())));
        }
        let out = kernels::diff_axis(xv.data(), xv.shape(), axis);
        let v = NdArray::from_parts(xv.shape().to_vec(), out);
        self.push(v, Op::Diff { x, axis })
    }

    /// Multilinear sampling of `image` (`*S`) at `coords` (`[d, *T]`, voxel units), giving `*T`.
    pub fn warp(&mut self, image: Var, coords: Var) -> Result<Var> {
        let (iv, cv) = (self.value(image), self.value(coords));
        let nd = iv.ndim();
        if nd == 0 || nd > 4 || cv.ndim() < 1 || cv.shape()[0] != nd {
            return Err(Error::shape("warp", format!("image {:?} with coords {:?}", iv.shape(), cv.shape())));
        }
        let m = cv.len() / nd;
        let out = kernels::warp_linear(iv.data(), iv.shape(), cv.data(), m);
        let shape = cv.shape()[1..].to_vec();
        self.push(NdArray::from_parts(shape, out), Op::Warp { image, coords })
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape("backward", format!("loss has shape {:?}", lv.shape())));
        }
        let mut grads: Vec<Option<NdArray>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(NdArray::full(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let contributions = self.local_grads(node, &g)?;
            for (parent, pg) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                if !pg.all_finite() {
                    return Err(Error::NonFinite { op: node.op.name() });
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, node: &Node, g: &NdArray) -> Result<Vec<(Var, NdArray)>> {
        let val = |v: Var| self.value(v);
        let like = |v: Var, data: Vec<f64>| NdArray::from_parts(self.shape(v).to_vec(), data);
        let unary = |a: Var, f: &dyn Fn(f64, f64, f64) -> f64| {
            // f(x, y, upstream)
            let data = val(a)
                .data()
                .iter()
                .zip(node.value.data())
                .zip(g.data())
                .map(|((&x, &y), &u)| f(x, y, u))
                .collect();
            vec![(a, like(a, data))]
        };
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|u| -u))],
            Op::Mul(a, b) => {
                let mut v = Vec::new();
                if self.wants(*a) {
                    v.push((*a, zip_map(g, val(*b), |u, y| u * y)));
                }
                if self.wants(*b) {
                    v.push((*b, zip_map(g, val(*a), |u, x| u * x)));
                }
                v
            }
            Op::Div(a, b) => {
                let mut v = Vec::new();
                if self.wants(*a) {
                    v.push((*a, zip_map(g, val(*b), |u, y| u / y)));
                }
                if self.wants(*b) {
                    let data = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .zip(val(*b).data())
                        .map(|((&u, &q), &y)| -u * q / y)
                        .collect();
                    v.push((*b, like(*b, data)));
                }
                v
            }
            Op::Scale(a, k) => vec![(*a, g.map(|u| k * u))],
            Op::Offset(a) => vec![(*a, g.clone())],
            Op::Tanh(a) => unary(*a, &|_, y, u| u * (1.0 - y * y)),
            Op::Relu(a) => unary(*a, &|x, _, u| if x > 0.0 { u } else { 0.0 }),
            Op::Sin(a) => unary(*a, &|x, _, u| u * x.cos()),
            Op::Sqrt(a) => unary(*a, &|_, y, u| 0.5 * u / y),
            Op::Square(a) => unary(*a, &|x, _, u| 2.0 * x * u),
            Op::Sum(a) => vec![(*a, NdArray::full(self.shape(*a), g.data()[0]))],
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                vec![(*a, NdArray::full(self.shape(*a), g.data()[0] / n))]
            }
            Op::Dense { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (n, k) = (wv.shape()[0], wv.shape()[1]);
                let m = xv.len() / k;
                let mut v = Vec::new();
                if self.wants(*x) {
                    v.push((*x, like(*x, kernels::dense_grad_input(g.data(), k, m, wv.data(), n))));
                }
                if self.wants(*w) {
                    v.push((*w, like(*w, kernels::dense_grad_weight(g.data(), xv.data(), k, m, n))));
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    v.push((b, like(b, kernels::row_sums(g.data(), n, m))));
                }
                v
            }
            Op::Conv { x, w, b, ksize } => {
                let (xv, wv) = (val(*x), val(*w));
                let cs = ConvShape { spatial: &xv.shape()[1..], cin: xv.shape()[0], cout: wv.shape()[0], ksize: *ksize };
                let mut v = Vec::new();
                if self.wants(*x) {
                    v.push((*x, like(*x, kernels::conv_grad_input(g.data(), wv.data(), &cs))));
                }
                if self.wants(*w) {
                    v.push((*w, like(*w, kernels::conv_grad_weight(g.data(), xv.data(), &cs))));
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    let m = g.len() / cs.cout;
                    v.push((b, like(b, kernels::row_sums(g.data(), cs.cout, m))));
                }
                v
            }
            Op::AvgPool2(a) => {
                let s = self.shape(*a);
                vec![(*a, like(*a, kernels::avg_pool2_adjoint(g.data(), s[0], &s[1..])))]
            }
            Op::Upsample2(a) => {
                let s = node.value.shape();
                vec![(*a, like(*a, kernels::upsample2_adjoint(g.data(), s[0], &s[1..])))]
            }
            Op::Concat(xs) => {
                let mut v = Vec::new();
                let mut off = 0;
                for &x in xs {
                    let n = val(x).len();
                    if self.wants(x) {
                        v.push((x, like(x, g.data()[off..off + n].to_vec())));
                    }
                    off += n;
                }
                v
            }
            Op::Slice { x, start } => {
                let xs = self.shape(*x);
                let inner: usize = xs[1..].iter().product();
                let mut data = vec![0.0; val(*x).len()];
                data[start * inner..start * inner + g.len()].copy_from_slice(g.data());
                vec![(*x, like(*x, data))]
            }
            Op::Reshape(a) => vec![(*a, like(*a, g.data().to_vec()))],
            Op::ChannelAffine { x, scale } => {
                let m = g.len() / scale.len();
                let data = g.data().iter().enumerate().map(|(i, &u)| scale[i / m] * u).collect();
                vec![(*x, like(*x, data))]
            }
            Op::Filter { x, lead, taps, boundary } => {
                let shape = self.shape(*x);
                let mut data = g.data().to_vec();
                for (a, t) in taps.iter().enumerate().rev() {
                    data = kernels::filter_axis_adjoint(&data, shape, lead + a, t, *boundary);
                }
                vec![(*x, like(*x, data))]
            }
            Op::Diff { x, axis } => {
                vec![(*x, like(*x, kernels::diff_axis_adjoint(g.data(), self.shape(*x), *axis)))]
            }
            Op::Warp { image, coords } => {
                let (iv, cv) = (val(*image), val(*coords));
                let m = cv.len() / iv.ndim();
                let (gc, gi) = kernels::warp_linear_backward(
                    iv.data(),
                    iv.shape(),
                    cv.data(),
                    m,
                    g.data(),
                    self.wants(*coords),
                    self.wants(*image),
                );
                let mut v = Vec::new();
                if let Some(gc) = gc {
                    v.push((*coords, like(*coords, gc)));
                }
                if let Some(gi) = gi {
                    v.push((*image, like(*image, gi)));
                }
                v
            }
        };
        Ok(out)
    }
}
