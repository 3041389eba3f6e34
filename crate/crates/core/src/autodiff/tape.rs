use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;

use super::kernels::{self, ConvGeom, NormCache};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Handle to a value recorded on a [`Tape`]. Only meaningful for the tape
/// that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Padding {
    Zero(usize),
    Reflect(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

/// Operation families, used for labelling and fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Leaf,
    Constant,
    Conv2d,
    ConvTranspose2d,
    BiasAdd,
    InstanceNorm,
    Activation,
    PadReflect,
    Add,
    Mul,
    Scale,
    Sum,
    Mean,
    L1,
    Mse,
    View,
}

impl OpKind {
    pub const ALL: [OpKind; 16] = [
        OpKind::Leaf,
        OpKind::Constant,
        OpKind::Conv2d,
        OpKind::ConvTranspose2d,
        OpKind::BiasAdd,
        OpKind::InstanceNorm,
        OpKind::Activation,
        OpKind::PadReflect,
        OpKind::Add,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::L1,
        OpKind::Mse,
        OpKind::View,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Constant => "constant",
            OpKind::Conv2d => "conv2d",
            OpKind::ConvTranspose2d => "conv_transpose2d",
            OpKind::BiasAdd => "bias_add",
            OpKind::InstanceNorm => "instance_norm",
            OpKind::Activation => "activation",
            OpKind::PadReflect => "pad_reflect",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::L1 => "l1",
            OpKind::Mse => "mse",
            OpKind::View => "view",
        }
    }
}

enum Op<T> {
    Leaf,
    Constant,
    Conv2d {
        x: usize,
        k: usize,
        geom: ConvGeom,
    },
    ConvTranspose2d {
        x: usize,
        k: usize,
        geom: ConvGeom,
    },
    BiasAdd {
        x: usize,
        b: usize,
    },
    InstanceNorm {
        x: usize,
        gain: usize,
        bias: usize,
        cache: NormCache<T>,
    },
    Activation {
        x: usize,
        kind: Activation,
    },
    PadReflect {
        x: usize,
        width: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        factor: T,
    },
    Sum {
        x: usize,
    },
    Mean {
        x: usize,
    },
    L1 {
        a: usize,
        b: usize,
    },
    Mse {
        a: usize,
        b: usize,
    },
    View {
        x: usize,
        offset: usize,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Constant => OpKind::Constant,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::ConvTranspose2d { .. } => OpKind::ConvTranspose2d,
            Op::BiasAdd { .. } => OpKind::BiasAdd,
            Op::InstanceNorm { .. } => OpKind::InstanceNorm,
            Op::Activation { .. } => OpKind::Activation,
            Op::PadReflect { .. } => OpKind::PadReflect,
            Op::Add { .. } => OpKind::Add,
            Op::Mul { .. } => OpKind::Mul,
            Op::Scale { .. } => OpKind::Scale,
            Op::Sum { .. } => OpKind::Sum,
            Op::Mean { .. } => OpKind::Mean,
            Op::L1 { .. } => OpKind::L1,
            Op::Mse { .. } => OpKind::Mse,
            Op::View { .. } => OpKind::View,
        }
    }

    fn parents(&self) -> Vec<usize> {
        match *self {
            Op::Leaf | Op::Constant => vec![],
            Op::Conv2d { x, k, .. } | Op::ConvTranspose2d { x, k, .. } => vec![x, k],
            Op::BiasAdd { x, b } => vec![x, b],
            Op::InstanceNorm { x, gain, bias, .. } => vec![x, gain, bias],
            Op::Activation { x, .. }
            | Op::PadReflect { x, .. }
            | Op::Scale { x, .. }
            | Op::Sum { x }
            | Op::Mean { x }
            | Op::View { x, .. } => vec![x],
            Op::Add { a, b } | Op::Mul { a, b } | Op::L1 { a, b } | Op::Mse { a, b } => vec![a, b],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    scope: Option<usize>,
}

/// Append-only record of a forward computation.
///
/// Node ids are assigned in creation order, so every parent id is smaller
/// than its child's id and a reverse sweep over the node list is a valid
/// reverse topological order.
pub struct Tape<T: Element = f32> {
    nodes: Vec<Node<T>>,
    scopes: Vec<String>,
    current_scope: Option<usize>,
    fault: Option<(OpKind, T)>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`]. Only nodes that are both
/// differentiable and reachable from the root have an entry.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    pub fn contains(&self, var: Var) -> bool {
        self.get(var).is_some()
    }

    pub fn len(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            scopes: Vec::new(),
            current_scope: None,
            fault: None,
        }
    }

    /// Scales every local gradient produced by operations of `kind` by
    /// `factor`. Test hook for exercising the gradient checker.
    pub fn inject_fault(&mut self, kind: OpKind, factor: T) {
        self.fault = Some((kind, factor));
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input (parameter or point of evaluation).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Non-differentiable input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_unchecked(value, Op::Constant, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn op_kind(&self, var: Var) -> OpKind {
        self.nodes[var.0].op.kind()
    }

    pub fn parents(&self, var: Var) -> Vec<Var> {
        self.nodes[var.0].op.parents().into_iter().map(Var).collect()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Runs `f` with every node it records labelled `label`.
    pub fn scoped<R>(&mut self, label: &str, f: impl FnOnce(&mut Self) -> R) -> R {
        let idx = match self.scopes.iter().position(|s| s == label) {
            Some(i) => i,
            None => {
                self.scopes.push(label.to_owned());
                self.scopes.len() - 1
            }
        };
        let prev = self.current_scope.replace(idx);
        let out = f(self);
        self.current_scope = prev;
        out
    }

    /// Number of recorded nodes per scope label.
    pub fn scope_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for node in &self.nodes {
            if let Some(s) = node.scope {
                *counts.entry(self.scopes[s].clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Hash of the side of every kink (relu, leaky relu, |·|) taken by the
    /// recorded forward pass. Two evaluations with equal signatures lie in
    /// the same smooth region.
    pub fn kink_signature(&self) -> u64 {
        let mut h = FnvHasher::default();
        for node in &self.nodes {
            match node.op {
                Op::Activation {
                    x,
                    kind: Activation::Relu | Activation::LeakyRelu(_),
                } => {
                    for &v in self.nodes[x].value.data() {
                        h.write_u8(sign_class(v));
                    }
                }
                Op::L1 { a, b } => {
                    let (a, b) = (&self.nodes[a].value, &self.nodes[b].value);
                    for (&p, &q) in a.data().iter().zip(b.data()) {
                        h.write_u8(sign_class(p - q));
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    fn push_unchecked(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            scope: self.current_scope,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                op: op.kind().name(),
                scope: self.current_scope.map(|s| self.scopes[s].clone()),
            });
        }
        let requires_grad = op.parents().iter().any(|&p| self.nodes[p].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn conv_geom(&self, x: Var, k: Var, stride: usize, pad: usize, op: &'static str) -> Result<ConvGeom> {
        let (_, c, h, w) = self.value(x).dims4()?;
        let (_, kc, kh, kw) = self.value(k).dims4()?;
        if c != kc {
            return Err(Error::shape(
                op,
                format!(
                    "input has {c} channels but kernels expect {kc} (kernel shape {:?})",
                    self.shape(k)
                ),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument(format!("{op}: stride must be positive")));
        }
        ConvGeom::forward(c, h, w, kh, kw, stride, pad).ok_or_else(|| {
            Error::shape(
                op,
                format!(
                    "padded input {}×{} smaller than kernel {kh}×{kw}",
                    h + 2 * pad,
                    w + 2 * pad
                ),
            )
        })
    }

    /// 2-D cross-correlation of `N×C×H×W` input with `K×C×kh×kw` kernels.
    pub fn conv2d(&mut self, x: Var, kernels: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (x, pad) = match padding {
            Padding::Zero(p) => (x, p),
            Padding::Reflect(p) => (self.pad_reflect(x, p)?, 0),
        };
        let geom = self.conv_geom(x, kernels, stride, pad, "conv2d")?;
        let n = self.value(x).shape()[0];
        let k = self.value(kernels).shape()[0];
        let out = kernels::conv2d_forward(&geom, n, k, self.value(x).data(), self.value(kernels).data());
        let value = Tensor::new([n, k, geom.out_h, geom.out_w], out)?;
        self.push(
            value,
            Op::Conv2d {
                x: x.0,
                k: kernels.0,
                geom,
            },
        )
    }

    /// Adjoint of [`Tape::conv2d`] with zero padding: maps `N×K×H×W` through
    /// `K×C×kh×kw` kernels to `N×C×((H−1)·stride − 2·pad + kh)×…`.
    pub fn conv_transpose2d(&mut self, x: Var, kernels: Var, stride: usize, pad: usize) -> Result<Var> {
        let (n, k, h, w) = self.value(x).dims4()?;
        let (kk, c, kh, kw) = self.value(kernels).dims4()?;
        if k != kk {
            return Err(Error::shape(
                "conv_transpose2d",
                format!(
                    "input has {k} channels but kernels expect {kk} (kernel shape {:?})",
                    self.shape(kernels)
                ),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument(
                "conv_transpose2d: stride must be positive".into(),
            ));
        }
        let out_h = ((h - 1) * stride + kh).checked_sub(2 * pad);
        let out_w = ((w - 1) * stride + kw).checked_sub(2 * pad);
        let (out_h, out_w) = match (out_h, out_w) {
            (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
            _ => {
                return Err(Error::shape(
                    "conv_transpose2d",
                    format!("padding {pad} leaves no output for {h}×{w} input and {kh}×{kw} kernel"),
                ))
            }
        };
        let geom = ConvGeom::forward(c, out_h, out_w, kh, kw, stride, pad)
            .filter(|g| g.out_h == h && g.out_w == w)
            .ok_or_else(|| Error::shape("conv_transpose2d", "inconsistent transpose geometry"))?;
        let out = kernels::conv_transpose2d_forward(&geom, n, k, self.value(x).data(), self.value(kernels).data());
        let value = Tensor::new([n, c, out_h, out_w], out)?;
        self.push(
            value,
            Op::ConvTranspose2d {
                x: x.0,
                k: kernels.0,
                geom,
            },
        )
    }

    /// Adds a per-channel bias to an `N×C×H×W` tensor.
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c, h, w) = self.value(x).dims4()?;
        if self.value(bias).len() != c {
            return Err(Error::shape(
                "bias_add",
                format!("bias has {} entries for {c} channels", self.value(bias).len()),
            ));
        }
        let b = self.value(bias).data().to_vec();
        let mut value = self.value(x).clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += b[(i / (h * w)) % c];
        }
        self.push(value, Op::BiasAdd { x: x.0, b: bias.0 })
    }

    pub fn instance_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        for (name, v) in [("gain", gain), ("bias", bias)] {
            if self.value(v).len() != c {
                return Err(Error::shape(
                    "instance_norm",
                    format!("{name} has {} entries for {c} channels", self.value(v).len()),
                ));
            }
        }
        let (out, cache) = kernels::instance_norm_forward(
            n,
            c,
            h * w,
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            T::of(eps),
        );
        let value = Tensor::new([n, c, h, w], out)?;
        self.push(
            value,
            Op::InstanceNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                cache,
            },
        )
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let value = match kind {
            Activation::Relu => self.value(x).map(|v| v.max(T::zero())),
            Activation::LeakyRelu(slope) => {
                let s = T::of(slope);
                self.value(x).map(|v| if v > T::zero() { v } else { v * s })
            }
            Activation::Tanh => self.value(x).map(T::tanh),
            Activation::Sigmoid => self.value(x).map(|v| T::one() / (T::one() + (-v).exp())),
        };
        self.push(value, Op::Activation { x: x.0, kind })
    }

    pub fn pad_reflect(&mut self, x: Var, width: usize) -> Result<Var> {
        if width == 0 {
            return Ok(x);
        }
        let (n, c, h, w) = self.value(x).dims4()?;
        if width >= h || width >= w {
            return Err(Error::shape(
                "pad_reflect",
                format!("reflect width {width} must be smaller than spatial size {h}×{w}"),
            ));
        }
        let out = kernels::pad_reflect_forward(n * c, h, w, width, self.value(x).data());
        let value = Tensor::new([n, c, h + 2 * width, w + 2 * width], out)?;
        self.push(value, Op::PadReflect { x: x.0, width })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        self.push(value, Op::Add { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        self.push(value, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let factor = T::of(factor);
        let value = self.value(x).scale(factor);
        self.push(value, Op::Scale { x: x.0, factor })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum { x: x.0 })
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).mean());
        self.push(value, Op::Mean { x: x.0 })
    }

    /// Mean absolute difference.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.value(a).zip_map(self.value(b), |p, q| (p - q).abs())?;
        self.push(Tensor::scalar(diff.mean()), Op::L1 { a: a.0, b: b.0 })
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.value(a).zip_map(self.value(b), |p, q| (p - q) * (p - q))?;
        self.push(Tensor::scalar(diff.mean()), Op::Mse { a: a.0, b: b.0 })
    }

    /// Sums scalar terms; `None` for an empty list.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Option<Var>> {
        let mut iter = terms.iter().copied();
        let Some(mut acc) = iter.next() else {
            return Ok(None);
        };
        for t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(Some(acc))
    }

    /// A contiguous slice of `x`'s flat data, viewed with `shape`.
    pub fn view(&mut self, x: Var, offset: usize, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        let src = self.value(x).data();
        if offset + numel > src.len() {
            return Err(Error::shape(
                "view",
                format!("slice {offset}..{} exceeds {} values", offset + numel, src.len()),
            ));
        }
        let value = Tensor::new(shape.to_vec(), src[offset..offset + numel].to_vec())?;
        self.push(value, Op::View { x: x.0, offset })
    }

    /// Reverse-mode sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[root.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(Tensor::full(root_value.shape().to_vec(), T::one()));

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let mut local = self.local_grads(node, &g);
            if let Some((kind, factor)) = self.fault {
                if kind == node.op.kind() {
                    for (_, t) in local.iter_mut() {
                        *t = t.scale(factor);
                    }
                }
            }
            for (parent, pg) in local {
                if !self.nodes[parent].requires_grad {
                    continue;
                }
                match grads[parent].as_mut() {
                    Some(acc) => acc.add_assign(&pg),
                    None => grads[parent] = Some(pg),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    fn local_grads(&self, node: &Node<T>, g: &Tensor<T>) -> Vec<(usize, Tensor<T>)> {
        let val = |i: usize| &self.nodes[i].value;
        let mut out = Vec::new();
        match node.op {
            Op::Leaf | Op::Constant => {}
            Op::Conv2d { x, k, geom } => {
                let n = val(x).shape()[0];
                let kk = val(k).shape()[0];
                let (dx, dk) = kernels::conv2d_backward(
                    &geom,
                    n,
                    kk,
                    val(x).data(),
                    val(k).data(),
                    g.data(),
                    self.wants(x),
                    self.wants(k),
                );
                if let Some(dx) = dx {
                    out.push((x, Tensor::new(val(x).shape().to_vec(), dx).expect("conv2d dx")));
                }
                if let Some(dk) = dk {
                    out.push((k, Tensor::new(val(k).shape().to_vec(), dk).expect("conv2d dk")));
                }
            }
            Op::ConvTranspose2d { x, k, geom } => {
                let n = val(x).shape()[0];
                let kk = val(k).shape()[0];
                let (dx, dk) = kernels::conv_transpose2d_backward(
                    &geom,
                    n,
                    kk,
                    val(x).data(),
                    val(k).data(),
                    g.data(),
                    self.wants(x),
                    self.wants(k),
                );
                if let Some(dx) = dx {
                    out.push((x, Tensor::new(val(x).shape().to_vec(), dx).expect("convT dx")));
                }
                if let Some(dk) = dk {
                    out.push((k, Tensor::new(val(k).shape().to_vec(), dk).expect("convT dk")));
                }
            }
            Op::BiasAdd { x, b } => {
                if self.wants(x) {
                    out.push((x, g.clone()));
                }
                if self.wants(b) {
                    let (_, c, h, w) = g.dims4().expect("bias_add grad");
                    let mut db = vec![T::zero(); c];
                    for (i, &v) in g.data().iter().enumerate() {
                        db[(i / (h * w)) % c] += v;
                    }
                    out.push((b, Tensor::new(val(b).shape().to_vec(), db).expect("bias_add db")));
                }
            }
            Op::InstanceNorm {
                x,
                gain,
                bias,
                ref cache,
            } => {
                let (_, c, h, w) = g.dims4().expect("instance_norm grad");
                let (dx, dgain, dbias) = kernels::instance_norm_backward(c, h * w, cache, val(gain).data(), g.data());
                if self.wants(x) {
                    out.push((x, Tensor::new(g.shape().to_vec(), dx).expect("norm dx")));
                }
                if self.wants(gain) {
                    out.push((
                        gain,
                        Tensor::new(val(gain).shape().to_vec(), dgain).expect("norm dgain"),
                    ));
                }
                if self.wants(bias) {
                    out.push((
                        bias,
                        Tensor::new(val(bias).shape().to_vec(), dbias).expect("norm dbias"),
                    ));
                }
            }
            Op::Activation { x, kind } => {
                let input = val(x);
                let output = &node.value;
                let d = match kind {
                    Activation::Relu => input
                        .zip_map(g, |v, gv| if v > T::zero() { gv } else { T::zero() })
                        .expect("relu"),
                    Activation::LeakyRelu(slope) => {
                        let s = T::of(slope);
                        input
                            .zip_map(g, |v, gv| {
                                if v > T::zero() {
                                    gv
                                } else if v < T::zero() {
                                    gv * s
                                } else {
                                    T::zero()
                                }
                            })
                            .expect("leaky_relu")
                    }
                    Activation::Tanh => output.zip_map(g, |y, gv| gv * (T::one() - y * y)).expect("tanh"),
                    Activation::Sigmoid => output.zip_map(g, |y, gv| gv * y * (T::one() - y)).expect("sigmoid"),
                };
                out.push((x, d));
            }
            Op::PadReflect { x, width } => {
                let (n, c, h, w) = val(x).dims4().expect("pad grad");
                let d = kernels::pad_reflect_backward(n * c, h, w, width, g.data());
                out.push((x, Tensor::new([n, c, h, w], d).expect("pad dx")));
            }
            Op::Add { a, b } => {
                if self.wants(a) {
                    out.push((a, g.clone()));
                }
                if self.wants(b) {
                    out.push((b, g.clone()));
                }
            }
            Op::Mul { a, b } => {
                if self.wants(a) {
                    out.push((a, g.zip_map(val(b), |p, q| p * q).expect("mul da")));
                }
                if self.wants(b) {
                    out.push((b, g.zip_map(val(a), |p, q| p * q).expect("mul db")));
                }
            }
            Op::Scale { x, factor } => out.push((x, g.scale(factor))),
            Op::Sum { x } => out.push((x, Tensor::full(val(x).shape().to_vec(), g.item()))),
            Op::Mean { x } => {
                let n = T::of(val(x).len() as f64);
                out.push((x, Tensor::full(val(x).shape().to_vec(), g.item() / n)));
            }
            Op::L1 { a, b } => {
                let n = T::of(val(a).len() as f64);
                let k = g.item() / n;
                let d = val(a)
                    .zip_map(val(b), |p, q| {
                        let s = p - q;
                        if s > T::zero() {
                            k
                        } else if s < T::zero() {
                            -k
                        } else {
                            T::zero()
                        }
                    })
                    .expect("l1");
                if self.wants(b) {
                    out.push((b, d.scale(-T::one())));
                }
                if self.wants(a) {
                    out.push((a, d));
                }
            }
            Op::Mse { a, b } => {
                let n = T::of(val(a).len() as f64);
                let k = T::of(2.0) * g.item() / n;
                let d = val(a).zip_map(val(b), |p, q| k * (p - q)).expect("mse");
                if self.wants(b) {
                    out.push((b, d.scale(-T::one())));
                }
                if self.wants(a) {
                    out.push((a, d));
                }
            }
            Op::View { x, offset } => {
                let mut d = vec![T::zero(); val(x).len()];
                d[offset..offset + g.len()].copy_from_slice(g.data());
                out.push((x, Tensor::new(val(x).shape().to_vec(), d).expect("view dx")));
            }
        }
        out
    }
}

fn sign_class<T: Element>(v: T) -> u8 {
    if v > T::zero() {
        2
    } else if v < T::zero() {
        0
    } else {
        1
    }
}
