//! Reverse-mode differentiation over a flat operation tape.
//!
//! Each forward primitive executes eagerly and pushes one node holding
//! the operation, its materialized value, and a zero gradient buffer.
//! Nodes only ever reference earlier nodes, so walking the record in
//! reverse index order replays vector-Jacobian products in exact
//! reverse execution order. Every VJP *adds* into its input gradients,
//! which is what makes a weight matrix feeding two call sites (shared
//! modulator weights) receive the sum of both contributions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{PamError, Result};
use crate::tensor::{Real, Tensor};

/// Handle to a node on a [`Tape`]; only meaningful for the tape that
/// minted it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Elementwise nonlinearity selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActKind {
    Silu,
    Tanh,
    Sigmoid,
    Relu,
    Gelu,
}

/// Coefficient of the cubic term in the tanh-form GELU.
const GELU_CUBIC: f64 = 0.044715;

impl ActKind {
    pub const ALL: [ActKind; 5] = [
        ActKind::Silu,
        ActKind::Tanh,
        ActKind::Sigmoid,
        ActKind::Relu,
        ActKind::Gelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActKind::Silu => "silu",
            ActKind::Tanh => "tanh",
            ActKind::Sigmoid => "sigmoid",
            ActKind::Relu => "relu",
            ActKind::Gelu => "gelu",
        }
    }

    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            ActKind::Silu => x * sigmoid(x),
            ActKind::Tanh => x.tanh(),
            ActKind::Sigmoid => sigmoid(x),
            ActKind::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            ActKind::Gelu => {
                let half = T::from_f64(0.5);
                half * x * (T::one() + gelu_inner(x).tanh())
            }
        }
    }

    /// d apply / dx. ReLU takes derivative 0 at the kink.
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            ActKind::Silu => {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            }
            ActKind::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            ActKind::Sigmoid => {
                let s = sigmoid(x);
                s * (T::one() - s)
            }
            ActKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActKind::Gelu => {
                let half = T::from_f64(0.5);
                let t = gelu_inner(x).tanh();
                let slope = T::from_f64((2.0 / std::f64::consts::PI).sqrt())
                    * (T::one() + T::from_f64(3.0 * GELU_CUBIC) * x * x);
                half * (T::one() + t) + half * x * (T::one() - t * t) * slope
            }
        }
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn gelu_inner<T: Real>(x: T) -> T {
    T::from_f64((2.0 / std::f64::consts::PI).sqrt()) * (x + T::from_f64(GELU_CUBIC) * x * x * x)
}

impl std::str::FromStr for ActKind {
    type Err = PamError;

    fn from_str(s: &str) -> Result<Self> {
        ActKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                PamError::Config(format!(
                    "unknown activation `{s}`; expected silu|tanh|sigmoid|relu|gelu"
                ))
            })
    }
}

impl std::fmt::Display for ActKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A trainable (or deliberately frozen) tensor with its gradient
/// accumulator. Gradients add up across backward passes and are zeroed
/// explicitly between optimizer steps.
#[derive(Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// Frozen parameters never receive gradient and are skipped by the
    /// optimizer (fixed sinusoidal carrier tables).
    pub frozen: bool,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter {
            name: name.into(),
            value,
            grad,
            frozen: false,
        }
    }

    pub fn frozen(name: impl Into<String>, value: Tensor<T>) -> Self {
        let mut p = Self::new(name, value);
        p.frozen = true;
        p
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = T::zero();
        }
    }
}

enum Op<T> {
    Const,
    Param,
    Matmul { a: NodeId, b: NodeId },
    LinComb { a: NodeId, b: NodeId, ca: T, cb: T },
    AddRow { a: NodeId, row: NodeId },
    Hadamard { a: NodeId, b: NodeId },
    Act { a: NodeId, kind: ActKind },
    GatherRow { a: NodeId, index: usize },
    RepeatRow { a: NodeId },
    Reshape { a: NodeId },
    Transpose { a: NodeId },
    /// `scale` holds the per-element factor applied at forward time:
    /// 0 for dropped entries, 1/(1−rate) for survivors.
    Dropout { a: NodeId, scale: Vec<T> },
    /// Per-column affine map; only the multiplicative part enters the
    /// gradient (shift is constant).
    ScaleCols { a: NodeId, scale: Vec<T> },
    MeanAbs { a: NodeId },
    MeanSq { a: NodeId },
    SpectralMae { a: NodeId },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    grad: Tensor<T>,
}

/// Flat record of executed operations supporting one backward sweep.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    param_nodes: Vec<(usize, NodeId)>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and parameter binding.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.param_nodes.clear();
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].grad
    }

    /// Value of a single-element node (loss heads).
    pub fn scalar_value(&self, id: NodeId) -> T {
        debug_assert_eq!(self.value(id).len(), 1);
        self.value(id).data()[0]
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        let id = NodeId(self.nodes.len());
        let grad = Tensor::zeros(value.shape().to_vec());
        self.nodes.push(Node { op, value, grad });
        id
    }

    /// Records a leaf with no gradient consumers upstream of it.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Const, value)
    }

    /// Records a parameter leaf. Calls with the same index return the
    /// node minted first, so a parameter appearing at two call sites is
    /// a single leaf whose gradient accumulates both contributions.
    pub fn param(&mut self, index: usize, value: &Tensor<T>) -> NodeId {
        if let Some(&(_, id)) = self.param_nodes.iter().find(|&&(i, _)| i == index) {
            return id;
        }
        let id = self.push(Op::Param, value.clone());
        self.param_nodes.push((index, id));
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = matmul_vals(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul { a, b }, value))
    }

    /// ca·a + cb·b with identical shapes.
    pub fn lincomb(&mut self, a: NodeId, b: NodeId, ca: T, cb: T) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(PamError::Dimension {
                op: "lincomb",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let value = zip_map(av, bv, |x, y| ca * x + cb * y);
        Ok(self.push(Op::LinComb { a, b, ca, cb }, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.lincomb(a, b, T::one(), T::one())
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.lincomb(a, b, T::one(), -T::one())
    }

    /// Broadcast-adds a 1×c row onto every row of an r×c matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (av, rv) = (self.value(a), self.value(row));
        let compatible = av.rank() == 2
            && rv.rank() == 2
            && rv.shape()[0] == 1
            && rv.shape()[1] == av.shape()[1];
        if !compatible {
            return Err(PamError::Dimension {
                op: "add_row",
                left: av.shape().to_vec(),
                right: rv.shape().to_vec(),
            });
        }
        let (r, c) = (av.rows(), av.cols());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(av.at(i, j) + rv.at(0, j));
            }
        }
        let value = Tensor::new(vec![r, c], data).expect("add_row preserves shape");
        Ok(self.push(Op::AddRow { a, row }, value))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(PamError::Dimension {
                op: "hadamard",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let value = zip_map(av, bv, |x, y| x * y);
        Ok(self.push(Op::Hadamard { a, b }, value))
    }

    pub fn activation(&mut self, a: NodeId, kind: ActKind) -> NodeId {
        let value = self.value(a).map(|x| kind.apply(x));
        self.push(Op::Act { a, kind }, value)
    }

    /// Copies row `index` of an r×c table out as a 1×c tensor. The
    /// backward pass scatter-adds into that row only.
    pub fn gather_row(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        let av = self.value(a);
        if av.rank() != 2 {
            return Err(PamError::Domain(format!(
                "gather_row expects a rank-2 table, got shape {:?}",
                av.shape()
            )));
        }
        let (r, c) = (av.rows(), av.cols());
        if index >= r {
            return Err(PamError::Bounds { index, rows: r });
        }
        let data: Vec<T> = (0..c).map(|j| av.at(index, j)).collect();
        let value = Tensor::new(vec![1, c], data).expect("gather_row row shape");
        Ok(self.push(Op::GatherRow { a, index }, value))
    }

    /// Stacks `copies` copies of a 1×c row into a copies×c matrix.
    pub fn repeat_row(&mut self, a: NodeId, copies: usize) -> Result<NodeId> {
        let av = self.value(a);
        if av.rank() != 2 || av.shape()[0] != 1 {
            return Err(PamError::Domain(format!(
                "repeat_row expects a 1×c row, got shape {:?}",
                av.shape()
            )));
        }
        if copies == 0 {
            return Err(PamError::Domain(
                "repeat_row needs at least one copy".to_string(),
            ));
        }
        let c = av.cols();
        let mut data = Vec::with_capacity(copies * c);
        for _ in 0..copies {
            data.extend_from_slice(av.data());
        }
        let value = Tensor::new(vec![copies, c], data).expect("repeat_row shape");
        Ok(self.push(Op::RepeatRow { a }, value))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(a).reshaped(shape)?;
        Ok(self.push(Op::Reshape { a }, value))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transposed();
        self.push(Op::Transpose { a }, value)
    }

    /// Inverted dropout: each element is zeroed independently with
    /// probability `rate` and survivors are scaled by 1/(1−rate), so
    /// eval mode (and rate 0) is the identity — those cases return the
    /// input node unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: NodeId,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(PamError::Config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = T::from_f64(1.0 / (1.0 - rate));
        let av = self.value(a);
        let scale: Vec<T> = (0..av.len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let av = self.value(a);
        let data: Vec<T> = av.data().iter().zip(&scale).map(|(&v, &s)| v * s).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("dropout preserves shape");
        Ok(self.push(Op::Dropout { a, scale }, value))
    }

    /// out[i][j] = a[i][j]·scale[j] + shift[j] — the de-normalization
    /// step mapping standardized predictions back to input units.
    pub fn scale_cols(&mut self, a: NodeId, scale: &[T], shift: &[T]) -> Result<NodeId> {
        let av = self.value(a);
        if av.rank() != 2 || scale.len() != av.cols() || shift.len() != av.cols() {
            return Err(PamError::Domain(format!(
                "scale_cols expects per-column factors: shape {:?}, {} scales, {} shifts",
                av.shape(),
                scale.len(),
                shift.len()
            )));
        }
        let (r, c) = (av.rows(), av.cols());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(av.at(i, j) * scale[j] + shift[j]);
            }
        }
        let value = Tensor::new(vec![r, c], data).expect("scale_cols preserves shape");
        Ok(self.push(
            Op::ScaleCols {
                a,
                scale: scale.to_vec(),
            },
            value,
        ))
    }

    /// Mean of absolute values over all elements.
    pub fn mean_abs(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(PamError::Domain("mean over empty tensor".to_string()));
        }
        let total: f64 = av.data().iter().map(|&v| v.to_f64().abs()).sum();
        let value = Tensor::scalar(T::from_f64(total / av.len() as f64));
        Ok(self.push(Op::MeanAbs { a }, value))
    }

    /// Mean of squared values over all elements.
    pub fn mean_sq(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(PamError::Domain("mean over empty tensor".to_string()));
        }
        let total: f64 = av
            .data()
            .iter()
            .map(|&v| {
                let x = v.to_f64();
                x * x
            })
            .sum();
        let value = Tensor::scalar(T::from_f64(total / av.len() as f64));
        Ok(self.push(Op::MeanSq { a }, value))
    }

    /// Mean complex modulus of the per-column DFT of an H×N matrix:
    /// (1/(H·N))·Σ_n Σ_k |DFT(column n)[k]|. Applied to a difference
    /// matrix this is the spectral error term of the hybrid loss.
    pub fn spectral_mae(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.rank() != 2 {
            return Err(PamError::Domain(format!(
                "spectral_mae expects a rank-2 tensor, got shape {:?}",
                av.shape()
            )));
        }
        let (h, n) = (av.rows(), av.cols());
        let mut total = 0.0;
        for col in 0..n {
            let series: Vec<f64> = (0..h).map(|row| av.at(row, col).to_f64()).collect();
            total += dft::dft(&series).iter().map(|b| b.modulus()).sum::<f64>();
        }
        let value = Tensor::scalar(T::from_f64(total / (h * n) as f64));
        Ok(self.push(Op::SpectralMae { a }, value))
    }

    /// Backward sweep from a scalar root seeded with ∂root/∂root = 1.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        self.backward_seeded(root, T::one())
    }

    /// Backward sweep with an explicit seed — averaging a minibatch
    /// means seeding each window's loss with 1/batch_size.
    pub fn backward_seeded(&mut self, root: NodeId, seed: T) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(PamError::Domain(format!(
                "backward root must be a scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        for node in &mut self.nodes {
            for g in node.grad.data_mut() {
                *g = T::zero();
            }
        }
        self.nodes[root.0].grad.data_mut()[0] = seed;
        for i in (0..=root.0).rev() {
            if self.nodes[i].grad.data().iter().all(|&v| v == T::zero()) {
                continue;
            }
            for (target, delta) in self.vjp(i) {
                let dst = self.nodes[target].grad.data_mut();
                for (d, s) in dst.iter_mut().zip(delta.data()) {
                    *d += *s;
                }
            }
        }
        Ok(())
    }

    /// Contributions of node `i` to its inputs' gradients.
    fn vjp(&self, i: usize) -> Vec<(usize, Tensor<T>)> {
        let node = &self.nodes[i];
        let g = &node.grad;
        match &node.op {
            Op::Const | Op::Param => Vec::new(),
            Op::Matmul { a, b } => {
                let da = matmul_vals(g, &self.nodes[b.0].value.transposed())
                    .expect("matmul vjp shape");
                let db = matmul_vals(&self.nodes[a.0].value.transposed(), g)
                    .expect("matmul vjp shape");
                vec![(a.0, da), (b.0, db)]
            }
            Op::LinComb { a, b, ca, cb } => {
                let (ca, cb) = (*ca, *cb);
                vec![(a.0, g.map(|v| ca * v)), (b.0, g.map(|v| cb * v))]
            }
            Op::AddRow { a, row } => {
                let c = g.cols();
                let mut sums = Tensor::zeros(vec![1, c]);
                for i in 0..g.rows() {
                    for j in 0..c {
                        *sums.at_mut(0, j) += g.at(i, j);
                    }
                }
                vec![(a.0, g.clone()), (row.0, sums)]
            }
            Op::Hadamard { a, b } => {
                let da = zip_map(g, &self.nodes[b.0].value, |gv, bv| gv * bv);
                let db = zip_map(g, &self.nodes[a.0].value, |gv, av| gv * av);
                vec![(a.0, da), (b.0, db)]
            }
            Op::Act { a, kind } => {
                let kind = *kind;
                let da = zip_map(g, &self.nodes[a.0].value, |gv, x| gv * kind.derivative(x));
                vec![(a.0, da)]
            }
            Op::GatherRow { a, index } => {
                let table = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(table.shape().to_vec());
                for j in 0..table.cols() {
                    *da.at_mut(*index, j) = g.at(0, j);
                }
                vec![(a.0, da)]
            }
            Op::RepeatRow { a } => {
                let c = g.cols();
                let mut da = Tensor::zeros(vec![1, c]);
                for i in 0..g.rows() {
                    for j in 0..c {
                        *da.at_mut(0, j) += g.at(i, j);
                    }
                }
                vec![(a.0, da)]
            }
            Op::Reshape { a } => {
                let shape = self.nodes[a.0].value.shape().to_vec();
                let da = g.reshaped(shape).expect("reshape vjp shape");
                vec![(a.0, da)]
            }
            Op::Transpose { a } => vec![(a.0, g.transposed())],
            Op::Dropout { a, scale } => {
                let mut da = g.clone();
                for (d, &s) in da.data_mut().iter_mut().zip(scale) {
                    *d *= s;
                }
                vec![(a.0, da)]
            }
            Op::ScaleCols { a, scale } => {
                let mut da = g.clone();
                let c = scale.len();
                for (idx, d) in da.data_mut().iter_mut().enumerate() {
                    *d *= scale[idx % c];
                }
                vec![(a.0, da)]
            }
            Op::MeanAbs { a } => {
                let x = &self.nodes[a.0].value;
                let gs = g.data()[0];
                let inv = T::from_f64(1.0 / x.len() as f64);
                let da = x.map(|v| {
                    let sign = if v > T::zero() {
                        T::one()
                    } else if v < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    gs * sign * inv
                });
                vec![(a.0, da)]
            }
            Op::MeanSq { a } => {
                let x = &self.nodes[a.0].value;
                let gs = g.data()[0];
                let scale = T::from_f64(2.0 / x.len() as f64);
                let da = x.map(|v| gs * scale * v);
                vec![(a.0, da)]
            }
            Op::SpectralMae { a } => {
                let x = &self.nodes[a.0].value;
                let (h, n) = (x.rows(), x.cols());
                let gs = g.data()[0].to_f64() / (h * n) as f64;
                let mut da = Tensor::zeros(x.shape().to_vec());
                for col in 0..n {
                    let series: Vec<f64> = (0..h).map(|row| x.at(row, col).to_f64()).collect();
                    let bins = dft::dft(&series);
                    for j in 0..h {
                        let mut acc = 0.0;
                        for (k, bin) in bins.iter().enumerate() {
                            let modulus = bin.modulus();
                            // Subgradient 0 where the modulus vanishes.
                            if modulus > 0.0 {
                                let theta = std::f64::consts::TAU * ((j * k) % h) as f64
                                    / h as f64;
                                acc += (bin.re * theta.cos() - bin.im * theta.sin()) / modulus;
                            }
                        }
                        *da.at_mut(j, col) = T::from_f64(gs * acc);
                    }
                }
                vec![(a.0, da)]
            }
        }
    }

    /// Adds every parameter leaf's gradient into the owning parameter's
    /// accumulator. Frozen parameters are skipped — their tape gradient
    /// is discarded.
    pub fn accumulate_param_grads(&self, params: &mut [Parameter<T>]) {
        for &(index, id) in &self.param_nodes {
            let param = &mut params[index];
            if param.frozen {
                continue;
            }
            for (dst, src) in param
                .grad
                .data_mut()
                .iter_mut()
                .zip(self.nodes[id.0].grad.data())
            {
                *dst += *src;
            }
        }
    }
}

fn matmul_vals<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(PamError::Dimension {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        for p in 0..k {
            let av = a.at(i, p);
            for j in 0..n {
                *out.at_mut(i, j) += av * b.at(p, j);
            }
        }
    }
    Ok(out)
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    debug_assert_eq!(a.shape(), b.shape());
    let data: Vec<T> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map preserves shape")
}
