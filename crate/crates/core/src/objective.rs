//! Objective functions: the evaluation interface shared by all optimizers,
//! a dense sigmoid MLP with softmax cross-entropy, and a strongly convex
//! quadratic.
//!
//! All evaluations are full-batch. Hessian-vector products are exact
//! (forward-over-reverse / R-operator), never finite differences.
//!
//! Parameter layout for an [`MlpSpec`] with layer sizes `n_0, n_1, ..., n_L`:
//! for `l = 1..=L` the `n_l x n_{l-1}` weight matrix in row-major order
//! followed by the `n_l` biases.

use rand::Rng;
use thiserror::Error;

use crate::kernels::{self, DenseMatrix, KernelError};
use crate::rng::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("non-finite forward value at sample {sample}")]
    NumericOverflow { sample: usize },
    #[error("non-finite objective value")]
    NonFinite,
    #[error("parameter vector has length {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("dimension {d} exceeds dense guard {limit}")]
    TooLarge { d: usize, limit: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("hessian asymmetry {asymmetry:e} exceeds 1e-8 * {norm:e}")]
    AsymmetricHessian { asymmetry: f64, norm: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

/// Monitoring metrics for one iterate. `train_acc` is `-1` when the
/// objective is not a classifier; `test_acc` is `None` without a test split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

/// Full-batch evaluation contract.
///
/// Implementations must be deterministic functions of `w`; `hvp` must be
/// linear in `v` and symmetric as a bilinear form.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of training samples; mini-batch epochs are `|batch| / n`.
    fn num_samples(&self) -> usize {
        1
    }

    fn value(&self, w: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.value_and_gradient(w).map(|(_, g)| g)
    }

    fn hvp(&self, w: &[f64], v: &[f64]) -> Result<Vec<f64>>;

    /// `Y = ∇²F(w) S` column by column; one pass over the data.
    fn hvp_batch(&self, w: &[f64], columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        columns.iter().map(|c| self.hvp(w, c)).collect()
    }

    /// Mean gradient over the given sample indices.
    fn batch_gradient(&self, w: &[f64], _indices: &[usize]) -> Result<Vec<f64>> {
        self.gradient(w)
    }

    fn report(&self, w: &[f64]) -> Result<Report> {
        Ok(Report {
            loss: self.value(w)?,
            train_acc: -1.0,
            test_acc: None,
        })
    }
}

fn check_dim(expected: usize, w: &[f64]) -> Result<()> {
    if w.len() != expected {
        Err(ObjectiveError::Dimension {
            expected,
            found: w.len(),
        })
    } else {
        Ok(())
    }
}

pub const DENSE_GUARD: usize = 4096;

/// Dense Hessian by probing `hvp` with the standard basis, symmetrised.
pub fn full_hessian(obj: &dyn Objective, w: &[f64]) -> Result<DenseMatrix> {
    let d = obj.dim();
    if d > DENSE_GUARD {
        return Err(ObjectiveError::TooLarge {
            d,
            limit: DENSE_GUARD,
        });
    }
    let basis: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();
    let cols = obj.hvp_batch(w, &basis)?;
    let mut h = DenseMatrix::from_columns(&cols)?;
    let asymmetry = h.asymmetry();
    let hn = h.frobenius_norm();
    if asymmetry > 1e-8 * hn.max(f64::MIN_POSITIVE) {
        return Err(ObjectiveError::AsymmetricHessian {
            asymmetry,
            norm: hn,
        });
    }
    h.symmetrize();
    Ok(h)
}

// ---------------------------------------------------------------------------
// Dataset

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    input_dim: usize,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        input_dim: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(ObjectiveError::Dataset("dataset is empty".into()));
        }
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(ObjectiveError::Dataset(format!(
                "{} feature values for {} rows of width {}",
                features.len(),
                labels.len(),
                input_dim
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(ObjectiveError::Dataset(format!(
                "non-finite input in row {}",
                i / input_dim
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(ObjectiveError::Dataset(format!(
                "label {l} in row {i} outside [0, {n_classes})"
            )));
        }
        Ok(Self {
            features,
            input_dim,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

// ---------------------------------------------------------------------------
// MLP

/// Fully connected network: sigmoid hidden layers, affine output, softmax
/// cross-entropy loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    n_in: usize,
    n_out: usize,
    w_off: usize,
    b_off: usize,
}

impl Layer {
    #[inline]
    fn weights<'a>(&self, w: &'a [f64]) -> &'a [f64] {
        &w[self.w_off..self.w_off + self.n_in * self.n_out]
    }
    #[inline]
    fn bias<'a>(&self, w: &'a [f64]) -> &'a [f64] {
        &w[self.b_off..self.b_off + self.n_out]
    }
}

/// `out = W x + b` for a row-major `n_out x n_in` block.
fn affine(wm: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, (row, bi)) in out.iter_mut().zip(wm.chunks_exact(n_in).zip(b)) {
        *o = bi + kernels::dot(row, x);
    }
}

/// `out = W x` (no bias).
fn linear(wm: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, row) in out.iter_mut().zip(wm.chunks_exact(n_in)) {
        *o = kernels::dot(row, x);
    }
}

/// `out = Wᵀ delta`.
fn linear_t(wm: &[f64], delta: &[f64], out: &mut [f64]) {
    let n_in = out.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    for (row, &dk) in wm.chunks_exact(n_in).zip(delta) {
        if dk != 0.0 {
            kernels::axpy(dk, row, out);
        }
    }
}

/// `grad_w += delta ⊗ a`, `grad_b += delta`.
fn accumulate_outer(grad: &mut [f64], layer: &Layer, delta: &[f64], a: &[f64]) {
    for (k, &dk) in delta.iter().enumerate() {
        if dk != 0.0 {
            let row = &mut grad[layer.w_off + k * layer.n_in..layer.w_off + (k + 1) * layer.n_in];
            kernels::axpy(dk, a, row);
        }
        grad[layer.b_off + k] += dk;
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample forward pass state.
struct Forward {
    /// `acts[0]` is the input, `acts[l]` the sigmoid output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    loss: f64,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(ObjectiveError::Precondition(
                "an MLP needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(ObjectiveError::Precondition("zero-width layer".into()));
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|p| p[0] * p[1] + p[1])
            .sum()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|p| {
                let l = Layer {
                    n_in: p[0],
                    n_out: p[1],
                    w_off: off,
                    b_off: off + p[0] * p[1],
                };
                off += p[0] * p[1] + p[1];
                l
            })
            .collect()
    }

    fn check(&self, w: &[f64], data: &Dataset) -> Result<()> {
        check_dim(self.num_params(), w)?;
        if data.input_dim() != self.input_dim() {
            return Err(ObjectiveError::Dataset(format!(
                "dataset has {} features, network expects {}",
                data.input_dim(),
                self.input_dim()
            )));
        }
        if data.n_classes() > self.n_classes() {
            return Err(ObjectiveError::Dataset(format!(
                "dataset has {} classes, network outputs {}",
                data.n_classes(),
                self.n_classes()
            )));
        }
        Ok(())
    }

    fn forward(&self, layers: &[Layer], w: &[f64], x: &[f64], label: usize) -> Forward {
        let mut acts = Vec::with_capacity(layers.len());
        acts.push(x.to_vec());
        let (last, hidden) = layers.split_last().unwrap();
        for layer in hidden {
            let mut z = vec![0.0; layer.n_out];
            affine(layer.weights(w), layer.bias(w), acts.last().unwrap(), &mut z);
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
            acts.push(z);
        }
        let mut logits = vec![0.0; last.n_out];
        affine(last.weights(w), last.bias(w), acts.last().unwrap(), &mut logits);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        let probs = logits.iter().map(|z| (z - lse).exp()).collect();
        let loss = lse - logits[label];
        Forward {
            acts,
            logits,
            probs,
            loss,
        }
    }

    /// Backpropagates one sample; returns the output-to-input list of deltas
    /// (`deltas[l]` belongs to `layers[l]`).
    fn backward(
        &self,
        layers: &[Layer],
        w: &[f64],
        fwd: &Forward,
        label: usize,
        grad: &mut [f64],
    ) -> Vec<Vec<f64>> {
        let nl = layers.len();
        let mut deltas = vec![Vec::new(); nl];
        let mut delta = fwd.probs.clone();
        delta[label] -= 1.0;
        for l in (0..nl).rev() {
            let layer = &layers[l];
            accumulate_outer(grad, layer, &delta, &fwd.acts[l]);
            let next = if l > 0 {
                let mut ga = vec![0.0; layer.n_in];
                linear_t(layer.weights(w), &delta, &mut ga);
                let a = &fwd.acts[l];
                for (g, &s) in ga.iter_mut().zip(a) {
                    *g *= s * (1.0 - s);
                }
                Some(ga)
            } else {
                None
            };
            deltas[l] = std::mem::take(&mut delta);
            if let Some(n) = next {
                delta = n;
            }
        }
        deltas
    }

    /// R-operator pass for one sample and one direction `v`; accumulates the
    /// Hessian-vector product into `out`.
    fn r_pass(
        &self,
        layers: &[Layer],
        w: &[f64],
        v: &[f64],
        fwd: &Forward,
        deltas: &[Vec<f64>],
        out: &mut [f64],
    ) {
        let nl = layers.len();
        // forward directional derivatives
        let mut r_acts: Vec<Vec<f64>> = Vec::with_capacity(nl);
        let mut r_z: Vec<Vec<f64>> = Vec::with_capacity(nl);
        r_acts.push(vec![0.0; layers[0].n_in]);
        for (l, layer) in layers.iter().enumerate() {
            let mut rz = vec![0.0; layer.n_out];
            affine(layer.weights(v), layer.bias(v), &fwd.acts[l], &mut rz);
            if l > 0 {
                let mut tmp = vec![0.0; layer.n_out];
                linear(layer.weights(w), &r_acts[l], &mut tmp);
                kernels::axpy(1.0, &tmp, &mut rz);
            }
            if l + 1 < nl {
                let a = &fwd.acts[l + 1];
                let ra = rz.iter().zip(a).map(|(r, &s)| s * (1.0 - s) * r).collect();
                r_acts.push(ra);
            }
            r_z.push(rz);
        }
        // softmax Jacobian applied to R{logits}
        let rz_out = &r_z[nl - 1];
        let p_dot = kernels::dot(&fwd.probs, rz_out);
        let mut r_delta: Vec<f64> = fwd
            .probs
            .iter()
            .zip(rz_out)
            .map(|(p, r)| p * (r - p_dot))
            .collect();
        for l in (0..nl).rev() {
            let layer = &layers[l];
            accumulate_outer(out, layer, &r_delta, &fwd.acts[l]);
            if l > 0 {
                // δ ⊗ R{a_{l-1}} term for the weights
                let delta = &deltas[l];
                for (k, &dk) in delta.iter().enumerate() {
                    if dk != 0.0 {
                        let row = &mut out
                            [layer.w_off + k * layer.n_in..layer.w_off + (k + 1) * layer.n_in];
                        kernels::axpy(dk, &r_acts[l], row);
                    }
                }
                let mut ga = vec![0.0; layer.n_in];
                linear_t(layer.weights(w), delta, &mut ga);
                let mut rga = vec![0.0; layer.n_in];
                linear_t(layer.weights(v), delta, &mut rga);
                let mut tmp = vec![0.0; layer.n_in];
                linear_t(layer.weights(w), &r_delta, &mut tmp);
                kernels::axpy(1.0, &tmp, &mut rga);
                let a = &fwd.acts[l];
                let rz_prev = &r_z[l - 1];
                r_delta = (0..layer.n_in)
                    .map(|i| {
                        let s = a[i];
                        let d1 = s * (1.0 - s);
                        let d2 = d1 * (1.0 - 2.0 * s);
                        d2 * rz_prev[i] * ga[i] + d1 * rga[i]
                    })
                    .collect();
            }
        }
    }

    /// Mean softmax cross-entropy and argmax accuracy (ties to the lowest
    /// class index).
    pub fn loss_accuracy(&self, w: &[f64], data: &Dataset) -> Result<(f64, f64)> {
        self.check(w, data)?;
        let layers = self.layers();
        let mut loss = 0.0;
        let mut correct = 0usize;
        for i in 0..data.len() {
            let fwd = self.forward(&layers, w, data.input(i), data.label(i));
            if !fwd.loss.is_finite() {
                return Err(ObjectiveError::NumericOverflow { sample: i });
            }
            loss += fwd.loss;
            if argmax(&fwd.logits) == data.label(i) {
                correct += 1;
            }
        }
        let n = data.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }

    pub fn loss_gradient(&self, w: &[f64], data: &Dataset) -> Result<(f64, Vec<f64>)> {
        let all: Vec<usize> = (0..data.len()).collect();
        self.loss_gradient_on(w, data, &all)
    }

    pub fn loss_gradient_on(
        &self,
        w: &[f64],
        data: &Dataset,
        indices: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        self.check(w, data)?;
        let layers = self.layers();
        let mut grad = vec![0.0; w.len()];
        let mut loss = 0.0;
        for &i in indices {
            let fwd = self.forward(&layers, w, data.input(i), data.label(i));
            if !fwd.loss.is_finite() {
                return Err(ObjectiveError::NumericOverflow { sample: i });
            }
            loss += fwd.loss;
            self.backward(&layers, w, &fwd, data.label(i), &mut grad);
        }
        let inv = 1.0 / indices.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grad))
    }

    pub fn hvp(&self, w: &[f64], data: &Dataset, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .hvp_batch(w, data, std::slice::from_ref(&v.to_vec()))?
            .pop()
            .unwrap())
    }

    /// Exact Hessian products for every column of `columns` with a single
    /// pass over the samples.
    pub fn hvp_batch(&self, w: &[f64], data: &Dataset, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check(w, data)?;
        for c in columns {
            check_dim(w.len(), c)?;
        }
        let layers = self.layers();
        let mut out = vec![vec![0.0; w.len()]; columns.len()];
        let mut scratch = vec![0.0; w.len()];
        for i in 0..data.len() {
            let fwd = self.forward(&layers, w, data.input(i), data.label(i));
            if !fwd.loss.is_finite() {
                return Err(ObjectiveError::NumericOverflow { sample: i });
            }
            let deltas = self.backward(&layers, w, &fwd, data.label(i), &mut scratch);
            for (v, o) in columns.iter().zip(out.iter_mut()) {
                self.r_pass(&layers, w, v, &fwd, &deltas, o);
            }
        }
        let inv = 1.0 / data.len() as f64;
        for o in out.iter_mut() {
            o.iter_mut().for_each(|x| *x *= inv);
        }
        Ok(out)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Uniform `[-scale, scale]` initial weights, deterministic in `(spec, seed, scale)`.
pub fn init_params(spec: &MlpSpec, seed: u64, scale: f64) -> Vec<f64> {
    assert!(scale >= 0.0, "init scale must be non-negative");
    let mut rng = rng::stream(seed, Stream::Init);
    rng::uniform_vec(&mut rng, spec.num_params(), scale)
}

/// An MLP bound to its training data (and optional test split).
#[derive(Debug, Clone)]
pub struct MlpObjective {
    spec: MlpSpec,
    train: Dataset,
    test: Option<Dataset>,
}

impl MlpObjective {
    pub fn new(spec: MlpSpec, train: Dataset, test: Option<Dataset>) -> Result<Self> {
        let zeros = vec![0.0; spec.num_params()];
        spec.check(&zeros, &train)?;
        if let Some(t) = &test {
            spec.check(&zeros, t)?;
        }
        Ok(Self { spec, train, test })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }
}

impl Objective for MlpObjective {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn num_samples(&self) -> usize {
        self.train.len()
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        self.spec.loss_accuracy(w, &self.train).map(|(l, _)| l)
    }

    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.spec.loss_gradient(w, &self.train)
    }

    fn hvp(&self, w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.spec.hvp(w, &self.train, v)
    }

    fn hvp_batch(&self, w: &[f64], columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.spec.hvp_batch(w, &self.train, columns)
    }

    fn batch_gradient(&self, w: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
        self.spec.loss_gradient_on(w, &self.train, indices).map(|(_, g)| g)
    }

    fn report(&self, w: &[f64]) -> Result<Report> {
        let (loss, train_acc) = self.spec.loss_accuracy(w, &self.train)?;
        let test_acc = match &self.test {
            Some(t) => Some(self.spec.loss_accuracy(w, t)?.1),
            None => None,
        };
        Ok(Report {
            loss,
            train_acc,
            test_acc,
        })
    }
}

// ---------------------------------------------------------------------------
// Quadratic

/// `F(w) = ½ wᵀA w − bᵀw` with symmetric positive definite `A`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    a: DenseMatrix,
    b: Vec<f64>,
    lambda_min: f64,
}

impl QuadraticObjective {
    pub fn new(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        a.check_symmetric()?;
        check_dim(a.rows(), &b)?;
        let eig = kernels::sym_eig(&a)?;
        let lambda_min = eig.values[0];
        if !(lambda_min > 0.0) {
            return Err(ObjectiveError::Precondition(format!(
                "quadratic matrix is not positive definite (λ_min = {lambda_min:e})"
            )));
        }
        Ok(Self { a, b, lambda_min })
    }

    /// Random `A = Q diag(λ) Qᵀ` with log-spaced eigenvalues in
    /// `[1, condition]` and standard-normal `b`.
    pub fn random(d: usize, condition: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, Stream::Data);
        let a = random_spd(&mut rng, d, condition);
        let b = rng::normal_vec(&mut rng, d);
        Self::new(a, b)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn minimizer(&self) -> Result<Vec<f64>> {
        Ok(kernels::solve_dense(&self.a, &self.b)?)
    }
}

/// `Q diag(λ) Qᵀ` with `Q` from Gram–Schmidt on a Gaussian matrix and
/// eigenvalues log-spaced over `[1, condition]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize, condition: f64) -> DenseMatrix {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v = rng::normal_vec(rng, d);
        for u in &q {
            let c = kernels::dot(u, &v);
            kernels::axpy(-c, u, &mut v);
        }
        let n = kernels::norm(&v);
        if n > 1e-8 {
            q.push(kernels::scale(1.0 / n, &v));
        }
    }
    let mut a = DenseMatrix::zeros(d, d);
    for (k, u) in q.iter().enumerate() {
        let t = if d > 1 { k as f64 / (d - 1) as f64 } else { 0.0 };
        let lambda = condition.powf(t);
        a.rank1_update(lambda, u, u);
    }
    a.symmetrize();
    a
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), w)?;
        let aw = self.a.matvec(w);
        let f = 0.5 * kernels::dot(w, &aw) - kernels::dot(&self.b, w);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(ObjectiveError::NonFinite)
        }
    }

    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), w)?;
        let aw = self.a.matvec(w);
        let f = 0.5 * kernels::dot(w, &aw) - kernels::dot(&self.b, w);
        if !f.is_finite() {
            return Err(ObjectiveError::NonFinite);
        }
        Ok((f, kernels::sub(&aw, &self.b)))
    }

    fn hvp(&self, w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), w)?;
        check_dim(self.dim(), v)?;
        Ok(self.a.matvec(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_data() -> Dataset {
        Dataset::new(vec![0.3, -0.2, -0.5, 0.8], 2, vec![0, 1], 2).unwrap()
    }

    #[test]
    fn zero_weights_give_ln2() {
        let spec = MlpSpec::new(vec![2, 2, 2, 2]).unwrap();
        let w = vec![0.0; spec.num_params()];
        let (loss, _) = spec.loss_accuracy(&w, &tiny_data()).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn hand_fixed_logits() {
        // no hidden layer, zero weights, bias (1, 0) → logits (1, 0)
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let w = vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let data = Dataset::new(vec![0.7, -0.1], 2, vec![0], 2).unwrap();
        let (loss, acc) = spec.loss_accuracy(&w, &data).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 0.3133).abs() < 1e-4);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let err = spec.loss_accuracy(&[0.0; 5], &tiny_data()).unwrap_err();
        assert_eq!(
            err,
            ObjectiveError::Dimension {
                expected: 6,
                found: 5
            }
        );
    }

    #[test]
    fn overflow_names_the_sample() {
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let w = vec![f64::INFINITY, 0.0, 0.0, 0.0, 0.0, 0.0];
        let err = spec.loss_accuracy(&w, &tiny_data()).unwrap_err();
        assert!(matches!(err, ObjectiveError::NumericOverflow { sample: 0 }));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], 2, vec![], 2).is_err());
        assert!(Dataset::new(vec![0.0, 1.0], 2, vec![2], 2).is_err());
        assert!(Dataset::new(vec![0.0, f64::NAN], 2, vec![0], 2).is_err());
        assert!(Dataset::new(vec![0.0, 1.0, 2.0], 2, vec![0], 2).is_err());
    }

    #[test]
    fn init_params_zero_scale_and_determinism() {
        let spec = MlpSpec::new(vec![2, 2, 2, 2, 2, 2, 2]).unwrap();
        let w = init_params(&spec, 7, 0.0);
        assert_eq!(w.len(), 36);
        assert!(w.iter().all(|&x| x == 0.0));
        assert_eq!(init_params(&spec, 7, 0.5), init_params(&spec, 7, 0.5));
        assert!(init_params(&spec, 7, 0.5).iter().all(|x| x.abs() <= 0.5));
        assert_ne!(init_params(&spec, 7, 0.5), init_params(&spec, 8, 0.5));
    }

    #[test]
    fn quadratic_basics() {
        let q = QuadraticObjective::new(DenseMatrix::identity(3), vec![0.0; 3]).unwrap();
        assert_eq!(q.gradient(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        assert_eq!(q.minimizer().unwrap(), vec![0.0; 3]);

        let q = QuadraticObjective::new(DenseMatrix::from_diag(&[2.0, 5.0]), vec![2.0, 5.0]).unwrap();
        assert_eq!(q.minimizer().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn quadratic_rejects_indefinite_and_asymmetric() {
        let indefinite = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            QuadraticObjective::new(indefinite, vec![0.0, 0.0]),
            Err(ObjectiveError::Precondition(_))
        ));
        let asym = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(QuadraticObjective::new(asym, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn full_hessian_of_quadratic_is_its_matrix() {
        let q = QuadraticObjective::random(6, 10.0, 3).unwrap();
        let h = full_hessian(&q, &[0.1; 6]).unwrap();
        let mut a = q.matrix().clone();
        a.symmetrize();
        assert_eq!(h, a);
        assert_eq!(h.asymmetry(), 0.0);
    }

    #[test]
    fn full_hessian_guard() {
        struct Huge;
        impl Objective for Huge {
            fn dim(&self) -> usize {
                DENSE_GUARD + 1
            }
            fn value(&self, _: &[f64]) -> Result<f64> {
                Ok(0.0)
            }
            fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
                Ok((0.0, vec![0.0; w.len()]))
            }
            fn hvp(&self, _: &[f64], v: &[f64]) -> Result<Vec<f64>> {
                Ok(vec![0.0; v.len()])
            }
        }
        assert!(matches!(
            full_hessian(&Huge, &[]),
            Err(ObjectiveError::TooLarge { .. })
        ));
    }
}
