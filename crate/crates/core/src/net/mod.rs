//! A PointNet-style classifier: a shared per-point MLP, a feature-wise max
//! pool over points, and a small MLP head ending in a softmax.
//!
//! Forward and backward passes are written out by hand. Because the max pool
//! routes each channel's gradient to a single point, only the "critical"
//! points selected by at least one channel ever receive gradient, and the
//! backward pass works on those rows alone.

mod adam;
mod checkpoint;
mod train;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, PointCloud};

pub use adam::{AdamState, Direction};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{accuracy, random_rotation, rotate_point, train, EpochStats, TrainConfig};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("cloud is empty")]
    EmptyCloud,
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `inputs × outputs`, applied as `x · W + b`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| rng.gen_range(-limit..limit));
        Layer {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Layer widths of the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Widths of the shared per-point MLP, starting with the input width 3.
    pub point_widths: Vec<usize>,
    /// Widths of the head, starting with the pooled feature width and ending
    /// with the number of classes.
    pub head_widths: Vec<usize>,
}

impl Architecture {
    /// 3→32→64→128, max pool, 128→64→`classes`.
    pub fn standard(classes: usize) -> Self {
        Architecture {
            point_widths: vec![3, 32, 64, 128],
            head_widths: vec![128, 64, classes],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub point_mlp: Vec<Layer>,
    pub head: Vec<Layer>,
}

/// Per-point saliency scores; see [`ClassifierParams::saliency`].
pub type SaliencyVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyKind {
    /// Max over classes of the per-point gradient norm of that class's
    /// probability. Used by the salient-point-removal defense.
    Probability,
    /// Per-point norm of the cross-entropy gradient. Used inside attacks.
    Loss,
}

/// Output of a forward pass plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// For each pooled channel, the index of the point that won the max
    /// (lowest index on ties).
    pub argmax: Vec<usize>,
    point_acts: Vec<Array2<f64>>,
    head_acts: Vec<Array1<f64>>,
}

impl Forward {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }

    /// Sorted indices of points selected by at least one pooled channel.
    pub fn critical_points(&self) -> Vec<usize> {
        let mut rows = self.argmax.clone();
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `-ln(probs[y])` with the probability clamped to at least 1e-12.
pub fn cross_entropy(probs: &[f64], y: usize) -> f64 {
    -probs[y].max(1e-12).ln()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn cloud_matrix(cloud: &PointCloud) -> Array2<f64> {
    let mut x = Array2::zeros((cloud.len(), 3));
    for (mut row, p) in x.rows_mut().into_iter().zip(cloud.iter()) {
        row[0] = p.x;
        row[1] = p.y;
        row[2] = p.z;
    }
    x
}

impl ClassifierParams {
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch_check(arch)?;
        let build = |w: &[usize], rng: &mut R| {
            w.windows(2)
                .map(|p| Layer::glorot(p[0], p[1], rng))
                .collect::<Vec<_>>()
        };
        let point_mlp = build(&arch.point_widths, rng);
        let head = build(&arch.head_widths, rng);
        Ok(ClassifierParams { point_mlp, head })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch_check(arch)?;
        let build = |w: &[usize]| w.windows(2).map(|p| Layer::zeros(p[0], p[1])).collect::<Vec<_>>();
        Ok(ClassifierParams {
            point_mlp: build(&arch.point_widths),
            head: build(&arch.head_widths),
        })
    }

    pub fn architecture(&self) -> Architecture {
        let widths = |layers: &[Layer]| {
            let mut w = vec![layers[0].inputs()];
            w.extend(layers.iter().map(Layer::outputs));
            w
        };
        Architecture {
            point_widths: widths(&self.point_mlp),
            head_widths: widths(&self.head),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.head.last().map_or(0, Layer::outputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_mlp.is_empty() || self.head.is_empty() {
            return Err(NetError::Architecture("missing layers".into()));
        }
        arch_check(&self.architecture())?;
        let chain = |layers: &[Layer]| layers.windows(2).all(|w| w[0].outputs() == w[1].inputs());
        if !chain(&self.point_mlp) || !chain(&self.head) {
            return Err(NetError::Architecture("inconsistent layer shapes".into()));
        }
        for l in self.point_mlp.iter().chain(&self.head) {
            if l.bias.len() != l.outputs() {
                return Err(NetError::Architecture("bias width".into()));
            }
            if !l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(NetError::Architecture("non-finite parameter".into()));
            }
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.point_mlp.iter().chain(self.head.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.point_mlp.iter_mut().chain(self.head.iter_mut())
    }

    /// All weights and biases, layer by layer (weights row-major, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in self.layers() {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(NetError::ShapeMismatch {
                expected: self.num_parameters(),
                found: flat.len(),
            });
        }
        let mut it = flat.iter();
        for l in self.layers_mut() {
            for w in l.weight.iter_mut() {
                *w = *it.next().unwrap();
            }
            for b in l.bias.iter_mut() {
                *b = *it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &ClassifierParams) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers_mut() {
            l.weight *= s;
            l.bias *= s;
        }
    }

    pub fn forward(&self, cloud: &PointCloud) -> Result<Forward> {
        if cloud.is_empty() {
            return Err(NetError::EmptyCloud);
        }
        let mut point_acts = Vec::with_capacity(self.point_mlp.len() + 1);
        point_acts.push(cloud_matrix(cloud));
        for (li, l) in self.point_mlp.iter().enumerate() {
            let mut h = point_acts.last().unwrap().dot(&l.weight);
            h += &l.bias;
            h.mapv_inplace(|v| v.max(0.0));
            if !h.iter().all(|v| v.is_finite()) {
                return Err(NetError::NonFinite { layer: li });
            }
            point_acts.push(h);
        }
        let last = point_acts.last().unwrap();
        let channels = last.ncols();
        let mut pooled = Array1::from_elem(channels, f64::NEG_INFINITY);
        let mut winners = vec![0usize; channels];
        for (i, row) in last.rows().into_iter().enumerate() {
            for c in 0..channels {
                if row[c] > pooled[c] {
                    pooled[c] = row[c];
                    winners[c] = i;
                }
            }
        }
        let mut head_acts = Vec::with_capacity(self.head.len());
        let mut a = pooled;
        for (li, l) in self.head.iter().enumerate() {
            let mut z = a.dot(&l.weight);
            z += &l.bias;
            if li + 1 < self.head.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(NetError::NonFinite {
                    layer: self.point_mlp.len() + li,
                });
            }
            head_acts.push(a);
            a = z;
        }
        let logits = a.to_vec();
        let probs = softmax(&logits);
        Ok(Forward {
            logits,
            probs,
            argmax: winners,
            point_acts,
            head_acts,
        })
    }

    pub fn predict(&self, cloud: &PointCloud) -> Result<usize> {
        Ok(self.forward(cloud)?.predicted())
    }

    /// Backpropagates `dlogits` through a cached forward pass. Returns the
    /// parameter gradient (when requested) and the gradient for every input
    /// point; non-critical points get exactly zero.
    pub fn backward(&self, fwd: &Forward, dlogits: &[f64], want_params: bool) -> (Option<ClassifierParams>, Vec<Point3>) {
        let mut grads = want_params.then(|| ClassifierParams {
            point_mlp: self.point_mlp.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect(),
            head: self.head.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect(),
        });

        let mut d = Array1::from_vec(dlogits.to_vec());
        for li in (0..self.head.len()).rev() {
            let l = &self.head[li];
            let input = &fwd.head_acts[li];
            if let Some(g) = grads.as_mut() {
                let gl = &mut g.head[li];
                for (i, &a) in input.iter().enumerate() {
                    if a != 0.0 {
                        gl.weight.row_mut(i).scaled_add(a, &d);
                    }
                }
                gl.bias.assign(&d);
            }
            let mut da = l.weight.dot(&d);
            if li > 0 {
                da.zip_mut_with(input, |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            d = da;
        }

        // route pooled gradient to the winning rows
        let rows = fwd.critical_points();
        let n = fwd.point_acts[0].nrows();
        let mut input_grad = vec![Point3::ZERO; n];
        if rows.is_empty() {
            return (grads, input_grad);
        }
        let channels = d.len();
        let mut dh = Array2::<f64>::zeros((rows.len(), channels));
        for c in 0..channels {
            let r = rows.binary_search(&fwd.argmax[c]).unwrap();
            dh[[r, c]] += d[c];
        }
        for li in (0..self.point_mlp.len()).rev() {
            let l = &self.point_mlp[li];
            let out = fwd.point_acts[li + 1].select(Axis(0), &rows);
            dh.zip_mut_with(&out, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
            let input = fwd.point_acts[li].select(Axis(0), &rows);
            if let Some(g) = grads.as_mut() {
                let gl = &mut g.point_mlp[li];
                gl.weight = input.t().dot(&dh);
                gl.bias = dh.sum_axis(Axis(0));
            }
            dh = dh.dot(&l.weight.t());
        }
        for (k, &r) in rows.iter().enumerate() {
            input_grad[r] = Point3::new(dh[[k, 0]], dh[[k, 1]], dh[[k, 2]]);
        }
        (grads, input_grad)
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.num_classes() {
            return Err(NetError::BadLabel {
                label: y,
                classes: self.num_classes(),
            });
        }
        Ok(())
    }

    /// Cross-entropy loss and its gradient with respect to every input
    /// coordinate.
    pub fn loss_and_input_gradient(&self, cloud: &PointCloud, y: usize) -> Result<(f64, Vec<Point3>, Forward)> {
        self.check_label(y)?;
        let fwd = self.forward(cloud)?;
        let mut dlogits = fwd.probs.clone();
        dlogits[y] -= 1.0;
        let (_, g) = self.backward(&fwd, &dlogits, false);
        Ok((cross_entropy(&fwd.probs, y), g, fwd))
    }

    pub fn input_gradient(&self, cloud: &PointCloud, y: usize) -> Result<Vec<Point3>> {
        Ok(self.loss_and_input_gradient(cloud, y)?.1)
    }

    /// Cross-entropy loss and its gradient with respect to the parameters.
    pub fn loss_and_param_gradient(&self, cloud: &PointCloud, y: usize) -> Result<(f64, ClassifierParams, Forward)> {
        self.check_label(y)?;
        let fwd = self.forward(cloud)?;
        let mut dlogits = fwd.probs.clone();
        dlogits[y] -= 1.0;
        let (g, _) = self.backward(&fwd, &dlogits, true);
        Ok((cross_entropy(&fwd.probs, y), g.unwrap(), fwd))
    }

    /// Gradient of class `j`'s probability with respect to the inputs.
    pub fn probability_gradient(&self, fwd: &Forward, j: usize) -> Vec<Point3> {
        let p = &fwd.probs;
        let dlogits: Vec<f64> = (0..p.len())
            .map(|k| p[j] * (f64::from(u8::from(k == j)) - p[k]))
            .collect();
        self.backward(fwd, &dlogits, false).1
    }

    /// Per-point saliency. `Loss` needs the true label `y`; `Probability`
    /// ignores it.
    pub fn saliency(&self, cloud: &PointCloud, kind: SaliencyKind, y: usize) -> Result<SaliencyVector> {
        match kind {
            SaliencyKind::Loss => Ok(self
                .input_gradient(cloud, y)?
                .into_iter()
                .map(Point3::norm)
                .collect()),
            SaliencyKind::Probability => {
                let fwd = self.forward(cloud)?;
                let mut s = vec![0.0f64; cloud.len()];
                for j in 0..self.num_classes() {
                    for (si, g) in s.iter_mut().zip(self.probability_gradient(&fwd, j)) {
                        *si = (*si).max(g.norm());
                    }
                }
                Ok(s)
            }
        }
    }
}

fn arch_check(arch: &Architecture) -> Result<()> {
    if arch.point_widths.len() < 2 || arch.point_widths[0] != 3 {
        return Err(NetError::Architecture("point MLP must start at width 3".into()));
    }
    if arch.head_widths.len() < 2 || arch.head_widths[0] != *arch.point_widths.last().unwrap() {
        return Err(NetError::Architecture("head must start at the pooled width".into()));
    }
    if *arch.head_widths.last().unwrap() < 2 {
        return Err(NetError::Architecture("need at least two classes".into()));
    }
    if arch.point_widths.iter().chain(&arch.head_widths).any(|&w| w == 0) {
        return Err(NetError::Architecture("zero-width layer".into()));
    }
    Ok(())
}
