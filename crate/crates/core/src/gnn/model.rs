use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Graph, Normalization, Propagation};
use crate::matrix::{argmax, softmax_into, Matrix};
use crate::par;

const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Stacked graph convolutions over the symmetric-normalized adjacency.
    Gcn,
    /// `sgc_k` parameter-free propagation steps followed by a linear head.
    Sgc,
    /// Separate root and mean-neighborhood weights per layer.
    SageMean,
}

impl Architecture {
    pub fn normalization(self) -> Normalization {
        match self {
            Architecture::Gcn | Architecture::Sgc => Normalization::GcnSymmetric,
            Architecture::SageMean => Normalization::Mean,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Hidden widths for gcn and sage_mean; unused by sgc.
    pub hidden_dims: Vec<usize>,
    /// Normalizes hidden layers (gcn, sage_mean). sgc has no hidden layer.
    pub use_layernorm: bool,
    pub sgc_k: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::gcn_layernorm()
    }
}

impl ModelSpec {
    pub fn gcn_layernorm() -> Self {
        ModelSpec {
            architecture: Architecture::Gcn,
            hidden_dims: vec![32, 16],
            use_layernorm: true,
            sgc_k: 2,
            activation: Activation::Relu,
            dropout_rate: 0.1,
        }
    }

    /// Surrogate widths used at full scale.
    pub fn gcn_layernorm_large() -> Self {
        ModelSpec {
            hidden_dims: vec![256, 128, 64],
            ..ModelSpec::gcn_layernorm()
        }
    }

    pub fn sgc() -> Self {
        ModelSpec {
            architecture: Architecture::Sgc,
            hidden_dims: vec![],
            use_layernorm: false,
            sgc_k: 3,
            ..ModelSpec::gcn_layernorm()
        }
    }

    pub fn sage_mean() -> Self {
        ModelSpec {
            architecture: Architecture::SageMean,
            hidden_dims: vec![32],
            use_layernorm: false,
            ..ModelSpec::gcn_layernorm()
        }
    }

    pub fn check(&self) -> Result<()> {
        match self.architecture {
            Architecture::Sgc if self.sgc_k == 0 => {
                return Err(Error::Config("sgc_k must be at least 1".into()))
            }
            Architecture::Gcn | Architecture::SageMean if self.hidden_dims.is_empty() => {
                return Err(Error::Config("gcn and sage_mean need at least one hidden layer".into()))
            }
            _ => {}
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    /// Number of message-passing hops a prediction depends on.
    pub fn receptive_hops(&self) -> usize {
        match self.architecture {
            Architecture::Sgc => self.sgc_k,
            _ => self.hidden_dims.len() + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `in x out`; the neighborhood weight for sage_mean.
    pub weight: Matrix,
    /// `in x out`, sage_mean only.
    pub root_weight: Option<Matrix>,
    pub bias: Vec<f64>,
    pub norm: Option<LayerNorm>,
}

impl Layer {
    fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
        Matrix::from_vec(fan_in, fan_out, data).expect("sized")
    }

    fn param_len(&self) -> usize {
        self.weight.as_slice().len()
            + self.root_weight.as_ref().map_or(0, |w| w.as_slice().len())
            + self.bias.len()
            + self.norm.as_ref().map_or(0, |n| 2 * n.gain.len())
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.weight.as_slice()];
        if let Some(w) = &self.root_weight {
            out.push(w.as_slice());
        }
        out.push(&self.bias);
        if let Some(n) = &self.norm {
            out.push(&n.gain);
            out.push(&n.offset);
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.weight.as_mut_slice()];
        if let Some(w) = &mut self.root_weight {
            out.push(w.as_mut_slice());
        }
        out.push(&mut self.bias);
        if let Some(n) = &mut self.norm {
            out.push(&mut n.gain);
            out.push(&mut n.offset);
        }
        out
    }
}

/// A trained (or freshly initialized) GNN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<Layer>,
}

impl Model {
    /// Glorot-uniform weights, zero biases, unit layernorm gains.
    pub fn init(spec: &ModelSpec, input_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        spec.check()?;
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::Dimension("model needs positive input and class counts".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths: Vec<usize> = match spec.architecture {
            Architecture::Sgc => vec![input_dim, num_classes],
            _ => std::iter::once(input_dim)
                .chain(spec.hidden_dims.iter().copied())
                .chain(std::iter::once(num_classes))
                .collect(),
        };
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weight = Layer::glorot(&mut rng, fan_in, fan_out);
                let root_weight = (spec.architecture == Architecture::SageMean)
                    .then(|| Layer::glorot(&mut rng, fan_in, fan_out));
                let hidden = l + 1 < n_layers;
                let norm = (hidden && spec.use_layernorm).then(|| LayerNorm {
                    gain: vec![1.0; fan_out],
                    offset: vec![0.0; fan_out],
                });
                Layer {
                    weight,
                    root_weight,
                    bias: vec![0.0; fan_out],
                    norm,
                }
            })
            .collect();
        Ok(Model {
            spec: spec.clone(),
            input_dim,
            num_classes,
            layers,
        })
    }

    pub fn param_len(&self) -> usize {
        self.layers.iter().map(Layer::param_len).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for layer in &self.layers {
            for s in layer.slices() {
                out.extend_from_slice(s);
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_len());
        let mut at = 0;
        for layer in &mut self.layers {
            for s in layer.slices_mut() {
                s.copy_from_slice(&flat[at..at + s.len()]);
                at += s.len();
            }
        }
    }

    /// Named parameter tensors with their shapes, in flat order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let (r, c) = layer.weight.shape();
            out.push((format!("layer{l}.weight"), vec![r, c], layer.weight.as_slice()));
            if let Some(w) = &layer.root_weight {
                out.push((format!("layer{l}.root_weight"), vec![r, c], w.as_slice()));
            }
            out.push((format!("layer{l}.bias"), vec![c], &layer.bias[..]));
            if let Some(n) = &layer.norm {
                out.push((format!("layer{l}.ln_gain"), vec![c], &n.gain[..]));
                out.push((format!("layer{l}.ln_offset"), vec![c], &n.offset[..]));
            }
        }
        out
    }
}

/// Class probabilities and argmax labels for every node.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: Matrix,
    pub labels: Vec<usize>,
}

impl Prediction {
    pub fn from_logits(logits: &Matrix) -> Self {
        let mut probabilities = Matrix::zeros(logits.rows(), logits.cols());
        let cols = logits.cols();
        par::rows_mut(probabilities.as_mut_slice(), cols, |v, row| softmax_into(logits.row(v), row));
        let labels = probabilities.iter_rows().map(argmax).collect();
        Prediction {
            probabilities,
            labels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Eval,
    Train { dropout: f64, seed: u64 },
}

/// Propagation operator of one graph for one architecture, with its
/// transpose for the backward pass.
#[derive(Clone, Debug)]
pub struct GraphOps {
    pub(crate) prop: Propagation,
    pub(crate) prop_t: Propagation,
}

impl GraphOps {
    pub fn new(graph: &Graph, architecture: Architecture) -> Self {
        let prop = graph.normalize(architecture.normalization());
        let prop_t = match architecture.normalization() {
            // symmetric already
            Normalization::GcnSymmetric => prop.clone(),
            Normalization::Mean => prop.transpose(),
        };
        GraphOps { prop, prop_t }
    }
}

struct LayerTrace {
    /// Layer input after dropout.
    input: Matrix,
    /// Dropout multipliers applied to the input, if any.
    mask: Option<Vec<f64>>,
    /// sgc only: the input after `k` propagation steps.
    propagated: Option<Matrix>,
    /// Normalized pre-activations and per-row inverse std when layernorm is on.
    xhat: Option<Matrix>,
    inv_std: Option<Vec<f64>>,
    /// Output of the layer (after activation for hidden layers).
    output: Matrix,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardTrace {
    layers: Vec<LayerTrace>,
    pub logits: Matrix,
}

pub(crate) fn check_input(model: &Model, features: &Matrix, n: usize) -> Result<()> {
    if features.cols() != model.input_dim {
        return Err(Error::Dimension(format!(
            "features have {} columns, model expects {}",
            features.cols(),
            model.input_dim
        )));
    }
    if features.rows() != n {
        return Err(Error::Dimension(format!("{} feature rows for {n} nodes", features.rows())));
    }
    Ok(())
}

pub(crate) fn forward_trace(
    model: &Model,
    ops: &GraphOps,
    features: &Matrix,
    mode: Mode,
) -> ForwardTrace {
    let mut rng = match mode {
        Mode::Train { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Eval => None,
    };
    let dropout = match mode {
        Mode::Train { dropout, .. } if dropout > 0.0 => Some(dropout),
        _ => None,
    };
    let n_layers = model.layers.len();
    let mut traces = Vec::with_capacity(n_layers);
    let mut h = features.clone();
    for (l, layer) in model.layers.iter().enumerate() {
        let hidden = l + 1 < n_layers;
        let mask = dropout.map(|p| {
            let rng = rng.as_mut().expect("train mode has an rng");
            let keep = 1.0 / (1.0 - p);
            (0..h.as_slice().len())
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect::<Vec<f64>>()
        });
        if let Some(m) = &mask {
            for (x, s) in h.as_mut_slice().iter_mut().zip(m) {
                *x *= s;
            }
        }
        let mut propagated = None;
        let mut z = match model.spec.architecture {
            Architecture::Gcn => ops.prop.apply(&h.matmul(&layer.weight)),
            Architecture::Sgc => {
                let mut x = h.clone();
                for _ in 0..model.spec.sgc_k {
                    x = ops.prop.apply(&x);
                }
                let z = x.matmul(&layer.weight);
                propagated = Some(x);
                z
            }
            Architecture::SageMean => {
                let mut z = h.matmul(layer.root_weight.as_ref().expect("sage root weight"));
                z.add_assign(&ops.prop.apply(&h.matmul(&layer.weight)));
                z
            }
        };
        z.add_row_vector(&layer.bias);

        let (mut out, xhat, inv_std) = match &layer.norm {
            Some(norm) => {
                let (xhat, inv_std) = layernorm_forward(&z);
                let mut u = xhat.clone();
                let cols = u.cols();
                par::rows_mut(u.as_mut_slice(), cols, |_, row| {
                    for ((x, g), o) in row.iter_mut().zip(&norm.gain).zip(&norm.offset) {
                        *x = *x * g + o;
                    }
                });
                (u, Some(xhat), Some(inv_std))
            }
            None => (z, None, None),
        };
        if hidden {
            match model.spec.activation {
                Activation::Relu => out.map_inplace(|x| x.max(0.0)),
            }
        }
        traces.push(LayerTrace {
            input: std::mem::replace(&mut h, out.clone()),
            mask,
            propagated,
            xhat,
            inv_std,
            output: out,
        });
    }
    ForwardTrace {
        layers: traces,
        logits: h,
    }
}

fn layernorm_forward(z: &Matrix) -> (Matrix, Vec<f64>) {
    let (n, d) = z.shape();
    let mut xhat = Matrix::zeros(n, d);
    let mut inv_std = vec![0.0; n];
    for v in 0..n {
        let row = z.row(v);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LAYERNORM_EPS).sqrt();
        inv_std[v] = is;
        for (o, x) in xhat.row_mut(v).iter_mut().zip(row) {
            *o = (x - mean) * is;
        }
    }
    (xhat, inv_std)
}

/// Gradients produced by [`backward`].
pub struct Gradients {
    /// Flat parameter gradient in [`Model::flat_params`] order.
    pub params: Option<Vec<f64>>,
    /// Gradient w.r.t. the requested input rows, in request order.
    pub input_rows: Option<Matrix>,
}

/// Reverse pass from `dlogits`. Parameter gradients are computed when
/// `want_params`; input gradients only for `input_rows`.
pub(crate) fn backward(
    model: &Model,
    ops: &GraphOps,
    trace: &ForwardTrace,
    dlogits: Matrix,
    want_params: bool,
    input_rows: Option<&[usize]>,
) -> Gradients {
    let n_layers = model.layers.len();
    let mut layer_grads: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_layers];
    let mut grad_out = dlogits;
    let mut input_grad = None;

    for l in (0..n_layers).rev() {
        let layer = &model.layers[l];
        let t = &trace.layers[l];
        let hidden = l + 1 < n_layers;
        let first = l == 0;

        if hidden {
            match model.spec.activation {
                Activation::Relu => {
                    for (g, &o) in grad_out.as_mut_slice().iter_mut().zip(t.output.as_slice()) {
                        if o <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
            }
        }

        let mut norm_grads = None;
        let grad_out_l = std::mem::replace(&mut grad_out, Matrix::zeros(0, 0));
        let dz = match (&layer.norm, &t.xhat, &t.inv_std) {
            (Some(norm), Some(xhat), Some(inv_std)) => {
                if want_params {
                    let d = xhat.cols();
                    let mut dgain = vec![0.0; d];
                    let mut doffset = vec![0.0; d];
                    for v in 0..xhat.rows() {
                        for (j, (&g, &x)) in grad_out_l.row(v).iter().zip(xhat.row(v)).enumerate() {
                            dgain[j] += g * x;
                            doffset[j] += g;
                        }
                    }
                    norm_grads = Some((dgain, doffset));
                }
                layernorm_backward(&grad_out_l, xhat, inv_std, &norm.gain)
            }
            _ => grad_out_l,
        };

        // Only the first layer's input gradient restricted to `input_rows` is needed.
        let need_input = !first || input_rows.is_some();
        let rows_filter = if first { input_rows } else { None };

        let mut grads_here = Vec::new();
        let d_input: Option<Matrix> = match model.spec.architecture {
            Architecture::Gcn => {
                let dt = ops.prop_t.apply(&dz);
                if want_params {
                    grads_here.push(t.input.t_matmul(&dt).into_vec());
                }
                need_input.then(|| match rows_filter {
                    Some(rows) => dt.select_rows(rows).matmul_t(&layer.weight),
                    None => dt.matmul_t(&layer.weight),
                })
            }
            Architecture::Sgc => {
                let x = t.propagated.as_ref().expect("sgc trace");
                if want_params {
                    grads_here.push(x.t_matmul(&dz).into_vec());
                }
                need_input.then(|| {
                    let mut g = dz.matmul_t(&layer.weight);
                    let k = model.spec.sgc_k;
                    for step in 0..k {
                        g = match rows_filter {
                            Some(rows) if step + 1 == k => ops.prop_t.apply_rows(&g, rows),
                            _ => ops.prop_t.apply(&g),
                        };
                    }
                    g
                })
            }
            Architecture::SageMean => {
                let root = layer.root_weight.as_ref().expect("sage root weight");
                let dt = ops.prop_t.apply(&dz);
                if want_params {
                    grads_here.push(t.input.t_matmul(&dt).into_vec());
                    grads_here.push(t.input.t_matmul(&dz).into_vec());
                }
                need_input.then(|| match rows_filter {
                    Some(rows) => {
                        let mut g = dz.select_rows(rows).matmul_t(root);
                        g.add_assign(&dt.select_rows(rows).matmul_t(&layer.weight));
                        g
                    }
                    None => {
                        let mut g = dz.matmul_t(root);
                        g.add_assign(&dt.matmul_t(&layer.weight));
                        g
                    }
                })
            }
        };
        if want_params {
            grads_here.push(dz.column_sums());
            if let Some((dg, doff)) = norm_grads {
                grads_here.push(dg);
                grads_here.push(doff);
            }
            layer_grads[l] = grads_here;
        }

        let Some(mut d_in) = d_input else { break };
        if let Some(mask) = &t.mask {
            let cols = d_in.cols();
            match rows_filter {
                Some(rows) => {
                    for (i, &v) in rows.iter().enumerate() {
                        for (g, s) in d_in.row_mut(i).iter_mut().zip(&mask[v * cols..(v + 1) * cols]) {
                            *g *= s;
                        }
                    }
                }
                None => {
                    for (g, s) in d_in.as_mut_slice().iter_mut().zip(mask) {
                        *g *= s;
                    }
                }
            }
        }
        if first {
            input_grad = Some(d_in);
        } else {
            grad_out = d_in;
        }
    }

    let params = want_params.then(|| layer_grads.into_iter().flatten().flatten().collect());
    Gradients {
        params,
        input_rows: input_grad,
    }
}

fn layernorm_backward(du: &Matrix, xhat: &Matrix, inv_std: &[f64], gain: &[f64]) -> Matrix {
    let (n, d) = du.shape();
    let mut dz = Matrix::zeros(n, d);
    let df = d as f64;
    par::rows_mut(dz.as_mut_slice(), d, |v, out| {
        let g = du.row(v);
        let xh = xhat.row(v);
        let mut sum = 0.0;
        let mut sum_x = 0.0;
        for j in 0..d {
            let dxh = g[j] * gain[j];
            sum += dxh;
            sum_x += dxh * xh[j];
        }
        for j in 0..d {
            let dxh = g[j] * gain[j];
            out[j] = inv_std[v] / df * (df * dxh - sum - xh[j] * sum_x);
        }
    });
    dz
}

/// Runs the model over a dataset.
pub fn forward(model: &Model, dataset: &Dataset, mode: Mode) -> Result<Prediction> {
    check_input(model, &dataset.features, dataset.num_nodes())?;
    let ops = GraphOps::new(&dataset.graph, model.spec.architecture);
    let trace = forward_trace(model, &ops, &dataset.features, mode);
    Ok(Prediction::from_logits(&trace.logits))
}

/// Eval-mode prediction; argmax ties go to the smallest class index.
pub fn predict_labels(model: &Model, dataset: &Dataset) -> Result<Prediction> {
    forward(model, dataset, Mode::Eval)
}

/// Logits only, eval mode.
pub fn logits(model: &Model, ops: &GraphOps, features: &Matrix) -> Result<Matrix> {
    check_input(model, features, ops.prop.num_nodes())?;
    Ok(forward_trace(model, ops, features, Mode::Eval).logits)
}
