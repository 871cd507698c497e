//! The grouped min-max ensemble model.
//!
//! A bag's `n x m` feature matrix is split column-wise into its extractor
//! groups. Every group — plus the full concatenation, which captures
//! cross-group interactions — is aligned to per-class evidence columns by a
//! grouped feature extraction block (a two-layer sigmoid MLP or a
//! single-head scaled dot-product attention block). A min-max layer keeps,
//! per class column, the `s` largest and `s` smallest instance scores; the
//! selected blocks are stacked, transposed, and classified by one small head
//! shared across the class rows. Gradients are computed analytically, and
//! through the selection layer they flow only to the selected entries.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bag::{FeatureBag, GroupLayout};
use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::matrix::{dropout_mask, linear_affine, row_softmax, sigmoid_map, Matrix};
use crate::optim::{Parameter, VisitParams};
use crate::rng::RngStream;

/// Which alignment block the model uses for every group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfebKind {
    Mlp,
    Attention,
}

/// Architecture hyperparameters. `selection_count` is the `s` of the min-max
/// layer; every bag must carry at least `2s` instances at forward time.
#[derive(Debug, Clone, PartialEq)]
pub struct GasMilConfig {
    pub layout: GroupLayout,
    pub num_classes: usize,
    pub selection_count: usize,
    pub gfeb_kind: GfebKind,
    pub mlp_hidden: usize,
    pub attn_feature_dim: usize,
    pub attn_dim: usize,
    pub head_hidden: usize,
    pub head_dropout: f64,
    /// The extra block over the full concatenation. Disabling it with a
    /// single group yields the classic single-extractor min-max baseline.
    pub include_concat_group: bool,
}

impl GasMilConfig {
    pub fn new(layout: GroupLayout, num_classes: usize) -> Self {
        GasMilConfig {
            layout,
            num_classes,
            selection_count: 20,
            gfeb_kind: GfebKind::Mlp,
            mlp_hidden: 192,
            attn_feature_dim: 512,
            attn_dim: 256,
            head_hidden: 96,
            head_dropout: 0.3,
            include_concat_group: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("at least 2 classes required"));
        }
        if self.selection_count == 0 {
            return Err(Error::config("selection count must be at least 1"));
        }
        if self.mlp_hidden == 0
            || self.attn_feature_dim == 0
            || self.attn_dim == 0
            || self.head_hidden == 0
        {
            return Err(Error::config("hidden dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return Err(Error::config(format!(
                "head dropout {} outside [0, 1)",
                self.head_dropout
            )));
        }
        Ok(())
    }

    /// Number of alignment blocks: one per group, plus the concatenation
    /// block when enabled.
    pub fn block_count(&self) -> usize {
        self.layout.group_count() + usize::from(self.include_concat_group)
    }

    /// Input width of block `g`; the concatenation block sees all columns.
    pub fn block_width(&self, g: usize) -> usize {
        if g < self.layout.group_count() {
            self.layout.group_dims()[g]
        } else {
            self.layout.total_width()
        }
    }

    /// Width of the assembled evidence rows: `2 * blocks * s`.
    pub fn selected_width(&self) -> usize {
        2 * self.block_count() * self.selection_count
    }

    pub fn min_instances(&self) -> usize {
        2 * self.selection_count
    }
}

/// A weight matrix with its broadcast bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePair {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl AffinePair {
    fn glorot(input: usize, output: usize, rng: &mut RngStream) -> Self {
        AffinePair {
            weight: Parameter::glorot(input, output, rng),
            bias: Parameter::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        linear_affine(x, &self.weight.value, &self.bias.value)
    }

    /// Accumulates weight/bias gradients for the recorded input `x` and
    /// returns the gradient with respect to `x`.
    fn backward(&mut self, x: &Matrix, d_out: &Matrix) -> Result<Matrix> {
        self.weight.add_grad(&x.matmul_tn(d_out)?)?;
        self.bias.add_grad(&d_out.column_sums())?;
        d_out.matmul_nt(&self.weight.value)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        f(&format!("{prefix}.weight"), &self.weight);
        f(&format!("{prefix}.bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}

/// Weights of one alignment block.
#[derive(Debug, Clone, PartialEq)]
pub enum GfebParams {
    Mlp {
        fc1: AffinePair,
        fc2: AffinePair,
    },
    Attention {
        proj: AffinePair,
        query: AffinePair,
        key: AffinePair,
        value: AffinePair,
        out: AffinePair,
    },
}

impl GfebParams {
    pub(crate) fn init(kind: GfebKind, input: usize, evidence: usize, cfg: &GasMilConfig, rng: &mut RngStream) -> Self {
        match kind {
            GfebKind::Mlp => GfebParams::Mlp {
                fc1: AffinePair::glorot(input, cfg.mlp_hidden, rng),
                fc2: AffinePair::glorot(cfg.mlp_hidden, evidence, rng),
            },
            GfebKind::Attention => GfebParams::Attention {
                proj: AffinePair::glorot(input, cfg.attn_feature_dim, rng),
                query: AffinePair::glorot(cfg.attn_feature_dim, cfg.attn_dim, rng),
                key: AffinePair::glorot(cfg.attn_feature_dim, cfg.attn_dim, rng),
                value: AffinePair::glorot(cfg.attn_feature_dim, cfg.attn_feature_dim, rng),
                out: AffinePair::glorot(cfg.attn_feature_dim, evidence, rng),
            },
        }
    }

    fn input_width(&self) -> usize {
        match self {
            GfebParams::Mlp { fc1, .. } => fc1.weight.rows(),
            GfebParams::Attention { proj, .. } => proj.weight.rows(),
        }
    }

    /// Aligns `n x m_g` group features to `n x evidence` scores.
    pub fn forward(&self, a: &Matrix) -> Result<(Matrix, GfebTrace)> {
        match self {
            GfebParams::Mlp { fc1, fc2 } => {
                let hidden = sigmoid_map(&fc1.forward(a)?);
                let b = fc2.forward(&hidden)?;
                Ok((b, GfebTrace::Mlp { hidden }))
            }
            GfebParams::Attention {
                proj,
                query,
                key,
                value,
                out,
            } => {
                let x = proj.forward(a)?;
                let q = query.forward(&x)?;
                let k = key.forward(&x)?;
                let v = value.forward(&x)?;
                let scale = 1.0 / crate::math::sqrt(q.cols() as f64);
                let mut logits = q.matmul_nt(&k)?;
                logits.scale_assign(scale);
                let weights = row_softmax(&logits);
                let context = weights.matmul(&v)?;
                let b = out.forward(&context)?;
                Ok((
                    b,
                    GfebTrace::Attention {
                        x,
                        q,
                        k,
                        v,
                        weights,
                        context,
                    },
                ))
            }
        }
    }

    /// Reverse pass; accumulates this block's gradients and returns the
    /// gradient with respect to the block input.
    pub(crate) fn backward(&mut self, a: &Matrix, trace: &GfebTrace, d_b: &Matrix) -> Result<Matrix> {
        match (self, trace) {
            (GfebParams::Mlp { fc1, fc2 }, GfebTrace::Mlp { hidden }) => {
                let d_hidden = fc2.backward(hidden, d_b)?;
                let mut d_pre = d_hidden;
                for (g, &h) in d_pre.data_mut().iter_mut().zip(hidden.data().iter()) {
                    *g *= h * (1.0 - h);
                }
                fc1.backward(a, &d_pre)
            }
            (
                GfebParams::Attention {
                    proj,
                    query,
                    key,
                    value,
                    out,
                },
                GfebTrace::Attention {
                    x,
                    q,
                    k,
                    v,
                    weights,
                    context,
                },
            ) => {
                let scale = 1.0 / crate::math::sqrt(q.cols() as f64);
                let d_context = out.backward(context, d_b)?;
                let d_weights = d_context.matmul_nt(v)?;
                let d_v = weights.matmul_tn(&d_context)?;
                // softmax jacobian per row: w * (dw - <dw, w>)
                let n = weights.rows();
                let mut d_logits = Matrix::zeros(n, n);
                for i in 0..n {
                    let w_row = weights.row(i);
                    let dw_row = d_weights.row(i);
                    let inner: f64 = w_row.iter().zip(dw_row.iter()).map(|(w, dw)| w * dw).sum();
                    for (dl, (&w, &dw)) in d_logits
                        .row_mut(i)
                        .iter_mut()
                        .zip(w_row.iter().zip(dw_row.iter()))
                    {
                        *dl = w * (dw - inner);
                    }
                }
                let mut d_q = d_logits.matmul(k)?;
                d_q.scale_assign(scale);
                let mut d_k = d_logits.matmul_tn(q)?;
                d_k.scale_assign(scale);
                let mut d_x = query.backward(x, &d_q)?;
                d_x.add_assign(&key.backward(x, &d_k)?)?;
                d_x.add_assign(&value.backward(x, &d_v)?)?;
                proj.backward(a, &d_x)
            }
            _ => Err(Error::usage("trace does not match this block kind")),
        }
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        match self {
            GfebParams::Mlp { fc1, fc2 } => {
                fc1.visit(&format!("{prefix}.fc1"), f);
                fc2.visit(&format!("{prefix}.fc2"), f);
            }
            GfebParams::Attention {
                proj,
                query,
                key,
                value,
                out,
            } => {
                proj.visit(&format!("{prefix}.proj"), f);
                query.visit(&format!("{prefix}.query"), f);
                key.visit(&format!("{prefix}.key"), f);
                value.visit(&format!("{prefix}.value"), f);
                out.visit(&format!("{prefix}.out"), f);
            }
        }
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        match self {
            GfebParams::Mlp { fc1, fc2 } => {
                fc1.visit_mut(&format!("{prefix}.fc1"), f);
                fc2.visit_mut(&format!("{prefix}.fc2"), f);
            }
            GfebParams::Attention {
                proj,
                query,
                key,
                value,
                out,
            } => {
                proj.visit_mut(&format!("{prefix}.proj"), f);
                query.visit_mut(&format!("{prefix}.query"), f);
                key.visit_mut(&format!("{prefix}.key"), f);
                value.visit_mut(&format!("{prefix}.value"), f);
                out.visit_mut(&format!("{prefix}.out"), f);
            }
        }
    }
}

/// Cached intermediates of one alignment block's forward pass.
#[derive(Debug, Clone)]
pub enum GfebTrace {
    Mlp {
        hidden: Matrix,
    },
    Attention {
        x: Matrix,
        q: Matrix,
        k: Matrix,
        v: Matrix,
        weights: Matrix,
        context: Matrix,
    },
}

/// Two-layer shared classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub fc1: AffinePair,
    pub fc2: AffinePair,
}

impl HeadParams {
    pub(crate) fn init(input: usize, hidden: usize, output: usize, rng: &mut RngStream) -> Self {
        HeadParams {
            fc1: AffinePair::glorot(input, hidden, rng),
            fc2: AffinePair::glorot(hidden, output, rng),
        }
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        self.fc1.visit(&format!("{prefix}.fc1"), f);
        self.fc2.visit(&format!("{prefix}.fc2"), f);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.fc1.visit_mut(&format!("{prefix}.fc1"), f);
        self.fc2.visit_mut(&format!("{prefix}.fc2"), f);
    }
}

/// Cached intermediates of the head: sigmoid activations, the dropout-scaled
/// copy that fed the output layer, and the multiplicative mask (when
/// training with dropout).
#[derive(Debug, Clone)]
pub struct HeadTrace {
    hidden: Matrix,
    dropped: Matrix,
    mask: Option<Matrix>,
}

impl HeadTrace {
    pub fn hidden_width(&self) -> usize {
        self.hidden.cols()
    }
}

/// linear -> sigmoid -> dropout -> linear, applied to every row of the
/// evidence matrix. With a 1-column output layer this scores each class row;
/// pooled baselines reuse it with a `c`-column output layer instead.
pub(crate) fn head_forward(
    head: &HeadParams,
    input: &Matrix,
    dropout: f64,
    training: bool,
    rng: &mut RngStream,
) -> Result<(Matrix, HeadTrace)> {
    let hidden = sigmoid_map(&head.fc1.forward(input)?);
    let (dropped, mask) = if training && dropout > 0.0 {
        let mask = dropout_mask(hidden.rows(), hidden.cols(), dropout, rng)?;
        let mut dropped = hidden.clone();
        for (d, m) in dropped.data_mut().iter_mut().zip(mask.data().iter()) {
            *d *= m;
        }
        (dropped, Some(mask))
    } else {
        (hidden.clone(), None)
    };
    let out = head.fc2.forward(&dropped)?;
    Ok((out, HeadTrace { hidden, dropped, mask }))
}

pub(crate) fn head_backward(
    head: &mut HeadParams,
    input: &Matrix,
    trace: &HeadTrace,
    d_out: &Matrix,
) -> Result<Matrix> {
    let d_dropped = head.fc2.backward(&trace.dropped, d_out)?;
    let mut d_hidden = d_dropped;
    if let Some(mask) = &trace.mask {
        for (g, m) in d_hidden.data_mut().iter_mut().zip(mask.data().iter()) {
            *g *= m;
        }
    }
    for (g, &h) in d_hidden.data_mut().iter_mut().zip(trace.hidden.data().iter()) {
        *g *= h * (1.0 - h);
    }
    head.fc1.backward(input, &d_hidden)
}

/// Per class column, keeps the `s` largest entries (descending) followed by
/// the `s` smallest (ascending). Ties resolve to the lowest original row
/// index. Returns the `2s x c` selection and the chosen row indices, stored
/// row-major per (position, column), for gradient routing.
pub fn max_min_select(scores: &Matrix, s: usize) -> Result<(Matrix, Vec<usize>)> {
    let n = scores.rows();
    let cols = scores.cols();
    if s == 0 {
        return Err(Error::config("selection count must be at least 1"));
    }
    if n < 2 * s {
        return Err(Error::config(format!(
            "min-max selection needs at least {} instances, bag has {n}",
            2 * s
        )));
    }
    let mut selected = Matrix::zeros(2 * s, cols);
    let mut indices = vec![0usize; 2 * s * cols];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for j in 0..cols {
        order.clear();
        order.extend(0..n);
        // max block: value descending, ties by lowest row index
        order.sort_by(|&a, &b| scores.get(b, j).total_cmp(&scores.get(a, j)).then(a.cmp(&b)));
        for r in 0..s {
            let row = order[r];
            selected.set(r, j, scores.get(row, j));
            indices[r * cols + j] = row;
        }
        // min block: value ascending, ties by lowest row index
        order.sort_by(|&a, &b| scores.get(a, j).total_cmp(&scores.get(b, j)).then(a.cmp(&b)));
        for r in 0..s {
            let row = order[r];
            selected.set(s + r, j, scores.get(row, j));
            indices[(s + r) * cols + j] = row;
        }
    }
    Ok((selected, indices))
}

/// Stacks the per-block selections in block order and transposes, giving one
/// evidence row per class of width `2 * blocks * s`.
pub fn assemble_evidence(blocks: &[Matrix]) -> Result<Matrix> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::parameter("no selection blocks to assemble"))?;
    for b in blocks {
        if !b.same_shape(first) {
            return Err(Error::dimension("assemble_evidence", first.shape(), b.shape()));
        }
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Ok(Matrix::vstack(&refs)?.transpose())
}

/// All learnable weights: one alignment block per group (plus concatenation)
/// and the shared head.
#[derive(Debug, Clone, PartialEq)]
pub struct GasMilParams {
    evidence_dim: usize,
    gfebs: Vec<GfebParams>,
    head: HeadParams,
}

impl GasMilParams {
    /// Fresh parameters for `config`, sized for the given loss (the ordinal
    /// loss trains `c - 1` outputs, cross-entropy `c`).
    pub fn init(config: &GasMilConfig, loss: LossKind, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let evidence = loss.output_dim(config.num_classes);
        let gfebs = (0..config.block_count())
            .map(|g| GfebParams::init(config.gfeb_kind, config.block_width(g), evidence, config, rng))
            .collect();
        let head = HeadParams::init(config.selected_width(), config.head_hidden, 1, rng);
        Ok(GasMilParams {
            evidence_dim: evidence,
            gfebs,
            head,
        })
    }

    pub fn evidence_dim(&self) -> usize {
        self.evidence_dim
    }

    pub fn blocks(&self) -> &[GfebParams] {
        &self.gfebs
    }

    fn check_compatible(&self, config: &GasMilConfig) -> Result<()> {
        if self.gfebs.len() != config.block_count() {
            return Err(Error::config(format!(
                "parameters hold {} blocks, config expects {}",
                self.gfebs.len(),
                config.block_count()
            )));
        }
        for (g, block) in self.gfebs.iter().enumerate() {
            if block.input_width() != config.block_width(g) {
                return Err(Error::config(format!(
                    "block {g} expects width {}, config gives {}",
                    block.input_width(),
                    config.block_width(g)
                )));
            }
        }
        if self.head.fc1.weight.rows() != config.selected_width() {
            return Err(Error::config(format!(
                "head expects evidence width {}, config gives {}",
                self.head.fc1.weight.rows(),
                config.selected_width()
            )));
        }
        Ok(())
    }
}

impl VisitParams for GasMilParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Parameter)) {
        for (g, block) in self.gfebs.iter().enumerate() {
            block.visit(&format!("gfeb{g}"), f);
        }
        self.head.visit("head", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
        for (g, block) in self.gfebs.iter_mut().enumerate() {
            block.visit_mut(&format!("gfeb{g}"), f);
        }
        self.head.visit_mut("head", f);
    }
}

/// Everything the reverse pass needs about one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    features: Matrix,
    gfeb_traces: Vec<GfebTrace>,
    selections: Vec<Vec<usize>>,
    evidence: Matrix,
    head: HeadTrace,
    param_stamp: u64,
}

impl ForwardTrace {
    pub fn evidence(&self) -> &Matrix {
        &self.evidence
    }

    pub fn head(&self) -> &HeadTrace {
        &self.head
    }

    /// Selected row indices of block `g`, row-major per (position, column).
    pub fn selected_indices(&self, g: usize) -> &[usize] {
        &self.selections[g]
    }
}

/// Forward pass over a raw feature matrix (already augmented, if training).
pub fn forward_features(
    params: &GasMilParams,
    config: &GasMilConfig,
    features: &Matrix,
    training: bool,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, ForwardTrace)> {
    params.check_compatible(config)?;
    if features.cols() != config.layout.total_width() {
        return Err(Error::config(format!(
            "features have {} columns, layout expects {}",
            features.cols(),
            config.layout.total_width()
        )));
    }
    if features.rows() < config.min_instances() {
        return Err(Error::config(format!(
            "bag has {} instances, selection needs at least {}",
            features.rows(),
            config.min_instances()
        )));
    }
    let group_count = config.layout.group_count();
    let mut gfeb_traces = Vec::with_capacity(params.gfebs.len());
    let mut selections = Vec::with_capacity(params.gfebs.len());
    let mut selected_blocks = Vec::with_capacity(params.gfebs.len());
    for (g, block) in params.gfebs.iter().enumerate() {
        let (scores, trace) = if g < group_count {
            let range = config.layout.col_range(g);
            let a = features.slice_cols(range.start, range.end);
            block.forward(&a)?
        } else {
            block.forward(features)?
        };
        let (selected, indices) = max_min_select(&scores, config.selection_count)?;
        gfeb_traces.push(trace);
        selections.push(indices);
        selected_blocks.push(selected);
    }
    let evidence = assemble_evidence(&selected_blocks)?;
    let (out, head_trace) = head_forward(&params.head, &evidence, config.head_dropout, training, rng)?;
    let scores: Vec<f64> = (0..out.rows()).map(|i| out.get(i, 0)).collect();
    Ok((
        scores,
        ForwardTrace {
            features: features.clone(),
            gfeb_traces,
            selections,
            evidence,
            head: head_trace,
            param_stamp: params.step_stamp(),
        },
    ))
}

/// Forward pass over a bag, validating that it matches the configured
/// layout.
pub fn forward_bag(
    params: &GasMilParams,
    config: &GasMilConfig,
    bag: &FeatureBag,
    training: bool,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, ForwardTrace)> {
    if bag.layout != config.layout {
        return Err(Error::config(format!(
            "bag `{}` layout {:?} does not match model layout {:?}",
            bag.bag_id,
            bag.layout.group_dims(),
            config.layout.group_dims()
        )));
    }
    forward_features(params, config, &bag.features, training, rng)
}

/// Exact reverse-mode gradients of the recorded forward pass. Gradients are
/// accumulated into the parameters; the return value is the gradient with
/// respect to the input features. Through the selection layer, gradient
/// reaches only the selected (row, column) entries.
pub fn backward(
    params: &mut GasMilParams,
    config: &GasMilConfig,
    trace: &ForwardTrace,
    loss_grad: &[f64],
) -> Result<Matrix> {
    if loss_grad.len() != params.evidence_dim {
        return Err(Error::dimension(
            "backward",
            format!("loss gradient of length {}", params.evidence_dim),
            format!("length {}", loss_grad.len()),
        ));
    }
    if trace.param_stamp != params.step_stamp() {
        return Err(Error::usage(
            "stale trace: parameters were updated after this forward pass",
        ));
    }
    if trace.gfeb_traces.len() != params.gfebs.len() {
        return Err(Error::usage("trace does not match this model's block count"));
    }
    let d_out = Matrix::from_fn(loss_grad.len(), 1, |i, _| loss_grad[i]);
    let d_evidence = head_backward(&mut params.head, &trace.evidence, &trace.head, &d_out)?;
    let d_selected = d_evidence.transpose(); // (blocks * 2s) x evidence
    let s2 = 2 * config.selection_count;
    let n = trace.features.rows();
    let evidence = params.evidence_dim;
    let group_count = config.layout.group_count();
    let mut d_features = Matrix::zeros(n, trace.features.cols());
    for (g, block) in params.gfebs.iter_mut().enumerate() {
        // gradient reaches only the rows this block selected
        let mut d_scores = Matrix::zeros(n, evidence);
        let indices = &trace.selections[g];
        for r in 0..s2 {
            for j in 0..evidence {
                let row = indices[r * evidence + j];
                let v = d_scores.get(row, j) + d_selected.get(g * s2 + r, j);
                d_scores.set(row, j, v);
            }
        }
        if g < group_count {
            let range = config.layout.col_range(g);
            let a = trace.features.slice_cols(range.start, range.end);
            let d_a = block.backward(&a, &trace.gfeb_traces[g], &d_scores)?;
            d_features.add_into_cols(range.start, &d_a)?;
        } else {
            let d_a = block.backward(&trace.features, &trace.gfeb_traces[g], &d_scores)?;
            d_features.add_assign(&d_a)?;
        }
    }
    Ok(d_features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{loss_and_grad, LossKind};

    fn small_config(kind: GfebKind, dims: Vec<usize>, c: usize, s: usize) -> GasMilConfig {
        let mut cfg = GasMilConfig::new(GroupLayout::with_dims(dims).unwrap(), c);
        cfg.selection_count = s;
        cfg.gfeb_kind = kind;
        cfg.mlp_hidden = 7;
        cfg.attn_feature_dim = 6;
        cfg.attn_dim = 4;
        cfg.head_hidden = 5;
        cfg
    }

    fn random_features(n: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = RngStream::new(seed);
        Matrix::from_fn(n, m, |_, _| rng.normal())
    }

    #[test]
    fn mlp_block_output_shape() {
        let cfg = {
            let mut c = GasMilConfig::new(GroupLayout::with_dims(vec![768]).unwrap(), 6);
            c.mlp_hidden = 192;
            c
        };
        let mut rng = RngStream::new(1);
        let block = GfebParams::init(GfebKind::Mlp, 768, 6, &cfg, &mut rng);
        let a = random_features(200, 768, 2);
        let (b, _) = block.forward(&a).unwrap();
        assert_eq!((b.rows(), b.cols()), (200, 6));
    }

    #[test]
    fn mlp_block_zero_weights_broadcast_second_bias() {
        let cfg = small_config(GfebKind::Mlp, vec![4], 3, 1);
        let mut rng = RngStream::new(3);
        let mut block = GfebParams::init(GfebKind::Mlp, 4, 3, &cfg, &mut rng);
        if let GfebParams::Mlp { fc1, fc2 } = &mut block {
            fc1.weight.value = Matrix::zeros(4, 7);
            fc2.weight.value = Matrix::zeros(7, 3);
            fc2.bias.value = Matrix::row_vector(vec![1.0, -2.0, 0.5]);
        }
        let a = random_features(5, 4, 4);
        let (b, _) = block.forward(&a).unwrap();
        for i in 0..5 {
            assert_eq!(b.row(i), &[1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn mlp_block_rows_are_independent() {
        let cfg = small_config(GfebKind::Mlp, vec![6], 2, 1);
        let mut rng = RngStream::new(5);
        let block = GfebParams::init(GfebKind::Mlp, 6, 2, &cfg, &mut rng);
        let a = random_features(4, 6, 6);
        let mut doubled = Matrix::zeros(5, 6);
        for i in 0..4 {
            doubled.row_mut(i).copy_from_slice(a.row(i));
        }
        doubled.row_mut(4).copy_from_slice(a.row(2));
        let (b, _) = block.forward(&a).unwrap();
        let (b2, _) = block.forward(&doubled).unwrap();
        assert_eq!(b2.row(4), b.row(2));
    }

    #[test]
    fn attention_single_instance_reduces_to_value_path() {
        let cfg = small_config(GfebKind::Attention, vec![5], 2, 1);
        let mut rng = RngStream::new(7);
        let block = GfebParams::init(GfebKind::Attention, 5, 2, &cfg, &mut rng);
        let a = random_features(1, 5, 8);
        let (b, _) = block.forward(&a).unwrap();
        // with one instance the softmax weight is exactly 1, so the output
        // is out(value(proj(a)))
        if let GfebParams::Attention { proj, value, out, .. } = &block {
            let x = proj.forward(&a).unwrap();
            let v = value.forward(&x).unwrap();
            let direct = out.forward(&v).unwrap();
            assert!(b.max_abs_diff(&direct) < 1e-12);
        }
    }

    #[test]
    fn attention_is_permutation_equivariant() {
        let cfg = small_config(GfebKind::Attention, vec![8], 3, 1);
        let mut rng = RngStream::new(9);
        let block = GfebParams::init(GfebKind::Attention, 8, 3, &cfg, &mut rng);
        let a = random_features(5, 8, 10);
        let perm = [3usize, 0, 4, 1, 2];
        let shuffled = a.select_rows(&perm);
        let (b, _) = block.forward(&a).unwrap();
        let (b_shuffled, _) = block.forward(&shuffled).unwrap();
        let expected = b.select_rows(&perm);
        assert!(b_shuffled.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn attention_identical_rows_produce_identical_rows() {
        let cfg = small_config(GfebKind::Attention, vec![4], 2, 1);
        let mut rng = RngStream::new(11);
        let block = GfebParams::init(GfebKind::Attention, 4, 2, &cfg, &mut rng);
        let row = random_features(1, 4, 12);
        let mut a = Matrix::zeros(6, 4);
        for i in 0..6 {
            a.row_mut(i).copy_from_slice(row.row(0));
        }
        let (b, _) = block.forward(&a).unwrap();
        for i in 1..6 {
            assert_eq!(b.row(i), b.row(0));
        }
    }

    #[test]
    fn max_min_hand_example() {
        let scores = Matrix::from_vec(5, 1, vec![5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        let (selected, indices) = max_min_select(&scores, 2).unwrap();
        assert_eq!(selected.data(), &[5.0, 4.0, 1.0, 2.0]);
        assert_eq!(indices, vec![0, 4, 1, 3]);
    }

    #[test]
    fn max_min_with_n_equals_2s_is_a_full_sort() {
        let scores = Matrix::from_vec(4, 1, vec![0.3, -1.0, 2.0, 0.7]).unwrap();
        let (selected, _) = max_min_select(&scores, 2).unwrap();
        assert_eq!(selected.data(), &[2.0, 0.7, -1.0, 0.3]);
    }

    #[test]
    fn max_min_ties_take_lowest_row_first() {
        let scores = Matrix::from_vec(3, 1, vec![4.0, 4.0, 4.0]).unwrap();
        let (selected, indices) = max_min_select(&scores, 1).unwrap();
        assert_eq!(selected.data(), &[4.0, 4.0]);
        assert_eq!(indices, vec![0, 0]);
    }

    #[test]
    fn max_min_rejects_small_bags() {
        let scores = Matrix::zeros(3, 2);
        assert!(matches!(max_min_select(&scores, 2), Err(Error::Config(_))));
    }

    #[test]
    fn max_min_matches_sort_oracle_per_column() {
        let mut rng = RngStream::new(13);
        for _ in 0..200 {
            let n = 4 + rng.below(40);
            let s = 1 + rng.below(n / 2);
            let cols = 1 + rng.below(6);
            let scores = Matrix::from_fn(n, cols, |_, _| rng.normal());
            let (selected, _) = max_min_select(&scores, s).unwrap();
            for j in 0..cols {
                let mut column: Vec<f64> = (0..n).map(|i| scores.get(i, j)).collect();
                column.sort_by(|a, b| b.total_cmp(a));
                for r in 0..s {
                    assert_eq!(selected.get(r, j), column[r]);
                }
                column.reverse();
                for r in 0..s {
                    assert_eq!(selected.get(s + r, j), column[r]);
                }
            }
        }
    }

    #[test]
    fn assemble_shapes_follow_block_count() {
        // 3 blocks (K=2 plus concatenation), s=20, c=6 -> 6 x 120
        let blocks: Vec<Matrix> = (0..3).map(|_| Matrix::zeros(40, 6)).collect();
        let evidence = assemble_evidence(&blocks).unwrap();
        assert_eq!((evidence.rows(), evidence.cols()), (6, 120));
    }

    #[test]
    fn assemble_concatenation_order() {
        let c1 = Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let c2 = Matrix::from_vec(2, 1, vec![3.0, 4.0]).unwrap();
        let evidence = assemble_evidence(&[c1, c2]).unwrap();
        assert_eq!(evidence.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn head_zero_weights_emit_bias() {
        let mut rng = RngStream::new(15);
        let mut head = HeadParams::init(8, 5, 1, &mut rng);
        head.fc1.weight.value = Matrix::zeros(8, 5);
        head.fc1.bias.value = Matrix::zeros(1, 5);
        head.fc2.weight.value = Matrix::zeros(5, 1);
        head.fc2.bias.value = Matrix::row_vector(vec![0.75]);
        let d = random_features(3, 8, 16);
        let (out, trace) = head_forward(&head, &d, 0.0, false, &mut rng).unwrap();
        for i in 0..3 {
            assert_eq!(out.get(i, 0), 0.75);
        }
        assert_eq!(trace.hidden_width(), 5);
    }

    #[test]
    fn head_inference_is_deterministic() {
        let mut rng = RngStream::new(17);
        let head = HeadParams::init(6, 96, 1, &mut rng);
        let d = random_features(6, 6, 18);
        let (a, trace) = head_forward(&head, &d, 0.3, false, &mut rng).unwrap();
        let (b, _) = head_forward(&head, &d, 0.3, false, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace.hidden_width(), 96);
        assert!(trace.mask.is_none());
    }

    fn forward_scores(
        params: &GasMilParams,
        cfg: &GasMilConfig,
        features: &Matrix,
    ) -> Vec<f64> {
        let mut rng = RngStream::new(0);
        forward_features(params, cfg, features, false, &mut rng).unwrap().0
    }

    #[test]
    fn forward_is_permutation_invariant_both_kinds() {
        for kind in [GfebKind::Mlp, GfebKind::Attention] {
            let cfg = small_config(kind, vec![3, 5], 3, 2);
            let mut rng = RngStream::new(19);
            let params = GasMilParams::init(&cfg, LossKind::CrossEntropy, &mut rng).unwrap();
            let features = random_features(9, 8, 20);
            let base = forward_scores(&params, &cfg, &features);
            let mut perm: Vec<usize> = (0..9).collect();
            let mut perm_rng = RngStream::new(21);
            for _ in 0..20 {
                perm_rng.shuffle(&mut perm);
                let shuffled = features.select_rows(&perm);
                let scores = forward_scores(&params, &cfg, &shuffled);
                for (a, b) in base.iter().zip(scores.iter()) {
                    assert!((a - b).abs() <= 1e-12, "{kind:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn forward_full_scale_shapes() {
        let layout = GroupLayout::with_dims(vec![768, 1024]).unwrap();
        let cfg = GasMilConfig::new(layout, 6);
        let mut rng = RngStream::new(23);
        let params = GasMilParams::init(&cfg, LossKind::CrossEntropy, &mut rng).unwrap();
        let features = random_features(200, 1792, 24);
        let (scores, trace) = forward_features(&params, &cfg, &features, false, &mut rng).unwrap();
        assert_eq!(scores.len(), 6);
        assert_eq!((trace.evidence.rows(), trace.evidence.cols()), (6, 120));
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let cfg = small_config(GfebKind::Mlp, vec![4, 3], 2, 1);
        let mut rng = RngStream::new(25);
        let mut params = GasMilParams::init(&cfg, LossKind::CrossEntropy, &mut rng).unwrap();
        let features = random_features(6, 7, 26);
        let (_, trace) = forward_features(&params, &cfg, &features, false, &mut rng).unwrap();
        params.zero_grads();
        let d_input = backward(&mut params, &cfg, &trace, &[0.0, 0.0]).unwrap();
        assert!(d_input.data().iter().all(|v| *v == 0.0));
        params.visit(&mut |name, p| {
            assert!(p.grad.data().iter().all(|v| *v == 0.0), "{name} has gradient");
        });
    }

    #[test]
    fn unselected_instance_gets_zero_input_gradient() {
        let cfg = small_config(GfebKind::Mlp, vec![4], 2, 1);
        let mut rng = RngStream::new(27);
        let mut params = GasMilParams::init(&cfg, LossKind::CrossEntropy, &mut rng).unwrap();
        let features = random_features(10, 4, 28);
        let (scores, trace) = forward_features(&params, &cfg, &features, false, &mut rng).unwrap();
        let (_, loss_grad) = loss_and_grad(&scores, 1, LossKind::CrossEntropy, 2).unwrap();
        params.zero_grads();
        let d_input = backward(&mut params, &cfg, &trace, &loss_grad).unwrap();
        let mut selected = alloc::collections::BTreeSet::new();
        for g in 0..params.gfebs.len() {
            selected.extend(trace.selections[g].iter().copied());
        }
        assert!(selected.len() < 10, "every instance was selected; test vacuous");
        for i in 0..10 {
            let row_zero = d_input.row(i).iter().all(|v| *v == 0.0);
            assert_eq!(!row_zero, selected.contains(&i), "instance {i}");
        }
    }

    #[test]
    fn perturbing_unselected_instance_leaves_scores_unchanged() {
        let cfg = small_config(GfebKind::Mlp, vec![3, 4], 2, 1);
        let mut rng = RngStream::new(29);
        let params = GasMilParams::init(&cfg, LossKind::CrossEntropy, &mut rng).unwrap();
        let features = random_features(8, 7, 30);
        let (scores, trace) = {
            let mut r = RngStream::new(0);
            forward_features(&params, &cfg, &features, false, &mut r).unwrap()
        };
        let mut selected = alloc::collections::BTreeSet::new();
        for sel in &trace.selections {
            selected.extend(sel.iter().copied());
        }
        let untouched = (0..8).find(|i| !selected.contains(i));
        let Some(row) = untouched else { return };
        let mut perturbed = features.clone();
        for v in perturbed.row_mut(row) {
            *v *= 1.0 + 1e-9;
        }
        let new_scores = forward_scores(&params, &cfg, &perturbed);
        for (a, b) in scores.iter().zip(new_scores.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let cfg = small_config(GfebKind::Mlp, vec![4], 2, 1);
        let mut rng = RngStream::new(31);
        let mut params = GasMilParams::init(&cfg, LossKind::CrossEntropy, &mut rng).unwrap();
        let features = random_features(5, 4, 32);
        let (_, trace) = forward_features(&params, &cfg, &features, false, &mut rng).unwrap();
        params
            .adamw_step_all(&crate::optim::AdamwConfig::default())
            .unwrap();
        let err = backward(&mut params, &cfg, &trace, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Usage(_)), "{err:?}");
    }

    #[test]
    fn checkpoint_canonical_order_roundtrip() {
        let cfg = small_config(GfebKind::Attention, vec![3, 2], 2, 1);
        let mut rng = RngStream::new(33);
        let params = GasMilParams::init(&cfg, LossKind::CrossEntropy, &mut rng).unwrap();
        let named = params.named_values();
        assert_eq!(named[0].0, "gfeb0.proj.weight");
        assert!(named.iter().any(|(n, _)| n == "head.fc2.bias"));
        let mut fresh = GasMilParams::init(&cfg, LossKind::CrossEntropy, &mut RngStream::new(99)).unwrap();
        fresh.load_values(&named).unwrap();
        let features = random_features(4, 5, 34);
        assert_eq!(
            forward_scores(&params, &cfg, &features),
            forward_scores(&fresh, &cfg, &features)
        );
    }
}
