//! Comparator models sharing the training stack: attention-pooled AB-MIL
//! and the single-extractor min-max model (Chowder).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::matrix::{row_softmax, Matrix};
use crate::model::{
    head_backward, head_forward, max_min_select, GfebParams, GfebTrace, HeadParams, HeadTrace,
};
use crate::optim::{Parameter, VisitParams};
use crate::rng::RngStream;

/// Which baseline a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Abmil,
    Chowder,
}

/// Hyperparameters shared by both baselines. `attn_hidden` only matters for
/// AB-MIL; `selection_count` and `mlp_hidden` only for Chowder.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub input_dim: usize,
    pub num_classes: usize,
    pub attn_hidden: usize,
    pub selection_count: usize,
    pub mlp_hidden: usize,
    pub head_hidden: usize,
    pub head_dropout: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, input_dim: usize, num_classes: usize) -> Self {
        BaselineConfig {
            kind,
            input_dim,
            num_classes,
            attn_hidden: 128,
            selection_count: 20,
            mlp_hidden: 192,
            head_hidden: 96,
            head_dropout: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.attn_hidden == 0 || self.mlp_hidden == 0 || self.head_hidden == 0 {
            return Err(Error::config("widths must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("at least 2 classes required"));
        }
        if self.selection_count == 0 {
            return Err(Error::config("selection count must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return Err(Error::config("head dropout outside [0, 1)"));
        }
        Ok(())
    }

    pub fn min_instances(&self) -> usize {
        match self.kind {
            BaselineKind::Abmil => 1,
            BaselineKind::Chowder => 2 * self.selection_count,
        }
    }
}

/// AB-MIL weights: ungated attention (`a_i = w^T tanh(V h_i)`) plus the
/// shared two-layer head applied to the pooled embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct AbmilParams {
    evidence_dim: usize,
    attn_proj: Parameter,  // input_dim x attn_hidden
    attn_score: Parameter, // attn_hidden x 1
    head: HeadParams,
}

#[derive(Debug, Clone)]
pub struct AbmilTrace {
    features: Matrix,
    tanh_out: Matrix,
    attention: Matrix, // 1 x n, sums to 1
    pooled: Matrix,    // 1 x input_dim
    head: HeadTrace,
    param_stamp: u64,
}

impl AbmilTrace {
    pub fn attention_weights(&self) -> &[f64] {
        self.attention.row(0)
    }

    pub fn pooled(&self) -> &Matrix {
        &self.pooled
    }
}

impl AbmilParams {
    pub fn init(config: &BaselineConfig, loss: LossKind, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let evidence = loss.output_dim(config.num_classes);
        Ok(AbmilParams {
            evidence_dim: evidence,
            attn_proj: Parameter::glorot(config.input_dim, config.attn_hidden, rng),
            attn_score: Parameter::glorot(config.attn_hidden, 1, rng),
            head: HeadParams::init(config.input_dim, config.head_hidden, evidence, rng),
        })
    }

    pub fn evidence_dim(&self) -> usize {
        self.evidence_dim
    }

    /// Attention-pooled forward pass: softmax weights over instances, a
    /// convex combination of the instance features, then the head.
    pub fn forward(
        &self,
        config: &BaselineConfig,
        features: &Matrix,
        training: bool,
        rng: &mut RngStream,
    ) -> Result<(Vec<f64>, AbmilTrace)> {
        if features.cols() != config.input_dim {
            return Err(Error::config(format!(
                "features have {} columns, model expects {}",
                features.cols(),
                config.input_dim
            )));
        }
        if features.rows() == 0 {
            return Err(Error::config("attention pooling needs at least one instance"));
        }
        let tanh_out = features.matmul(&self.attn_proj.value)?.map(crate::math::tanh);
        let logits = tanh_out.matmul(&self.attn_score.value)?; // n x 1
        let attention = row_softmax(&logits.transpose()); // 1 x n
        let pooled = attention.matmul(features)?; // 1 x input_dim
        let (out, head) = head_forward(&self.head, &pooled, config.head_dropout, training, rng)?;
        let scores = out.row(0).to_vec();
        Ok((
            scores,
            AbmilTrace {
                features: features.clone(),
                tanh_out,
                attention,
                pooled,
                head,
                param_stamp: self.step_stamp(),
            },
        ))
    }

    pub fn backward(&mut self, trace: &AbmilTrace, loss_grad: &[f64]) -> Result<Matrix> {
        if loss_grad.len() != self.evidence_dim {
            return Err(Error::dimension(
                "abmil backward",
                format!("loss gradient of length {}", self.evidence_dim),
                format!("length {}", loss_grad.len()),
            ));
        }
        if trace.param_stamp != self.step_stamp() {
            return Err(Error::usage(
                "stale trace: parameters were updated after this forward pass",
            ));
        }
        let d_out = Matrix::row_vector(loss_grad.to_vec());
        let d_pooled = head_backward(&mut self.head, &trace.pooled, &trace.head, &d_out)?;
        let d_attention = d_pooled.matmul_nt(&trace.features)?; // 1 x n
        let mut d_features = trace.attention.matmul_tn(&d_pooled)?; // n x input_dim
        // softmax over one row: a * (da - <a, da>)
        let a_row = trace.attention.row(0);
        let da_row = d_attention.row(0);
        let inner: f64 = a_row.iter().zip(da_row.iter()).map(|(a, da)| a * da).sum();
        let d_logits = Matrix::from_fn(trace.features.rows(), 1, |i, _| {
            a_row[i] * (da_row[i] - inner)
        });
        self.attn_score.add_grad(&trace.tanh_out.matmul_tn(&d_logits)?)?;
        let mut d_tanh = d_logits.matmul_nt(&self.attn_score.value)?; // n x attn_hidden
        for (g, &t) in d_tanh.data_mut().iter_mut().zip(trace.tanh_out.data().iter()) {
            *g *= 1.0 - t * t;
        }
        self.attn_proj.add_grad(&trace.features.matmul_tn(&d_tanh)?)?;
        d_features.add_assign(&d_tanh.matmul_nt(&self.attn_proj.value)?)?;
        Ok(d_features)
    }
}

impl VisitParams for AbmilParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Parameter)) {
        f("attn.proj", &self.attn_proj);
        f("attn.score", &self.attn_score);
        self.head.visit("head", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f("attn.proj", &mut self.attn_proj);
        f("attn.score", &mut self.attn_score);
        self.head.visit_mut("head", f);
    }
}

/// Chowder weights: one MLP alignment block over the full feature width,
/// one min-max selection, and the shared head over the `c x 2s` evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ChowderParams {
    evidence_dim: usize,
    block: GfebParams,
    head: HeadParams,
}

#[derive(Debug, Clone)]
pub struct ChowderTrace {
    features: Matrix,
    block: GfebTrace,
    selection: Vec<usize>,
    evidence: Matrix,
    head: HeadTrace,
    param_stamp: u64,
}

impl ChowderTrace {
    pub fn evidence(&self) -> &Matrix {
        &self.evidence
    }
}

impl ChowderParams {
    pub fn init(config: &BaselineConfig, loss: LossKind, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let evidence = loss.output_dim(config.num_classes);
        let gas_cfg = {
            let layout = crate::bag::GroupLayout::with_dims(alloc::vec![config.input_dim])?;
            let mut c = crate::model::GasMilConfig::new(layout, config.num_classes);
            c.mlp_hidden = config.mlp_hidden;
            c
        };
        Ok(ChowderParams {
            evidence_dim: evidence,
            block: GfebParams::init(crate::model::GfebKind::Mlp, config.input_dim, evidence, &gas_cfg, rng),
            head: HeadParams::init(2 * config.selection_count, config.head_hidden, 1, rng),
        })
    }

    pub fn evidence_dim(&self) -> usize {
        self.evidence_dim
    }

    pub fn forward(
        &self,
        config: &BaselineConfig,
        features: &Matrix,
        training: bool,
        rng: &mut RngStream,
    ) -> Result<(Vec<f64>, ChowderTrace)> {
        if features.cols() != config.input_dim {
            return Err(Error::config(format!(
                "features have {} columns, model expects {}",
                features.cols(),
                config.input_dim
            )));
        }
        let (scores_matrix, block_trace) = self.block.forward(features)?;
        let (selected, selection) = max_min_select(&scores_matrix, config.selection_count)?;
        let evidence = selected.transpose(); // c x 2s
        let (out, head) = head_forward(&self.head, &evidence, config.head_dropout, training, rng)?;
        let scores: Vec<f64> = (0..out.rows()).map(|i| out.get(i, 0)).collect();
        Ok((
            scores,
            ChowderTrace {
                features: features.clone(),
                block: block_trace,
                selection,
                evidence,
                head,
                param_stamp: self.step_stamp(),
            },
        ))
    }

    pub fn backward(
        &mut self,
        config: &BaselineConfig,
        trace: &ChowderTrace,
        loss_grad: &[f64],
    ) -> Result<Matrix> {
        if loss_grad.len() != self.evidence_dim {
            return Err(Error::dimension(
                "chowder backward",
                format!("loss gradient of length {}", self.evidence_dim),
                format!("length {}", loss_grad.len()),
            ));
        }
        if trace.param_stamp != self.step_stamp() {
            return Err(Error::usage(
                "stale trace: parameters were updated after this forward pass",
            ));
        }
        let d_out = Matrix::from_fn(loss_grad.len(), 1, |i, _| loss_grad[i]);
        let d_evidence = head_backward(&mut self.head, &trace.evidence, &trace.head, &d_out)?;
        let d_selected = d_evidence.transpose(); // 2s x c
        let n = trace.features.rows();
        let evidence = self.evidence_dim;
        let mut d_scores = Matrix::zeros(n, evidence);
        for r in 0..2 * config.selection_count {
            for j in 0..evidence {
                let row = trace.selection[r * evidence + j];
                let v = d_scores.get(row, j) + d_selected.get(r, j);
                d_scores.set(row, j, v);
            }
        }
        self.block.backward(&trace.features, &trace.block, &d_scores)
    }
}

impl VisitParams for ChowderParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Parameter)) {
        self.block.visit("gfeb0", f);
        self.head.visit("head", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.block.visit_mut("gfeb0", f);
        self.head.visit_mut("head", f);
    }
}
