//! The training loop: weighted class-balanced sampling, Gaussian input
//! noise, AdamW updates, early stopping on a monitored validation metric,
//! and split evaluation.
//!
//! [`fit`] is bit-deterministic: one seeded stream drives every random
//! choice (optional instance resampling, batch draws, noise, dropout) in a
//! fixed order, so a (seed, data, config) triple fully determines the final
//! parameters. Evaluation never touches the stream.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::bag::{sample_or_pad, FeatureBag};
use crate::baseline::{AbmilParams, AbmilTrace, BaselineConfig, ChowderParams, ChowderTrace};
use crate::error::{Error, Result};
use crate::loss::{loss_and_grad, predict_label, LossKind};
use crate::matrix::Matrix;
use crate::metrics::{self, MetricsReport};
use crate::model::{self, ForwardTrace, GasMilConfig, GasMilParams};
use crate::optim::{AdamwConfig, Parameter, VisitParams};
use crate::rng::RngStream;

/// A trainable architecture with its weights.
#[derive(Debug, Clone)]
pub enum Network {
    GasMil {
        config: GasMilConfig,
        params: GasMilParams,
    },
    Abmil {
        config: BaselineConfig,
        params: AbmilParams,
    },
    Chowder {
        config: BaselineConfig,
        params: ChowderParams,
    },
}

/// Forward-pass cache for whichever architecture produced it.
#[derive(Debug, Clone)]
pub enum NetTrace {
    GasMil(ForwardTrace),
    Abmil(AbmilTrace),
    Chowder(ChowderTrace),
}

impl Network {
    pub fn init_gasmil(config: GasMilConfig, loss: LossKind, rng: &mut RngStream) -> Result<Self> {
        let params = GasMilParams::init(&config, loss, rng)?;
        Ok(Network::GasMil { config, params })
    }

    pub fn init_abmil(config: BaselineConfig, loss: LossKind, rng: &mut RngStream) -> Result<Self> {
        let params = AbmilParams::init(&config, loss, rng)?;
        Ok(Network::Abmil { config, params })
    }

    pub fn init_chowder(config: BaselineConfig, loss: LossKind, rng: &mut RngStream) -> Result<Self> {
        let params = ChowderParams::init(&config, loss, rng)?;
        Ok(Network::Chowder { config, params })
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Network::GasMil { config, .. } => config.num_classes,
            Network::Abmil { config, .. } | Network::Chowder { config, .. } => config.num_classes,
        }
    }

    /// Width of the raw score vector the network emits.
    pub fn output_dim(&self) -> usize {
        match self {
            Network::GasMil { params, .. } => params.evidence_dim(),
            Network::Abmil { params, .. } => params.evidence_dim(),
            Network::Chowder { params, .. } => params.evidence_dim(),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Network::GasMil { config, .. } => config.layout.total_width(),
            Network::Abmil { config, .. } | Network::Chowder { config, .. } => config.input_dim,
        }
    }

    pub fn min_instances(&self) -> usize {
        match self {
            Network::GasMil { config, .. } => config.min_instances(),
            Network::Abmil { config, .. } | Network::Chowder { config, .. } => config.min_instances(),
        }
    }

    pub fn forward(
        &self,
        features: &Matrix,
        training: bool,
        rng: &mut RngStream,
    ) -> Result<(Vec<f64>, NetTrace)> {
        match self {
            Network::GasMil { config, params } => {
                let (scores, trace) = model::forward_features(params, config, features, training, rng)?;
                Ok((scores, NetTrace::GasMil(trace)))
            }
            Network::Abmil { config, params } => {
                let (scores, trace) = params.forward(config, features, training, rng)?;
                Ok((scores, NetTrace::Abmil(trace)))
            }
            Network::Chowder { config, params } => {
                let (scores, trace) = params.forward(config, features, training, rng)?;
                Ok((scores, NetTrace::Chowder(trace)))
            }
        }
    }

    /// Accumulates parameter gradients; returns the input-feature gradient.
    pub fn backward(&mut self, trace: &NetTrace, loss_grad: &[f64]) -> Result<Matrix> {
        match (self, trace) {
            (Network::GasMil { config, params }, NetTrace::GasMil(t)) => {
                model::backward(params, config, t, loss_grad)
            }
            (Network::Abmil { params, .. }, NetTrace::Abmil(t)) => params.backward(t, loss_grad),
            (Network::Chowder { config, params }, NetTrace::Chowder(t)) => {
                params.backward(config, t, loss_grad)
            }
            _ => Err(Error::usage("trace does not belong to this architecture")),
        }
    }
}

impl VisitParams for Network {
    fn visit(&self, f: &mut dyn FnMut(&str, &Parameter)) {
        match self {
            Network::GasMil { params, .. } => params.visit(f),
            Network::Abmil { params, .. } => params.visit(f),
            Network::Chowder { params, .. } => params.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
        match self {
            Network::GasMil { params, .. } => params.visit_mut(f),
            Network::Abmil { params, .. } => params.visit_mut(f),
            Network::Chowder { params, .. } => params.visit_mut(f),
        }
    }
}

/// Validation statistic that drives best-checkpoint tracking and early
/// stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorMetric {
    BalancedAccuracy,
    Qwk,
    WeightedF1,
    Loss,
}

/// Optimizer, loss, augmentation, sampling, and stopping hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Standard deviation of the Gaussian noise added to training inputs.
    pub noise_std: f64,
    /// Epochs without monitored improvement before stopping.
    pub patience: usize,
    pub loss_kind: LossKind,
    pub seed: u64,
    pub monitor: MonitorMetric,
    /// When set, bags are resized to this many instances before use.
    pub instance_target: Option<usize>,
    /// Redraw the instance subset every time a bag is sampled, instead of
    /// once up front. Requires `instance_target`.
    pub resample_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr: 0.001,
            weight_decay: 0.05,
            noise_std: 1.5,
            patience: 10,
            loss_kind: LossKind::CrossEntropy,
            seed: 0,
            monitor: MonitorMetric::BalancedAccuracy,
            instance_target: None,
            resample_each_epoch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::parameter("epochs, batch size, and patience must be at least 1"));
        }
        if self.lr <= 0.0 {
            return Err(Error::parameter("learning rate must be positive"));
        }
        if self.weight_decay < 0.0 || self.noise_std < 0.0 {
            return Err(Error::parameter("weight decay and noise std must be nonnegative"));
        }
        if self.instance_target == Some(0) {
            return Err(Error::parameter("instance target must be positive"));
        }
        if self.resample_each_epoch && self.instance_target.is_none() {
            return Err(Error::parameter(
                "per-epoch resampling requires an instance target",
            ));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamwConfig {
        AdamwConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamwConfig::default()
        }
    }
}

/// One epoch's record in the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: MetricsReport,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    CompletedAllEpochs,
    EarlyStopped { stalled_epochs: usize },
}

/// Per-epoch history plus which epoch's parameters were kept.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss,val_accuracy,val_balanced_accuracy,val_qwk,val_weighted_f1";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let qwk = r.val.qwk.map(|v| format!("{v}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val.accuracy, r.val.balanced_accuracy, qwk, r.val.weighted_f1
            ));
        }
        out
    }
}

/// Per-bag sampling weights `1 / count(label)`; drawing with replacement
/// proportional to them visits every present class equally often in
/// expectation.
pub fn class_weights(labels: &[usize]) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::parameter("class weights of an empty label list"));
    }
    let max_label = *labels.iter().max().unwrap();
    let mut counts = alloc::vec![0usize; max_label + 1];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(labels.iter().map(|&l| 1.0 / counts[l] as f64).collect())
}

/// Adds iid N(0, std^2) noise to every element, zero-padding rows included.
/// `std = 0` is an exact identity and draws nothing from the stream.
pub fn add_gaussian_noise(features: &mut Matrix, std: f64, rng: &mut RngStream) {
    if std == 0.0 {
        return;
    }
    for v in features.data_mut() {
        *v += rng.normal_scaled(std);
    }
}

fn check_bag(network: &Network, bag: &FeatureBag, effective_n: usize) -> Result<()> {
    if bag.features.cols() != network.input_width() {
        return Err(Error::config(format!(
            "bag `{}` has {} feature columns, network expects {}",
            bag.bag_id,
            bag.features.cols(),
            network.input_width()
        )));
    }
    if bag.label >= network.num_classes() {
        return Err(Error::parameter(format!(
            "bag `{}` has label {} outside [0, {})",
            bag.bag_id,
            bag.label,
            network.num_classes()
        )));
    }
    if effective_n < network.min_instances() {
        return Err(Error::config(format!(
            "bag `{}` provides {effective_n} instances, network needs at least {}",
            bag.bag_id,
            network.min_instances()
        )));
    }
    Ok(())
}

/// Inference-mode predictions and mean loss over a list of bags. Never
/// consumes randomness, so repeated calls agree bit for bit.
pub fn evaluate_bags(
    network: &Network,
    bags: &[FeatureBag],
    loss_kind: LossKind,
) -> Result<(MetricsReport, f64)> {
    if bags.is_empty() {
        return Err(Error::parameter("evaluation over an empty split"));
    }
    let num_classes = network.num_classes();
    let mut y_true = Vec::with_capacity(bags.len());
    let mut y_pred = Vec::with_capacity(bags.len());
    let mut binary_scores = Vec::with_capacity(bags.len());
    let mut loss_sum = 0.0;
    let mut inert_rng = RngStream::new(0);
    for bag in bags {
        check_bag(network, bag, bag.instances())?;
        let (scores, _) = network.forward(&bag.features, false, &mut inert_rng)?;
        let (loss, _) = loss_and_grad(&scores, bag.label, loss_kind, num_classes)?;
        loss_sum += loss;
        y_true.push(bag.label);
        y_pred.push(predict_label(&scores, loss_kind).min(num_classes - 1));
        if num_classes == 2 {
            // any strictly monotone score works for AUC
            binary_scores.push(match loss_kind {
                LossKind::CrossEntropy => scores[1] - scores[0],
                LossKind::BceOrdinal => scores[0],
            });
        }
    }
    let scores_opt = (num_classes == 2).then_some(binary_scores.as_slice());
    let report = metrics::report(&y_true, &y_pred, num_classes, scores_opt)?;
    Ok((report, loss_sum / bags.len() as f64))
}

fn monitored_value(monitor: MonitorMetric, report: &MetricsReport, val_loss: f64) -> f64 {
    match monitor {
        MonitorMetric::BalancedAccuracy => report.balanced_accuracy,
        MonitorMetric::Qwk => report.qwk.unwrap_or(f64::NEG_INFINITY),
        MonitorMetric::WeightedF1 => report.weighted_f1,
        MonitorMetric::Loss => -val_loss,
    }
}

/// Trains `network` in place and leaves it holding the best-monitored
/// parameters.
///
/// Each epoch runs `ceil(train/batch)` batches of `batch_size` weighted
/// draws with replacement, perturbs each drawn bag with Gaussian noise,
/// accumulates batch-mean gradients, and takes one AdamW step per batch.
/// Training aborts with a diagnostic if the loss leaves the finite range.
pub fn fit(
    network: &mut Network,
    train_bags: &[FeatureBag],
    val_bags: &[FeatureBag],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train_bags.is_empty() || val_bags.is_empty() {
        return Err(Error::parameter("training needs nonempty train and val splits"));
    }
    if network.output_dim() != cfg.loss_kind.output_dim(network.num_classes()) {
        return Err(Error::config(format!(
            "network emits {} scores but {:?} over {} classes needs {}",
            network.output_dim(),
            cfg.loss_kind,
            network.num_classes(),
            cfg.loss_kind.output_dim(network.num_classes())
        )));
    }
    for bag in train_bags.iter().chain(val_bags.iter()) {
        let effective = cfg.instance_target.unwrap_or(bag.instances());
        check_bag(network, bag, effective)?;
    }

    let mut rng = RngStream::new(cfg.seed);

    // instance sampling at ingestion: train bags first, then val, so the
    // draw order is part of the seed contract
    let fixed_train: Option<Vec<FeatureBag>> = match (cfg.instance_target, cfg.resample_each_epoch) {
        (Some(t), false) => Some(
            train_bags
                .iter()
                .map(|b| sample_or_pad(b, t, &mut rng))
                .collect::<Result<_>>()?,
        ),
        _ => None,
    };
    let fixed_val: Option<Vec<FeatureBag>> = match cfg.instance_target {
        Some(t) => Some(
            val_bags
                .iter()
                .map(|b| sample_or_pad(b, t, &mut rng))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let val_view: &[FeatureBag] = fixed_val.as_deref().unwrap_or(val_bags);

    let labels: Vec<usize> = train_bags.iter().map(|b| b.label).collect();
    let weights = class_weights(&labels)?;
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut running = 0.0;
    for w in &weights {
        running += w;
        cumulative.push(running);
    }

    let steps_per_epoch = train_bags.len().div_ceil(cfg.batch_size);
    let adamw = cfg.adamw();
    let inv_batch = 1.0 / cfg.batch_size as f64;
    let num_classes = network.num_classes();

    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        stop_reason: StopReason::CompletedAllEpochs,
    };
    let mut best_value = f64::NEG_INFINITY;
    let mut best_params: Vec<(String, Matrix)> = Vec::new();
    let mut stalled = 0usize;

    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        for step in 0..steps_per_epoch {
            network.zero_grads();
            for _ in 0..cfg.batch_size {
                let idx = rng.weighted_index(&cumulative);
                let resampled;
                let bag: &FeatureBag = match (&fixed_train, cfg.resample_each_epoch) {
                    (Some(fixed), _) => &fixed[idx],
                    (None, true) => {
                        resampled =
                            sample_or_pad(&train_bags[idx], cfg.instance_target.unwrap(), &mut rng)?;
                        &resampled
                    }
                    (None, false) => &train_bags[idx],
                };
                let mut features = bag.features.clone();
                add_gaussian_noise(&mut features, cfg.noise_std, &mut rng);
                let (scores, trace) = network.forward(&features, true, &mut rng)?;
                let (loss, mut grad) = loss_and_grad(&scores, bag.label, cfg.loss_kind, num_classes)?;
                if !loss.is_finite() {
                    return Err(Error::numeric(format!(
                        "training aborted: non-finite loss at epoch {epoch}, batch {step}"
                    )));
                }
                for g in &mut grad {
                    *g *= inv_batch;
                }
                network.backward(&trace, &grad)?;
                loss_sum += loss;
            }
            network.adamw_step_all(&adamw)?;
        }
        let train_loss = loss_sum / (steps_per_epoch * cfg.batch_size) as f64;
        let (val_report, val_loss) = evaluate_bags(network, val_view, cfg.loss_kind)?;
        let value = monitored_value(cfg.monitor, &val_report, val_loss);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val: val_report,
            val_loss,
        });
        if value > best_value {
            best_value = value;
            log.best_epoch = epoch;
            best_params = network.named_values();
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= cfg.patience {
                log.stop_reason = StopReason::EarlyStopped {
                    stalled_epochs: stalled,
                };
                break;
            }
        }
    }
    network.load_values(&best_params)?;
    Ok(log)
}
