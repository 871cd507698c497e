//! Parameter checkpoints: the binary container comes from the core codec,
//! the embedded config blob is the JSON `ModelSpec` defined here.

use std::fs;
use std::path::Path;

use gasmil_core::baseline::BaselineConfig;
use gasmil_core::model::GasMilConfig;
use gasmil_core::optim::VisitParams;
use gasmil_core::train::Network;
use gasmil_core::{codec, LossKind, RngStream};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::manifest::LayoutDoc;
use crate::options::{Arch, GfebChoice, LossChoice};

/// Everything needed to rebuild a network: architecture, feature layout,
/// loss (which fixes the output width), and the width hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub arch: Arch,
    pub gfeb: GfebChoice,
    pub layout: LayoutDoc,
    pub num_classes: usize,
    pub loss: LossChoice,
    pub selection_count: usize,
    pub mlp_hidden: usize,
    pub attn_feature_dim: usize,
    pub attn_dim: usize,
    pub head_hidden: usize,
    pub head_dropout: f64,
    pub include_concat_group: bool,
    pub attn_hidden: usize,
}

impl ModelSpec {
    pub fn loss_kind(&self) -> LossKind {
        self.loss.into()
    }

    pub fn gasmil_config(&self) -> Result<GasMilConfig> {
        let mut config = GasMilConfig::new(self.layout.to_layout()?, self.num_classes);
        config.selection_count = self.selection_count;
        config.gfeb_kind = self.gfeb.into();
        config.mlp_hidden = self.mlp_hidden;
        config.attn_feature_dim = self.attn_feature_dim;
        config.attn_dim = self.attn_dim;
        config.head_hidden = self.head_hidden;
        config.head_dropout = self.head_dropout;
        config.include_concat_group = self.include_concat_group;
        Ok(config)
    }

    pub fn baseline_config(&self) -> Result<BaselineConfig> {
        let kind = self
            .arch
            .baseline_kind()
            .ok_or_else(|| CliError::invalid("not a baseline architecture"))?;
        let layout = self.layout.to_layout()?;
        let mut config = BaselineConfig::new(kind, layout.total_width(), self.num_classes);
        config.attn_hidden = self.attn_hidden;
        config.selection_count = self.selection_count;
        config.mlp_hidden = self.mlp_hidden;
        config.head_hidden = self.head_hidden;
        config.head_dropout = self.head_dropout;
        Ok(config)
    }

    /// Fresh network with seeded initialization.
    pub fn build_network(&self, rng: &mut RngStream) -> Result<Network> {
        let loss = self.loss_kind();
        Ok(match self.arch {
            Arch::Gasmil => Network::init_gasmil(self.gasmil_config()?, loss, rng)?,
            Arch::Abmil => Network::init_abmil(self.baseline_config()?, loss, rng)?,
            Arch::Chowder => Network::init_chowder(self.baseline_config()?, loss, rng)?,
        })
    }
}

pub fn save_checkpoint(path: &Path, spec: &ModelSpec, network: &Network) -> Result<()> {
    let blob = serde_json::to_vec(spec).map_err(|e| CliError::malformed(path, e.to_string()))?;
    let params = network.named_values();
    let bytes = codec::encode_checkpoint(&blob, &params)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelSpec, Network)> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let (blob, params) =
        codec::decode_checkpoint(&bytes).map_err(|e| CliError::malformed(path, e.to_string()))?;
    let spec: ModelSpec =
        serde_json::from_slice(&blob).map_err(|e| CliError::malformed(path, e.to_string()))?;
    let mut network = spec.build_network(&mut RngStream::new(0))?;
    network
        .load_values(&params)
        .map_err(|e| CliError::malformed(path, e.to_string()))?;
    Ok((spec, network))
}

/// Header-level description for `inspect`: parameter names and shapes
/// without rebuilding the network.
pub fn checkpoint_summary(path: &Path) -> Result<(ModelSpec, Vec<(String, usize, usize)>)> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let (blob, params) =
        codec::decode_checkpoint(&bytes).map_err(|e| CliError::malformed(path, e.to_string()))?;
    let spec: ModelSpec =
        serde_json::from_slice(&blob).map_err(|e| CliError::malformed(path, e.to_string()))?;
    let shapes = params
        .into_iter()
        .map(|(name, m)| (name, m.rows(), m.cols()))
        .collect();
    Ok((spec, shapes))
}
