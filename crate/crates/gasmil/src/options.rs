//! Shared CLI / config / checkpoint enums and their string forms.

use clap::ValueEnum;
use gasmil_core::baseline::BaselineKind;
use gasmil_core::model::GfebKind;
use gasmil_core::train::MonitorMetric;
use gasmil_core::LossKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Gasmil,
    Abmil,
    Chowder,
}

impl Arch {
    pub fn baseline_kind(self) -> Option<BaselineKind> {
        match self {
            Arch::Gasmil => None,
            Arch::Abmil => Some(BaselineKind::Abmil),
            Arch::Chowder => Some(BaselineKind::Chowder),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GfebChoice {
    Mlp,
    Attention,
}

impl From<GfebChoice> for GfebKind {
    fn from(value: GfebChoice) -> Self {
        match value {
            GfebChoice::Mlp => GfebKind::Mlp,
            GfebChoice::Attention => GfebKind::Attention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossChoice {
    Ce,
    BceOrdinal,
}

impl From<LossChoice> for LossKind {
    fn from(value: LossChoice) -> Self {
        match value {
            LossChoice::Ce => LossKind::CrossEntropy,
            LossChoice::BceOrdinal => LossKind::BceOrdinal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorChoice {
    BalancedAccuracy,
    Qwk,
    WeightedF1,
    Loss,
}

impl From<MonitorChoice> for MonitorMetric {
    fn from(value: MonitorChoice) -> Self {
        match value {
            MonitorChoice::BalancedAccuracy => MonitorMetric::BalancedAccuracy,
            MonitorChoice::Qwk => MonitorMetric::Qwk,
            MonitorChoice::WeightedF1 => MonitorMetric::WeightedF1,
            MonitorChoice::Loss => MonitorMetric::Loss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
}

impl From<SplitChoice> for gasmil_core::Split {
    fn from(value: SplitChoice) -> Self {
        match value {
            SplitChoice::Train => gasmil_core::Split::Train,
            SplitChoice::Val => gasmil_core::Split::Val,
            SplitChoice::Test => gasmil_core::Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdChoice {
    Otsu,
    Fixed,
}
