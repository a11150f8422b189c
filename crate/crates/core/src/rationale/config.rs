use alloc::format;

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::error::{Error, Result};
use crate::models::{CellKind, EncoderConfig};

/// Architecture and training settings of the generator/classifier pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointConfig {
    pub generator: EncoderConfig,
    /// Encoder of the classifier that reads only the selected words.
    pub classifier: EncoderConfig,
    /// Hidden size of the recurrent selection layer.
    pub z_hidden: usize,
    /// Select each word independently instead of conditioning on earlier selections.
    pub independent_selection: bool,
    /// Cost per selected word.
    pub lambda_sparsity: f64,
    /// Cost per switch between selected and unselected words.
    pub lambda_coherence: f64,
    /// Rationales sampled per comment per update.
    pub samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Validation checks happen every this many batches and at the end of each epoch
    /// (0: end of epoch only).
    pub validate_every: usize,
    pub max_restarts: usize,
    /// A validation check with a selected fraction above this is degenerate.
    pub degenerate_high: f64,
    /// A validation check with a selected fraction below this is degenerate.
    pub degenerate_low: f64,
    /// Consecutive degenerate checks that end an attempt.
    pub patience: usize,
    /// Decay of the running loss average used as the policy-gradient baseline.
    pub baseline_decay: f64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    /// Holds the selection-layer bias at this value throughout training.
    pub pinned_selection_bias: Option<f64>,
    pub freeze_classifier: bool,
    pub seed: u64,
}

impl JointConfig {
    /// Generator: bidirectional two-layer RCNN (hidden 200, order 2); selection
    /// layer hidden 30; classifier: unidirectional two-layer RCNN (hidden 200).
    pub fn paper() -> Self {
        JointConfig {
            generator: EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 200, layers: 2, bidirectional: true },
            classifier: EncoderConfig { cell: CellKind::Rcnn { order: 2 }, hidden: 200, layers: 2, bidirectional: false },
            z_hidden: 30,
            independent_selection: false,
            lambda_sparsity: 1e-3,
            lambda_coherence: 2e-3,
            samples: 1,
            epochs: 10,
            batch_size: 32,
            validate_every: 0,
            max_restarts: 4,
            degenerate_high: 0.95,
            degenerate_low: 0.005,
            patience: 3,
            baseline_decay: 0.99,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            pinned_selection_bias: None,
            freeze_classifier: false,
            seed: 0,
        }
    }

    /// Same architecture at laptop scale. Smaller models need a larger step
    /// and more epochs; the regularizer weights sit at the top of the reported range.
    pub fn desk() -> Self {
        let paper = Self::paper();
        JointConfig {
            generator: EncoderConfig { hidden: 16, ..paper.generator },
            classifier: EncoderConfig { hidden: 16, ..paper.classifier },
            z_hidden: 8,
            lambda_sparsity: 3e-3,
            lambda_coherence: 6e-3,
            epochs: 40,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            ..paper
        }
    }

    /// Whether the regularizer weights lie in the ranges reported to work well.
    pub fn lambdas_in_reported_range(&self) -> bool {
        let l1 = self.lambda_sparsity;
        (5e-4..=3e-3).contains(&l1) && (2.0 * l1..=4.0 * l1).contains(&self.lambda_coherence)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.classifier.validate()?;
        let bad = |what: &str| Err(Error::InvalidArgument(format!("joint config: {what}")));
        if self.z_hidden == 0 {
            return bad("z_hidden must be positive");
        }
        if !(self.lambda_sparsity >= 0.0 && self.lambda_coherence >= 0.0) {
            return bad("regularizer weights must be non-negative");
        }
        if self.samples == 0 || self.epochs == 0 || self.patience == 0 {
            return bad("samples, epochs and patience must be positive");
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return bad("batch size must be even and at least 2");
        }
        if !(0.0 < self.degenerate_low && self.degenerate_low < self.degenerate_high && self.degenerate_high < 1.0) {
            return bad("degenerate thresholds must satisfy 0 < low < high < 1");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline decay must lie in [0, 1)");
        }
        Ok(())
    }
}

impl Default for JointConfig {
    fn default() -> Self {
        Self::desk()
    }
}
