use super::{extract_bias_fields, BiasField, ModelConfig, SerenadeParams};
use crate::features::{Excerpt, FeatureMatrix};
use crate::nade::{self, DecodeMode, NadeError, OracleMask, PredictionResult, Propagation};
use crate::tensor::{Matrix, TensorError};

/// A configured model with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Serenade {
    pub config: ModelConfig,
    pub params: SerenadeParams<Matrix>,
}

impl Serenade {
    pub fn new(config: ModelConfig, params: SerenadeParams<Matrix>) -> Result<Self, TensorError> {
        params.check_shapes(&config)?;
        Ok(Serenade { config, params })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Self {
        Serenade {
            params: SerenadeParams::init(&config, seed),
            config,
        }
    }

    pub fn bias_fields(&self, input: &FeatureMatrix) -> Result<BiasField, TensorError> {
        extract_bias_fields(input, &self.params, &self.config)
    }

    pub fn predict(
        &self,
        input: &FeatureMatrix,
        mode: DecodeMode,
    ) -> Result<PredictionResult, NadeError> {
        let bias = self.bias_fields(input)?;
        nade::infer(&bias, &self.params.l2r, &self.params.r2l, mode)
    }

    pub fn predict_constrained(
        &self,
        input: &FeatureMatrix,
        mask: &OracleMask,
        mode: DecodeMode,
        propagation: Propagation,
    ) -> Result<PredictionResult, NadeError> {
        let bias = self.bias_fields(input)?;
        nade::infer_constrained(
            &bias,
            &self.params.l2r,
            &self.params.r2l,
            mask,
            mode,
            propagation,
        )
    }

    /// Teacher-forced loss on one labelled excerpt.
    pub fn loss(&self, excerpt: &Excerpt) -> Result<f64, NadeError> {
        let bias = self.bias_fields(&excerpt.features)?;
        nade::loss(&bias, &self.params.l2r, &self.params.r2l, &excerpt.labels)
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }
}
