use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feed-forward nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Architecture hyperparameters. Instance-agnostic: one policy runs on any
/// number of jobs, operations and machines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub ffn_dim: usize,
    /// Width of the hidden layers of the scoring and critic MLPs.
    pub head_hidden: usize,
    /// Number of linear layers in the scoring and critic MLPs.
    pub head_layers: usize,
    pub rope_base: f64,
    pub activation: Activation,
    pub layer_norm_eps: f64,
    pub use_kv_cache: bool,
    pub critic_head: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 8,
            d_model: 128,
            ffn_dim: 512,
            head_hidden: 64,
            head_layers: 3,
            rope_base: 10000.0,
            activation: Activation::Relu,
            layer_norm_eps: 1e-5,
            use_kv_cache: true,
            critic_head: false,
        }
    }
}

impl PolicyConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.ffn_dim == 0 {
            return bad("layers, heads, d_model and ffn_dim must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return bad(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        if self.head_dim() % 2 != 0 {
            return bad(format!("head dimension {} must be even for rotary encoding", self.head_dim()));
        }
        if self.head_layers == 0 || (self.head_layers > 1 && self.head_hidden == 0) {
            return bad("scoring MLP needs at least one layer and a positive width".into());
        }
        if !(self.rope_base > 1.0) || !(self.layer_norm_eps > 0.0) {
            return bad("rope_base must exceed 1 and layer_norm_eps must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
