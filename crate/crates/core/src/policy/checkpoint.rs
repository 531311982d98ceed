use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Policy, PolicyConfig};
use crate::error::{Error, Result};
use crate::numerics::{ParamRecord, ParamStore};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk policy: format version, architecture and every named tensor.
/// Optional `extra` carries trainer state for resuming.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: PolicyConfig,
    pub params: Vec<ParamRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: Option<u32>,
        }
        let v: Version = serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        match v.format_version {
            Some(CHECKPOINT_FORMAT_VERSION) => {}
            Some(other) => {
                return Err(Error::Checkpoint(format!(
                    "checkpoint format {other}, this build reads {CHECKPOINT_FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::Checkpoint("checkpoint has no format_version".into())),
        }
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // write-then-rename so an interrupted save never leaves a torn file
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Policy {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            architecture: self.config.clone(),
            params: self.params.to_records(),
            extra: None,
        }
    }

    /// Rebuilds a policy with the stored architecture and weights.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.architecture.validate()?;
        let mut params = ParamStore::new();
        let net = super::Net::build(&ckpt.architecture, &mut params, &mut rand::rngs::mock::StepRng::new(0, 0));
        let mut p = Self {
            config: ckpt.architecture.clone(),
            params,
            net,
        };
        p.params.load_records(&ckpt.params)?;
        Ok(p)
    }

    /// Loads weights into this policy; the stored architecture must match.
    pub fn load_weights(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.architecture != self.config {
            return Err(Error::Checkpoint(format!(
                "checkpoint architecture {:?} differs from model {:?}",
                ckpt.architecture, self.config
            )));
        }
        self.params.load_records(&ckpt.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::env::{extract_features, RewardMode, SchedulingState};
    use crate::instance::instance_from_lists;
    use crate::policy::tests::small_config;

    #[test]
    fn save_load_is_bit_exact() {
        let p = Policy::new(small_config(), &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        p.save(&path).unwrap();
        let q = Policy::load(&path).unwrap();
        assert!(p.params().bitwise_eq(q.params()));
        let inst = instance_from_lists(2, &[&[&[(0, 3), (1, 1)], &[(1, 2)]], &[&[(0, 7)]]]).unwrap();
        let f = extract_features(&SchedulingState::new(Arc::new(inst), RewardMode::LowerBound));
        let (a, b) = (p.forward(&f).unwrap(), q.forward(&f).unwrap());
        assert!(a.logits.iter().zip(&b.logits).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn corrupt_and_mismatched_checkpoints_fail() {
        assert!(matches!(Checkpoint::from_json("{not json"), Err(Error::Checkpoint(_))));
        let p = Policy::new(small_config(), &mut ChaCha8Rng::seed_from_u64(22)).unwrap();
        let mut ck = p.to_checkpoint();
        ck.format_version = 99;
        assert!(Checkpoint::from_json(&ck.to_json().unwrap()).is_err());

        let mut other = Policy::new(PolicyConfig { d_model: 4, ..small_config() }, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(matches!(other.load_weights(&p.to_checkpoint()), Err(Error::Checkpoint(_))));

        let mut bad = p.to_checkpoint();
        bad.params[0].data.pop();
        assert!(Policy::from_checkpoint(&bad).is_err());
        let mut renamed = p.to_checkpoint();
        renamed.params[1].name = "x".into();
        assert!(Policy::from_checkpoint(&renamed).is_err());
    }
}
