use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named, ordered collection of learnable tensors. Parameter ids are
/// insertion indices.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

/// Serialised form of one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, id: usize) -> &Tensor {
        &self.values[id]
    }

    pub(crate) fn value_arc(&self, id: usize) -> Arc<Tensor> {
        self.values[id].clone()
    }

    /// Mutable access; copies the storage first if a graph still shares it.
    pub fn value_mut(&mut self, id: usize) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id])
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.values.iter().map(|v| Tensor::zeros(v.rows(), v.cols())).collect()
    }

    pub fn to_records(&self) -> Vec<ParamRecord> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| ParamRecord {
                name: n.clone(),
                shape: v.shape(),
                data: v.data().to_vec(),
            })
            .collect()
    }

    /// Overwrites every parameter from `records`, which must match this
    /// store's names and shapes exactly.
    pub fn load_records(&mut self, records: &[ParamRecord]) -> Result<()> {
        if records.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {}",
                records.len(),
                self.len()
            )));
        }
        for (id, rec) in records.iter().enumerate() {
            if rec.name != self.names[id] {
                return Err(Error::Checkpoint(format!(
                    "tensor {id} is `{}`, expected `{}`",
                    rec.name, self.names[id]
                )));
            }
            if rec.shape != self.values[id].shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    rec.name,
                    rec.shape,
                    self.values[id].shape()
                )));
            }
            let t = Tensor::new(rec.shape[0], rec.shape[1], rec.data.clone())
                .map_err(|e| Error::Checkpoint(format!("tensor `{}`: {e}", rec.name)))?;
            self.values[id] = Arc::new(t);
        }
        Ok(())
    }

    /// Identical names, shapes and bit patterns.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
