//! In-memory checkpoint: config, named f32 tensors (parameters and
//! running-stat buffers), optional optimizer state, and the build seed.
//! The on-disk codec lives in the companion IO crate and round-trips this
//! struct bit-exactly.

use alloc::string::String;
use alloc::vec::Vec;

use super::adam::AdamState;
use super::resnet::{NetConfig, NeuralError, Network};
use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<NamedTensor>,
    pub v: Vec<NamedTensor>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCheckpoint {
    pub cfg: NetConfig,
    pub seed: u64,
    pub params: Vec<NamedTensor>,
    pub buffers: Vec<NamedTensor>,
    pub optimizer: Option<OptimizerState>,
}

fn to_named<F: Scalar>(names: &[super::resnet::ParamMeta], ts: &[Tensor<F>]) -> Vec<NamedTensor> {
    names
        .iter()
        .zip(ts)
        .map(|(m, t)| NamedTensor {
            name: m.name.clone(),
            shape: m.shape.clone(),
            data: t.data().iter().map(|v| v.as_f32()).collect(),
        })
        .collect()
}

impl NetworkCheckpoint {
    pub fn from_network<F: Scalar>(net: &Network<F>, opt: Option<&AdamState<F>>) -> Self {
        NetworkCheckpoint {
            cfg: net.cfg,
            seed: net.seed,
            params: to_named(&net.arch.metas, &net.params),
            buffers: to_named(&net.arch.buffer_metas, &net.buffers),
            optimizer: opt.map(|o| OptimizerState {
                m: to_named(&net.arch.metas, &o.m),
                v: to_named(&net.arch.metas, &o.v),
                step: o.step,
            }),
        }
    }

    /// Rebuild a network at the requested precision. Tensor names and
    /// shapes must match the config's layout exactly.
    pub fn to_network<F: Scalar>(&self) -> Result<Network<F>, NeuralError> {
        let mut net = Network::<F>::build(self.cfg, self.seed)?;
        load_into(&net.arch.metas.clone(), &mut net.params, &self.params)?;
        load_into(&net.arch.buffer_metas.clone(), &mut net.buffers, &self.buffers)?;
        Ok(net)
    }

    pub fn optimizer_state<F: Scalar>(
        &self,
        net: &Network<F>,
    ) -> Result<Option<AdamState<F>>, NeuralError> {
        match &self.optimizer {
            None => Ok(None),
            Some(o) => {
                let mut m = net.zero_grads();
                let mut v = net.zero_grads();
                load_into(&net.arch.metas, &mut m, &o.m)?;
                load_into(&net.arch.metas, &mut v, &o.v)?;
                Ok(Some(AdamState { m, v, step: o.step }))
            }
        }
    }

    /// Copy another checkpoint's trunk tensors into this one (used to
    /// attach a fresh head to a pre-trained trunk).
    pub fn load_trunk_from(&mut self, other: &NetworkCheckpoint) -> Result<(), NeuralError> {
        for t in self.params.iter_mut().chain(self.buffers.iter_mut()) {
            if t.name.starts_with("head.") {
                continue;
            }
            let src = other
                .params
                .iter()
                .chain(other.buffers.iter())
                .find(|s| s.name == t.name)
                .ok_or_else(|| NeuralError::CheckpointMismatch(t.name.clone()))?;
            if src.shape != t.shape {
                return Err(NeuralError::CheckpointMismatch(t.name.clone()));
            }
            t.data.clone_from(&src.data);
        }
        Ok(())
    }
}

fn load_into<F: Scalar>(
    metas: &[super::resnet::ParamMeta],
    dst: &mut [Tensor<F>],
    src: &[NamedTensor],
) -> Result<(), NeuralError> {
    if metas.len() != src.len() {
        return Err(NeuralError::CheckpointMismatch(alloc::format!(
            "tensor count {} != {}",
            src.len(),
            metas.len()
        )));
    }
    for ((meta, d), s) in metas.iter().zip(dst).zip(src) {
        if meta.name != s.name || meta.shape != s.shape {
            return Err(NeuralError::CheckpointMismatch(s.name.clone()));
        }
        for (dv, &sv) in d.data_mut().iter_mut().zip(&s.data) {
            *dv = F::of_f32(sv);
        }
    }
    Ok(())
}
