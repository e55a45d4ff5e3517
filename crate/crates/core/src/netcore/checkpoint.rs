use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, NetError, ParamSet};

pub const CHECKPOINT_FORMAT: &str = "copo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub precision: Precision,
    pub policy_shapes: Vec<[usize; 2]>,
    /// Individual, neighborhood and global value heads, in that order.
    pub value_shapes: [Vec<[usize; 2]>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub algorithm: String,
    pub iteration: usize,
    pub env_steps: u64,
    pub policy: ParamSet,
    pub values: [ParamSet; 3],
    pub lcf_mu: f64,
    pub lcf_sigma: f64,
    /// Policy optimizer followed by the three value optimizers.
    pub optimizers: Vec<Adam>,
}

impl Checkpoint {
    pub fn new(
        algorithm: &str,
        iteration: usize,
        env_steps: u64,
        policy: ParamSet,
        values: [ParamSet; 3],
        lcf: (f64, f64),
        optimizers: Vec<Adam>,
    ) -> Self {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            precision: Precision::F64,
            policy_shapes: policy.shapes(),
            value_shapes: [values[0].shapes(), values[1].shapes(), values[2].shapes()],
        };
        Self {
            header,
            algorithm: algorithm.into(),
            iteration,
            env_steps,
            policy,
            values,
            lcf_mu: lcf.0,
            lcf_sigma: lcf.1,
            optimizers,
        }
    }

    /// Checks the header against the stored parameter shapes.
    pub fn validate(&self) -> Result<(), NetError> {
        let h = &self.header;
        if h.format != CHECKPOINT_FORMAT {
            return Err(NetError::Format(format!("unexpected format tag {:?}", h.format)));
        }
        if h.version != CHECKPOINT_VERSION {
            return Err(NetError::Format(format!("unsupported checkpoint version {}", h.version)));
        }
        if h.policy_shapes != self.policy.shapes() {
            return Err(NetError::Format("policy shapes differ from header".into()));
        }
        for (k, v) in self.values.iter().enumerate() {
            if h.value_shapes[k] != v.shapes() {
                return Err(NetError::Format(format!("value head {k} shapes differ from header")));
            }
        }
        if self.policy.log_std.is_none() {
            return Err(NetError::Format("policy has no log-std".into()));
        }
        let all = std::iter::once(&self.policy).chain(self.values.iter());
        for (p, opt) in all.zip(&self.optimizers) {
            if opt.m.len() != p.num_params() || opt.v.len() != p.num_params() {
                return Err(NetError::Format("optimizer state length differs from parameters".into()));
            }
        }
        if !self.policy.is_finite() || self.values.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteParameter);
        }
        Ok(())
    }

    /// Copy with every parameter rounded to single precision.
    pub fn to_single_precision(&self) -> Self {
        let round = |p: &ParamSet| {
            let flat: Vec<f64> = p.flatten().into_iter().map(|v| v as f32 as f64).collect();
            p.with_flat(&flat).expect("same shape")
        };
        let mut out = self.clone();
        out.header.precision = Precision::F32;
        out.policy = round(&self.policy);
        out.values = [round(&self.values[0]), round(&self.values[1]), round(&self.values[2])];
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let text = serde_json::to_string(self).map_err(|e| NetError::Format(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(|e| NetError::io(path, e))?;
        fs::rename(&tmp, path).map_err(|e| NetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let text = fs::read_to_string(path).map_err(|e| NetError::io(path, e))?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| NetError::Format(format!("{}: {e}", path.display())))?;
        ck.validate()?;
        Ok(ck)
    }
}
