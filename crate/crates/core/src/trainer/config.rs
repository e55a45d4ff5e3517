use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::RewardConfig;

use super::mfpo::{CriticKind, CriticSpec};
use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ipo,
    MfpoConcat,
    MfpoMean,
    MfpoMeanCf,
    Copo,
    Curriculum,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Ipo,
        Algorithm::MfpoConcat,
        Algorithm::MfpoMean,
        Algorithm::MfpoMeanCf,
        Algorithm::Copo,
        Algorithm::Curriculum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ipo => "ipo",
            Self::MfpoConcat => "mfpo_concat",
            Self::MfpoMean => "mfpo_mean",
            Self::MfpoMeanCf => "mfpo_mean_cf",
            Self::Copo => "copo",
            Self::Curriculum => "curriculum",
        }
    }

    pub fn is_copo(self) -> bool {
        self == Self::Copo
    }

    pub fn critic_spec(self, k: usize, radius: f64) -> CriticSpec {
        let (kind, counterfactual) = match self {
            Self::MfpoConcat => (CriticKind::ConcatNearest, false),
            Self::MfpoMean => (CriticKind::MeanField, false),
            Self::MfpoMeanCf => (CriticKind::MeanField, true),
            Self::Ipo | Self::Copo | Self::Curriculum => (CriticKind::Local, false),
        };
        CriticSpec { kind, k, radius, counterfactual }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}; expected one of ipo, mfpo_concat, mfpo_mean, mfpo_mean_cf, copo, curriculum"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub clip: f64,
    pub kl_coeff: f64,
    pub lr: f64,
    /// Policy and value epochs per iteration.
    pub policy_epochs: usize,
    /// Coordination-factor ascent steps per iteration.
    pub lcf_epochs: usize,
    pub minibatch: usize,
    /// Agent transitions collected per iteration.
    pub batch: usize,
    pub gamma_individual: f64,
    pub gamma_neighborhood: f64,
    pub gamma_global: f64,
    pub lambda: f64,
    pub neighborhood_radius: f64,
    pub lcf_lr: f64,
    pub lcf_init_mean: f64,
    /// An initial std of exactly 0 pins every sampled factor to the mean.
    pub lcf_init_std: f64,
    pub update_lcf: bool,
    pub horizon: usize,
    pub feed_phi_to_policy: bool,
    pub normalize_advantages: bool,
    pub entropy_coeff: f64,
    pub hidden: Vec<usize>,
    pub n_envs: usize,
    pub mfpo_k: usize,
    pub mfpo_radius: f64,
    /// Global gradient-norm cap per network; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
    pub reward: RewardConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Copo,
            clip: 0.2,
            kl_coeff: 1.0,
            lr: 3e-4,
            policy_epochs: 5,
            lcf_epochs: 5,
            minibatch: 512,
            batch: 1024,
            gamma_individual: 0.99,
            gamma_neighborhood: 0.99,
            gamma_global: 1.0,
            lambda: 0.95,
            neighborhood_radius: 10.0,
            lcf_lr: 1e-4,
            lcf_init_mean: 0.0,
            lcf_init_std: 0.1,
            update_lcf: true,
            horizon: 1000,
            feed_phi_to_policy: false,
            normalize_advantages: true,
            entropy_coeff: 0.0,
            hidden: vec![256, 256],
            n_envs: 1,
            mfpo_k: 4,
            mfpo_radius: 10.0,
            max_grad_norm: None,
            seed: 0,
            reward: RewardConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.lr > 0.0) || !(self.lcf_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.kl_coeff < 0.0 || self.entropy_coeff < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        if self.policy_epochs == 0 || self.minibatch == 0 || self.batch == 0 || self.n_envs == 0 || self.horizon == 0 {
            return bad("epochs, batch sizes, environment count and horizon must be positive");
        }
        for g in [self.gamma_individual, self.gamma_neighborhood, self.gamma_global, self.lambda] {
            if !(0.0..=1.0).contains(&g) {
                return bad("discounts and lambda must lie in [0, 1]");
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be non-empty and positive");
        }
        if !(self.neighborhood_radius > 0.0) || !(self.mfpo_radius > 0.0) || self.mfpo_k == 0 {
            return bad("neighborhood radius and critic neighbor count must be positive");
        }
        if !(0.0..=1.0).contains(&self.lcf_init_std) || self.lcf_init_mean.abs() > std::f64::consts::FRAC_PI_2 {
            return bad("initial coordination factor must have |mean| <= pi/2 and std in [0, 1]");
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// Live agent count for `iteration` out of `total`: 25%, 50%, 75% then 100% of `target`
/// across four equal phases.
pub fn curriculum_schedule(iteration: usize, total: usize, target: usize) -> usize {
    let phase = if total == 0 { 3 } else { (iteration * 4 / total).min(3) };
    (target * (phase + 1)).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn defaults_match_reference_table() {
        let c = TrainerConfig::default();
        assert_eq!(c.kl_coeff, 1.0);
        assert_eq!(c.lambda, 0.95);
        assert_eq!(c.gamma_global, 1.0);
        assert_eq!((c.gamma_individual, c.gamma_neighborhood), (0.99, 0.99));
        assert_eq!(c.batch, 1024);
        assert_eq!(c.policy_epochs, 5);
        assert_eq!(c.minibatch, 512);
        assert_eq!(c.lr, 0.0003);
        assert_eq!(c.horizon, 1000);
        assert_eq!(c.neighborhood_radius, 10.0);
        assert_eq!(c.lcf_lr, 0.0001);
        assert_eq!(c.lcf_epochs, 5);
        assert_eq!((c.lcf_init_mean, c.lcf_init_std), (0.0, 0.1));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = TrainerConfig { algorithm: Algorithm::MfpoMeanCf, hidden: vec![64, 64], ..Default::default() };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<TrainerConfig>(&text).unwrap(), c);
        assert!(toml::from_str::<TrainerConfig>("clipp = 0.3").is_err());
    }

    #[test]
    fn curriculum_phases() {
        assert_eq!(curriculum_schedule(0, 100, 40), 10);
        assert_eq!(curriculum_schedule(24, 100, 40), 10);
        assert_eq!(curriculum_schedule(25, 100, 40), 20);
        assert_eq!(curriculum_schedule(50, 100, 40), 30);
        assert_eq!(curriculum_schedule(75, 100, 40), 40);
        assert_eq!(curriculum_schedule(99, 100, 30), 30);
        assert_eq!(curriculum_schedule(0, 8, 30), 8);
    }

    proptest! {
        #[test]
        fn curriculum_is_monotone(total in 4usize..500, target in 1usize..100) {
            let mut prev = 0;
            for it in 0..total {
                let c = curriculum_schedule(it, total, target);
                prop_assert!(c >= prev && c <= target && c >= 1);
                prev = c;
            }
            prop_assert!(prev == target);
        }
    }
}
