//! Self-check fixtures comparing analytic quantities against finite differences or
//! brute-force recomputation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::Vec2;
use crate::netcore::gaussian::{self, LOG_STD_INIT};
use crate::netcore::ParamSet;
use crate::rollout::{compute_gae, neighborhood_rewards};
use crate::trainer::losses::{ppo_policy_loss, value_loss, weighted_log_prob_grad, PolicyBatch, PolicyLossConfig};
use crate::trainer::meta::{lcf_gradient, LcfBatch};
use crate::trainer::LcfDistribution;

pub const FIXTURES: [&str; 5] = ["mlp", "ppo_loss", "lcf_bandit", "gae", "neighborhood"];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureReport {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < self.tolerance
    }
}

pub fn run(name: &str) -> Option<Vec<FixtureReport>> {
    Some(match name {
        "mlp" => vec![mlp()],
        "ppo_loss" => ppo_loss(),
        "lcf_bandit" => lcf_bandit(),
        "gae" => vec![gae()],
        "neighborhood" => vec![neighborhood()],
        "all" => FIXTURES.iter().flat_map(|f| run(f).unwrap()).collect(),
        _ => return None,
    })
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 { diff } else { diff / scale }
}

/// Central differences of `f` around `theta` with step `h`.
pub fn central_difference(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + h;
            let up = f(&x);
            x[i] = theta[i] - h;
            let down = f(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-5;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn mlp() -> FixtureReport {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p = ParamSet::init(&[2, 16, 16, 2], None, 1.0, &mut rng);
    let x = random_matrix(&mut rng, 8, 2);
    let w = random_matrix(&mut rng, 8, 2);
    // L = sum(w * y^2) / 2
    let loss = |q: &ParamSet| {
        let y = q.forward(x.view()).unwrap();
        0.5 * (&w * &y * &y).sum()
    };
    let (y, cache) = p.forward_cached(x.view()).unwrap();
    let analytic = p.backward(&cache, (&w * &y).view()).flatten();
    let fd = central_difference(&p.flatten(), H, |f| loss(&p.with_flat(f).unwrap()));
    FixtureReport { name: "mlp".into(), max_rel_err: rel_err(&analytic, &fd), tolerance: GRAD_TOL }
}

struct PolicyFixture {
    policy: ParamSet,
    obs: Array2<f64>,
    actions: Array2<f64>,
    logp: Vec<f64>,
    mean: Array2<f64>,
    log_std: Array2<f64>,
    adv: Vec<f64>,
}

fn policy_fixture(seed: u64, n: usize) -> PolicyFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut behavior = ParamSet::init(&[2, 16, 16, 2], Some(LOG_STD_INIT), 1.0, &mut rng);
    let obs = random_matrix(&mut rng, n, 2);
    let mean = behavior.forward(obs.view()).unwrap();
    let ls = behavior.effective_log_std().unwrap().to_vec();
    let mut actions = Array2::zeros((n, 2));
    let mut logp = Vec::with_capacity(n);
    for i in 0..n {
        let s = gaussian::sample(mean.row(i).as_slice().unwrap(), &ls, &mut rng);
        actions.row_mut(i).assign(&ndarray::arr1(&s.raw));
        // every third sample gets a shifted behavior probability so some ratios leave the clip range
        logp.push(s.log_prob + if i % 3 == 0 { rng.random_range(-0.6..0.6) } else { 0.0 });
    }
    let adv = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    // the policy being differentiated is a perturbation of the behavior policy
    let mut flat = behavior.flatten();
    flat.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
    behavior.assign(&flat).unwrap();
    let log_std = Array2::from_shape_fn((n, 2), |(_, k)| ls[k]);
    PolicyFixture { policy: behavior, obs, actions, logp, mean, log_std, adv }
}

fn ppo_loss() -> Vec<FixtureReport> {
    let f = policy_fixture(23, 24);
    let batch = PolicyBatch {
        obs: f.obs.view(),
        actions: f.actions.view(),
        behavior_log_probs: &f.logp,
        behavior_mean: f.mean.view(),
        behavior_log_std: f.log_std.view(),
        advantages: &f.adv,
    };
    let cfg = PolicyLossConfig { clip: 0.2, kl_coeff: 1.0, entropy_coeff: 0.01 };
    let analytic = ppo_policy_loss(&f.policy, &batch, &cfg).unwrap().grad.flatten();
    let fd = central_difference(&f.policy.flatten(), H, |x| {
        ppo_policy_loss(&f.policy.with_flat(x).unwrap(), &batch, &cfg).unwrap().loss
    });
    let mut reports = vec![FixtureReport { name: "ppo_loss".into(), max_rel_err: rel_err(&analytic, &fd), tolerance: GRAD_TOL }];

    let weights: Vec<f64> = f.adv.iter().map(|a| a * 0.5 - 0.1).collect();
    let analytic = weighted_log_prob_grad(&f.policy, f.obs.view(), f.actions.view(), &weights).unwrap().flatten();
    let fd = central_difference(&f.policy.flatten(), H, |x| {
        let p = f.policy.with_flat(x).unwrap();
        let m = p.forward(f.obs.view()).unwrap();
        let ls = p.effective_log_std().unwrap().to_vec();
        (0..weights.len())
            .map(|i| weights[i] * gaussian::log_prob(m.row(i).as_slice().unwrap(), &ls, f.actions.row(i).as_slice().unwrap()))
            .sum::<f64>()
            / weights.len() as f64
    });
    reports.push(FixtureReport { name: "score_function".into(), max_rel_err: rel_err(&analytic, &fd), tolerance: GRAD_TOL });

    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let head = ParamSet::init(&[2, 16, 16, 1], None, 1.0, &mut rng);
    let x = random_matrix(&mut rng, 10, 2);
    let targets: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
    let analytic = value_loss(&head, x.view(), &targets).unwrap().1.flatten();
    let fd = central_difference(&head.flatten(), H, |p| value_loss(&head.with_flat(p).unwrap(), x.view(), &targets).unwrap().0);
    reports.push(FixtureReport { name: "value_loss".into(), max_rel_err: rel_err(&analytic, &fd), tolerance: GRAD_TOL });
    reports
}

/// Two agents, one step each round; each agent's reward is the other agent's action.
#[derive(Debug, Clone)]
pub struct Bandit {
    pub theta_old: ParamSet,
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub logp: Vec<f64>,
    pub mean: Array2<f64>,
    pub log_std: Array2<f64>,
    pub adv_individual: Vec<f64>,
    pub adv_neighborhood: Vec<f64>,
    pub adv_global: Vec<f64>,
    pub eps: Vec<f64>,
}

impl Bandit {
    /// `rounds` rounds of two agents with 6-dimensional observations and a linear policy
    /// of one action dimension (eight parameters).
    pub fn new(seed: u64, rounds: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta_old = ParamSet::init(&[6, 1], Some(LOG_STD_INIT), 0.3, &mut rng);
        let n = 2 * rounds;
        let obs = random_matrix(&mut rng, n, 6);
        let mean = theta_old.forward(obs.view()).unwrap();
        let ls = theta_old.effective_log_std().unwrap().to_vec();
        let mut actions = Array2::zeros((n, 1));
        let mut logp = Vec::with_capacity(n);
        for i in 0..n {
            let s = gaussian::sample(mean.row(i).as_slice().unwrap(), &ls, &mut rng);
            actions[[i, 0]] = s.raw[0];
            logp.push(s.log_prob);
        }
        let (mut ai, mut an, mut ag) = (Vec::new(), Vec::new(), Vec::new());
        for r in 0..rounds {
            let (a0, a1) = (actions[[2 * r, 0]], actions[[2 * r + 1, 0]]);
            let (r0, r1) = (a1, a0);
            ai.extend([r0, r1]);
            // each agent's only neighbor is the other one
            an.extend([r1, r0]);
            ag.extend([(r0 + r1) / 2.0; 2]);
        }
        let eps = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let log_std = Array2::from_elem((n, 1), ls[0]);
        Self { theta_old, obs, actions, logp, mean, log_std, adv_individual: ai, adv_neighborhood: an, adv_global: ag, eps }
    }

    pub fn factors(&self, dist: &LcfDistribution) -> (Vec<f64>, Vec<bool>) {
        self.eps.iter().map(|&e| dist.phi_from_eps(e)).map(|s| (s.phi, s.clamped)).unzip()
    }

    fn lcf_batch<'a>(&'a self, phi: &'a [f64], clamped: &'a [bool]) -> LcfBatch<'a> {
        LcfBatch {
            obs: self.obs.view(),
            actions: self.actions.view(),
            behavior_log_probs: &self.logp,
            behavior_mean: self.mean.view(),
            behavior_log_std: self.log_std.view(),
            adv_individual: &self.adv_individual,
            adv_neighborhood: &self.adv_neighborhood,
            adv_global: &self.adv_global,
            phi,
            eps: &self.eps,
            clamped,
        }
    }

    /// One plain gradient-ascent step of rate `alpha` on the coordinated surrogate.
    pub fn inner_update(&self, dist: &LcfDistribution, alpha: f64) -> ParamSet {
        let (phi, _) = self.factors(dist);
        let a_c: Vec<f64> = (0..phi.len())
            .map(|k| phi[k].cos() * self.adv_individual[k] + phi[k].sin() * self.adv_neighborhood[k])
            .collect();
        let g = weighted_log_prob_grad(&self.theta_old, self.obs.view(), self.actions.view(), &a_c).unwrap();
        let mut theta = self.theta_old.clone();
        theta.add_scaled(&g, alpha);
        theta
    }

    /// Clipped global surrogate of `theta` against the behavior policy.
    pub fn global_objective(&self, theta: &ParamSet, clip: f64) -> f64 {
        let b = PolicyBatch {
            obs: self.obs.view(),
            actions: self.actions.view(),
            behavior_log_probs: &self.logp,
            behavior_mean: self.mean.view(),
            behavior_log_std: self.log_std.view(),
            advantages: &self.adv_global,
        };
        ppo_policy_loss(theta, &b, &PolicyLossConfig { clip, kl_coeff: 0.0, entropy_coeff: 0.0 }).unwrap().surrogate
    }

    /// Analytic `(d/dmu, d/dsigma)` at the parameters reached by the inner step.
    pub fn analytic(&self, dist: &LcfDistribution, alpha: f64, clip: f64) -> (f64, f64) {
        let theta_new = self.inner_update(dist, alpha);
        let (phi, clamped) = self.factors(dist);
        let g = lcf_gradient(&self.theta_old, &theta_new, &self.lcf_batch(&phi, &clamped), clip).unwrap();
        (g.d_mu, g.d_sigma)
    }

    /// Finite difference of the global objective through the inner step, divided by `alpha`.
    pub fn finite_difference(&self, dist: &LcfDistribution, alpha: f64, clip: f64, h: f64) -> (f64, f64) {
        let j = |d: LcfDistribution| self.global_objective(&self.inner_update(&d, alpha), clip);
        let shift = |dm: f64, ds: f64| LcfDistribution { mu: dist.mu + dm, sigma: dist.sigma + ds };
        let d_mu = (j(shift(h, 0.0)) - j(shift(-h, 0.0))) / (2.0 * h * alpha);
        let d_sigma = (j(shift(0.0, h)) - j(shift(0.0, -h))) / (2.0 * h * alpha);
        (d_mu, d_sigma)
    }
}

pub const BANDIT_ALPHA: f64 = 1e-3;
pub const BANDIT_H: f64 = 1e-4;
pub const BANDIT_TOL: f64 = 1e-3;

fn lcf_bandit() -> Vec<FixtureReport> {
    let bandit = Bandit::new(5, 64);
    let mut reports = Vec::new();
    for (name, dist) in [("lcf_bandit", LcfDistribution::new(0.3, 0.2)), ("lcf_bandit_origin", LcfDistribution::new(0.0, 0.1))] {
        let a = bandit.analytic(&dist, BANDIT_ALPHA, 0.2);
        let f = bandit.finite_difference(&dist, BANDIT_ALPHA, 0.2, BANDIT_H);
        reports.push(FixtureReport { name: name.into(), max_rel_err: rel_err(&[a.0, a.1], &[f.0, f.1]), tolerance: BANDIT_TOL });
    }
    reports
}

fn gae() -> FixtureReport {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(5..=50);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let boot = if rng.random_bool(0.5) { rng.random_range(-1.0..1.0) } else { 0.0 };
        for (gamma, lambda) in [(0.99, 0.95), (1.0, 0.95)] {
            let (adv, _) = compute_gae(&r, &v, boot, gamma, lambda);
            let direct: Vec<f64> = (0..n)
                .map(|t| {
                    (t..n)
                        .map(|l| {
                            let next = if l + 1 < n { v[l + 1] } else { boot };
                            (gamma * lambda as f64).powi((l - t) as i32) * (r[l] + gamma * next - v[l])
                        })
                        .sum()
                })
                .collect();
            worst = worst.max(rel_err(&adv, &direct));
        }
    }
    FixtureReport { name: "gae".into(), max_rel_err: worst, tolerance: 1e-12 }
}

fn neighborhood() -> FixtureReport {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=60);
        let pos: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0))).collect();
        let rew: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fast = neighborhood_rewards(&pos, &rew, 10.0);
        for i in 0..n {
            let nb: Vec<f64> = (0..n).filter(|&j| j != i && pos[i].distance(pos[j]) <= 10.0).map(|j| rew[j]).collect();
            let want = if nb.is_empty() { 0.0 } else { nb.iter().sum::<f64>() / nb.len() as f64 };
            worst = worst.max((fast[i] - want).abs());
        }
    }
    FixtureReport { name: "neighborhood".into(), max_rel_err: worst, tolerance: 1e-12 }
}
