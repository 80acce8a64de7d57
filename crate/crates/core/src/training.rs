//! Empirical risk minimization over θ: sample disturbances, roll out the
//! closed loop, average the loss and descend with Adam.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{clip_global_norm, value_and_grad, AdamConfig, AdamState, Var};
use crate::error::{Error, Result};
use crate::imc::{rollout, ImcController, Trajectory};
use crate::l2ops::{Checkpoint, OperatorSpec, ParamFamily, SeedLineage};
use crate::plants::{Dynamics, PointMassParams};
use crate::scalar::Scalar;
use crate::scenario::{DisturbanceModel, Scenario};
use crate::signals::Signal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig<P = OperatorSpec> {
    /// Policy family; the free operator of the boosted controller by default.
    pub operator: P,
    /// Number of sampled disturbances `S`.
    pub samples: usize,
    #[serde(default = "one")]
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default = "default_fractions")]
    pub checkpoint_fractions: Vec<f64>,
}

fn one() -> usize {
    1
}

fn default_init_std() -> f64 {
    0.02
}

fn default_clip() -> f64 {
    10.0
}

fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

impl<P> TrainConfig<P> {
    pub fn new(operator: P, samples: usize, epochs: usize, lr: f64, seed: u64) -> Self {
        TrainConfig {
            operator,
            samples,
            batch_size: 1,
            epochs,
            lr,
            seed,
            init_std: default_init_std(),
            clip_norm: default_clip(),
            checkpoint_fractions: default_fractions(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("samples and batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.init_std >= 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Invalid("learning rate and clip norm must be positive".into()));
        }
        if self.checkpoint_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Invalid("checkpoint fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Seeds for θ initialization, disturbance sampling and shuffling,
    /// derived from the master seed.
    pub fn lineage(&self) -> SeedLineage {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        SeedLineage {
            master: self.seed,
            init: rng.random(),
            samples: rng.random(),
            shuffle: rng.random(),
        }
    }
}

/// Training disturbances of a scenario; deterministic per seed.
pub fn sample_disturbances(scenario: &Scenario, count: usize, seed: u64) -> Vec<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = scenario.nominal_state();
    let n = scenario.plant.state_dim();
    let len = scenario.horizon + 1;
    (0..count)
        .map(|_| {
            let mut w = Signal::zeros(n, len);
            w.at_mut(0).copy_from_slice(&x0);
            match scenario.disturbance {
                DisturbanceModel::InitialCondition { std } => {
                    let d = Normal::new(0.0, std).expect("nonnegative std");
                    for i in 0..scenario.plant.n_vehicles() {
                        w.at_mut(0)[4 * i] += d.sample(&mut rng);
                        w.at_mut(0)[4 * i + 1] += d.sample(&mut rng);
                    }
                }
                DisturbanceModel::ProcessNoise { std } => {
                    let d = Normal::new(0.0, std).expect("nonnegative std");
                    for t in 1..len {
                        for v in w.at_mut(t) {
                            *v = d.sample(&mut rng);
                        }
                    }
                }
            }
            w
        })
        .collect()
}

/// Policies trainable by [`train`]: θ together with a scenario determines
/// a closed-loop trajectory for every disturbance.
pub trait PolicyFamily: ParamFamily + Clone + Sync {
    fn rollout<S: Scalar>(&self, theta: &[S], scenario: &Scenario, w: &Signal<S>) -> Result<Trajectory<S>>;
}

impl PolicyFamily for OperatorSpec {
    fn rollout<S: Scalar>(&self, theta: &[S], scenario: &Scenario, w: &Signal<S>) -> Result<Trajectory<S>> {
        boosted_rollout(self, theta, &scenario.plant, &scenario.plant, w, scenario.horizon)
    }
}

/// Closed loop of the boosted controller built from `theta`.
pub fn boosted_rollout<S: Scalar>(
    spec: &OperatorSpec,
    theta: &[S],
    plant: &PointMassParams,
    model: &PointMassParams,
    w: &Signal<S>,
    horizon: usize,
) -> Result<Trajectory<S>> {
    let op = spec.build(theta)?;
    let mut c = ImcController::new(model, op)?;
    rollout(plant, &mut c, w, horizon)
}

fn sample_loss<P: PolicyFamily, S: Scalar>(family: &P, theta: &[S], w: &Signal, scenario: &Scenario) -> Result<S> {
    let traj = family.rollout(theta, scenario, &w.lift())?;
    scenario.objective(&traj)
}

fn tag(i: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("sample {i}: {m}")),
        Error::Autodiff(m) => Error::Autodiff(format!("sample {i}: {m}")),
        other => other,
    }
}

/// `(1/S) Σ_s L(rollout(θ, w^s))`.
pub fn empirical_objective<P: PolicyFamily>(
    spec: &P,
    theta: &[f64],
    samples: &[Signal],
    scenario: &Scenario,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("no samples".into()));
    }
    let vals: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(i, w)| sample_loss(spec, theta, w, scenario).map_err(|e| tag(i, e)))
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Mean loss and gradient over `samples`, reduced in sample order.
pub fn objective_and_grad<P: PolicyFamily>(
    spec: &P,
    theta: &[f64],
    samples: &[&Signal],
    scenario: &Scenario,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<(f64, Vec<f64>)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut inner = None;
            let r = value_and_grad(theta, |th: &[Var]| match sample_loss(spec, th, w, scenario) {
                Ok(v) => v,
                Err(e) => {
                    inner = Some(e);
                    Var::constant(f64::NAN)
                }
            });
            match (inner, r) {
                (Some(e), _) => Err(tag(i, e)),
                (None, r) => r.map_err(|e| tag(i, e)),
            }
        })
        .collect::<Result<_>>()?;
    let k = parts.len() as f64;
    let mut g = vec![0.0; theta.len()];
    let mut v = 0.0;
    for (pv, pg) in &parts {
        v += pv;
        for (a, b) in g.iter_mut().zip(pg) {
            *a += b;
        }
    }
    g.iter_mut().for_each(|a| *a /= k);
    Ok((v / k, g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<P = OperatorSpec> {
    pub theta: Vec<f64>,
    /// The initial θ first, then one checkpoint per configured fraction.
    pub checkpoints: Vec<Checkpoint<P>>,
    pub log: Vec<EpochRecord>,
}

/// Runs `epochs × ⌈S / batch⌉` Adam steps.
///
/// On a non-finite loss or gradient the last step is undone and the
/// learning rate halved; a second failure is returned as an error.
pub fn train<P: PolicyFamily>(
    cfg: &TrainConfig<P>,
    scenario: &Scenario,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<P>> {
    cfg.validate()?;
    scenario.validate()?;
    let seeds = cfg.lineage();
    let mut theta = cfg.operator.init_theta(cfg.init_std, seeds.init);
    let samples = sample_disturbances(scenario, cfg.samples, seeds.samples);
    let mut shuffle = ChaCha8Rng::seed_from_u64(seeds.shuffle);
    let mut adam = AdamState::new(
        theta.len(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let checkpoint = |theta: &[f64], epoch: usize, fraction: f64, objective: Option<f64>| Checkpoint {
        operator: cfg.operator.clone(),
        theta: theta.to_vec(),
        epoch,
        fraction,
        objective,
        seeds: seeds.clone(),
    };
    let mut checkpoints = vec![checkpoint(&theta, 0, 0.0, None)];
    let mut marks: Vec<(usize, f64)> = cfg
        .checkpoint_fractions
        .iter()
        .map(|&f| (((f * cfg.epochs as f64).ceil() as usize).max(1), f))
        .collect();
    marks.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut halved = false;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut prev: Option<(Vec<f64>, AdamState)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut norm_sum, mut steps) = (0.0, 0.0, 0usize);
        let mut b = 0;
        while b < order.len() {
            let batch: Vec<&Signal> = order[b..(b + cfg.batch_size).min(order.len())]
                .iter()
                .map(|&i| &samples[i])
                .collect();
            match objective_and_grad(&cfg.operator, &theta, &batch, scenario) {
                Ok((v, mut g)) => {
                    let norm = clip_global_norm(&mut g, cfg.clip_norm);
                    prev = Some((theta.clone(), adam.clone()));
                    adam.step(&mut theta, &g);
                    loss_sum += v;
                    norm_sum += norm;
                    steps += 1;
                    b += cfg.batch_size;
                }
                Err(e @ (Error::NonFinite(_) | Error::Autodiff(_))) => {
                    if halved {
                        return Err(Error::NonFinite(format!(
                            "epoch {epoch}: {e} (after halving the learning rate)"
                        )));
                    }
                    halved = true;
                    if let Some((t, a)) = prev.take() {
                        theta = t;
                        adam = a;
                    }
                    adam.config.lr /= 2.0;
                }
                Err(e) => return Err(e),
            }
        }
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / steps.max(1) as f64,
            grad_norm: norm_sum / steps.max(1) as f64,
            lr: adam.config.lr,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        for &(e, f) in marks.iter().filter(|(e, _)| *e == epoch) {
            checkpoints.push(checkpoint(&theta, e, f, Some(rec.loss)));
        }
        log.push(rec);
    }
    Ok(TrainOutcome {
        theta,
        checkpoints,
        log,
    })
}

#[cfg(test)]
mod tests;
