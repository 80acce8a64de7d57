//! Comparison policies: online barrier-constrained input optimization over
//! the base controller, and a recurrent controller acting on `x` directly.

use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{value_and_grad, Var};
use crate::error::{Error, Result};
use crate::imc::{order_check, rollout, Controller, Trajectory};
use crate::l2ops::{Activation, ParamFamily, ParamReader, RenWeights};
use crate::linalg::Mat;
use crate::plants::{Dynamics, PointMassParams};
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::signals::Signal;
use crate::training::PolicyFamily;

/// Which controller drives the plant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTag {
    #[default]
    Boosted,
    CbfOnline,
    RnnDirect,
    BaseOnly,
}

impl PolicyTag {
    pub const ALL: [PolicyTag; 4] = [
        PolicyTag::Boosted,
        PolicyTag::CbfOnline,
        PolicyTag::RnnDirect,
        PolicyTag::BaseOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyTag::Boosted => "boosted",
            PolicyTag::CbfOnline => "cbf_online",
            PolicyTag::RnnDirect => "rnn_direct",
            PolicyTag::BaseOnly => "base_only",
        }
    }
}

impl FromStr for PolicyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyTag::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown policy `{s}`")))
    }
}

impl std::fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the agent and obstacle terms of the barrier are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierForm {
    /// Sum of all terms.
    #[default]
    Sum,
    /// Smallest term, so `h ≥ 0` exactly when every disk is cleared.
    Min,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfOnlineConfig {
    /// Decay rate γ ∈ (0, 1] of the barrier conditions.
    pub gamma: f64,
    pub r_agent: f64,
    pub r_obs: f64,
    /// Disk centers, one term each in the barrier.
    pub obstacles: Vec<[f64; 2]>,
    #[serde(default)]
    pub form: BarrierForm,
    /// Gradient steps per start.
    pub iterations: usize,
    pub penalty: f64,
    /// The penalty weight is multiplied by `penalty_growth` every
    /// `growth_every` steps.
    pub penalty_growth: f64,
    pub growth_every: usize,
    /// Number of starts; the first is always `u = 0`.
    pub starts: usize,
    /// Standard deviation of the random starts.
    pub start_std: f64,
    pub seed: u64,
}

impl CbfOnlineConfig {
    /// Barrier of the mountains scenario: the four Gaussian means as disk
    /// centers.
    pub fn mountains() -> Self {
        CbfOnlineConfig {
            gamma: 0.5,
            r_agent: 0.5,
            r_obs: 1.4,
            obstacles: vec![[2.5, 0.0], [-2.5, 0.0], [1.5, 0.0], [-1.5, 0.0]],
            form: BarrierForm::Sum,
            iterations: 50,
            penalty: 1.0,
            penalty_growth: 10.0,
            growth_every: 10,
            starts: 4,
            start_std: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Invalid(format!("γ = {} outside (0, 1]", self.gamma)));
        }
        if !(self.r_agent > 0.0 && self.r_obs > 0.0) {
            return Err(Error::Invalid("barrier radii must be positive".into()));
        }
        if self.iterations == 0 || self.starts == 0 || self.growth_every == 0 {
            return Err(Error::Invalid(
                "iterations, starts and growth period must be at least 1".into(),
            ));
        }
        if !(self.penalty > 0.0 && self.penalty_growth >= 1.0 && self.start_std >= 0.0) {
            return Err(Error::Invalid(
                "penalty schedule must be positive and nondecreasing".into(),
            ));
        }
        Ok(())
    }
}

/// `(|p¹ − p²|² − 4 r_agent²) + Σ_i Σ_j (|pⁱ − p^obs_j|² − r_obs²)` with
/// the agent term taken over all vehicle pairs; [`BarrierForm::Min`] takes
/// the smallest term instead of the sum.
pub fn cbf_barrier<S: Scalar>(plant: &PointMassParams, cfg: &CbfOnlineConfig, x: &[S]) -> S {
    let pos = plant.positions(x);
    let sq = |a: [S; 2], b: [S; 2]| {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        dx * dx + dy * dy
    };
    let mut terms = Vec::new();
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            terms.push(sq(pos[i], pos[j]) - S::cst(4.0 * cfg.r_agent * cfg.r_agent));
        }
        for o in &cfg.obstacles {
            terms.push(sq(pos[i], [S::cst(o[0]), S::cst(o[1])]) - S::cst(cfg.r_obs * cfg.r_obs));
        }
    }
    match cfg.form {
        BarrierForm::Sum => terms.into_iter().fold(S::zero(), |a, b| a + b),
        BarrierForm::Min => terms.into_iter().fold(S::infinity(), |a, b| a.min_first(b)),
    }
}

/// The two barrier conditions `h(x⁺) − h(x) + γ h(x)` and
/// `h(x⁺⁺) − h(x⁺) + γ h(x⁺)` for inputs `(u_t, u_{t+1})`, through the
/// model dynamics.
pub fn cbf_constraints<S: Scalar>(plant: &PointMassParams, cfg: &CbfOnlineConfig, x: &[S], u: &[S]) -> [S; 2] {
    let m = plant.input_dim();
    let x1 = plant.f(x, &u[..m]);
    let x2 = plant.f(&x1, &u[m..2 * m]);
    let g = S::cst(cfg.gamma);
    let (h0, h1, h2) = (
        cbf_barrier(plant, cfg, x),
        cbf_barrier(plant, cfg, &x1),
        cbf_barrier(plant, cfg, &x2),
    );
    [h1 - h0 + g * h0, h2 - h1 + g * h1]
}

/// Total constraint violation `Σ relu(−c_k)`.
pub fn cbf_violation(plant: &PointMassParams, cfg: &CbfOnlineConfig, x: &[f64], u: &[f64]) -> f64 {
    cbf_constraints(plant, cfg, x, u).iter().map(|c| (-c).max(0.0)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CbfSolution {
    /// `u_t*`.
    pub u: Vec<f64>,
    /// Constraint violation of the returned pair; zero when feasible.
    pub violation: f64,
}

/// Approximately solves `min u_tᵀu_t` subject to both barrier conditions
/// with a penalty method, returning the feasible candidate of least cost
/// or else the least-violating one.
pub fn cbf_online_step(plant: &PointMassParams, cfg: &CbfOnlineConfig, x: &[f64]) -> Result<CbfSolution> {
    cfg.validate()?;
    let m = plant.input_dim();
    if x.len() != plant.state_dim() {
        return Err(Error::Dimension(format!(
            "state has {} entries, plant expects {}",
            x.len(),
            plant.state_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.start_std).expect("nonnegative std");
    let cost = |u: &[f64]| u[..m].iter().map(|v| v * v).sum::<f64>();
    // (violation, cost, u)
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut consider = |u: &[f64]| {
        let cand = (cbf_violation(plant, cfg, x, u), cost(u));
        let better = match &best {
            None => true,
            Some((v, c, _)) => cand.0 < *v || (cand.0 == *v && cand.1 < *c),
        };
        if better {
            best = Some((cand.0, cand.1, u.to_vec()));
        }
    };
    for start in 0..cfg.starts {
        let mut u: Vec<f64> = if start == 0 {
            vec![0.0; 2 * m]
        } else {
            (0..2 * m).map(|_| normal.sample(&mut rng)).collect()
        };
        consider(&u);
        let mut rho = cfg.penalty;
        let mut step = 1.0;
        for it in 0..cfg.iterations {
            if it > 0 && it % cfg.growth_every == 0 {
                rho *= cfg.penalty_growth;
            }
            let objective = |v: &[f64], rho: f64| -> f64 {
                let c = cbf_constraints(plant, cfg, x, v);
                cost(v) + rho * c.iter().map(|c| (-c).max(0.0).powi(2)).sum::<f64>()
            };
            let (val, g) = value_and_grad(&u, |v| {
                let xv: Vec<Var> = x.iter().map(|&a| Var::cst(a)).collect();
                let c = cbf_constraints(plant, cfg, &xv, v);
                let mut j = v[..m].iter().fold(Var::cst(0.0), |a, &b| a + b * b);
                for c in c {
                    let r = (-c).relu();
                    j += r * r * Var::cst(rho);
                }
                j
            })?;
            let gn: f64 = g.iter().map(|v| v * v).sum();
            if gn == 0.0 {
                break;
            }
            // backtracking line search on the penalized objective
            step *= 2.0;
            let mut moved = false;
            for _ in 0..40 {
                let trial: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                if objective(&trial, rho) <= val - 1e-4 * step * gn {
                    u = trial;
                    moved = true;
                    break;
                }
                step /= 2.0;
            }
            if !moved {
                step = 1.0;
                continue;
            }
            consider(&u);
        }
    }
    let (violation, _, u) = best.expect("at least one start");
    Ok(CbfSolution {
        u: u[..m].to_vec(),
        violation,
    })
}

/// Applies [`cbf_online_step`] at every time step.
#[derive(Clone, Debug)]
pub struct CbfOnlineController {
    pub plant: PointMassParams,
    pub cfg: CbfOnlineConfig,
    t: usize,
}

impl CbfOnlineController {
    pub fn new(plant: PointMassParams, cfg: CbfOnlineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(CbfOnlineController { plant, cfg, t: 0 })
    }
}

impl Controller<f64> for CbfOnlineController {
    fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    fn reset(&mut self) {
        self.t = 0;
    }

    fn control(&mut self, t: usize, x: &[f64]) -> Result<Vec<f64>> {
        order_check(self.t, t)?;
        self.t += 1;
        Ok(cbf_online_step(&self.plant, &self.cfg, x)?.u)
    }
}

/// Unconstrained recurrent controller `u = K(x)` with REN structure and a
/// time-invariant bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnDirectConfig {
    pub q: usize,
    pub r: usize,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl RnnDirectConfig {
    /// Sized for the two-vehicle plant with 866 parameters.
    pub fn mountains() -> Self {
        RnnDirectConfig {
            q: 10,
            r: 15,
            n: 8,
            m: 4,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.r == 0 || self.n == 0 || self.m == 0 {
            return Err(Error::Invalid(
                "recurrent controller dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn build<S: Scalar>(&self, theta: &[S]) -> Result<RnnDirect<S>> {
        rnn_direct_controller(self, theta)
    }
}

impl ParamFamily for RnnDirectConfig {
    fn param_count(&self) -> usize {
        let (q, r, n, m) = (self.q, self.r, self.n, self.m);
        let cols = q + r + n;
        q * cols + r * (q + n) + r * (r - 1) / 2 + m * cols + q + r + m
    }
}

impl PolicyFamily for RnnDirectConfig {
    fn rollout<S: Scalar>(&self, theta: &[S], scenario: &Scenario, w: &Signal<S>) -> Result<Trajectory<S>> {
        let mut c = self.build(theta)?;
        rollout(&scenario.plant, &mut c, w, scenario.horizon)
    }
}

/// Unpacks θ as `[A1 B1 B2]`, `[C1 D12]`, the strictly lower part of
/// `D11`, `[C2 D21 D22]` and the biases `(b_ξ, b_z, b_u)`.
pub fn rnn_direct_controller<S: Scalar>(cfg: &RnnDirectConfig, theta: &[S]) -> Result<RnnDirect<S>> {
    cfg.validate()?;
    if theta.len() != cfg.param_count() {
        return Err(Error::Dimension(format!(
            "θ has {} entries, recurrent controller expects {}",
            theta.len(),
            cfg.param_count()
        )));
    }
    let (q, r, n, m) = (cfg.q, cfg.r, cfg.n, cfg.m);
    let cols = q + r + n;
    let mut rd = ParamReader::new(theta);
    let mut w = Mat::<S>::zeros(q + r + m, cols);
    w.set_block(0, 0, &rd.mat(q, cols));
    let cd = rd.mat(r, q + n);
    w.set_block(q, 0, &cd.block(0, 0, r, q));
    w.set_block(q, q + r, &cd.block(0, q, r, n));
    for i in 1..r {
        for (j, &v) in rd.take(i).iter().enumerate() {
            w[(q + i, q + j)] = v;
        }
    }
    w.set_block(q + r, 0, &rd.mat(m, cols));
    let bias = rd.take(q + r + m).to_vec();
    let weights = RenWeights {
        q,
        r,
        n,
        m,
        w,
        biases: vec![bias],
        activation: cfg.activation,
    };
    Ok(RnnDirect {
        xi: vec![S::zero(); q],
        weights: Arc::new(weights),
        t: 0,
    })
}

#[derive(Clone, Debug)]
pub struct RnnDirect<S> {
    weights: Arc<RenWeights<S>>,
    xi: Vec<S>,
    t: usize,
}

impl<S: Scalar> Controller<S> for RnnDirect<S> {
    fn input_dim(&self) -> usize {
        self.weights.m
    }

    fn reset(&mut self) {
        self.xi = vec![S::zero(); self.weights.q];
        self.t = 0;
    }

    fn control(&mut self, t: usize, x: &[S]) -> Result<Vec<S>> {
        order_check(self.t, t)?;
        if x.len() != self.weights.n {
            return Err(Error::Dimension(format!(
                "state has {} entries, controller expects {}",
                x.len(),
                self.weights.n
            )));
        }
        // the single stored bias row applies at every step
        let (next, u) = self.weights.step(&self.xi, x, 0);
        self.xi = next;
        self.t += 1;
        Ok(u)
    }
}
