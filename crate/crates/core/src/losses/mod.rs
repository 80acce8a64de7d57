//! Trajectory costs. Every function is generic over [`Scalar`] so the same
//! code evaluates plain losses and records gradients.

mod tltl;

use serde::{Deserialize, Serialize};

pub use tltl::{parse_formula, robustness_trace, tltl_robustness, Formula, Predicates, Robustness, TltlOptions};

use crate::error::{Error, Result};
use crate::imc::Trajectory;
use crate::plants::PointMassParams;
use crate::scalar::Scalar;

/// Gaussian-shaped obstacle `η(·; μ, Σ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Obstacle {
    pub fn isotropic(center: [f64; 2], var: f64) -> Self {
        Obstacle {
            center,
            cov: [[var, 0.0], [0.0, var]],
        }
    }

    fn det(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Diagonal of `Q̃`; `None` is the identity.
    #[serde(default)]
    pub state_weight: Option<Vec<f64>>,
    pub alpha_u: f64,
    pub alpha_ca: f64,
    pub eps_ca: f64,
    pub d_safe: f64,
    pub alpha_obs: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Weight of `α_reg |x_t|²` (error coordinates).
    #[serde(default)]
    pub alpha_reg: f64,
    /// Weight of the CBF invariance penalty; zero disables it.
    #[serde(default)]
    pub alpha_inv: f64,
    #[serde(default = "default_gamma_cbf")]
    pub gamma_cbf: f64,
    /// Allowed overshoot of the vertical position above each target.
    #[serde(default = "default_overshoot")]
    pub overshoot: f64,
}

fn default_gamma_cbf() -> f64 {
    0.5
}

fn default_overshoot() -> f64 {
    0.1
}

impl LossConfig {
    /// Stage-cost weights of the mountains scenario.
    pub fn mountains() -> Self {
        LossConfig {
            state_weight: None,
            alpha_u: 2.5e-4,
            alpha_ca: 100.0,
            eps_ca: 1e-3,
            d_safe: 1.2,
            alpha_obs: 5e3,
            obstacles: [[2.5, 0.0], [-2.5, 0.0], [1.5, 0.0], [-1.5, 0.0]]
                .into_iter()
                .map(|c| Obstacle::isotropic(c, 0.2))
                .collect(),
            alpha_reg: 0.0,
            alpha_inv: 0.0,
            gamma_cbf: default_gamma_cbf(),
            overshoot: default_overshoot(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.alpha_u,
            self.alpha_ca,
            self.alpha_obs,
            self.alpha_reg,
            self.alpha_inv,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) || !(self.eps_ca > 0.0) || !(self.d_safe >= 0.0) {
            return Err(Error::Invalid(
                "loss weights must be nonnegative and ε_ca positive".into(),
            ));
        }
        if !(self.gamma_cbf > 0.0 && self.gamma_cbf <= 1.0) {
            return Err(Error::Invalid(format!("γ_cbf = {} outside (0, 1]", self.gamma_cbf)));
        }
        if let Some(q) = &self.state_weight {
            if q.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Invalid("state weight must be positive semidefinite".into()));
            }
        }
        for o in &self.obstacles {
            if !(o.cov[0][0] > 0.0 && o.det() > 0.0) || o.cov[0][1] != o.cov[1][0] {
                return Err(Error::Invalid(format!(
                    "obstacle covariance {:?} is not positive definite",
                    o.cov
                )));
            }
        }
        Ok(())
    }
}

/// `xᵀQ̃x + α_u uᵀu`.
pub fn l_traj<S: Scalar>(x: &[S], u: &[S], cfg: &LossConfig) -> S {
    let state = match &cfg.state_weight {
        None => S::dot(x, x),
        Some(q) => {
            let wx: Vec<S> = x.iter().zip(q).map(|(&v, &w)| v * S::cst(w)).collect();
            S::dot(&wx, x)
        }
    };
    state + S::cst(cfg.alpha_u) * S::dot(u, u)
}

/// `α_ca Σ_{i≠j, d_ij ≤ D_safe} (d_ij + ε)^{-2}` over ordered pairs.
pub fn l_ca<S: Scalar>(positions: &[[S; 2]], cfg: &LossConfig) -> S {
    let mut acc = S::zero();
    for i in 0..positions.len() {
        for j in 0..positions.len() {
            if i == j {
                continue;
            }
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let d2 = dx * dx + dy * dy;
            if d2.val() <= cfg.d_safe * cfg.d_safe {
                let d = d2.sqrt() + S::cst(cfg.eps_ca);
                acc += (d * d).recip();
            }
        }
    }
    S::cst(cfg.alpha_ca) * acc
}

/// `(2π√det Σ)^{-1} exp(−½ (z−μ)ᵀΣ^{-1}(z−μ))`.
pub fn gaussian_density<S: Scalar>(z: [S; 2], obstacle: &Obstacle) -> Result<S> {
    let det = obstacle.det();
    if !(det > 0.0) {
        return Err(Error::Invalid(format!("singular covariance {:?}", obstacle.cov)));
    }
    Ok(density_unchecked(z, obstacle))
}

fn density_unchecked<S: Scalar>(z: [S; 2], o: &Obstacle) -> S {
    let det = o.det();
    let [[a, b], [c, d]] = o.cov;
    let (i00, i01, i10, i11) = (d / det, -b / det, -c / det, a / det);
    let e0 = z[0] - S::cst(o.center[0]);
    let e1 = z[1] - S::cst(o.center[1]);
    let quad = e0 * e0 * S::cst(i00) + e0 * e1 * S::cst(i01 + i10) + e1 * e1 * S::cst(i11);
    (quad * S::cst(-0.5)).exp() * S::cst(1.0 / (2.0 * std::f64::consts::PI * det.sqrt()))
}

/// `α_obs Σ_i Σ_obstacles η(p_i)`.
pub fn l_obs<S: Scalar>(positions: &[[S; 2]], cfg: &LossConfig) -> S {
    let mut acc = S::zero();
    for p in positions {
        for o in &cfg.obstacles {
            acc += density_unchecked(*p, o);
        }
    }
    S::cst(cfg.alpha_obs) * acc
}

/// `Σ_t relu(−(h_{t+1} − h_t + γ h_t))`: hinge on violations of the
/// discrete-time barrier condition.
pub fn cbf_invariance_loss<S: Scalar>(h: &[S], gamma: f64) -> S {
    let g = S::cst(gamma);
    h.windows(2)
        .map(|w| (-(w[1] - w[0] + g * w[0])).relu())
        .fold(S::zero(), |a, b| a + b)
}

/// `h(x) = Σ_i (p̄ʸ_i + c − pʸ_i)`; in error coordinates `Σ_i (c − p_err,yⁱ)`.
pub fn overshoot_barrier<S: Scalar>(x: &[S], n_vehicles: usize, overshoot: f64) -> S {
    (0..n_vehicles)
        .map(|i| S::cst(overshoot) - x[4 * i + 1])
        .fold(S::zero(), |a, b| a + b)
}

/// Per-vehicle overshoot predicate `pʸ_i < p̄ʸ_i + c` at every vehicle.
pub fn overshoot_safe(x: &[f64], n_vehicles: usize, overshoot: f64) -> bool {
    (0..n_vehicles).all(|i| x[4 * i + 1] < overshoot)
}

/// Composite stage cost of one time step.
pub fn stage_cost<S: Scalar>(x: &[S], u: &[S], plant: &PointMassParams, cfg: &LossConfig) -> S {
    let mut l = l_traj(x, u, cfg);
    if cfg.alpha_ca > 0.0 || cfg.alpha_obs > 0.0 {
        let pos = plant.positions(x);
        if cfg.alpha_ca > 0.0 {
            l += l_ca(&pos, cfg);
        }
        if cfg.alpha_obs > 0.0 && !cfg.obstacles.is_empty() {
            l += l_obs(&pos, cfg);
        }
    }
    l
}

/// `Σ_{t=0..T} l(x_t, u_t)`, plus the regularizer and the weighted CBF
/// penalty when enabled.
pub fn stage_sum<S: Scalar>(traj: &Trajectory<S>, plant: &PointMassParams, cfg: &LossConfig) -> S {
    let n = plant.n_vehicles();
    let mut total = S::zero();
    let mut h = Vec::new();
    for t in 0..traj.x.len() {
        let x = traj.x.at(t);
        total += stage_cost(x, traj.u.at(t), plant, cfg);
        if cfg.alpha_reg > 0.0 {
            total += S::cst(cfg.alpha_reg) * S::dot(x, x);
        }
        if cfg.alpha_inv > 0.0 {
            h.push(overshoot_barrier(x, n, cfg.overshoot));
        }
    }
    if cfg.alpha_inv > 0.0 {
        total += S::cst(cfg.alpha_inv) * cbf_invariance_loss(&h, cfg.gamma_cbf);
    }
    total
}
