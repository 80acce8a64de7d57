//! Two-vehicle benchmark scenarios: plant, initial conditions, disturbance
//! model and objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imc::Trajectory;
use crate::losses::{parse_formula, stage_sum, tltl_robustness, Formula, LossConfig, Predicates, TltlOptions};
use crate::plants::{Dynamics, PointMassParams};
use crate::scalar::Scalar;
use crate::signals::Signal;

/// How training disturbances are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceModel {
    /// `w_0` is the nominal state with positions perturbed by `N(0, std²)`;
    /// `w_t = 0` afterwards.
    InitialCondition { std: f64 },
    /// `w_0` is the nominal state; `w_{1..T}` are i.i.d. `N(0, std²)`.
    ProcessNoise { std: f64 },
}

/// Temporal-logic objective shared by all vehicles.
///
/// For vehicle `i` the formula may use `g1, g2, ...` (within `goal_radius`
/// of its k-th waypoint), `o1, o2, ...` (clear of obstacle k by `r_obs`)
/// and `coll` (clear of every other vehicle by `2 r_rob`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TltlSpec {
    pub formula: String,
    /// Waypoints of each vehicle in visiting order.
    pub waypoints: Vec<Vec<[f64; 2]>>,
    pub obstacles: Vec<[f64; 2]>,
    pub r_obs: f64,
    pub r_rob: f64,
    pub goal_radius: f64,
    #[serde(default)]
    pub temperature: Option<f64>,
}

/// Per-vehicle specification: visit the waypoints in order, never earlier
/// than allowed, do not revisit the first two, avoid obstacles and each
/// other, and finally settle at the last waypoint.
pub const WAYPOINT_FORMULA: &str = "(and (then g1 g2 g3) \
     (until (not (or g2 g3)) g1) \
     (until (not g3) g2) \
     (always (implies g1 (next (always (not g1))))) \
     (always (implies g2 (next (always (not g2))))) \
     (always o1) (always o2) (always coll) \
     (eventually (always g3)))";

impl TltlSpec {
    pub fn parsed(&self) -> Result<Formula> {
        parse_formula(&self.formula)
    }

    /// Margin signals of vehicle `i` along the trajectory.
    pub fn predicates<S: Scalar>(&self, plant: &PointMassParams, x: &Signal<S>, i: usize) -> Predicates<S> {
        let pos: Vec<Vec<[S; 2]>> = (0..x.len()).map(|t| plant.positions(x.at(t))).collect();
        let dist = |a: [S; 2], b: [S; 2]| {
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            (dx * dx + dy * dy).sqrt()
        };
        let lift = |p: [f64; 2]| [S::cst(p[0]), S::cst(p[1])];
        let mut out = Predicates::new();
        for (k, g) in self.waypoints[i].iter().enumerate() {
            let sig = pos
                .iter()
                .map(|p| S::cst(self.goal_radius) - dist(p[i], lift(*g)))
                .collect();
            out.insert(format!("g{}", k + 1), sig);
        }
        for (k, o) in self.obstacles.iter().enumerate() {
            let sig = pos.iter().map(|p| dist(p[i], lift(*o)) - S::cst(self.r_obs)).collect();
            out.insert(format!("o{}", k + 1), sig);
        }
        let coll = pos
            .iter()
            .map(|p| {
                (0..p.len())
                    .filter(|&j| j != i)
                    .map(|j| dist(p[i], p[j]) - S::cst(2.0 * self.r_rob))
                    .fold(S::infinity(), |a, b| a.min_first(b))
            })
            .collect();
        out.insert("coll".into(), coll);
        out
    }

    /// Conjunction of the per-vehicle robustness values.
    pub fn robustness<S: Scalar>(&self, plant: &PointMassParams, x: &Signal<S>) -> Result<S> {
        let f = self.parsed()?;
        let opts = TltlOptions {
            temperature: self.temperature,
        };
        let vals = (0..plant.n_vehicles())
            .map(|i| tltl_robustness(&f, &self.predicates(plant, x, i), opts))
            .collect::<Result<Vec<S>>>()?;
        Ok(match self.temperature {
            Some(tau) if vals.len() > 1 => {
                let best = vals[1..].iter().fold(vals[0], |a, &b| a.min_first(b));
                let k = S::cst(-1.0 / tau);
                let s = vals
                    .iter()
                    .map(|&v| ((v - best) * k).exp())
                    .fold(S::zero(), |a, b| a + b);
                best + s.ln() / k
            }
            _ => vals[1..].iter().fold(vals[0], |a, &b| a.min_first(b)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub plant: PointMassParams,
    /// Nominal start position of each vehicle.
    pub starts: Vec<[f64; 2]>,
    pub horizon: usize,
    pub disturbance: DisturbanceModel,
    pub loss: LossConfig,
    #[serde(default)]
    pub tltl: Option<TltlSpec>,
}

impl Scenario {
    /// Two vehicles swap sides through a corridor between Gaussian
    /// obstacles.
    pub fn mountains() -> Self {
        Scenario {
            name: "mountains".into(),
            plant: PointMassParams::canonical(vec![[2.0, 2.0], [2.0, -2.0]]),
            starts: vec![[-2.0, -2.0], [-2.0, 2.0]],
            horizon: 100,
            disturbance: DisturbanceModel::InitialCondition { std: 0.5 },
            loss: LossConfig::mountains(),
            tltl: None,
        }
    }

    /// Mountains with the overshoot barrier penalty switched on.
    pub fn mountains_cbf(alpha_inv: f64) -> Self {
        let mut s = Self::mountains();
        s.name = "mountains_cbf".into();
        s.loss.alpha_inv = alpha_inv;
        s
    }

    /// Each vehicle visits three waypoints in its own order.
    pub fn waypoint() -> Self {
        let (ga, gb, gc) = ([-2.0, -2.0], [0.0, 2.0], [2.0, -2.0]);
        Scenario {
            name: "waypoint".into(),
            plant: PointMassParams::canonical(vec![gc, ga]),
            starts: vec![[-2.0, 0.0], [0.0, 0.0]],
            horizon: 250,
            disturbance: DisturbanceModel::ProcessNoise { std: 0.01 },
            loss: LossConfig {
                state_weight: Some(vec![0.0; 8]),
                alpha_u: 0.0,
                alpha_ca: 0.0,
                eps_ca: 1e-3,
                d_safe: 0.0,
                alpha_obs: 0.0,
                obstacles: vec![],
                alpha_reg: 1e-4,
                alpha_inv: 0.0,
                gamma_cbf: 0.5,
                overshoot: 0.1,
            },
            tltl: Some(TltlSpec {
                formula: WAYPOINT_FORMULA.into(),
                waypoints: vec![vec![gb, ga, gc], vec![gc, gb, ga]],
                obstacles: vec![[0.0, -2.0], [2.5, 1.5]],
                r_obs: 1.7,
                r_rob: 0.5,
                goal_radius: 0.05,
                temperature: None,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.loss.validate()?;
        if self.starts.len() != self.plant.n_vehicles() {
            return Err(Error::Invalid(format!(
                "{} start positions for {} vehicles",
                self.starts.len(),
                self.plant.n_vehicles()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        let std = match self.disturbance {
            DisturbanceModel::InitialCondition { std } | DisturbanceModel::ProcessNoise { std } => std,
        };
        if !(std >= 0.0) {
            return Err(Error::Invalid(format!("disturbance std {std} must be nonnegative")));
        }
        if let Some(t) = &self.tltl {
            t.parsed()?;
            if t.waypoints.len() != self.plant.n_vehicles() {
                return Err(Error::Invalid("one waypoint list per vehicle".into()));
            }
        }
        Ok(())
    }

    /// Nominal `x_0` in error coordinates.
    pub fn nominal_state(&self) -> Vec<f64> {
        self.plant.state_at_rest(&self.starts)
    }

    /// `w_0 = x_0`, zero afterwards.
    pub fn nominal_disturbance(&self) -> Signal {
        let mut w = Signal::zeros(self.plant.state_dim(), self.horizon + 1);
        w.at_mut(0).copy_from_slice(&self.nominal_state());
        w
    }

    /// Training loss of one closed-loop trajectory.
    pub fn objective<S: Scalar>(&self, traj: &Trajectory<S>) -> Result<S> {
        let mut l = stage_sum(traj, &self.plant, &self.loss);
        if let Some(t) = &self.tltl {
            l -= t.robustness(&self.plant, &traj.x)?;
        }
        Ok(l)
    }
}
