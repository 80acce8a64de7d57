//! Internal model control.
//!
//! The controller runs a copy `f̂` of the plant, reconstructs the
//! disturbance as `ŵ_t = x_t − f̂(x_{t−1}, u_{t−1})` (with `ŵ_0 = x_0`) and
//! feeds it to a free operator `M`: `u_t = M_t(ŵ_{t:0})`. With an exact
//! model the loop is open from `w` to `u`, so `Φu = M` and every stable
//! `M` yields a stable closed loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plants::{Dynamics, LocalDynamics, NetworkTopology};
use crate::scalar::Scalar;
use crate::signals::{fmt_f64, CausalOperator, Signal};

/// A causal state-feedback policy, called once per time step in order.
pub trait Controller<S: Scalar> {
    fn input_dim(&self) -> usize;
    fn reset(&mut self);
    /// Input `u_t` for the measured state `x_t`.
    fn control(&mut self, t: usize, x: &[S]) -> Result<Vec<S>>;
    /// Disturbance estimate behind the last input, when there is one.
    fn last_w_hat(&self) -> Option<&[S]> {
        None
    }
}

impl<S: Scalar, C: Controller<S> + ?Sized> Controller<S> for Box<C> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn reset(&mut self) {
        (**self).reset()
    }
    fn control(&mut self, t: usize, x: &[S]) -> Result<Vec<S>> {
        (**self).control(t, x)
    }
    fn last_w_hat(&self) -> Option<&[S]> {
        (**self).last_w_hat()
    }
}

pub(crate) fn order_check(expected: usize, t: usize) -> Result<()> {
    if expected == t {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "controller called at t = {t}, expected t = {expected}"
        )))
    }
}

/// `u ≡ 0`: the plant runs under its base controller alone.
#[derive(Clone, Debug)]
pub struct ZeroController {
    pub m: usize,
}

impl<S: Scalar> Controller<S> for ZeroController {
    fn input_dim(&self) -> usize {
        self.m
    }
    fn reset(&mut self) {}
    fn control(&mut self, _t: usize, _x: &[S]) -> Result<Vec<S>> {
        Ok(vec![S::zero(); self.m])
    }
}

/// Feeds the measured state straight into an operator, `u_t = K_t(x_{t:0})`.
#[derive(Clone, Debug)]
pub struct OperatorController<O> {
    pub op: O,
    t: usize,
}

impl<O> OperatorController<O> {
    pub fn new(op: O) -> Self {
        OperatorController { op, t: 0 }
    }
}

impl<S: Scalar, O: CausalOperator<S>> Controller<S> for OperatorController<O> {
    fn input_dim(&self) -> usize {
        self.op.output_dim()
    }
    fn reset(&mut self) {
        self.op.reset();
        self.t = 0;
    }
    fn control(&mut self, t: usize, x: &[S]) -> Result<Vec<S>> {
        order_check(self.t, t)?;
        self.t += 1;
        Ok(self.op.step(x))
    }
}

/// `ŵ_t = x_t − f̂(x_{t−1}, u_{t−1})`, and `ŵ_0 = x_0`.
///
/// `x_history` and `u_history` hold `x_{0..t}` and `u_{0..t}` (exclusive).
pub fn reconstruct_disturbance<S: Scalar, P: Dynamics>(
    model: &P,
    x_t: &[S],
    x_history: &[Vec<S>],
    u_history: &[Vec<S>],
) -> Result<Vec<S>> {
    if x_history.len() != u_history.len() {
        return Err(Error::Dimension(format!(
            "{} past states but {} past inputs",
            x_history.len(),
            u_history.len()
        )));
    }
    match (x_history.last(), u_history.last()) {
        (Some(x), Some(u)) => {
            let pred = model.f(x, u);
            Ok(x_t.iter().zip(pred).map(|(&a, b)| a - b).collect())
        }
        _ => Ok(x_t.to_vec()),
    }
}

/// IMC controller: internal model `f̂` plus free operator `M`.
#[derive(Clone, Debug)]
pub struct ImcController<P, O, S> {
    pub model: P,
    pub op: O,
    prev: Option<(Vec<S>, Vec<S>)>,
    w_hat: Vec<S>,
    t: usize,
}

impl<P: Dynamics, O: CausalOperator<S>, S: Scalar> ImcController<P, O, S> {
    pub fn new(model: P, op: O) -> Result<Self> {
        if op.input_dim() != model.state_dim() || op.output_dim() != model.input_dim() {
            return Err(Error::Dimension(format!(
                "operator maps {} -> {}, plant has {} states and {} inputs",
                op.input_dim(),
                op.output_dim(),
                model.state_dim(),
                model.input_dim()
            )));
        }
        Ok(ImcController {
            model,
            op,
            prev: None,
            w_hat: Vec::new(),
            t: 0,
        })
    }

    /// Reconstructs `ŵ_t`, steps `M`, and records `(x_t, u_t)` for the
    /// internal model.
    pub fn control_step(&mut self, x: &[S]) -> Vec<S> {
        let w_hat = match &self.prev {
            None => x.to_vec(),
            Some((xp, up)) => {
                let pred = self.model.f(xp, up);
                x.iter().zip(pred).map(|(&a, b)| a - b).collect()
            }
        };
        let u = self.op.step(&w_hat);
        self.prev = Some((x.to_vec(), u.clone()));
        self.w_hat = w_hat;
        self.t += 1;
        u
    }
}

impl<P: Dynamics, O: CausalOperator<S>, S: Scalar> Controller<S> for ImcController<P, O, S> {
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn reset(&mut self) {
        self.op.reset();
        self.prev = None;
        self.w_hat.clear();
        self.t = 0;
    }

    fn control(&mut self, t: usize, x: &[S]) -> Result<Vec<S>> {
        order_check(self.t, t)?;
        Ok(self.control_step(x))
    }

    fn last_w_hat(&self) -> Option<&[S]> {
        Some(&self.w_hat)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scenario: String,
    pub seed: u64,
}

/// Closed-loop record over `t = 0..=T`.
#[derive(Clone, Debug)]
pub struct Trajectory<S = f64> {
    pub x: Signal<S>,
    pub u: Signal<S>,
    pub w: Signal<S>,
    pub w_hat: Option<Signal<S>>,
    pub meta: TrajectoryMeta,
}

impl<S: Scalar> Trajectory<S> {
    pub fn horizon(&self) -> usize {
        self.x.horizon()
    }

    pub fn values(&self) -> Trajectory<f64> {
        Trajectory {
            x: self.x.values(),
            u: self.u.values(),
            w: self.w.values(),
            w_hat: self.w_hat.as_ref().map(Signal::values),
            meta: self.meta.clone(),
        }
    }
}

impl Trajectory<f64> {
    /// CSV with columns `t,x*,u*,w*,what*`.
    pub fn to_csv(&self) -> String {
        let mut head = vec!["t".to_string()];
        head.extend((0..self.x.dim()).map(|i| format!("x{i}")));
        head.extend((0..self.u.dim()).map(|i| format!("u{i}")));
        head.extend((0..self.w.dim()).map(|i| format!("w{i}")));
        if let Some(wh) = &self.w_hat {
            head.extend((0..wh.dim()).map(|i| format!("what{i}")));
        }
        let mut out = head.join(",");
        out.push('\n');
        for t in 0..self.x.len() {
            let mut row = vec![t.to_string()];
            let mut push = |s: &Signal| row.extend(s.at(t).iter().map(|v| fmt_f64(*v)));
            push(&self.x);
            push(&self.u);
            push(&self.w);
            if let Some(wh) = &self.w_hat {
                push(wh);
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Mirror<'a> {
            meta: &'a TrajectoryMeta,
            x: &'a Signal,
            u: &'a Signal,
            w: &'a Signal,
            w_hat: Option<&'a Signal>,
        }
        Ok(serde_json::to_string(&Mirror {
            meta: &self.meta,
            x: &self.x,
            u: &self.u,
            w: &self.w,
            w_hat: self.w_hat.as_ref(),
        })?)
    }
}

/// Simulates `x_t = f(x_{t−1}, u_{t−1}) + w_t` for `t = 0..=horizon` with
/// `x_0 = w_0`. Samples of `w` beyond its length are zero.
pub fn rollout<S: Scalar, P: Dynamics, C: Controller<S> + ?Sized>(
    plant: &P,
    controller: &mut C,
    w: &Signal<S>,
    horizon: usize,
) -> Result<Trajectory<S>> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    if w.dim() != n || controller.input_dim() != m {
        return Err(Error::Dimension(format!(
            "plant has {n} states and {m} inputs, disturbance {} and controller {}",
            w.dim(),
            controller.input_dim()
        )));
    }
    controller.reset();
    let len = horizon + 1;
    let w = if w.len() < len { w.padded(len) } else { w.truncated(len) };
    let mut xs = Vec::with_capacity(n * len);
    let mut us = Vec::with_capacity(m * len);
    let mut whs = Vec::with_capacity(n * len);
    let mut has_w_hat = true;
    let mut x = w.at(0).to_vec();
    for t in 0..len {
        if let Some(bad) = x.iter().position(|v| !v.val().is_finite()) {
            return Err(Error::NonFinite(format!("state component {bad} at t = {t}")));
        }
        let u = controller.control(t, &x)?;
        if u.len() != m {
            return Err(Error::Dimension(format!(
                "controller returned {} inputs at t = {t}",
                u.len()
            )));
        }
        match controller.last_w_hat() {
            Some(wh) if has_w_hat => whs.extend_from_slice(wh),
            _ => has_w_hat = false,
        }
        xs.extend_from_slice(&x);
        if t + 1 < len {
            x = plant.step(&x, &u, w.at(t + 1));
        }
        us.extend(u);
    }
    Ok(Trajectory {
        x: Signal::from_flat(n, xs)?,
        u: Signal::from_flat(m, us)?,
        w_hat: if has_w_hat {
            Some(Signal::from_flat(n, whs)?)
        } else {
            None
        },
        w,
        meta: TrajectoryMeta::default(),
    })
}

/// The operator `w ↦ u` of the loop formed by `model` and `controller`.
///
/// Using it as the free operator of an IMC controller on the exact plant
/// reproduces the closed loop of `controller` itself.
pub struct PhiU<P, C, S> {
    pub model: P,
    pub controller: C,
    prev: Option<(Vec<S>, Vec<S>)>,
    t: usize,
}

pub fn phi_u_operator<S: Scalar, P: Dynamics, C: Controller<S>>(model: P, controller: C) -> PhiU<P, C, S> {
    PhiU {
        model,
        controller,
        prev: None,
        t: 0,
    }
}

impl<S: Scalar, P: Dynamics, C: Controller<S>> CausalOperator<S> for PhiU<P, C, S> {
    fn input_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn output_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn reset(&mut self) {
        self.controller.reset();
        self.prev = None;
        self.t = 0;
    }

    fn step(&mut self, w: &[S]) -> Vec<S> {
        let x = match &self.prev {
            None => w.to_vec(),
            Some((xp, up)) => self.model.step(xp, up, w),
        };
        let u = self
            .controller
            .control(self.t, &x)
            .expect("inner controller follows the operator's clock");
        self.t += 1;
        self.prev = Some((x, u.clone()));
        u
    }
}

/// Neighbor states and own input of one node at the previous step.
type NodeMemory<S> = Option<(Vec<(usize, Vec<S>)>, Vec<S>)>;

/// Distributed IMC: node `i` holds a local model reading `x^{[N_i]}` and
/// its own operator block fed by `ŵ^{[i]}`.
pub struct DistributedImc<L, O, S> {
    pub topology: NetworkTopology,
    pub nodes: Vec<L>,
    pub blocks: Vec<O>,
    prev: Vec<NodeMemory<S>>,
    steps: Vec<usize>,
    local_w_hat: Vec<Vec<S>>,
    w_hat: Vec<S>,
}

impl<L: LocalDynamics, O: CausalOperator<S>, S: Scalar> DistributedImc<L, O, S> {
    pub fn new(topology: NetworkTopology, nodes: Vec<L>, blocks: Vec<O>) -> Result<Self> {
        if nodes.len() != topology.len() || blocks.len() != nodes.len() {
            return Err(Error::Dimension(format!(
                "{} nodes, {} blocks on a {}-node graph",
                nodes.len(),
                blocks.len(),
                topology.len()
            )));
        }
        for (i, (n, b)) in nodes.iter().zip(&blocks).enumerate() {
            if b.input_dim() != n.local_state_dim() || b.output_dim() != n.local_input_dim() {
                return Err(Error::Dimension(format!("block {i} does not match its subsystem")));
            }
        }
        let k = nodes.len();
        Ok(DistributedImc {
            topology,
            nodes,
            blocks,
            prev: vec![None; k],
            steps: vec![0; k],
            local_w_hat: vec![Vec::new(); k],
            w_hat: Vec::new(),
        })
    }

    /// Local input of node `i` from the current states of its neighbors.
    ///
    /// Fails when `neighbors` is not exactly `N_i`, so no node can consume
    /// data from outside its neighborhood.
    pub fn distributed_control_step(&mut self, i: usize, neighbors: &[(usize, &[S])]) -> Result<Vec<S>> {
        let want = self.topology.neighbors(i);
        let got: Vec<usize> = neighbors.iter().map(|(j, _)| *j).collect();
        if got != want {
            return Err(Error::Invalid(format!(
                "node {i} was given states of {got:?}, its neighborhood is {want:?}"
            )));
        }
        let own = neighbors.iter().find(|(j, _)| *j == i).map(|(_, x)| *x).unwrap();
        let w_hat: Vec<S> = match &self.prev[i] {
            None => own.to_vec(),
            Some((nb, up)) => {
                let view: Vec<(usize, &[S])> = nb.iter().map(|(j, x)| (*j, x.as_slice())).collect();
                let pred = self.nodes[i].f_local(i, &view, up);
                own.iter().zip(pred).map(|(&a, b)| a - b).collect()
            }
        };
        let u = self.blocks[i].step(&w_hat);
        self.local_w_hat[i] = w_hat;
        self.prev[i] = Some((neighbors.iter().map(|(j, x)| (*j, x.to_vec())).collect(), u.clone()));
        self.steps[i] += 1;
        Ok(u)
    }

    fn offsets(&self) -> (Vec<usize>, Vec<usize>) {
        (
            crate::plants::partition_offsets(self.nodes.iter().map(LocalDynamics::local_state_dim)),
            crate::plants::partition_offsets(self.nodes.iter().map(LocalDynamics::local_input_dim)),
        )
    }
}

impl<L: LocalDynamics, O: CausalOperator<S>, S: Scalar> Controller<S> for DistributedImc<L, O, S> {
    fn input_dim(&self) -> usize {
        self.nodes.iter().map(LocalDynamics::local_input_dim).sum()
    }

    fn reset(&mut self) {
        self.blocks.iter_mut().for_each(CausalOperator::reset);
        self.prev.iter_mut().for_each(|p| *p = None);
        self.steps.iter_mut().for_each(|s| *s = 0);
        self.local_w_hat.iter_mut().for_each(Vec::clear);
        self.w_hat.clear();
    }

    fn control(&mut self, t: usize, x: &[S]) -> Result<Vec<S>> {
        let (xo, _) = self.offsets();
        if x.len() != *xo.last().unwrap() {
            return Err(Error::Dimension(format!(
                "state has {} entries, expected {}",
                x.len(),
                xo.last().unwrap()
            )));
        }
        let mut u = Vec::with_capacity(self.input_dim());
        let mut w_hat = Vec::with_capacity(x.len());
        for i in 0..self.nodes.len() {
            order_check(self.steps[i], t)?;
            let nb: Vec<(usize, &[S])> = self
                .topology
                .neighbors(i)
                .into_iter()
                .map(|j| (j, &x[xo[j]..xo[j + 1]]))
                .collect();
            u.extend(self.distributed_control_step(i, &nb)?);
            w_hat.extend_from_slice(&self.local_w_hat[i]);
        }
        self.w_hat = w_hat;
        Ok(u)
    }

    fn last_w_hat(&self) -> Option<&[S]> {
        Some(&self.w_hat)
    }
}
