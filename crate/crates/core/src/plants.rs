//! Discrete-time plant models `x_t = f(x_{t-1}, u_{t-1}) + w_t`.
//!
//! The point-mass fleet is written in error coordinates about the targets,
//! with the base proportional controller folded into `f`. The state of
//! vehicle `i` occupies `x[4i..4i+4] = (p_err, q)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// A time-invariant Markovian plant.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Noise-free one-step map `f(x_{t-1}, u_{t-1})`.
    fn f<S: Scalar>(&self, x: &[S], u: &[S]) -> Vec<S>;

    /// `f(x, u) + w`.
    fn step<S: Scalar>(&self, x: &[S], u: &[S], w: &[S]) -> Vec<S> {
        let mut next = self.f(x, u);
        for (a, &b) in next.iter_mut().zip(w) {
            *a += b;
        }
        next
    }
}

impl<D: Dynamics> Dynamics for &D {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn f<S: Scalar>(&self, x: &[S], u: &[S]) -> Vec<S> {
        (**self).f(x, u)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    pub b1: f64,
    pub b2: f64,
    pub k1: f64,
    pub k2: f64,
    pub radius: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 1.0,
            b1: 1.0,
            b2: 0.5,
            k1: 1.0,
            k2: 1.0,
            radius: 0.5,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && 0.0 < self.b2
            && self.b2 < self.b1
            && self.k1 > 0.0
            && self.k2 > 0.0
            && self.radius > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("vehicle parameters out of range: {self:?}")))
        }
    }
}

/// Drag `b1·v − b2·tanh(v)`, componentwise.
pub fn drag<S: Scalar>(v: &[S], b1: f64, b2: f64) -> Vec<S> {
    v.iter().map(|&s| drag1(s, b1, b2)).collect()
}

#[inline]
fn drag1<S: Scalar>(s: S, b1: f64, b2: f64) -> S {
    S::cst(b1) * s - S::cst(b2) * s.tanh()
}

/// Forward-Euler update of one vehicle under drag, the base controller,
/// an external force `extra` and the boosting input `u`.
#[inline]
fn vehicle_update<S: Scalar>(v: &VehicleParams, ts: f64, x: &[S], extra: [S; 2], u: &[S]) -> [S; 4] {
    let h = S::cst(ts);
    let inv_m = S::cst(1.0 / v.mass);
    let k = [v.k1, v.k2];
    let mut out = [S::zero(); 4];
    for a in 0..2 {
        let p = x[a];
        let q = x[2 + a];
        let force = -drag1(q, v.b1, v.b2) - S::cst(k[a]) * p + extra[a] + u[a];
        out[a] = p + h * q;
        out[2 + a] = q + h * inv_m * force;
    }
    out
}

/// Two or more point-mass vehicles with drag and base proportional control.
///
/// `coupling > 0` adds springs `κ(p_j − p_i)` between every pair, which is
/// only used to exercise networked composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMassParams {
    pub vehicles: Vec<VehicleParams>,
    pub ts: f64,
    pub targets: Vec<[f64; 2]>,
    #[serde(default)]
    pub coupling: f64,
}

impl PointMassParams {
    pub fn new(vehicles: Vec<VehicleParams>, ts: f64, targets: Vec<[f64; 2]>) -> Result<Self> {
        let p = PointMassParams {
            vehicles,
            ts,
            targets,
            coupling: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Canonical two-vehicle fleet with the given targets.
    pub fn canonical(targets: Vec<[f64; 2]>) -> Self {
        PointMassParams {
            vehicles: vec![VehicleParams::default(); targets.len()],
            ts: 0.05,
            targets,
            coupling: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vehicles.is_empty() || self.vehicles.len() != self.targets.len() {
            return Err(Error::Invalid(format!(
                "{} vehicles but {} targets",
                self.vehicles.len(),
                self.targets.len()
            )));
        }
        if !(self.ts > 0.0) || self.coupling < 0.0 {
            return Err(Error::Invalid(
                "sampling time must be positive, coupling nonnegative".into(),
            ));
        }
        self.vehicles.iter().try_for_each(VehicleParams::validate)
    }

    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    /// Error-coordinate state of vehicles at rest at world positions `p`.
    pub fn state_at_rest(&self, p: &[[f64; 2]]) -> Vec<f64> {
        let mut x = Vec::with_capacity(4 * p.len());
        for (pi, t) in p.iter().zip(&self.targets) {
            x.extend_from_slice(&[pi[0] - t[0], pi[1] - t[1], 0.0, 0.0]);
        }
        x
    }

    /// World-frame positions of every vehicle.
    pub fn positions<S: Scalar>(&self, x: &[S]) -> Vec<[S; 2]> {
        self.targets
            .iter()
            .enumerate()
            .map(|(i, t)| [x[4 * i] + S::cst(t[0]), x[4 * i + 1] + S::cst(t[1])])
            .collect()
    }

    /// `½m|q|² + ½ p_errᵀK'p_err`, summed over vehicles.
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let s = &x[4 * i..4 * i + 4];
                0.5 * v.mass * (s[2] * s[2] + s[3] * s[3]) + 0.5 * (v.k1 * s[0] * s[0] + v.k2 * s[1] * s[1])
            })
            .sum()
    }

    /// Copy with every mass multiplied by the matching factor.
    pub fn with_mass_scale(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.vehicles.len() {
            return Err(Error::Dimension(format!(
                "{} mass factors for {} vehicles",
                factors.len(),
                self.vehicles.len()
            )));
        }
        if let Some(f) = factors.iter().find(|f| !(**f > 0.0)) {
            return Err(Error::Invalid(format!("mass factor {f} must be positive")));
        }
        let mut p = self.clone();
        for (v, f) in p.vehicles.iter_mut().zip(factors) {
            v.mass *= f;
        }
        Ok(p)
    }

    fn coupling_force<S: Scalar>(&self, x: &[S], i: usize, neighbors: impl Iterator<Item = usize>) -> [S; 2] {
        let mut f = [S::zero(); 2];
        if self.coupling == 0.0 {
            return f;
        }
        let k = S::cst(self.coupling);
        for j in neighbors.filter(|&j| j != i) {
            for a in 0..2 {
                f[a] += k * (x[4 * j + a] - x[4 * i + a]);
            }
        }
        f
    }
}

impl Dynamics for PointMassParams {
    fn state_dim(&self) -> usize {
        4 * self.vehicles.len()
    }

    fn input_dim(&self) -> usize {
        2 * self.vehicles.len()
    }

    fn f<S: Scalar>(&self, x: &[S], u: &[S]) -> Vec<S> {
        let n = self.vehicles.len();
        let mut out = Vec::with_capacity(4 * n);
        for (i, v) in self.vehicles.iter().enumerate() {
            let extra = self.coupling_force(x, i, 0..n);
            out.extend(vehicle_update(
                v,
                self.ts,
                &x[4 * i..4 * i + 4],
                extra,
                &u[2 * i..2 * i + 2],
            ));
        }
        out
    }
}

/// `x' = A x + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPlant {
    pub a: Mat<f64>,
    pub b: Mat<f64>,
}

impl LinearPlant {
    pub fn new(a: Mat<f64>, b: Mat<f64>) -> Result<Self> {
        if a.rows() != a.cols() || b.rows() != a.rows() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        Ok(LinearPlant { a, b })
    }

    pub fn scalar(a: f64, b: f64) -> Self {
        LinearPlant {
            a: Mat::from_f64(1, 1, &[a]),
            b: Mat::from_f64(1, 1, &[b]),
        }
    }
}

impl Dynamics for LinearPlant {
    fn state_dim(&self) -> usize {
        self.a.rows()
    }

    fn input_dim(&self) -> usize {
        self.b.cols()
    }

    fn f<S: Scalar>(&self, x: &[S], u: &[S]) -> Vec<S> {
        (0..self.a.rows())
            .map(|i| {
                let mut acc = S::zero();
                for (j, &xj) in x.iter().enumerate() {
                    acc += S::cst(self.a[(i, j)]) * xj;
                }
                for (j, &uj) in u.iter().enumerate() {
                    acc += S::cst(self.b[(i, j)]) * uj;
                }
                acc
            })
            .collect()
    }
}

/// Undirected graph whose neighbor sets include the node itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl NetworkTopology {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Invalid(format!("edge ({a}, {b}) outside {n} nodes")));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(NetworkTopology { n, edges: set })
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::new(n, &edges).expect("complete graph")
    }

    pub fn empty(n: usize) -> Self {
        NetworkTopology {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a == b || self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// `N_i` in ascending order, always containing `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }
}

/// A subsystem whose update reads only its own state, its neighbors'
/// states and its own input.
pub trait LocalDynamics: Send + Sync {
    fn local_state_dim(&self) -> usize;
    fn local_input_dim(&self) -> usize;

    /// `neighbors` holds `(j, x^{[j]})` for every `j ∈ N_i`, ascending.
    fn f_local<S: Scalar>(&self, i: usize, neighbors: &[(usize, &[S])], u: &[S]) -> Vec<S>;
}

/// Vehicle `i` of a fleet, coupled by springs to its graph neighbors.
#[derive(Clone, Debug)]
pub struct VehicleNode {
    pub vehicle: VehicleParams,
    pub ts: f64,
    pub coupling: f64,
}

impl VehicleNode {
    pub fn from_fleet(p: &PointMassParams) -> Vec<VehicleNode> {
        p.vehicles
            .iter()
            .map(|v| VehicleNode {
                vehicle: v.clone(),
                ts: p.ts,
                coupling: p.coupling,
            })
            .collect()
    }
}

impl LocalDynamics for VehicleNode {
    fn local_state_dim(&self) -> usize {
        4
    }

    fn local_input_dim(&self) -> usize {
        2
    }

    fn f_local<S: Scalar>(&self, i: usize, neighbors: &[(usize, &[S])], u: &[S]) -> Vec<S> {
        let own = neighbors
            .iter()
            .find(|(j, _)| *j == i)
            .map(|(_, x)| *x)
            .expect("neighbor set must contain the node itself");
        let mut extra = [S::zero(); 2];
        if self.coupling != 0.0 {
            let k = S::cst(self.coupling);
            for (j, xj) in neighbors {
                if *j == i {
                    continue;
                }
                for a in 0..2 {
                    extra[a] += k * (xj[a] - own[a]);
                }
            }
        }
        vehicle_update(&self.vehicle, self.ts, own, extra, u).to_vec()
    }
}

/// Stacked update of a networked plant; subsystem `i` sees only `x^{[N_i]}`.
pub fn networked_step<S: Scalar, L: LocalDynamics>(
    topology: &NetworkTopology,
    nodes: &[L],
    x: &[S],
    u: &[S],
    w: &[S],
) -> Result<Vec<S>> {
    let mut out = networked_f(topology, nodes, x, u)?;
    if w.len() != out.len() {
        return Err(Error::Dimension(format!(
            "w has {} entries, state {}",
            w.len(),
            out.len()
        )));
    }
    for (a, &b) in out.iter_mut().zip(w) {
        *a += b;
    }
    Ok(out)
}

pub(crate) fn partition_offsets(dims: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut off = vec![0];
    for d in dims {
        off.push(off.last().unwrap() + d);
    }
    off
}

/// Noise-free part of [`networked_step`].
pub fn networked_f<S: Scalar, L: LocalDynamics>(
    topology: &NetworkTopology,
    nodes: &[L],
    x: &[S],
    u: &[S],
) -> Result<Vec<S>> {
    if nodes.len() != topology.len() {
        return Err(Error::Dimension(format!(
            "{} subsystems on a {}-node graph",
            nodes.len(),
            topology.len()
        )));
    }
    let xo = partition_offsets(nodes.iter().map(LocalDynamics::local_state_dim));
    let uo = partition_offsets(nodes.iter().map(LocalDynamics::local_input_dim));
    if *xo.last().unwrap() != x.len() || *uo.last().unwrap() != u.len() {
        return Err(Error::Dimension(format!(
            "partition covers {} states and {} inputs, got {} and {}",
            xo.last().unwrap(),
            uo.last().unwrap(),
            x.len(),
            u.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for (i, node) in nodes.iter().enumerate() {
        let nb: Vec<(usize, &[S])> = topology
            .neighbors(i)
            .into_iter()
            .map(|j| (j, &x[xo[j]..xo[j + 1]]))
            .collect();
        out.extend(node.f_local(i, &nb, &u[uo[i]..uo[i + 1]]));
    }
    Ok(out)
}

/// A networked plant viewed as an ordinary [`Dynamics`].
#[derive(Clone, Debug)]
pub struct NetworkedPlant<L> {
    pub topology: NetworkTopology,
    pub nodes: Vec<L>,
}

impl<L: LocalDynamics> Dynamics for NetworkedPlant<L> {
    fn state_dim(&self) -> usize {
        self.nodes.iter().map(LocalDynamics::local_state_dim).sum()
    }

    fn input_dim(&self) -> usize {
        self.nodes.iter().map(LocalDynamics::local_input_dim).sum()
    }

    fn f<S: Scalar>(&self, x: &[S], u: &[S]) -> Vec<S> {
        networked_f(&self.topology, &self.nodes, x, u).expect("networked plant dimensions")
    }
}

/// A true plant paired with the nominal model used inside the controller.
#[derive(Clone, Debug, PartialEq)]
pub struct MismatchedPlant {
    pub nominal: PointMassParams,
    pub actual: PointMassParams,
    pub factors: Vec<f64>,
}

/// Scales each vehicle's mass; the nominal model is kept unchanged.
pub fn perturb_mass(params: &PointMassParams, factors: &[f64]) -> Result<MismatchedPlant> {
    Ok(MismatchedPlant {
        nominal: params.clone(),
        actual: params.with_mass_scale(factors)?,
        factors: factors.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fleet() -> PointMassParams {
        PointMassParams::canonical(vec![[2.0, 2.0], [2.0, -2.0]])
    }

    #[test]
    fn drag_examples() {
        assert_eq!(drag(&[0.0f64], 1.0, 0.5), vec![0.0]);
        let d = drag(&[1.0f64], 1.0, 0.5)[0];
        assert!((d - (1.0 - 0.5 * 1f64.tanh())).abs() < 1e-15);
        assert!((d - 0.619_203).abs() < 1e-6);
        assert!((d - 0.61925).abs() < 1e-4);
    }

    #[test]
    fn canonical_values() {
        let v = VehicleParams::default();
        assert_eq!((v.mass, v.b1, v.k1, v.k2, v.b2), (1.0, 1.0, 1.0, 1.0, 0.5));
        assert!(v.validate().is_ok());
        let bad = VehicleParams { b2: 1.5, ..v };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn target_is_an_equilibrium() {
        let p = fleet();
        let z = vec![0.0; 8];
        assert_eq!(p.step(&z, &[0.0; 4], &z), z);
    }

    #[test]
    fn unforced_error_decays() {
        let p = fleet();
        let mut x = p.state_at_rest(&[[-2.0, -2.0], [-2.0, 2.0]]);
        for _ in 0..2000 {
            x = p.f(&x, &[0.0; 4]);
        }
        assert!(x.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-2);
    }

    #[test]
    fn impulse_equals_initial_condition() {
        let p = fleet();
        let x0 = p.state_at_rest(&[[-2.0, -2.0], [-2.0, 2.0]]);
        let from_w = p.step(&[0.0; 8], &[0.0; 4], &x0);
        assert_eq!(from_w, x0);
    }

    #[test]
    fn euler_energy_balance_is_exact() {
        // E' − E = −h q·C(q) + h²(|C(q) + K'p|²/2m + k|q|²/2), per axis
        let p = fleet();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let next = p.f(&x, &[0.0; 4]);
            let h = p.ts;
            let mut predicted = 0.0;
            for i in 0..2 {
                let v = &p.vehicles[i];
                for (a, k) in [v.k1, v.k2].into_iter().enumerate() {
                    let (pe, q) = (x[4 * i + a], x[4 * i + 2 + a]);
                    let c = drag1(q, v.b1, v.b2);
                    predicted += -h * q * c + h * h * ((c + k * pe).powi(2) / (2.0 * v.mass) + k * q * q / 2.0);
                }
            }
            let actual = p.energy(&next) - p.energy(&x);
            assert!((actual - predicted).abs() < 1e-12 * (1.0 + p.energy(&x)));
        }
    }

    #[test]
    fn energy_decays_over_one_oscillation_period() {
        let p = fleet();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let mut x: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut hist = vec![p.energy(&x)];
            for _ in 0..600 {
                x = p.f(&x, &[0.0; 4]);
                hist.push(p.energy(&x));
            }
            for t in 0..hist.len() - 126 {
                assert!(hist[t + 126] < hist[t], "t = {t}");
            }
        }
    }

    #[test]
    fn decoupled_vehicles_evolve_independently() {
        let p = fleet();
        let nodes = VehicleNode::from_fleet(&p);
        let topo = NetworkTopology::empty(2);
        let x = [0.3, -0.2, 0.1, 0.4, -1.0, 0.5, 0.0, 0.2];
        let u = [0.1, 0.2, -0.3, 0.4];
        let joint = networked_step(&topo, &nodes, &x, &u, &[0.0; 8]).unwrap();
        let solo = PointMassParams::canonical(vec![[2.0, 2.0]]);
        assert_eq!(&joint[..4], &solo.f(&x[..4], &u[..2])[..]);
        let solo2 = PointMassParams::canonical(vec![[2.0, -2.0]]);
        assert_eq!(&joint[4..], &solo2.f(&x[4..], &u[2..])[..]);
    }

    #[test]
    fn complete_graph_equals_monolithic_bitwise() {
        let mut p = PointMassParams::canonical(vec![[2.0, 2.0], [2.0, -2.0], [0.0, 1.0]]);
        p.coupling = 0.3;
        let nodes = VehicleNode::from_fleet(&p);
        let topo = NetworkTopology::complete(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..12).map(|_| rng.random_range(-0.1..0.1)).collect();
            assert_eq!(networked_step(&topo, &nodes, &x, &u, &w).unwrap(), p.step(&x, &u, &w));
        }
    }

    #[test]
    fn partition_mismatch_is_an_error() {
        let p = fleet();
        let nodes = VehicleNode::from_fleet(&p);
        let topo = NetworkTopology::complete(2);
        assert!(networked_step(&topo, &nodes, &[0.0; 7], &[0.0; 4], &[0.0; 7]).is_err());
        assert!(networked_step(&NetworkTopology::complete(3), &nodes, &[0.0; 8], &[0.0; 4], &[0.0; 8]).is_err());
    }

    #[test]
    fn topology_neighbor_sets() {
        let t = NetworkTopology::new(4, &[(0, 1), (2, 1), (3, 3)]).unwrap();
        assert_eq!(t.neighbors(0), vec![0, 1]);
        assert_eq!(t.neighbors(1), vec![0, 1, 2]);
        assert_eq!(t.neighbors(3), vec![3]);
        assert!(t.has_edge(2, 1) && t.has_edge(1, 2));
        assert!(NetworkTopology::new(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn mass_perturbation() {
        let p = fleet();
        let same = perturb_mass(&p, &[1.0, 1.0]).unwrap();
        assert_eq!(same.actual, same.nominal);
        assert!(perturb_mass(&p, &[0.0, 1.0]).is_err());
        assert!(perturb_mass(&p, &[-1.0, 1.0]).is_err());
        let m = perturb_mass(&p, &[1.1, 1.1]).unwrap();
        let x = [0.5, -0.3, 0.2, 0.1, -0.4, 0.6, -0.2, 0.3];
        let u = [0.2, -0.1, 0.3, 0.05];
        let a = m.actual.f(&x, &u);
        let b = m.nominal.f(&x, &u);
        for i in 0..2 {
            assert_eq!(a[4 * i..4 * i + 2], b[4 * i..4 * i + 2]);
            assert_ne!(a[4 * i + 2..4 * i + 4], b[4 * i + 2..4 * i + 4]);
        }
    }

    proptest! {
        #[test]
        fn non_neighbors_do_not_affect_local_update(seed in 0u64..500, bump in -5.0..5.0f64) {
            let mut p = PointMassParams::canonical(vec![[0.0, 0.0]; 4]);
            p.coupling = 0.5;
            let nodes = VehicleNode::from_fleet(&p);
            let topo = NetworkTopology::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut y = x.clone();
            for v in &mut y[12..16] {
                *v += bump;
            }
            let a = networked_step(&topo, &nodes, &x, &u, &[0.0; 16]).unwrap();
            let b = networked_step(&topo, &nodes, &y, &u, &[0.0; 16]).unwrap();
            prop_assert_eq!(&a[..8], &b[..8]);
        }

        #[test]
        fn equilibrium_for_any_parameters(m in 0.1..5.0f64, b1 in 0.2..3.0f64, r in 0.05..0.95f64, k1 in 0.1..3.0f64, k2 in 0.1..3.0f64, ts in 0.001..0.05f64) {
            let v = VehicleParams { mass: m, b1, b2: r * b1, k1, k2, radius: 0.5 };
            let p = PointMassParams::new(vec![v.clone(), v], ts, vec![[1.0, -1.0], [0.0, 3.0]]).unwrap();
            let z = vec![0.0; 8];
            prop_assert_eq!(p.step(&z, &[0.0; 4], &z), z);
        }
    }
}
