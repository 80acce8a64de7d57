//! Small-gain arithmetic for mismatched models, closed-loop statistics and
//! verification harnesses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imc::{rollout, Controller, ImcController, Trajectory};
use crate::l2ops::Fir;
use crate::linalg::Mat;
use crate::plants::{Dynamics, LinearPlant};
use crate::signals::{l2_norm, Signal};

/// Largest admissible `γ(M)`: `γ_Δ^{-1} (γ_F + 1)^{-1}`, infinite for an
/// exact model.
pub fn robust_margin(gamma_delta: f64, gamma_f: f64) -> Result<f64> {
    if !(gamma_delta >= 0.0) || !(gamma_f >= 0.0) {
        return Err(Error::Invalid(format!(
            "gains must be nonnegative, got γ_Δ = {gamma_delta}, γ_F = {gamma_f}"
        )));
    }
    if gamma_delta == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (gamma_delta * (gamma_f + 1.0)))
}

/// Gain bounds of the maps `w ↦ ŵ`, `w ↦ u` and `w ↦ x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub w_hat: f64,
    pub u: f64,
    pub x: f64,
}

/// Closed-loop gain bounds of the mismatched IMC loop; refused when `γ_m`
/// violates the small-gain condition.
pub fn closed_loop_gain_bounds(gamma_delta: f64, gamma_f: f64, gamma_m: f64) -> Result<GainBounds> {
    let margin = robust_margin(gamma_delta, gamma_f)?;
    if !(gamma_m >= 0.0) || gamma_m >= margin {
        return Err(Error::Margin { gamma_m, margin });
    }
    let den = 1.0 - gamma_delta * gamma_m * (gamma_f + 1.0);
    let w_hat = (gamma_delta * gamma_f + 1.0) / den;
    Ok(GainBounds {
        w_hat,
        u: gamma_m * w_hat,
        x: gamma_f * (1.0 + gamma_m * (1.0 - gamma_delta)) / den,
    })
}

/// Scalar LTI instance with known gains: true plant `x⁺ = a x + b u + w`,
/// nominal model `(â, b̂)`, and FIR operator `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarLinearInstance {
    pub a: f64,
    pub b: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub taps: Vec<f64>,
}

impl ScalarLinearInstance {
    /// `‖x‖ ≤ γ_F (‖u‖ + ‖w‖)` with `γ_F = max(1, |b|) / (1 − |a|)`.
    pub fn gamma_f(&self) -> f64 {
        1f64.max(self.b.abs()) / (1.0 - self.a.abs())
    }

    /// `‖Δ(x, u)‖ ≤ γ_Δ (‖x‖ + ‖u‖)` for `Δ = (a − â) x + (b − b̂) u`.
    pub fn gamma_delta(&self) -> f64 {
        (self.a - self.a_hat).abs().max((self.b - self.b_hat).abs())
    }

    /// `Σ |M_i|`, exact for a scalar FIR filter with nonnegative taps.
    pub fn gamma_m(&self) -> f64 {
        self.taps.iter().map(|v| v.abs()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCheck {
    pub bounds: GainBounds,
    /// Largest measured norm ratios over the probes.
    pub measured: GainBounds,
    pub holds: bool,
}

/// Rolls the mismatched loop out on every probe and compares the measured
/// norm ratios with [`closed_loop_gain_bounds`].
pub fn linear_bound_check(inst: &ScalarLinearInstance, probes: &[Signal]) -> Result<LinearCheck> {
    if !(inst.a.abs() < 1.0) {
        return Err(Error::Invalid(format!("|a| = {} must be below 1", inst.a.abs())));
    }
    let bounds = closed_loop_gain_bounds(inst.gamma_delta(), inst.gamma_f(), inst.gamma_m())?;
    let plant = LinearPlant::scalar(inst.a, inst.b);
    let model = LinearPlant::scalar(inst.a_hat, inst.b_hat);
    let fir = Fir::new(inst.taps.iter().map(|&v| Mat::from_f64(1, 1, &[v])).collect())?;
    let mut c = ImcController::new(model, fir)?;
    let mut measured = GainBounds {
        w_hat: 0.0,
        u: 0.0,
        x: 0.0,
    };
    for w in probes {
        let nw = l2_norm(w);
        if nw == 0.0 {
            continue;
        }
        let tr = rollout(&plant, &mut c, w, w.horizon())?;
        let wh = tr.w_hat.as_ref().expect("IMC rollout records ŵ");
        measured.w_hat = measured.w_hat.max(l2_norm(wh) / nw);
        measured.u = measured.u.max(l2_norm(&tr.u) / nw);
        measured.x = measured.x.max(l2_norm(&tr.x) / nw);
    }
    let holds = measured.w_hat <= bounds.w_hat && measured.u <= bounds.u && measured.x <= bounds.x;
    Ok(LinearCheck {
        bounds,
        measured,
        holds,
    })
}

/// Fraction of `(trajectory, t)` pairs whose state violates the constraint.
pub fn violation_ratio(trajectories: &[Trajectory], violates: impl Fn(&[f64]) -> bool) -> f64 {
    let mut total = 0usize;
    let mut bad = 0usize;
    for tr in trajectories {
        for x in tr.x.iter() {
            total += 1;
            bad += usize::from(violates(x));
        }
    }
    if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    }
}

/// `Σ_t (x_t − x̄)ᵀ(x_t − x̄)`, with `x` already in error coordinates.
pub fn quadratic_state_cost(traj: &Trajectory) -> f64 {
    traj.x.energy()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub policy: String,
    pub mean: f64,
    pub costs: Vec<f64>,
}

/// Mean quadratic state cost of each policy over a shared set of test
/// disturbances.
pub fn compare_costs<P: Dynamics>(
    policies: &mut [(String, Box<dyn Controller<f64> + Send>)],
    plant: &P,
    tests: &[Signal],
    horizon: usize,
) -> Result<Vec<CostRow>> {
    let mut rows = Vec::with_capacity(policies.len());
    for (name, ctrl) in policies.iter_mut() {
        let costs = tests
            .iter()
            .map(|w| rollout(plant, ctrl, w, horizon).map(|t| quadratic_state_cost(&t)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(CostRow {
            policy: name.clone(),
            mean: costs.iter().sum::<f64>() / costs.len().max(1) as f64,
            costs,
        });
    }
    Ok(rows)
}

/// Residual energy of a long rollout after time `from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub tail_x: f64,
    pub tail_u: f64,
    /// `|x_from|`.
    pub state_norm: f64,
}

pub fn tail_stats(traj: &Trajectory, from: usize) -> TailStats {
    let x = traj.x.at(from.min(traj.horizon()));
    TailStats {
        tail_x: traj.x.tail_energy(from + 1),
        tail_u: traj.u.tail_energy(from + 1),
        state_norm: x.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::gaussian_probes;

    #[test]
    fn margin_examples() {
        assert_eq!(robust_margin(0.0, 3.0).unwrap(), f64::INFINITY);
        assert_eq!(robust_margin(0.1, 4.0).unwrap(), 2.0);
        assert_eq!(robust_margin(1.0, 0.0).unwrap(), 1.0);
        assert!(robust_margin(-0.1, 1.0).is_err());
        assert!(robust_margin(0.1, -1.0).is_err());
    }

    #[test]
    fn margin_is_monotone() {
        let gs = [0.01, 0.1, 0.5, 1.0, 3.0];
        for w in gs.windows(2) {
            for &g in &gs {
                assert!(robust_margin(w[1], g).unwrap() < robust_margin(w[0], g).unwrap());
                assert!(robust_margin(g, w[1]).unwrap() < robust_margin(g, w[0]).unwrap());
            }
        }
    }

    #[test]
    fn bounds_examples() {
        let b = closed_loop_gain_bounds(0.1, 4.0, 1.0).unwrap();
        assert_eq!((b.w_hat, b.u), (2.8, 2.8));
        assert!((b.x - 15.2).abs() < 1e-12);
        let n = closed_loop_gain_bounds(0.0, 4.0, 1.5).unwrap();
        assert_eq!((n.w_hat, n.u, n.x), (1.0, 1.5, 4.0 * 2.5));
        match closed_loop_gain_bounds(0.1, 4.0, 2.0) {
            Err(Error::Margin { margin, .. }) => assert_eq!(margin, 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bounds_are_continuous_at_exact_model() {
        let n = closed_loop_gain_bounds(0.0, 2.0, 0.7).unwrap();
        let e = closed_loop_gain_bounds(1e-9, 2.0, 0.7).unwrap();
        assert!((n.w_hat - e.w_hat).abs() < 1e-8);
        assert!((n.u - e.u).abs() < 1e-8);
        assert!((n.x - e.x).abs() < 1e-8);
    }

    #[test]
    fn linear_instances_respect_bounds() {
        let probes = gaussian_probes(1, 64, 120, 3);
        let cases = [
            (0.5, 1.0, 0.45, 0.95, vec![0.3, 0.1]),
            (-0.6, 0.5, -0.55, 0.55, vec![0.5, -0.2, 0.1]),
            (0.8, 2.0, 0.82, 1.98, vec![0.05]),
            (0.0, 1.0, 0.1, 1.0, vec![1.0, 0.5]),
        ];
        for (a, b, ah, bh, taps) in cases {
            let inst = ScalarLinearInstance {
                a,
                b,
                a_hat: ah,
                b_hat: bh,
                taps,
            };
            let c = linear_bound_check(&inst, &probes).unwrap();
            assert!(c.holds, "{inst:?}: {c:?}");
        }
    }

    #[test]
    fn linear_check_refuses_violating_gain() {
        let inst = ScalarLinearInstance {
            a: 0.5,
            b: 1.0,
            a_hat: 0.0,
            b_hat: 1.0,
            taps: vec![2.0],
        };
        assert!(linear_bound_check(&inst, &gaussian_probes(1, 4, 20, 0)).is_err());
    }

    fn traj_from(xs: Vec<Vec<f64>>) -> Trajectory {
        let len = xs.len();
        Trajectory {
            x: Signal::new(xs).unwrap(),
            u: Signal::zeros(1, len),
            w: Signal::zeros(1, len),
            w_hat: None,
            meta: Default::default(),
        }
    }

    #[test]
    fn violation_counting() {
        let safe = traj_from(vec![vec![0.0]; 4]);
        assert_eq!(violation_ratio(std::slice::from_ref(&safe), |x| x[0] > 0.5), 0.0);
        let half = traj_from(vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]]);
        assert_eq!(violation_ratio(std::slice::from_ref(&half), |x| x[0] > 0.5), 0.5);
        assert_eq!(violation_ratio(&[half, safe], |x| x[0] > 0.5), 0.25);
        assert_eq!(violation_ratio(&[], |_| true), 0.0);
    }

    #[test]
    fn cost_comparison() {
        use crate::imc::ZeroController;
        let plant = LinearPlant::scalar(0.5, 1.0);
        let tests = gaussian_probes(1, 5, 1, 2);
        let mut policies: Vec<(String, Box<dyn Controller<f64> + Send>)> = vec![
            ("a".into(), Box::new(ZeroController { m: 1 })),
            ("b".into(), Box::new(ZeroController { m: 1 })),
        ];
        let rows = compare_costs(&mut policies, &plant, &tests, 0).unwrap();
        assert_eq!(rows[0].costs, rows[1].costs);
        for (c, w) in rows[0].costs.iter().zip(&tests) {
            assert_eq!(*c, w.at(0)[0] * w.at(0)[0]);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(48))]
        #[test]
        fn random_linear_instances_respect_bounds(
            a in -0.9f64..0.9,
            b in 0.2f64..2.0,
            da in -0.1f64..0.1,
            db in -0.1f64..0.1,
            raw in proptest::collection::vec(-1.0f64..1.0, 1..4),
            frac in 0.05f64..0.95,
            seed in 0u64..1000,
        ) {
            let mut inst = ScalarLinearInstance { a, b, a_hat: a + da, b_hat: b + db, taps: raw };
            let margin = robust_margin(inst.gamma_delta(), inst.gamma_f()).unwrap();
            let scale = frac * margin.min(10.0) / inst.gamma_m().max(1e-9);
            inst.taps.iter_mut().for_each(|v| *v *= scale);
            let c = linear_bound_check(&inst, &gaussian_probes(1, 8, 80, seed)).unwrap();
            proptest::prop_assert!(c.holds, "{:?}", c);
        }

        #[test]
        fn bounds_grow_with_operator_gain(gd in 0.0f64..1.0, gf in 0.0f64..10.0, f1 in 0.0f64..0.99, f2 in 0.0f64..0.99) {
            let m = robust_margin(gd, gf).unwrap().min(100.0);
            let (lo, hi) = (f1.min(f2) * m, f1.max(f2) * m);
            let a = closed_loop_gain_bounds(gd, gf, lo).unwrap();
            let b = closed_loop_gain_bounds(gd, gf, hi).unwrap();
            proptest::prop_assert!(a.w_hat <= b.w_hat && a.u <= b.u);
            proptest::prop_assert!(gd > 1.0 || a.x <= b.x + 1e-12);
        }
    }
}
