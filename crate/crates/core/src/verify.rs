//! Property suites behind the `verify` command: each runs a batch of
//! randomized checks and reports the worst observed value against its
//! threshold.

use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{closed_loop_gain_bounds, linear_bound_check, robust_margin, tail_stats, ScalarLinearInstance};
use crate::autodiff::{grad_check, ScalarFn};
use crate::error::{Error, Result};
use crate::imc::{phi_u_operator, rollout, Controller, DistributedImc, ImcController, OperatorController};
use crate::l2ops::{CertifiedConfig, Fir, OperatorSpec, RenConfig};
use crate::linalg::Mat;
use crate::losses::LossConfig;
use crate::plants::{Dynamics, LinearPlant, NetworkTopology, PointMassParams, VehicleNode};
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::signals::{default_probes, estimate_gain, gaussian_probes, l2_norm, CausalOperator, Signal};
use crate::training::{boosted_rollout, sample_disturbances};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Stability,
    Reconstruction,
    Completeness,
    Youla,
    Gain,
    Decentralization,
    Gradient,
    Margin,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Stability,
        Suite::Reconstruction,
        Suite::Completeness,
        Suite::Youla,
        Suite::Gain,
        Suite::Decentralization,
        Suite::Gradient,
        Suite::Margin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Stability => "stability",
            Suite::Reconstruction => "reconstruction",
            Suite::Completeness => "completeness",
            Suite::Youla => "youla",
            Suite::Gain => "gain",
            Suite::Decentralization => "decentralization",
            Suite::Gradient => "gradient",
            Suite::Margin => "margin",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite `{s}`")))
    }
}

/// A backend together with the gain it must not exceed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainCase {
    pub spec: OperatorSpec,
    pub budget: f64,
}

/// Missing fields take their defaults when deserialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Backends whose random instances must stabilize the plant.
    pub backends: Vec<OperatorSpec>,
    /// Standard deviation of the random θ draws.
    pub theta_std: f64,
    pub stability_cases: usize,
    pub stability_horizon: usize,
    pub tail_from: usize,
    /// Last time step at which the test disturbance may be nonzero.
    pub support: usize,
    pub tail_energy_max: f64,
    pub state_norm_max: f64,
    pub reconstruction_cases: usize,
    pub completeness_cases: usize,
    pub gain_cases: Vec<GainCase>,
    /// Random θ draws per gain case.
    pub gain_draws: usize,
    pub gradient_points: usize,
    pub gradient_horizon: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        let backends = vec![
            OperatorSpec::Ren(RenConfig::new(8, 8, 8, 4, 5.0)),
            OperatorSpec::Certified(CertifiedConfig::new(8, 8, 4, 5.0)),
        ];
        let gain_cases = backends
            .iter()
            .map(|s| GainCase {
                spec: s.clone(),
                budget: s.gamma().expect("budgeted backend"),
            })
            .collect();
        VerifyOptions {
            seed: 0,
            backends,
            theta_std: 1.0,
            stability_cases: 50,
            stability_horizon: 2500,
            tail_from: 2000,
            support: 100,
            tail_energy_max: 1e-4,
            state_norm_max: 1e-2,
            reconstruction_cases: 100,
            completeness_cases: 10,
            gain_cases,
            gain_draws: 10,
            gradient_points: 10,
            gradient_horizon: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed value of the suite's metric.
    pub worst: f64,
    pub threshold: f64,
    pub detail: String,
    pub seconds: f64,
}

/// Sampled gains of the nonlinear plant; lower bounds, reported only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainDiagnostics {
    pub gamma_f: f64,
    /// Per mass factor.
    pub gamma_delta: Vec<(f64, f64)>,
    /// Budget implied by the sampled gains for each mass factor.
    pub implied_margin: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
    #[serde(default)]
    pub diagnostics: Option<GainDiagnostics>,
    /// Files written alongside the report.
    #[serde(default)]
    pub artifacts: Vec<String>,
}

impl VerifyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs the requested suites in order; a suite that errors is reported as
/// failed with the error text.
pub fn verify(suites: &[Suite], opts: &VerifyOptions) -> VerifyReport {
    let suites: Vec<SuiteReport> = suites
        .iter()
        .map(|&s| {
            let start = Instant::now();
            let mut r = run_suite(s, opts).unwrap_or_else(|e| SuiteReport {
                suite: s,
                passed: false,
                cases: 0,
                failures: 1,
                worst: f64::NAN,
                threshold: f64::NAN,
                detail: format!("error: {e}"),
                seconds: 0.0,
            });
            r.seconds = start.elapsed().as_secs_f64();
            r
        })
        .collect();
    let diagnostics = suites
        .iter()
        .any(|r| r.suite == Suite::Margin)
        .then(|| gain_diagnostics(opts.seed).ok())
        .flatten();
    VerifyReport {
        seed: opts.seed,
        passed: suites.iter().all(|r| r.passed),
        suites,
        diagnostics,
        artifacts: Vec::new(),
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    match suite {
        Suite::Stability => stability_suite(opts),
        Suite::Reconstruction => reconstruction_suite(opts),
        Suite::Completeness => completeness_suite(opts),
        Suite::Youla => youla_suite(),
        Suite::Gain => gain_suite(opts),
        Suite::Decentralization => decentralization_suite(opts),
        Suite::Gradient => gradient_suite(opts),
        Suite::Margin => margin_suite(opts),
    }
}

fn report(suite: Suite, cases: usize, failures: usize, worst: f64, threshold: f64, detail: String) -> SuiteReport {
    SuiteReport {
        suite,
        passed: failures == 0 && cases > 0,
        cases,
        failures,
        worst,
        threshold,
        detail,
        seconds: 0.0,
    }
}

/// Mountains disturbance with finite support: a perturbed initial
/// condition and Gaussian noise up to `support`.
pub fn finite_support_disturbance(scenario: &Scenario, support: usize, len: usize, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ic = Normal::new(0.0, 0.5).expect("positive std");
    let noise = Normal::new(0.0, 0.1).expect("positive std");
    let n = scenario.plant.state_dim();
    let mut w = Signal::zeros(n, len);
    let x0 = scenario.nominal_state();
    for (i, v) in w.at_mut(0).iter_mut().enumerate() {
        *v = x0[i] + if i % 4 < 2 { ic.sample(&mut rng) } else { 0.0 };
    }
    for t in 1..=support.min(len - 1) {
        for v in w.at_mut(t) {
            *v = noise.sample(&mut rng);
        }
    }
    w
}

/// Tail statistics of one long closed-loop rollout.
pub fn stability_tail(
    spec: &OperatorSpec,
    theta: &[f64],
    plant: &PointMassParams,
    model: &PointMassParams,
    w: &Signal,
    horizon: usize,
    tail_from: usize,
) -> Result<crate::analysis::TailStats> {
    let tr = boosted_rollout(spec, theta, plant, model, w, horizon)?;
    Ok(tail_stats(&tr, tail_from))
}

fn stability_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let scenario = Scenario::mountains();
    let (mut cases, mut failures, mut worst, mut worst_norm) = (0, 0, 0.0f64, 0.0f64);
    for (b, spec) in opts.backends.iter().enumerate() {
        for k in 0..opts.stability_cases {
            let seed = mix(opts.seed, 1, (b * 10_000 + k) as u64);
            let theta = spec.init_theta(opts.theta_std, seed);
            let w = finite_support_disturbance(&scenario, opts.support, opts.stability_horizon + 1, seed);
            let s = stability_tail(
                spec,
                &theta,
                &scenario.plant,
                &scenario.plant,
                &w,
                opts.stability_horizon,
                opts.tail_from,
            )?;
            cases += 1;
            worst = worst.max(s.tail_x);
            worst_norm = worst_norm.max(s.state_norm);
            if !(s.tail_x < opts.tail_energy_max && s.state_norm < opts.state_norm_max) {
                failures += 1;
            }
        }
    }
    Ok(report(
        Suite::Stability,
        cases,
        failures,
        worst,
        opts.tail_energy_max,
        format!(
            "{} backends × {} θ; worst tail energy {worst:.3e}, worst |x_{}| {worst_norm:.3e}",
            opts.backends.len(),
            opts.stability_cases,
            opts.tail_from
        ),
    ))
}

fn mountains_ren(gamma: f64) -> OperatorSpec {
    OperatorSpec::Ren(RenConfig::new(8, 8, 8, 4, gamma))
}

fn reconstruction_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let scenario = Scenario::mountains();
    let spec = mountains_ren(5.0);
    let mut worst = 0.0f64;
    for k in 0..opts.reconstruction_cases {
        let seed = mix(opts.seed, 2, k as u64);
        let theta = spec.init_theta(opts.theta_std, seed);
        let w = gaussian_probes(8, 1, scenario.horizon + 1, seed)
            .remove(0)
            .map(|v| 0.3 * v);
        let tr = boosted_rollout(&spec, &theta, &scenario.plant, &scenario.plant, &w, scenario.horizon)?;
        let wh = tr.w_hat.expect("IMC records ŵ");
        for (a, b) in wh.as_flat().iter().zip(w.as_flat()) {
            worst = worst.max((a - b).abs());
        }
    }
    let threshold = 1e-12;
    Ok(report(
        Suite::Reconstruction,
        opts.reconstruction_cases,
        usize::from(worst > threshold),
        worst,
        threshold,
        format!(
            "max_t |ŵ_t − w_t| = {worst:.3e} over {} rollouts",
            opts.reconstruction_cases
        ),
    ))
}

fn completeness_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let scenario = Scenario::mountains();
    let p = &scenario.plant;
    let spec = mountains_ren(0.8);
    let (mut worst, mut failures) = (0.0f64, 0);
    let threshold = 1e-9;
    for k in 0..opts.completeness_cases {
        let seed = mix(opts.seed, 3, k as u64);
        let inner = OperatorController::new(spec.build::<f64>(&spec.init_theta(0.5, seed))?);
        let w = gaussian_probes(8, 1, scenario.horizon + 1, seed)
            .remove(0)
            .map(|v| 0.2 * v);
        let mut direct = inner.clone();
        let want = rollout(p, &mut direct, &w, scenario.horizon)?;
        let mut imc = ImcController::new(p, phi_u_operator(p, inner))?;
        let got = rollout(p, &mut imc, &w, scenario.horizon)?;
        let dev = max_dev(got.x.as_flat(), want.x.as_flat()).max(max_dev(got.u.as_flat(), want.u.as_flat()));
        worst = worst.max(dev);
        failures += usize::from(dev > threshold);
    }
    Ok(report(
        Suite::Completeness,
        opts.completeness_cases,
        failures,
        worst,
        threshold,
        format!("IMC with M = Φu[F, C] vs C in feedback: max deviation {worst:.3e}"),
    ))
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Scalar plant `x⁺ = a x + b u + w` with FIR `M`; the closed loop is
/// `u = M w` and `x = (1 − a z⁻¹)⁻¹ (w + b z⁻¹ u)`.
fn youla_suite() -> Result<SuiteReport> {
    let cases = [
        (0.7, 0.4, vec![0.3, -0.2, 0.1]),
        (-0.5, 1.5, vec![1.0, 0.5]),
        (0.95, -0.2, vec![0.0, 0.0, 2.0, -1.0]),
    ];
    let threshold = 1e-10;
    let mut worst = 0.0f64;
    for (k, (a, b, taps)) in cases.iter().enumerate() {
        let plant = LinearPlant::scalar(*a, *b);
        let fir = Fir::new(taps.iter().map(|&v| Mat::from_f64(1, 1, &[v])).collect())?;
        let mut c = ImcController::new(&plant, fir)?;
        let w = gaussian_probes(1, 1, 81, k as u64).remove(0);
        let tr = rollout(&plant, &mut c, &w, 80)?;
        let ws = w.as_flat();
        let u: Vec<f64> = (0..=80)
            .map(|t| (0..taps.len()).filter(|&i| i <= t).map(|i| taps[i] * ws[t - i]).sum())
            .collect();
        let mut x = 0.0;
        for t in 0..=80 {
            x = if t == 0 { ws[0] } else { a * x + b * u[t - 1] + ws[t] };
            worst = worst.max((tr.x.at(t)[0] - x).abs()).max((tr.u.at(t)[0] - u[t]).abs());
        }
    }
    Ok(report(
        Suite::Youla,
        cases.len(),
        usize::from(worst > threshold),
        worst,
        threshold,
        format!("IMC vs closed-form Youla loop: max deviation {worst:.3e}"),
    ))
}

/// Sampled gain of one operator instance and whether it respects `budget`.
///
/// The response to the zero input is subtracted first, so operators with a
/// bias term are measured by their incremental gain `‖M(w) − M(0)‖ / ‖w‖`;
/// without a bias this is the plain ratio.
pub fn check_gain(spec: &OperatorSpec, theta: &[f64], budget: f64, seed: u64) -> Result<(f64, bool)> {
    let mut op = spec.build::<f64>(theta)?;
    let probes = default_probes(spec.input_dim(), seed);
    let y0 = op.apply(&Signal::zeros(spec.input_dim(), probes[0].len()));
    let g = if y0.max_abs() == 0.0 {
        estimate_gain(&mut op, &probes)?.value
    } else {
        let mut worst = 0.0f64;
        for (k, p) in probes.iter().enumerate() {
            let y = op.apply(p);
            let d: Vec<f64> = y.as_flat().iter().zip(y0.as_flat()).map(|(a, b)| a - b).collect();
            let ratio = d.iter().map(|v| v * v).sum::<f64>().sqrt() / l2_norm(p);
            if !ratio.is_finite() {
                return Err(Error::NonFinite(format!("operator response to probe {k}")));
            }
            worst = worst.max(ratio);
        }
        worst
    };
    Ok((g, g <= budget * (1.0 + 1e-9)))
}

fn gain_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let (mut cases, mut failures, mut worst_ratio) = (0, 0, 0.0f64);
    let mut lines = Vec::new();
    for (c, case) in opts.gain_cases.iter().enumerate() {
        let mut case_worst = 0.0f64;
        for k in 0..opts.gain_draws {
            let seed = mix(opts.seed, 4, (c * 10_000 + k) as u64);
            let theta = case.spec.init_theta(opts.theta_std, seed);
            let (g, ok) = check_gain(&case.spec, &theta, case.budget, seed)?;
            cases += 1;
            failures += usize::from(!ok);
            case_worst = case_worst.max(g);
            worst_ratio = worst_ratio.max(g / case.budget);
        }
        lines.push(format!(
            "case {c}: max sampled gain {case_worst:.4} (budget {})",
            case.budget
        ));
    }
    Ok(report(
        Suite::Gain,
        cases,
        failures,
        worst_ratio,
        1.0 + 1e-9,
        lines.join("; "),
    ))
}

/// Three vehicles on a path graph 0 – 1 – 2: changing vehicle 2 must not
/// change vehicle 0's input, and vice versa, while changes inside the
/// neighborhood do.
fn decentralization_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let fleet = PointMassParams {
        coupling: 0.3,
        ..PointMassParams::canonical(vec![[2.0, 2.0], [2.0, -2.0], [-2.0, 0.0]])
    };
    let topo = NetworkTopology::new(3, &[(0, 1), (1, 2)])?;
    let block = OperatorSpec::Ren(RenConfig::new(4, 4, 4, 2, 1.0));
    let blocks = |seed: u64| -> Result<Vec<_>> {
        (0..3)
            .map(|i| block.build::<f64>(&block.init_theta(0.5, seed + i)))
            .collect()
    };
    let steps = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(opts.seed, 5, 0));
    let d = Normal::new(0.0, 1.0).expect("positive std");
    let (mut cases, mut failures, mut sensitive) = (0, 0, 0);
    for (node, outside, inside) in [(0usize, 2usize, 1usize), (2, 0, 1)] {
        let seed = mix(opts.seed, 5, node as u64 + 1);
        let mut a = DistributedImc::new(topo.clone(), VehicleNode::from_fleet(&fleet), blocks(seed)?)?;
        let mut b = DistributedImc::new(topo.clone(), VehicleNode::from_fleet(&fleet), blocks(seed)?)?;
        let mut c = DistributedImc::new(topo.clone(), VehicleNode::from_fleet(&fleet), blocks(seed)?)?;
        let mut identical = true;
        let mut changed = false;
        for t in 0..steps {
            let xa: Vec<f64> = (0..12).map(|_| d.sample(&mut rng)).collect();
            let mut xb = xa.clone();
            let mut xc = xa.clone();
            for k in 0..4 {
                xb[4 * outside + k] += d.sample(&mut rng);
                xc[4 * inside + k] += d.sample(&mut rng);
            }
            let (ua, ub, uc) = (a.control(t, &xa)?, b.control(t, &xb)?, c.control(t, &xc)?);
            let own = 2 * node..2 * node + 2;
            identical &= ua[own.clone()]
                .iter()
                .zip(&ub[own.clone()])
                .all(|(p, q)| p.to_bits() == q.to_bits());
            changed |= ua[own.clone()].iter().zip(&uc[own]).any(|(p, q)| p != q);
        }
        cases += 1;
        failures += usize::from(!identical);
        sensitive += usize::from(changed);
    }
    // a node that ignored its neighbors would pass trivially
    failures += cases - sensitive;
    Ok(report(
        Suite::Decentralization,
        cases,
        failures,
        failures as f64,
        0.0,
        format!("{cases} nodes × {steps} steps: u^[i] bit-identical under changes outside N_i, sensitive inside: {sensitive}/{cases}"),
    ))
}

/// One loss term through a short boosted rollout, as a function of θ.
struct RolloutLoss {
    spec: OperatorSpec,
    scenario: Scenario,
    w: Signal,
}

impl ScalarFn for RolloutLoss {
    fn eval<S: Scalar>(&self, theta: &[S]) -> S {
        let tr = boosted_rollout(
            &self.spec,
            theta,
            &self.scenario.plant,
            &self.scenario.plant,
            &self.w.lift(),
            self.scenario.horizon,
        )
        .expect("finite rollout");
        self.scenario.objective(&tr).expect("valid objective")
    }
}

/// Scenarios isolating each loss term, shortened to `horizon`.
pub fn gradient_cases(horizon: usize) -> Vec<(&'static str, Scenario)> {
    let only = |f: &dyn Fn(&mut LossConfig)| {
        let mut s = Scenario::mountains();
        s.horizon = horizon;
        s.loss = LossConfig {
            state_weight: Some(vec![0.0; 8]),
            alpha_u: 0.0,
            alpha_ca: 0.0,
            alpha_obs: 0.0,
            ..LossConfig::mountains()
        };
        f(&mut s.loss);
        s
    };
    let mut traj = only(&|l| {
        l.state_weight = None;
        l.alpha_u = 2.5e-4;
    });
    traj.name = "l_traj".into();
    let mut ca = only(&|l| l.alpha_ca = 100.0);
    ca.starts = vec![[-0.6, -0.35], [-0.6, 0.35]];
    let mut obs = only(&|l| l.alpha_obs = 5e3);
    obs.starts = vec![[-2.0, -0.6], [-2.0, 0.6]];
    let cbf = only(&|l| l.alpha_inv = 1.0);
    let mut tltl = Scenario::waypoint();
    tltl.horizon = horizon;
    let mut full = Scenario::mountains();
    full.horizon = horizon;
    vec![
        ("l_traj", traj),
        ("l_ca", ca),
        ("l_obs", obs),
        ("l_inv", cbf),
        ("tltl", tltl),
        ("mountains", full),
    ]
}

fn gradient_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let spec = mountains_ren(5.0);
    let threshold = 1e-4;
    let (mut cases, mut failures, mut worst) = (0, 0, 0.0f64);
    let mut lines = Vec::new();
    for (c, (name, scenario)) in gradient_cases(opts.gradient_horizon).into_iter().enumerate() {
        let samples = sample_disturbances(&scenario, opts.gradient_points, mix(opts.seed, 6, c as u64));
        let mut case_worst = 0.0f64;
        for (k, w) in samples.into_iter().enumerate() {
            let theta = spec.init_theta(0.3, mix(opts.seed, 7, (c * 1000 + k) as u64));
            let f = RolloutLoss {
                spec: spec.clone(),
                scenario: scenario.clone(),
                w,
            };
            let err = grad_check(&f, &theta, 1e-6)?;
            cases += 1;
            failures += usize::from(!(err < threshold));
            case_worst = case_worst.max(err);
        }
        worst = worst.max(case_worst);
        lines.push(format!("{name}: {case_worst:.2e}"));
    }
    Ok(report(
        Suite::Gradient,
        cases,
        failures,
        worst,
        threshold,
        lines.join(", "),
    ))
}

fn margin_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut failures = 0;
    let b = closed_loop_gain_bounds(0.1, 4.0, 1.0)?;
    let exact = robust_margin(0.1, 4.0)? == 2.0 && b.w_hat == 2.8 && b.u == 2.8 && (b.x - 15.2).abs() < 1e-12;
    failures += usize::from(!exact);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(opts.seed, 8, 0));
    let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| lo + (hi - lo) * rand::Rng::random::<f64>(rng);
    let instances = 20;
    let mut worst = 0.0f64;
    for k in 0..instances {
        let a = u(&mut rng, -0.9, 0.9);
        let b = u(&mut rng, 0.2, 2.0);
        let mut inst = ScalarLinearInstance {
            a,
            b,
            a_hat: a + u(&mut rng, -0.1, 0.1),
            b_hat: b + u(&mut rng, -0.1, 0.1),
            taps: (0..3).map(|_| u(&mut rng, -1.0, 1.0)).collect(),
        };
        let margin = robust_margin(inst.gamma_delta(), inst.gamma_f())?.min(10.0);
        let scale = u(&mut rng, 0.1, 0.95) * margin / inst.gamma_m().max(1e-9);
        inst.taps.iter_mut().for_each(|v| *v *= scale);
        let c = linear_bound_check(&inst, &gaussian_probes(1, 16, 100, mix(opts.seed, 8, k + 1)))?;
        failures += usize::from(!c.holds);
        worst = worst
            .max(c.measured.w_hat / c.bounds.w_hat)
            .max(c.measured.u / c.bounds.u)
            .max(c.measured.x / c.bounds.x);
    }
    Ok(report(
        Suite::Margin,
        instances as usize + 1,
        failures,
        worst,
        1.0,
        format!(
            "hand example {}; {instances} linear instances, largest measured/bound ratio {worst:.3}",
            if exact { "exact" } else { "MISMATCH" }
        ),
    ))
}

/// Sampled `γ_F` of the mountains plant and `γ_Δ` of mass mismatch, with the
/// implied budget.
pub fn gain_diagnostics(seed: u64) -> Result<GainDiagnostics> {
    let nominal = Scenario::mountains().plant;
    let len = 200;
    let ws = gaussian_probes(8, 16, len, mix(seed, 9, 0));
    let us = gaussian_probes(4, 16, len, mix(seed, 9, 1));
    let mut gamma_f = 0.0f64;
    let mut paths = Vec::new();
    for (w, u) in ws.iter().zip(&us) {
        let mut x = Signal::zeros(8, len);
        x.at_mut(0).copy_from_slice(w.at(0));
        for t in 1..len {
            let next = nominal.step(x.at(t - 1), u.at(t - 1), w.at(t));
            x.at_mut(t).copy_from_slice(&next);
        }
        gamma_f = gamma_f.max(l2_norm(&x) / (l2_norm(u) + l2_norm(w)));
        paths.push((x, u.clone()));
    }
    let mut gamma_delta = Vec::new();
    let mut implied = Vec::new();
    for scale in [0.9, 1.1] {
        let actual = nominal.with_mass_scale(&[scale, scale])?;
        let mut g = 0.0f64;
        for (x, u) in &paths {
            let mut d = Signal::zeros(8, len);
            for t in 1..len {
                let fa = actual.f(x.at(t - 1), u.at(t - 1));
                let fn_ = nominal.f(x.at(t - 1), u.at(t - 1));
                for (o, (p, q)) in d.at_mut(t).iter_mut().zip(fa.iter().zip(&fn_)) {
                    *o = p - q;
                }
            }
            g = g.max(l2_norm(&d) / (l2_norm(x) + l2_norm(u)));
        }
        gamma_delta.push((scale, g));
        implied.push((scale, robust_margin(g, gamma_f)?));
    }
    Ok(GainDiagnostics {
        gamma_f,
        gamma_delta,
        implied_margin: implied,
    })
}

/// Deterministic per-suite, per-case seed.
fn mix(seed: u64, suite: u64, case: u64) -> u64 {
    let mut z = seed ^ suite.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ case.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions {
            stability_cases: 3,
            reconstruction_cases: 5,
            completeness_cases: 2,
            gain_draws: 2,
            gradient_points: 1,
            gradient_horizon: 5,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("speed".parse::<Suite>().is_err());
    }

    #[test]
    fn all_suites_pass_on_small_budgets() {
        let r = verify(&Suite::ALL, &small());
        for s in &r.suites {
            assert!(s.passed, "{s:?}");
        }
        assert!(r.passed);
        let d = r.diagnostics.clone().unwrap();
        assert!(d.gamma_f > 0.0 && d.gamma_delta.iter().all(|(_, g)| *g > 0.0));
        let back: VerifyReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.suites.len(), Suite::ALL.len());
    }

    #[test]
    fn unbudgeted_backend_fails_gain_suite() {
        let spec = OperatorSpec::Certified(CertifiedConfig {
            gamma: None,
            ..CertifiedConfig::new(4, 8, 4, 1.0)
        });
        let opts = VerifyOptions {
            gain_cases: vec![GainCase { spec, budget: 1.0 }],
            ..small()
        };
        let r = run_suite(Suite::Gain, &opts).unwrap();
        assert!(!r.passed, "{r:?}");
    }

    #[test]
    fn biased_operator_measured_incrementally() {
        let spec = OperatorSpec::Ren(RenConfig {
            bias: crate::l2ops::BiasMode::Output { horizon: 50 },
            ..RenConfig::new(4, 4, 8, 4, 1.0)
        });
        let theta = spec.init_theta(1.0, 3);
        let (g, ok) = check_gain(&spec, &theta, 1.0, 4).unwrap();
        assert!(ok && g > 0.0, "{g}");
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run_suite(Suite::Stability, &small()).unwrap();
        let b = run_suite(Suite::Stability, &small()).unwrap();
        assert_eq!(a.worst.to_bits(), b.worst.to_bits());
    }

    #[test]
    fn finite_support_is_respected() {
        let s = Scenario::mountains();
        let w = finite_support_disturbance(&s, 10, 50, 1);
        assert!(w.at(10).iter().any(|&v| v != 0.0));
        assert!((11..50).all(|t| w.at(t).iter().all(|&v| v == 0.0)));
    }
}
