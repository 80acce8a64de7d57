//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Arguments select criteria by substring, e.g.
//! `cargo test --test acceptance -- tltl margin`. The binary exits with
//! status 0 once every selected criterion has been evaluated; the verdicts
//! are in the printed lines.

use std::time::Instant;

use perfboost::analysis::{
    closed_loop_gain_bounds, compare_costs, linear_bound_check, robust_margin, tail_stats, violation_ratio,
    ScalarLinearInstance,
};
use perfboost::baselines::{BarrierForm, CbfOnlineConfig, CbfOnlineController, RnnDirectConfig};
use perfboost::imc::{rollout, Controller, ImcController, ZeroController};
use perfboost::l2ops::{BiasMode, Checkpoint, OperatorSpec, RenConfig};
use perfboost::losses::{overshoot_barrier, parse_formula, tltl_robustness, Predicates, TltlOptions};
use perfboost::scenario::Scenario;
use perfboost::training::{
    boosted_rollout, empirical_objective, sample_disturbances, train, TrainConfig, TrainOutcome,
};
use perfboost::verify::{check_gain, finite_support_disturbance, run_suite, stability_tail, Suite, VerifyOptions};
use perfboost::{Result, Signal, Trajectory};

const TEST_SEED: u64 = 12345;
const TEST_COUNT: usize = 20;
const REDUCED_EPOCHS: usize = 500;
const REDUCED_SAMPLES: usize = 20;

fn ren(gamma: f64) -> OperatorSpec {
    OperatorSpec::Ren(RenConfig::new(8, 8, 8, 4, gamma))
}

fn waypoint_ren() -> OperatorSpec {
    OperatorSpec::Ren(RenConfig {
        bias: BiasMode::Output { horizon: 250 },
        ..RenConfig::new(8, 8, 8, 4, 5.0)
    })
}

fn quiet(_: &perfboost::training::EpochRecord) {}

/// Training runs shared between criteria, each computed at most once.
#[derive(Default)]
struct Runs {
    reduced: Option<TrainOutcome>,
    reduced_cbf: Option<TrainOutcome>,
    mass: Option<TrainOutcome>,
    waypoint: Option<TrainOutcome>,
    rnn: Option<TrainOutcome<RnnDirectConfig>>,
    canonical: Option<(TrainOutcome, f64)>,
}

fn cached<T>(slot: &mut Option<T>, f: impl FnOnce() -> Result<T>) -> Result<&T> {
    if slot.is_none() {
        *slot = Some(f()?);
    }
    Ok(slot.as_ref().expect("just filled"))
}

impl Runs {
    fn reduced(&mut self) -> Result<&TrainOutcome> {
        cached(&mut self.reduced, || {
            let cfg = TrainConfig::new(ren(5.0), REDUCED_SAMPLES, REDUCED_EPOCHS, 1e-4, 0);
            train(&cfg, &Scenario::mountains(), quiet)
        })
    }

    fn reduced_cbf(&mut self) -> Result<&TrainOutcome> {
        cached(&mut self.reduced_cbf, || {
            let cfg = TrainConfig::new(ren(5.0), REDUCED_SAMPLES, REDUCED_EPOCHS, 1e-4, 0);
            train(&cfg, &Scenario::mountains_cbf(1000.0), quiet)
        })
    }

    fn mass(&mut self) -> Result<&TrainOutcome> {
        cached(&mut self.mass, || {
            let cfg = TrainConfig::new(ren(1.0), REDUCED_SAMPLES, REDUCED_EPOCHS, 1e-4, 0);
            train(&cfg, &Scenario::mountains(), quiet)
        })
    }

    fn waypoint(&mut self) -> Result<&TrainOutcome> {
        cached(&mut self.waypoint, || {
            let cfg = TrainConfig::new(waypoint_ren(), 5, 200, 5e-4, 0);
            train(&cfg, &Scenario::waypoint(), quiet)
        })
    }

    fn rnn(&mut self) -> Result<&TrainOutcome<RnnDirectConfig>> {
        cached(&mut self.rnn, || {
            let cfg = TrainConfig::new(RnnDirectConfig::mountains(), REDUCED_SAMPLES, REDUCED_EPOCHS, 1e-4, 0);
            train(&cfg, &Scenario::mountains(), quiet)
        })
    }

    fn canonical(&mut self) -> Result<&(TrainOutcome, f64)> {
        cached(&mut self.canonical, || {
            let start = Instant::now();
            let cfg = TrainConfig::new(ren(5.0), 100, 5000, 1e-4, 0);
            let out = train(&cfg, &Scenario::mountains(), |r| {
                if r.epoch % 500 == 0 {
                    eprintln!(
                        "  canonical run: epoch {} loss {:.4} ({:.0}s)",
                        r.epoch, r.loss, r.wall_time
                    );
                }
            })?;
            Ok((out, start.elapsed().as_secs_f64()))
        })
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

fn suite(s: Suite, opts: &VerifyOptions, time_limit: Option<f64>) -> Result<Verdict> {
    let start = Instant::now();
    let r = run_suite(s, opts)?;
    let secs = start.elapsed().as_secs_f64();
    let in_time = time_limit.is_none_or(|t| secs < t);
    verdict(
        r.passed && in_time,
        format!(
            "{}/{} ok; {}; {secs:.1}s",
            r.cases - r.failures.min(r.cases),
            r.cases,
            r.detail
        ),
    )
}

/// Tail test of one checkpoint over `count` finite-support disturbances.
fn tail_test(
    spec: &OperatorSpec,
    theta: &[f64],
    actual: &Scenario,
    count: usize,
    seed: u64,
) -> Result<(usize, f64, f64)> {
    let nominal = Scenario::mountains();
    let (mut ok, mut worst_tail, mut worst_norm) = (0, 0.0f64, 0.0f64);
    for k in 0..count {
        let w = finite_support_disturbance(&nominal, 100, 2501, seed + k as u64);
        let s = stability_tail(spec, theta, &actual.plant, &nominal.plant, &w, 2500, 2000)?;
        worst_tail = worst_tail.max(s.tail_x);
        worst_norm = worst_norm.max(s.state_norm);
        ok += usize::from(s.tail_x < 1e-4 && s.state_norm < 1e-2);
    }
    Ok((ok, worst_tail, worst_norm))
}

fn stability() -> Result<Verdict> {
    suite(Suite::Stability, &VerifyOptions::default(), Some(300.0))
}

fn early_stop(runs: &mut Runs) -> Result<Verdict> {
    let out = runs.reduced()?;
    let mut pass = true;
    let mut parts = Vec::new();
    for c in out
        .checkpoints
        .iter()
        .filter(|c| [0.25, 0.5, 0.75].contains(&c.fraction))
    {
        let (ok, tail, norm) = tail_test(&c.operator, &c.theta, &Scenario::mountains(), 20, 1000 + c.epoch as u64)?;
        pass &= ok == 20;
        parts.push(format!("epoch {}: {ok}/20 (tail {tail:.1e}, |x| {norm:.1e})", c.epoch));
    }
    pass &= parts.len() == 3;
    verdict(pass, parts.join("; "))
}

fn reconstruction() -> Result<Verdict> {
    suite(Suite::Reconstruction, &VerifyOptions::default(), None)
}

fn completeness() -> Result<Verdict> {
    suite(Suite::Completeness, &VerifyOptions::default(), Some(60.0))
}

fn youla() -> Result<Verdict> {
    suite(Suite::Youla, &VerifyOptions::default(), None)
}

fn gain_budget(runs: &mut Runs) -> Result<Verdict> {
    let mut checkpoints: Vec<(String, Checkpoint)> = Vec::new();
    let mut add = |name: &str, out: &TrainOutcome| {
        for c in &out.checkpoints {
            checkpoints.push((format!("{name}@{}", c.epoch), c.clone()));
        }
    };
    add("reduced", runs.reduced()?);
    add("reduced_cbf", runs.reduced_cbf()?);
    add("mass", runs.mass()?);
    add("waypoint", runs.waypoint()?);
    add("canonical", &runs.canonical()?.0);
    let (mut ok, mut worst, mut worst_name) = (0, 0.0f64, String::new());
    for (k, (name, c)) in checkpoints.iter().enumerate() {
        let budget = c.operator.gamma().expect("budgeted backend");
        let (g, fine) = check_gain(&c.operator, &c.theta, budget, 77 + k as u64)?;
        ok += usize::from(fine);
        if g / budget > worst {
            worst = g / budget;
            worst_name = name.clone();
        }
    }
    verdict(
        ok == checkpoints.len(),
        format!(
            "{ok}/{} checkpoints within budget; worst sampled gain / γ̄ = {worst:.4} ({worst_name}); 256 probes each",
            checkpoints.len()
        ),
    )
}

fn margin() -> Result<Verdict> {
    let m = robust_margin(0.1, 4.0)?;
    let b = closed_loop_gain_bounds(0.1, 4.0, 1.0)?;
    let exact = m == 2.0 && b.w_hat == 2.8 && b.u == 2.8 && b.x == 15.2;
    let tight = (b.x - 15.2).abs() <= 1e-12 && (b.w_hat - 2.8).abs() <= 1e-12 && (m - 2.0).abs() <= 1e-12;
    let instances = [
        ScalarLinearInstance {
            a: 0.5,
            b: 1.0,
            a_hat: 0.45,
            b_hat: 1.0,
            taps: vec![0.3, 0.2],
        },
        ScalarLinearInstance {
            a: -0.6,
            b: 0.8,
            a_hat: -0.5,
            b_hat: 0.85,
            taps: vec![0.1, -0.1, 0.05],
        },
        ScalarLinearInstance {
            a: 0.2,
            b: 1.5,
            a_hat: 0.2,
            b_hat: 1.4,
            taps: vec![0.2],
        },
    ];
    let mut held = 0;
    for (k, inst) in instances.iter().enumerate() {
        let probes = perfboost::signals::gaussian_probes(1, 64, 300, 500 + k as u64);
        held += usize::from(linear_bound_check(inst, &probes)?.holds);
    }
    let suite = run_suite(Suite::Margin, &VerifyOptions::default())?;
    verdict(
        tight && held == instances.len() && suite.passed,
        format!(
            "margin {m}, bounds {} / {} / {} (bit-exact: {exact}); linear instances {held}/{} hold; {}",
            b.w_hat,
            b.u,
            b.x,
            instances.len(),
            suite.detail
        ),
    )
}

fn mass_mismatch(runs: &mut Runs) -> Result<Verdict> {
    let out = runs.mass()?;
    let spec = ren(1.0);
    let theta = out.theta.clone();
    let nominal = Scenario::mountains();
    let (mut ok, mut worst) = (0, 0.0f64);
    for k in 0..20 {
        let factor = if k % 2 == 0 { 1.1 } else { 0.9 };
        let mut actual = nominal.clone();
        actual.plant = nominal.plant.with_mass_scale(&[factor, factor])?;
        let w = finite_support_disturbance(&nominal, 100, 2501, 3000 + k as u64);
        let s = stability_tail(&spec, &theta, &actual.plant, &nominal.plant, &w, 2500, 2000)?;
        worst = worst.max(s.tail_x);
        ok += usize::from(s.tail_x < 1e-3);
    }
    verdict(
        ok == 20,
        format!(
            "γ̄ = 1, {REDUCED_EPOCHS} epochs; {ok}/20 rollouts at mass ×1.1 / ×0.9 with tail < 1e-3 (worst {worst:.2e})"
        ),
    )
}

fn decentralization() -> Result<Verdict> {
    suite(Suite::Decentralization, &VerifyOptions::default(), None)
}

fn gradients() -> Result<Verdict> {
    suite(Suite::Gradient, &VerifyOptions::default(), None)
}

fn test_set() -> Vec<Signal> {
    sample_disturbances(&Scenario::mountains(), TEST_COUNT, TEST_SEED)
}

fn boosted_trajectories(spec: &OperatorSpec, theta: &[f64], tests: &[Signal]) -> Result<Vec<Trajectory>> {
    let s = Scenario::mountains();
    tests
        .iter()
        .map(|w| boosted_rollout(spec, theta, &s.plant, &s.plant, w, s.horizon))
        .collect()
}

fn cbf_shaping(runs: &mut Runs) -> Result<Verdict> {
    let tests = test_set();
    let violated = |x: &[f64]| overshoot_barrier(x, 2, 0.1) < 0.0;
    let without = violation_ratio(
        &boosted_trajectories(&ren(5.0), &runs.reduced()?.theta, &tests)?,
        violated,
    );
    let with = violation_ratio(
        &boosted_trajectories(&ren(5.0), &runs.reduced_cbf()?.theta, &tests)?,
        violated,
    );
    verdict(
        with < without && with < 0.25,
        format!(
            "violation ratio without L_inv {without:.4}, with L_inv (α_inv = 1000) {with:.4}; {TEST_COUNT} test ICs"
        ),
    )
}

fn final_distances(traj: &Trajectory) -> Vec<f64> {
    let x = traj.x.at(traj.horizon());
    (0..x.len() / 4).map(|i| x[4 * i].hypot(x[4 * i + 1])).collect()
}

fn baselines(runs: &mut Runs) -> Result<Verdict> {
    let s = Scenario::mountains();
    let tests = test_set();
    let boosted = ImcController::new(s.plant.clone(), ren(5.0).build::<f64>(&runs.reduced()?.theta)?)?;
    let rnn = RnnDirectConfig::mountains().build::<f64>(&runs.rnn()?.theta)?;
    let cbf_cfg = CbfOnlineConfig::mountains();
    let min_cfg = CbfOnlineConfig {
        form: BarrierForm::Min,
        ..CbfOnlineConfig::mountains()
    };
    let mut policies: Vec<(String, Box<dyn Controller<f64> + Send>)> = vec![
        ("boosted".into(), Box::new(boosted)),
        (
            "cbf_online".into(),
            Box::new(CbfOnlineController::new(s.plant.clone(), cbf_cfg.clone())?),
        ),
        ("rnn_direct".into(), Box::new(rnn)),
        ("base_only".into(), Box::new(ZeroController { m: 4 })),
        (
            "cbf_online_min".into(),
            Box::new(CbfOnlineController::new(s.plant.clone(), min_cfg.clone())?),
        ),
    ];
    let rows = compare_costs(&mut policies, &s.plant, &tests, s.horizon)?;
    let mean = |name: &str| {
        rows.iter()
            .find(|r| r.policy == name)
            .map(|r| r.mean)
            .unwrap_or(f64::NAN)
    };
    let ordering = mean("boosted") < mean("cbf_online") && mean("boosted") < mean("rnn_direct");
    let nominal = s.nominal_disturbance();
    let mut c = CbfOnlineController::new(s.plant.clone(), cbf_cfg)?;
    let d = final_distances(&rollout(&s.plant, &mut c, &nominal, s.horizon)?);
    let mut c = CbfOnlineController::new(s.plant.clone(), min_cfg)?;
    let d_min = final_distances(&rollout(&s.plant, &mut c, &nominal, s.horizon)?);
    let deadlock = d.iter().any(|&v| v > 0.5);
    verdict(
        ordering && deadlock,
        format!(
            "mean cost boosted {:.1}, cbf_online {:.1}, rnn_direct {:.1}, base_only {:.1}; cbf final distances \
             [{:.3}, {:.3}] (deadlock: {deadlock}); min-form barrier: cost {:.1}, final distances [{:.3}, {:.3}]",
            mean("boosted"),
            mean("cbf_online"),
            mean("rnn_direct"),
            mean("base_only"),
            d[0],
            d[1],
            mean("cbf_online_min"),
            d_min[0],
            d_min[1],
        ),
    )
}

fn tltl(runs: &mut Runs) -> Result<Verdict> {
    let s = Scenario::waypoint();
    let spec = s.tltl.as_ref().expect("waypoint formula");
    let w = s.nominal_disturbance();
    let base = rollout(&s.plant, &mut ZeroController { m: 4 }, &w, s.horizon)?;
    let base_rob = spec.robustness(&s.plant, &base.x)?;
    let trained = boosted_rollout(
        &waypoint_ren(),
        &runs.waypoint()?.theta,
        &s.plant,
        &s.plant,
        &w,
        s.horizon,
    )?;
    let trained_rob = spec.robustness(&s.plant, &trained.x)?;

    let margins: Vec<f64> = [2.0, 0.9, 1.5].iter().map(|d| d - 2.0 * 0.5).collect();
    let brute = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mut preds = Predicates::new();
    preds.insert("coll".into(), margins);
    let coll = tltl_robustness(&parse_formula("(always (pred coll))")?, &preds, TltlOptions::default())?;
    let hand = coll == brute && (coll + 0.1).abs() <= 1e-15;
    verdict(
        trained_rob > base_rob && hand,
        format!(
            "robustness base {base_rob:.4}, trained {trained_rob:.4} (REN q = r = 8, 200 epochs, S = 5); □ψ_coll example {coll}"
        ),
    )
}

fn canonical(runs: &mut Runs) -> Result<Verdict> {
    let (out, secs) = runs.canonical()?;
    let s = Scenario::mountains();
    let cfg = TrainConfig::new(ren(5.0), 100, 5000, 1e-4, 0);
    let samples = sample_disturbances(&s, 100, cfg.lineage().samples);
    let trained = empirical_objective(&ren(5.0), &out.theta, &samples, &s)?;
    let mut zero = 0.0;
    for w in &samples {
        zero += s.objective(&rollout(&s.plant, &mut ZeroController { m: 4 }, w, s.horizon)?)?;
    }
    zero /= samples.len() as f64;
    let finite = out.log.iter().all(|r| r.loss.is_finite()) && out.theta.iter().all(|v| v.is_finite());
    let halved = out.log.last().is_some_and(|r| r.lr < 1e-4);
    let ratio = trained / zero;
    let tail = tail_stats(
        &boosted_rollout(
            &ren(5.0),
            &out.theta,
            &s.plant,
            &s.plant,
            &s.nominal_disturbance(),
            2500,
        )?,
        2000,
    );
    verdict(
        finite && ratio < 0.3 && *secs <= 7200.0,
        format!(
            "objective {trained:.2} vs M = 0 {zero:.2} (ratio {ratio:.3}); no NaN: {finite}; lr halved: {halved}; \
             nominal tail energy {:.1e}; {secs:.0}s",
            tail.tail_x
        ),
    )
}

type Criterion = fn(&mut Runs) -> Result<Verdict>;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Criterion); 14] = [
        ("stability-by-design", |_| stability()),
        ("early-stop stability", early_stop),
        ("exact reconstruction", |_| reconstruction()),
        ("completeness oracle", |_| completeness()),
        ("linear youla equivalence", |_| youla()),
        ("robust-margin arithmetic", |_| margin()),
        ("mass-mismatch robustness", mass_mismatch),
        ("decentralization", |_| decentralization()),
        ("gradient checks", |_| gradients()),
        ("cbf shaping", cbf_shaping),
        ("baseline ordering", baselines),
        ("tltl", tltl),
        ("full canonical run", canonical),
        ("gain budget", gain_budget),
    ];
    let mut runs = Runs::default();
    let (mut passed, mut total) = (0, 0);
    for (name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = f(&mut runs).unwrap_or_else(|e| Verdict {
            pass: false,
            detail: format!("error: {e}"),
        });
        total += 1;
        passed += usize::from(v.pass);
        println!(
            "{} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{total} criteria pass");
}
