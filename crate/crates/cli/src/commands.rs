//! The `init`, `train`, `simulate`, `verify` and `compare` commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use perfboost::analysis::{compare_costs, quadratic_state_cost, CostRow};
use perfboost::baselines::{CbfOnlineController, PolicyTag, RnnDirectConfig};
use perfboost::imc::{rollout, Controller, ImcController, ZeroController};
use perfboost::l2ops::{CertifiedConfig, Checkpoint, OperatorSpec, ParamFamily};
use perfboost::plants::{Dynamics, PointMassParams};
use perfboost::training::{sample_disturbances, train, EpochRecord, PolicyFamily};
use perfboost::verify::{verify, GainCase, Suite, VerifyOptions, VerifyReport};
use perfboost::{Error, Signal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ScenarioFile;
use crate::plot::{paths_svg, scenario_disks};

/// Command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Verification(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) | Error::Autodiff(_) => Failure::Numerical(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;

fn write_file(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> CmdResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Config(e.to_string()))
}

pub fn init(preset: &str, out: Option<&Path>) -> CmdResult {
    let text = ScenarioFile::preset(preset)?.to_toml()?;
    match out {
        Some(p) => write_file(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("ckpt_e{epoch:06}.json")
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    policy: PolicyTag,
    seeds: perfboost::l2ops::SeedLineage,
    epochs: usize,
    final_loss: Option<f64>,
    checkpoints: Vec<String>,
    log: &'a str,
}

/// Trains the configured policy; returns the written checkpoint paths.
pub fn train_cmd(cfg: &ScenarioFile, policy: PolicyTag, out: &Path) -> CmdResult<Vec<PathBuf>> {
    match policy {
        PolicyTag::Boosted => run_training(cfg, cfg.operator.clone(), policy, out),
        PolicyTag::RnnDirect => run_training(cfg, cfg.baselines.rnn_direct.clone(), policy, out),
        other => Err(Failure::Config(format!("policy `{other}` has no trainable parameters"))),
    }
}

fn run_training<P>(cfg: &ScenarioFile, family: P, policy: PolicyTag, out: &Path) -> CmdResult<Vec<PathBuf>>
where
    P: PolicyFamily + Serialize + serde::de::DeserializeOwned,
{
    let tc = cfg.train_config(family);
    let scenario = cfg.scenario();
    fs::create_dir_all(out.join("checkpoints"))?;
    let log_path = out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path)?);
    let every = (tc.epochs / 20).max(1);
    let mut io_err = None;
    let outcome = train(&tc, &scenario, |r: &EpochRecord| {
        let line = serde_json::to_string(r).expect("epoch record serializes");
        if let Err(e) = writeln!(log, "{line}") {
            io_err.get_or_insert(e);
        }
        if r.epoch.is_multiple_of(every) || r.epoch == tc.epochs {
            eprintln!(
                "epoch {:>6}  loss {:.6e}  |g| {:.3e}  {:.1}s",
                r.epoch, r.loss, r.grad_norm, r.wall_time
            );
        }
    });
    log.flush()?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let outcome = outcome?;
    let mut paths = Vec::new();
    for c in &outcome.checkpoints {
        let p = out.join("checkpoints").join(checkpoint_name(c.epoch));
        c.save(&p)?;
        paths.push(p);
    }
    paths.dedup();
    let summary = TrainSummary {
        policy,
        seeds: tc.lineage(),
        epochs: tc.epochs,
        final_loss: outcome.log.last().map(|r| r.loss),
        checkpoints: paths.iter().map(|p| p.display().to_string()).collect(),
        log: "train_log.jsonl",
    };
    write_file(&out.join("train_summary.json"), &to_json(&summary)?)?;
    Ok(paths)
}

/// A checkpoint of either trainable family.
pub enum AnyCheckpoint {
    Boosted(Checkpoint<OperatorSpec>),
    RnnDirect(Checkpoint<RnnDirectConfig>),
}

impl AnyCheckpoint {
    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        if let Ok(c) = Checkpoint::<OperatorSpec>::from_json(&text) {
            return Ok(AnyCheckpoint::Boosted(c));
        }
        Checkpoint::<RnnDirectConfig>::from_json(&text)
            .map(AnyCheckpoint::RnnDirect)
            .map_err(|e| Failure::Config(format!("{}: not a checkpoint ({e})", path.display())))
    }

    pub fn tag(&self) -> PolicyTag {
        match self {
            AnyCheckpoint::Boosted(_) => PolicyTag::Boosted,
            AnyCheckpoint::RnnDirect(_) => PolicyTag::RnnDirect,
        }
    }
}

type BoxedController = Box<dyn Controller<f64> + Send>;

fn check_dims(what: &str, n: usize, m: usize, plant: &PointMassParams) -> CmdResult {
    if n != plant.state_dim() || m != plant.input_dim() {
        return Err(Failure::Config(format!(
            "{what} maps {n} -> {m} but the plant needs {} -> {}",
            plant.state_dim(),
            plant.input_dim()
        )));
    }
    Ok(())
}

/// Controller around the nominal model of `cfg`.
pub fn build_controller(
    cfg: &ScenarioFile,
    policy: PolicyTag,
    ckpt: Option<&AnyCheckpoint>,
) -> CmdResult<BoxedController> {
    let plant = &cfg.plant;
    match (policy, ckpt) {
        (PolicyTag::Boosted, Some(AnyCheckpoint::Boosted(c))) => {
            check_dims(
                "checkpoint operator",
                c.operator.input_dim(),
                c.operator.output_dim(),
                plant,
            )?;
            if c.theta.len() != c.operator.param_count() {
                return Err(Failure::Config("checkpoint θ does not match its operator".into()));
            }
            Ok(Box::new(ImcController::new(plant.clone(), c.build::<f64>()?)?))
        }
        (PolicyTag::RnnDirect, Some(AnyCheckpoint::RnnDirect(c))) => {
            check_dims("checkpoint network", c.operator.n, c.operator.m, plant)?;
            if c.theta.len() != ParamFamily::param_count(&c.operator) {
                return Err(Failure::Config("checkpoint θ does not match its network".into()));
            }
            Ok(Box::new(c.operator.build::<f64>(&c.theta)?))
        }
        (PolicyTag::Boosted | PolicyTag::RnnDirect, Some(c)) => Err(Failure::Config(format!(
            "policy `{policy}` cannot run a `{}` checkpoint",
            c.tag()
        ))),
        (PolicyTag::Boosted | PolicyTag::RnnDirect, None) => {
            Err(Failure::Config(format!("policy `{policy}` needs --checkpoint")))
        }
        (PolicyTag::CbfOnline, _) => Ok(Box::new(CbfOnlineController::new(
            plant.clone(),
            cfg.baselines.cbf_online.clone(),
        )?)),
        (PolicyTag::BaseOnly, _) => Ok(Box::new(ZeroController { m: plant.input_dim() })),
    }
}

fn true_plant(cfg: &ScenarioFile, mass_scale: &[f64]) -> CmdResult<PointMassParams> {
    let n = cfg.plant.n_vehicles();
    let factors = match mass_scale.len() {
        0 => vec![1.0; n],
        1 => vec![mass_scale[0]; n],
        _ => mass_scale.to_vec(),
    };
    Ok(cfg.plant.with_mass_scale(&factors)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceSource {
    /// Nominal start, no noise.
    Nominal,
    /// One draw from the scenario's disturbance model.
    Sampled,
    /// Zero initial error and no noise.
    Zero,
}

pub struct SimulateArgs<'a> {
    pub policy: PolicyTag,
    pub checkpoint: Option<&'a Path>,
    pub mass_scale: &'a [f64],
    pub disturbance: DisturbanceSource,
    pub seed: u64,
    pub out: &'a Path,
}

pub fn simulate(cfg: &ScenarioFile, a: &SimulateArgs) -> CmdResult<serde_json::Value> {
    let scenario = cfg.scenario();
    let ckpt = a.checkpoint.map(AnyCheckpoint::load).transpose()?;
    let mut ctrl = build_controller(cfg, a.policy, ckpt.as_ref())?;
    let plant = true_plant(cfg, a.mass_scale)?;
    let n = plant.state_dim();
    let w = match a.disturbance {
        DisturbanceSource::Nominal => scenario.nominal_disturbance(),
        DisturbanceSource::Sampled => sample_disturbances(&scenario, 1, a.seed).remove(0),
        DisturbanceSource::Zero => Signal::zeros(n, cfg.horizon + 1),
    };
    let traj = rollout(&plant, &mut ctrl, &w, cfg.horizon)?;
    fs::create_dir_all(a.out)?;
    write_file(&a.out.join("trajectory.csv"), &traj.to_csv())?;
    write_file(&a.out.join("trajectory.json"), &traj.to_json()?)?;
    let waypoints: Vec<[f64; 2]> = cfg
        .tltl
        .iter()
        .flat_map(|t| t.waypoints.iter().flatten().copied())
        .collect();
    write_file(
        &a.out.join("paths.svg"),
        &paths_svg(&cfg.plant, &traj, &scenario_disks(&scenario), &waypoints),
    )?;
    let last = traj.x.at(traj.horizon());
    let final_distance: Vec<f64> = (0..plant.n_vehicles())
        .map(|i| last[4 * i].hypot(last[4 * i + 1]))
        .collect();
    let robustness = match &cfg.tltl {
        Some(t) => Some(t.robustness(&cfg.plant, &traj.x)?),
        None => None,
    };
    let summary = json!({
        "policy": a.policy,
        "checkpoint": a.checkpoint.map(|p| p.display().to_string()),
        "disturbance": a.disturbance,
        "seed": a.seed,
        "mass_scale": plant.vehicles.iter().zip(&cfg.plant.vehicles).map(|(t, m)| t.mass / m.mass).collect::<Vec<_>>(),
        "objective": scenario.objective(&traj)?,
        "quadratic_state_cost": quadratic_state_cost(&traj),
        "final_distance": final_distance,
        "robustness": robustness,
        "files": ["trajectory.csv", "trajectory.json", "paths.svg"],
    });
    write_file(&a.out.join("simulate.json"), &to_json(&summary)?)?;
    Ok(summary)
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    seed: u64,
    options: &'a VerifyOptions,
    report: &'a VerifyReport,
}

pub struct VerifyArgs<'a> {
    pub suites: &'a [Suite],
    pub seed: Option<u64>,
    pub unbudgeted_hook: bool,
    pub out: &'a Path,
}

pub fn verify_cmd(cfg: Option<&ScenarioFile>, a: &VerifyArgs) -> CmdResult<VerifyReport> {
    let mut opts = cfg.and_then(|c| c.verify.clone()).unwrap_or_default();
    if let Some(s) = a.seed.or(cfg.map(|c| c.seeds.train)) {
        opts.seed = s;
    }
    if let Some(c) = cfg {
        if let Some(budget) = c.operator.gamma() {
            let case = GainCase {
                spec: c.operator.clone(),
                budget,
            };
            if !opts.gain_cases.contains(&case) {
                opts.gain_cases.push(case);
            }
        }
    }
    if a.unbudgeted_hook {
        opts.gain_cases.push(GainCase {
            spec: OperatorSpec::Certified(CertifiedConfig {
                gamma: None,
                ..CertifiedConfig::new(4, 8, 4, 1.0)
            }),
            budget: 1.0,
        });
    }
    let suites = if a.suites.is_empty() { &Suite::ALL[..] } else { a.suites };
    let mut report = verify(suites, &opts);
    report.artifacts.push("verify.json".into());
    for s in &report.suites {
        eprintln!(
            "{:<17} {}  worst {:.3e}  threshold {:.3e}  ({}/{} ok, {:.1}s)",
            s.suite.as_str(),
            if s.passed { "PASS" } else { "FAIL" },
            s.worst,
            s.threshold,
            s.cases - s.failures.min(s.cases),
            s.cases,
            s.seconds
        );
    }
    let out = VerifyOutput {
        seed: opts.seed,
        options: &opts,
        report: &report,
    };
    write_file(&a.out.join("verify.json"), &to_json(&out)?)?;
    if report.passed {
        Ok(report)
    } else {
        let failed: Vec<&str> = report
            .suites
            .iter()
            .filter(|s| !s.passed)
            .map(|s| s.suite.as_str())
            .collect();
        Err(Failure::Verification(failed.join(", ")))
    }
}

pub struct CompareArgs<'a> {
    pub checkpoints: &'a [PathBuf],
    pub baselines: &'a [PolicyTag],
    pub mass_scale: &'a [f64],
    pub seed: Option<u64>,
    pub out: &'a Path,
}

pub fn compare(cfg: &ScenarioFile, a: &CompareArgs) -> CmdResult<Vec<CostRow>> {
    if a.checkpoints.is_empty() && a.baselines.is_empty() {
        return Err(Failure::Config(
            "nothing to compare: pass --checkpoint or --policy".into(),
        ));
    }
    let mut policies: Vec<(String, BoxedController)> = Vec::new();
    for p in a.checkpoints {
        let c = AnyCheckpoint::load(p)?;
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ctrl = build_controller(cfg, c.tag(), Some(&c))?;
        policies.push((format!("{}:{stem}", c.tag()), ctrl));
    }
    for &tag in a.baselines {
        policies.push((tag.to_string(), build_controller(cfg, tag, None)?));
    }
    let seed = a.seed.unwrap_or(cfg.seeds.test);
    let scenario = cfg.scenario();
    let tests = sample_disturbances(&scenario, cfg.seeds.test_count, seed);
    let plant = true_plant(cfg, a.mass_scale)?;
    let rows = compare_costs(&mut policies, &plant, &tests, cfg.horizon)?;
    let table = json!({
        "seed": seed,
        "test_count": cfg.seeds.test_count,
        "horizon": cfg.horizon,
        "rows": rows,
    });
    write_file(&a.out.join("compare.json"), &to_json(&table)?)?;
    write_file(&a.out.join("compare.csv"), &rows_csv(&rows))?;
    for r in &rows {
        println!("{:<32} {:>14.4}", r.policy, r.mean);
    }
    Ok(rows)
}

fn rows_csv(rows: &[CostRow]) -> String {
    let k = rows.first().map_or(0, |r| r.costs.len());
    let mut s = String::from("policy,mean");
    for i in 0..k {
        s.push_str(&format!(",ic{i}"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{}", r.policy, perfboost::signals::fmt_f64(r.mean)));
        for c in &r.costs {
            s.push(',');
            s.push_str(&perfboost::signals::fmt_f64(*c));
        }
        s.push('\n');
    }
    s
}
