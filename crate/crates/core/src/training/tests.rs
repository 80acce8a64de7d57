use super::*;
use crate::l2ops::RenConfig;

fn small_spec() -> OperatorSpec {
    OperatorSpec::Ren(RenConfig::new(4, 4, 8, 4, 1.0))
}

fn short_mountains() -> Scenario {
    Scenario {
        horizon: 30,
        ..Scenario::mountains()
    }
}

#[test]
fn zero_std_reproduces_nominal() {
    let mut s = short_mountains();
    s.disturbance = DisturbanceModel::InitialCondition { std: 0.0 };
    for w in sample_disturbances(&s, 5, 1) {
        assert_eq!(w, s.nominal_disturbance());
    }
}

#[test]
fn sampling_is_deterministic() {
    let s = short_mountains();
    assert_eq!(sample_disturbances(&s, 7, 3), sample_disturbances(&s, 7, 3));
    assert_ne!(sample_disturbances(&s, 7, 3), sample_disturbances(&s, 7, 4));
    let w = &sample_disturbances(&s, 1, 0)[0];
    assert!(w.as_flat()[8..].iter().all(|&v| v == 0.0));
    assert_eq!(&w.at(0)[2..4], &[0.0, 0.0]);
}

#[test]
fn process_noise_keeps_nominal_start() {
    let s = Scenario {
        horizon: 20,
        ..Scenario::waypoint()
    };
    let w = &sample_disturbances(&s, 1, 0)[0];
    assert_eq!(w.at(0), s.nominal_state().as_slice());
    let tail: Vec<f64> = w.as_flat()[8..].to_vec();
    let var = tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64;
    assert!(var.sqrt() > 0.005 && var.sqrt() < 0.02);
}

#[test]
fn objective_is_a_mean() {
    let s = short_mountains();
    let spec = small_spec();
    let th = spec.init_theta(0.1, 0);
    let ws = sample_disturbances(&s, 3, 0);
    let single = empirical_objective(&spec, &th, &ws[..1], &s).unwrap();
    let direct = s
        .objective(&boosted_rollout(&spec, &th, &s.plant, &s.plant, &ws[0], s.horizon).unwrap())
        .unwrap();
    assert_eq!(single, direct);
    let dup: Vec<Signal> = ws.iter().chain(&ws).cloned().collect();
    let a = empirical_objective(&spec, &th, &ws, &s).unwrap();
    let b = empirical_objective(&spec, &th, &dup, &s).unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs());
}

#[test]
fn gradient_matches_value() {
    let s = short_mountains();
    let spec = small_spec();
    let th = spec.init_theta(0.1, 2);
    let ws = sample_disturbances(&s, 2, 0);
    let refs: Vec<&Signal> = ws.iter().collect();
    let (v, g) = objective_and_grad(&spec, &th, &refs, &s).unwrap();
    assert!((v - empirical_objective(&spec, &th, &ws, &s).unwrap()).abs() < 1e-9 * v);
    let h = 1e-6;
    for i in [0, 17, 100] {
        let mut p = th.clone();
        p[i] += h;
        let fp = empirical_objective(&spec, &p, &ws, &s).unwrap();
        p[i] -= 2.0 * h;
        let fm = empirical_objective(&spec, &p, &ws, &s).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-4 * (1.0 + g[i].abs()), "{i}: {fd} vs {}", g[i]);
    }
}

#[test]
fn zero_epochs_returns_initial_theta() {
    let cfg = TrainConfig::new(small_spec(), 2, 0, 1e-3, 5);
    let out = train(&cfg, &short_mountains(), |_| {}).unwrap();
    assert_eq!(out.theta, cfg.operator.init_theta(cfg.init_std, cfg.lineage().init));
    assert_eq!(out.checkpoints.len(), 1);
    assert!(out.log.is_empty());
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let cfg = TrainConfig {
        batch_size: 2,
        ..TrainConfig::new(small_spec(), 4, 8, 5e-3, 11)
    };
    let s = short_mountains();
    let mut seen = 0;
    let a = train(&cfg, &s, |_| seen += 1).unwrap();
    assert_eq!(seen, 8);
    let b = train(&cfg, &s, |_| {}).unwrap();
    assert!(a.theta.iter().zip(&b.theta).all(|(x, y)| x.to_bits() == y.to_bits()));
    let samples = sample_disturbances(&s, 4, cfg.lineage().samples);
    let before = empirical_objective(&cfg.operator, &a.checkpoints[0].theta, &samples, &s).unwrap();
    let after = empirical_objective(&cfg.operator, &a.theta, &samples, &s).unwrap();
    assert!(after < before, "{after} >= {before}");
    let fr: Vec<(usize, f64)> = a.checkpoints.iter().map(|c| (c.epoch, c.fraction)).collect();
    assert_eq!(fr, vec![(0, 0.0), (2, 0.25), (4, 0.5), (6, 0.75), (8, 1.0)]);
    assert_eq!(a.checkpoints.last().unwrap().theta, a.theta);
}

#[test]
fn invalid_config_rejected() {
    let mut cfg = TrainConfig::new(small_spec(), 0, 1, 1e-3, 0);
    assert!(train(&cfg, &short_mountains(), |_| {}).is_err());
    cfg.samples = 1;
    cfg.lr = 0.0;
    assert!(cfg.validate().is_err());
}
