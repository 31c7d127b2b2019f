use super::*;
use crate::experiments::{SourceSample, TargetSample};
use crate::ipm::KernelConfig;
use crate::nn::grad_check;
use crate::numerics::{gaussian_matrix, Matrix, Rng};
use crate::predictor::OutcomeModel;
use crate::weights::WeightVector;

fn small_arch() -> Architecture {
    Architecture {
        rep_layers: vec![6, 4],
        normalize_representation: true,
        head_layers: vec![5],
        weight_layers: vec![4],
    }
}

fn model(arms: usize, norm: WeightNormalization, seed: u64) -> RcfrModel {
    RcfrModel::new(3, arms, &small_arch(), norm, &mut Rng::new(seed)).unwrap()
}

fn toy_batch(n: usize, seed: u64) -> (SourceSample, Matrix) {
    let mut rng = Rng::new(seed);
    let x = gaussian_matrix(&mut rng, n, 3, &[0.0; 3], 1.0).unwrap();
    let t = (0..n).map(|i| i % 2).collect();
    let y = (0..n).map(|_| rng.normal()).collect();
    let target = gaussian_matrix(&mut rng, n, 3, &[0.5, -0.5, 0.0], 1.0).unwrap();
    (SourceSample::new(x, t, y).unwrap(), target)
}

fn zero_net(net: &mut crate::nn::Mlp) {
    let n = net.param_count();
    net.set_params_flat(&vec![0.0; n]).unwrap();
}

#[test]
fn representation_rows_have_unit_norm() {
    let m = model(2, WeightNormalization::PerArm, 1);
    let (b, _) = toy_batch(40, 2);
    let z = m.representation(&b.x).unwrap();
    for r in 0..z.rows() {
        let norm = z.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6, "row {r} norm {norm}");
    }
}

#[test]
fn normalized_representation_ignores_row_scale() {
    let arch = Architecture {
        rep_layers: Vec::new(),
        normalize_representation: true,
        head_layers: vec![4],
        weight_layers: vec![3],
    };
    let m = RcfrModel::new(3, 2, &arch, WeightNormalization::PerArm, &mut Rng::new(3)).unwrap();
    let x = Matrix::from_rows(&[[0.3, -1.2, 2.0]]).unwrap();
    let z1 = m.representation(&x).unwrap();
    let z10 = m.representation(&x.scale(10.0)).unwrap();
    for (a, b) in z1.data().iter().zip(z10.data()) {
        assert!((a - b).abs() < 1e-15);
    }
    let p1 = m.predict(&x, &[1]).unwrap();
    let p10 = m.predict(&x.scale(10.0), &[1]).unwrap();
    assert!((p1[0] - p10[0]).abs() < 1e-12);
}

#[test]
fn zero_raw_representation_stays_finite() {
    let mut m = model(2, WeightNormalization::PerArm, 4);
    zero_net(&mut m.rep_net);
    let (b, _) = toy_batch(5, 5);
    let z = m.representation(&b.x).unwrap();
    assert!(z.data().iter().all(|v| *v == 0.0));
    assert!(m.predict(&b.x, &b.t).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn zero_heads_predict_zero() {
    let mut m = model(2, WeightNormalization::PerArm, 6);
    for h in &mut m.heads {
        zero_net(h);
    }
    let (b, _) = toy_batch(8, 7);
    assert!(m.predict(&b.x, &b.t).unwrap().iter().all(|v| *v == 0.0));
    assert!(m.estimate_cate(&b.x).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn zero_weight_net_gives_unit_weights() {
    for norm in [WeightNormalization::Global, WeightNormalization::PerArm] {
        let mut m = model(2, norm, 8);
        zero_net(&mut m.weight_net);
        let (b, _) = toy_batch(12, 9);
        let w = m.sample_weights(&b.x, &b.t).unwrap();
        assert!(w.values().iter().all(|v| (v - 1.0).abs() <= 1e-15), "{:?}", w.values());
    }
}

#[test]
fn learned_weights_have_unit_mean() {
    for seed in 0..10 {
        let (b, _) = toy_batch(31, 100 + seed);
        let g = model(2, WeightNormalization::Global, seed);
        let w = g.sample_weights(&b.x, &b.t).unwrap();
        assert!((w.mean() - 1.0).abs() < 1e-9);
        assert!(w.values().iter().all(|v| *v > 0.0));

        let p = model(2, WeightNormalization::PerArm, seed);
        let w = p.sample_weights(&b.x, &b.t).unwrap();
        for arm in 0..2 {
            let vals: Vec<f64> = (0..b.len()).filter(|&i| b.t[i] == arm).map(|i| w.values()[i]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - 1.0).abs() < 1e-9, "arm {arm} mean {mean}");
        }
    }
}

#[test]
fn compute_weights_rejects_empty_and_mismatched() {
    let m = model(2, WeightNormalization::PerArm, 10);
    assert!(m.compute_weights(&Matrix::zeros(0, 4), &[]).is_err());
    assert!(m.compute_weights(&Matrix::zeros(3, 4), &[0, 1]).is_err());
    assert!(m.compute_weights(&Matrix::zeros(2, 4), &[0, 2]).is_err());
}

/// Linear identity model whose predictions are all zero.
fn zero_linear(arms: usize) -> RcfrModel {
    let mut m = RcfrModel::new(1, arms, &Architecture::linear_identity(), WeightNormalization::Global, &mut Rng::new(0)).unwrap();
    for h in &mut m.heads {
        zero_net(h);
    }
    m
}

#[test]
fn weighted_risk_examples() {
    let m = zero_linear(1);
    let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
    let y = [1.0, 3.0];
    let uniform = WeightVector::uniform(2);
    assert_eq!(weighted_factual_risk(&m, &x, &[0, 0], &y, &uniform).unwrap(), 5.0);
    let skewed = WeightVector::new(vec![2.0 - 1e-12, 1e-12]).unwrap();
    let r = weighted_factual_risk(&m, &x, &[0, 0], &y, &skewed).unwrap();
    assert!((r - 1.0).abs() < 1e-9, "{r}");
    assert!(weighted_factual_risk(&m, &x, &[0, 0], &y, &WeightVector::uniform(3)).is_err());
}

#[test]
fn h_phi_reduces_to_risk_without_balance_or_penalty() {
    let m = model(2, WeightNormalization::PerArm, 11);
    let (b, tgt) = toy_batch(20, 12);
    let w = m.sample_weights(&b.x, &b.t).unwrap();
    let out = objective_h_phi(&m, &b, &tgt, &w, &KernelConfig::default(), 0.0, 0.0).unwrap();
    let risk = weighted_factual_risk(&m, &b.x, &b.t, &b.y, &w).unwrap();
    assert!((out.value - risk).abs() < 1e-12);
    assert_eq!(out.ipm, 0.0);
}

#[test]
fn perfect_fit_on_matching_domains_is_zero() {
    let m = zero_linear(1);
    let x = Matrix::from_rows(&[[0.1], [0.7], [-0.4]]).unwrap();
    let b = SourceSample::new(x.clone(), vec![0; 3], vec![0.0; 3]).unwrap();
    let out = objective_h_phi(&m, &b, &x, &WeightVector::uniform(3), &KernelConfig::default(), 5.0, 0.0).unwrap();
    assert!(out.value.abs() < 1e-12, "{}", out.value);
}

fn h_phi_params(m: &RcfrModel) -> Vec<f64> {
    let mut p = m.rep_net.params_flat();
    for h in &m.heads {
        p.extend(h.params_flat());
    }
    p
}

fn set_h_phi_params(m: &mut RcfrModel, p: &[f64]) {
    let k = m.rep_net.param_count();
    m.rep_net.set_params_flat(&p[..k]).unwrap();
    let mut off = k;
    for h in &mut m.heads {
        let c = h.param_count();
        h.set_params_flat(&p[off..off + c]).unwrap();
        off += c;
    }
}

#[test]
fn h_phi_gradient_matches_finite_differences() {
    let m = model(2, WeightNormalization::PerArm, 13);
    let (b, tgt) = toy_batch(10, 14);
    let w = m.sample_weights(&b.x, &b.t).unwrap();
    let kernel = KernelConfig::default();
    let (alpha, lambda_h) = (2.0, 0.3);
    let out = objective_h_phi(&m, &b, &tgt, &w, &kernel, alpha, lambda_h).unwrap();
    let mut analytic = out.rep_grads.flat();
    for g in &out.head_grads {
        analytic.extend(g.flat());
    }
    let params = h_phi_params(&m);
    let err = grad_check(
        |p| {
            let mut mm = m.clone();
            set_h_phi_params(&mut mm, p);
            objective_h_phi(&mm, &b, &tgt, &w, &kernel, alpha, lambda_h).unwrap().value
        },
        &params,
        &analytic,
        1e-5,
    );
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn w_gradient_matches_finite_differences() {
    for norm in [WeightNormalization::Global, WeightNormalization::PerArm] {
        let m = model(2, norm, 15);
        let (b, tgt) = toy_batch(10, 16);
        let kernel = KernelConfig::default();
        let out = objective_w(&m, &b, &tgt, &kernel, 3.0, 0.5).unwrap();
        let err = grad_check(
            |p| {
                let mut mm = m.clone();
                mm.weight_net.set_params_flat(p).unwrap();
                objective_w(&mm, &b, &tgt, &kernel, 3.0, 0.5).unwrap().value
            },
            &m.weight_net.params_flat(),
            &out.grads.flat(),
            1e-5,
        );
        assert!(err < 1e-4, "{norm:?}: max relative error {err}");
    }
}

#[test]
fn full_objective_splits_into_both_parts() {
    let m = model(2, WeightNormalization::PerArm, 17);
    let (b, tgt) = toy_batch(16, 18);
    let kernel = KernelConfig::default();
    let (alpha, lh, lw) = (1.5, 0.2, 0.7);
    let w = m.sample_weights(&b.x, &b.t).unwrap();
    let h = objective_h_phi(&m, &b, &tgt, &w, &kernel, alpha, lh).unwrap();
    let wo = objective_w(&m, &b, &tgt, &kernel, alpha, lw).unwrap();
    let full = full_objective(&m, &b, &tgt, &kernel, alpha, lh, lw).unwrap();
    assert!((full - (h.value + wo.norm_term)).abs() < 1e-10);
    assert!((h.ipm - wo.ipm).abs() < 1e-10);
    let n = b.len() as f64;
    let norm = w.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((wo.norm_term - lw * norm / n).abs() < 1e-12);
    assert!((h.head_penalty - lh / n.sqrt() * m.head_sq_norm()).abs() < 1e-12);
}

#[test]
fn updates_touch_only_their_own_parameters() {
    let (b, tgt) = toy_batch(24, 19);
    let cfg = TrainConfig {
        architecture: small_arch(),
        ..TrainConfig::cate()
    };
    let mut trainer = Trainer::new(3, 2, &cfg, &mut Rng::new(20)).unwrap();
    let before = trainer.model.clone();
    let w = trainer.model.sample_weights(&b.x, &b.t).unwrap();
    trainer.h_step(&b, &tgt, &w).unwrap();
    assert_eq!(trainer.model.weight_net, before.weight_net);
    assert_ne!(trainer.model.rep_net, before.rep_net);
    assert_ne!(trainer.model.heads, before.heads);

    let mid = trainer.model.clone();
    trainer.w_steps(&b, &tgt, 1, &mut |_| {}).unwrap();
    assert_eq!(trainer.model.rep_net, mid.rep_net);
    assert_eq!(trainer.model.heads, mid.heads);
    assert_ne!(trainer.model.weight_net, mid.weight_net);
}

#[test]
fn zero_alpha_makes_uniform_weights_optimal() {
    let (b, tgt) = toy_batch(30, 21);
    let kernel = KernelConfig::default();
    let mut uniform = model(2, WeightNormalization::PerArm, 22);
    zero_net(&mut uniform.weight_net);
    let base = objective_w(&uniform, &b, &tgt, &kernel, 0.0, 1.0).unwrap().value;
    for seed in 0..20 {
        let other = model(2, WeightNormalization::PerArm, 200 + seed);
        let v = objective_w(&other, &b, &tgt, &kernel, 0.0, 1.0).unwrap().value;
        assert!(v >= base - 1e-12, "seed {seed}: {v} < {base}");
    }
}

#[test]
fn huge_weight_penalty_drives_weights_to_one() {
    let (b, tgt) = toy_batch(50, 23);
    let cfg = TrainConfig {
        architecture: small_arch(),
        lambda_w: 1e6,
        ..TrainConfig::cate()
    };
    let mut trainer = Trainer::new(3, 2, &cfg, &mut Rng::new(24)).unwrap();
    trainer.w_steps(&b, &tgt, 500, &mut |_| {}).unwrap();
    let w = trainer.model.sample_weights(&b.x, &b.t).unwrap();
    let worst = w.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 0.05, "max |w − 1| = {worst}");
}

fn linear_data(n: usize, seed: u64) -> SourceSample {
    let mut rng = Rng::new(seed);
    let x = gaussian_matrix(&mut rng, n, 1, &[0.0], 1.0).unwrap();
    let y = x.data().iter().map(|v| 2.0 * v).collect();
    SourceSample::new(x, vec![0; n], y).unwrap()
}

#[test]
fn linear_head_recovers_slope() {
    let train = linear_data(500, 25);
    let test = linear_data(200, 26);
    let cfg = TrainConfig {
        alpha: 0.0,
        lambda_h: 0.0,
        learning_rate: 1e-2,
        learn_weights: false,
        hphi_steps_per_cycle: Some(4),
        max_epochs: 500,
        architecture: Architecture::linear_identity(),
        ..TrainConfig::cate()
    };
    let target = TargetSample::new(test.x.clone(), vec![0; test.len()]).unwrap();
    let (m, history) = fit(&train, &target, &cfg, None).unwrap();
    assert_eq!(history.records.len(), 500);
    let pred = m.predict(&test.x, &test.t).unwrap();
    let rmse = (pred.iter().zip(&test.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / test.len() as f64).sqrt();
    assert!(rmse < 0.1, "held-out RMSE {rmse}");
}

#[test]
fn training_is_deterministic() {
    let (b, tgt) = toy_batch(60, 27);
    let target = TargetSample::new(tgt, vec![0; 60]).unwrap();
    let val = toy_batch(20, 28).0;
    let cfg = TrainConfig {
        architecture: small_arch(),
        batch_size: 16,
        max_epochs: 5,
        seed: 29,
        ..TrainConfig::cate()
    };
    let a = fit(&b, &target, &cfg, Some(&val)).unwrap();
    let c = fit(&b, &target, &cfg, Some(&val)).unwrap();
    assert_eq!(a.0, c.0);
    assert_eq!(a.1, c.1);
    let other = fit(&b, &target, &TrainConfig { seed: 30, ..cfg }, Some(&val)).unwrap();
    assert_ne!(a.0, other.0);
}

#[test]
fn every_observed_weight_vector_is_valid() {
    let (b, tgt) = toy_batch(100, 31);
    let target = TargetSample::new(tgt, vec![0; 100]).unwrap();
    let cfg = TrainConfig {
        max_epochs: 10,
        batch_size: 32,
        ..TrainConfig::synthetic_da()
    };
    let mut seen = 0;
    fit_with(&b, &target, &cfg, None, Weighting::Learned, &mut |w| {
        seen += 1;
        assert!((w.mean() - 1.0).abs() < 1e-9);
        assert!(w.values().iter().all(|v| *v > 0.0));
    })
    .unwrap();
    assert!(seen > 0);
}

#[test]
fn constant_heads_give_constant_effect() {
    let mut m = RcfrModel::new(2, 2, &Architecture::linear_identity(), WeightNormalization::PerArm, &mut Rng::new(32)).unwrap();
    m.heads[0].set_params_flat(&[0.0, 0.0, 1.0]).unwrap();
    m.heads[1].set_params_flat(&[0.0, 0.0, 3.0]).unwrap();
    let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
    assert_eq!(m.estimate_cate(&x).unwrap(), vec![2.0, 2.0]);
    m.heads[1] = m.heads[0].clone();
    assert_eq!(m.estimate_cate(&x).unwrap(), vec![0.0, 0.0]);
    assert!(model(3, WeightNormalization::PerArm, 33).estimate_cate(&x).is_err());
}

#[test]
fn model_document_round_trip() {
    let m = model(2, WeightNormalization::PerArm, 34);
    let doc = m.to_document(&TrainConfig::cate());
    let json = serde_json::to_string(&doc).unwrap();
    let back = RcfrModel::from_document(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn oracle_alpha_is_not_a_single_fit() {
    let (b, tgt) = toy_batch(10, 35);
    let target = TargetSample::new(tgt, vec![0; 10]).unwrap();
    let cfg = TrainConfig {
        alpha_mode: AlphaMode::Oracle,
        ..TrainConfig::cate()
    };
    assert!(matches!(fit(&b, &target, &cfg, None), Err(crate::Error::Config(_))));
}
