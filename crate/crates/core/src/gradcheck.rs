//! Central-difference checks of every hand-written gradient, packaged as a
//! suite that reports the worst relative error per component.

use std::fmt;
use std::time::Instant;

use crate::error::Result;
use crate::experiments::SourceSample;
use crate::ipm::{weighted_mmd2, KernelConfig};
use crate::nn::{grad_check, Activation, Mlp};
use crate::numerics::{gaussian_matrix, Matrix, Rng};
use crate::rcfr::{objective_h_phi, objective_w, Architecture, RcfrModel, WeightNormalization};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCheck {
    pub name: &'static str,
    pub parameters: usize,
    pub max_relative_error: f64,
}

impl ComponentCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub components: Vec<ComponentCheck>,
    pub elapsed_ms: u128,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(ComponentCheck::passed)
    }

    pub fn worst(&self) -> f64 {
        self.components.iter().map(|c| c.max_relative_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>8} {:>14}  status", "component", "params", "max rel err")?;
        for c in &self.components {
            writeln!(
                f,
                "{:<24} {:>8} {:>14.3e}  {}",
                c.name,
                c.parameters,
                c.max_relative_error,
                if c.passed() { "ok" } else { "FAIL" }
            )?;
        }
        write!(f, "tolerance {GRADCHECK_TOLERANCE:e}, step {GRADCHECK_STEP:e}, {} ms", self.elapsed_ms)
    }
}

fn check(name: &'static str, f: impl FnMut(&[f64]) -> f64, params: &[f64], analytic: &[f64]) -> ComponentCheck {
    ComponentCheck {
        name,
        parameters: params.len(),
        max_relative_error: grad_check(f, params, analytic, GRADCHECK_STEP),
    }
}

fn contract(out: &Matrix, r: &Matrix) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn nn_checks(rng: &mut Rng) -> Result<Vec<ComponentCheck>> {
    let net = Mlp::new(4, &[6, 5, 3], Activation::Elu, Activation::Linear, rng);
    let x = gaussian_matrix(rng, 7, 4, &[0.0; 4], 1.0)?;
    let r = gaussian_matrix(rng, 7, 3, &[0.0; 3], 1.0)?;
    let (_, cache) = net.forward(&x)?;
    let (grads, gx) = net.backward(&cache, &r)?;
    let params = check(
        "nn/params",
        |p| {
            let mut n = net.clone();
            n.set_params_flat(p).expect("same length");
            contract(&n.predict(&x).expect("shape"), &r)
        },
        &net.params_flat(),
        &grads.flat(),
    );
    let input = check(
        "nn/input",
        |p| {
            let xm = Matrix::new(x.rows(), x.cols(), p.to_vec()).expect("shape");
            contract(&net.predict(&xm).expect("shape"), &r)
        },
        x.data(),
        gx.data(),
    );
    Ok(vec![params, input])
}

fn mmd_checks(rng: &mut Rng) -> Result<Vec<ComponentCheck>> {
    let kernel = KernelConfig::new(1.3)?;
    let zs = gaussian_matrix(rng, 9, 3, &[0.0; 3], 1.0)?;
    let zt = gaussian_matrix(rng, 8, 3, &[0.5, -0.5, 0.0], 1.0)?;
    let w: Vec<f64> = (0..9).map(|_| 0.2 + rng.uniform() * 1.6).collect();
    let res = weighted_mmd2(&zs, &w, &zt, &kernel)?;
    let value = |zs: &Matrix, w: &[f64], zt: &Matrix| weighted_mmd2(zs, w, zt, &kernel).expect("shapes").value;
    Ok(vec![
        check(
            "ipm/source",
            |p| value(&Matrix::new(9, 3, p.to_vec()).expect("shape"), &w, &zt),
            zs.data(),
            res.grad_src.data(),
        ),
        check(
            "ipm/target",
            |p| value(&zs, &w, &Matrix::new(8, 3, p.to_vec()).expect("shape")),
            zt.data(),
            res.grad_tgt.data(),
        ),
        check("ipm/weights", |p| value(&zs, p, &zt), &w, &res.grad_w),
    ])
}

fn toy_model(rng: &mut Rng, norm: WeightNormalization) -> Result<RcfrModel> {
    let arch = Architecture {
        rep_layers: vec![6, 4],
        normalize_representation: true,
        head_layers: vec![5],
        weight_layers: vec![4],
    };
    RcfrModel::new(3, 2, &arch, norm, rng)
}

fn toy_batch(rng: &mut Rng, n: usize) -> Result<(SourceSample, Matrix)> {
    let x = gaussian_matrix(rng, n, 3, &[0.0; 3], 1.0)?;
    let t = (0..n).map(|i| i % 2).collect();
    let y = (0..n).map(|_| rng.normal()).collect();
    let target = gaussian_matrix(rng, n, 3, &[0.5, -0.5, 0.0], 1.0)?;
    Ok((SourceSample::new(x, t, y)?, target))
}

fn h_phi_params(m: &RcfrModel) -> Vec<f64> {
    let mut p = m.rep_net.params_flat();
    for h in &m.heads {
        p.extend(h.params_flat());
    }
    p
}

fn set_h_phi_params(m: &mut RcfrModel, p: &[f64]) {
    let mut off = m.rep_net.param_count();
    m.rep_net.set_params_flat(&p[..off]).expect("same length");
    for h in &mut m.heads {
        let c = h.param_count();
        h.set_params_flat(&p[off..off + c]).expect("same length");
        off += c;
    }
}

fn objective_checks(rng: &mut Rng) -> Result<Vec<ComponentCheck>> {
    let kernel = KernelConfig::default();
    let (batch, tgt) = toy_batch(rng, 10)?;
    let m = toy_model(rng, WeightNormalization::PerArm)?;
    let w = m.sample_weights(&batch.x, &batch.t)?;
    let (alpha, lambda_h, lambda_w) = (2.0, 0.3, 0.5);
    let out = objective_h_phi(&m, &batch, &tgt, &w, &kernel, alpha, lambda_h)?;
    let mut analytic = out.rep_grads.flat();
    for g in &out.head_grads {
        analytic.extend(g.flat());
    }
    let mut checks = vec![check(
        "objective/h_phi",
        |p| {
            let mut mm = m.clone();
            set_h_phi_params(&mut mm, p);
            objective_h_phi(&mm, &batch, &tgt, &w, &kernel, alpha, lambda_h).expect("valid batch").value
        },
        &h_phi_params(&m),
        &analytic,
    )];
    for (name, norm) in [("objective/w (global)", WeightNormalization::Global), ("objective/w (per-arm)", WeightNormalization::PerArm)] {
        let m = toy_model(rng, norm)?;
        let out = objective_w(&m, &batch, &tgt, &kernel, alpha, lambda_w)?;
        checks.push(check(
            name,
            |p| {
                let mut mm = m.clone();
                mm.weight_net.set_params_flat(p).expect("same length");
                objective_w(&mm, &batch, &tgt, &kernel, alpha, lambda_w).expect("valid batch").value
            },
            &m.weight_net.params_flat(),
            &out.grads.flat(),
        ));
    }
    Ok(checks)
}

/// Run every check with inputs drawn from `seed`.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let start = Instant::now();
    let mut components = nn_checks(&mut Rng::stream(seed, 0))?;
    components.extend(mmd_checks(&mut Rng::stream(seed, 1))?);
    components.extend(objective_checks(&mut Rng::stream(seed, 2))?);
    Ok(GradcheckReport {
        components,
        elapsed_ms: start.elapsed().as_millis(),
    })
}
