//! Central finite-difference verification of every backward pass.
//!
//! The checked objective chains the whole trainable stack:
//! `MSE(toy(z_t, t, adapter_dynamic(d, t)), target)`, so the adapter
//! gradients are verified through the denoiser's token gradient as well.

use serde::Serialize;

use super::toy::{toy_backward, toy_forward, ToyDenoiser};
use super::{training_loss, training_loss_grad};
use crate::adapter::{self, AdapterWeights, DESCRIPTOR_DIM};
use crate::exec::{chunks, map_indices, Execution};
use crate::rng::Rng;
use crate::tensor::{gaussian, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error. Central differences at
/// `FD_STEP` carry about `1e-11` of rounding noise on O(1) objectives, so
/// gradients smaller than this floor are compared on an absolute scale
/// (errors below `1e-9` pass).
pub const REL_FLOOR: f64 = 1e-4;

const TOKEN_DIM: usize = 4;
const CHANNELS: usize = 2;
const HIDDEN: usize = 3;
const SIDE: usize = 4;
const TIMESTEP: usize = 137;
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub count: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone)]
struct Params {
    adapter: AdapterWeights,
    net: ToyDenoiser,
    d: [f64; DESCRIPTOR_DIM],
}

impl Params {
    fn group_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .adapter
            .groups()
            .iter()
            .map(|g| format!("adapter.{}", g.0))
            .collect();
        v.push("adapter.input".into());
        v.extend(self.net.groups().iter().map(|g| format!("toy.{}", g.0)));
        v
    }

    fn group_mut(&mut self, g: usize) -> &mut [f64] {
        let na = self.adapter.groups().len();
        if g < na {
            self.adapter.groups_mut().swap_remove(g).1
        } else if g == na {
            &mut self.d
        } else {
            self.net.groups_mut().swap_remove(g - na - 1).1
        }
    }
}

struct Fixture {
    z_t: Tensor,
    target: Tensor,
}

impl Fixture {
    fn loss(&self, p: &Params) -> f64 {
        let token = adapter::adapter_dynamic(&p.d, TIMESTEP as u32, &p.adapter, None)
            .expect("fixture shapes are consistent");
        let (pred, _) =
            toy_forward(&p.net, &self.z_t, TIMESTEP, Some(&token)).expect("fixture shapes are consistent");
        training_loss(&pred, &self.target).expect("fixture shapes are consistent")
    }

    fn gradient(&self, p: &Params) -> Params {
        let (token, atrace) = adapter::forward(&p.d, Some(TIMESTEP as u32), &p.adapter, None)
            .expect("fixture shapes are consistent");
        let (pred, trace) =
            toy_forward(&p.net, &self.z_t, TIMESTEP, Some(&token)).expect("fixture shapes are consistent");
        let gout = training_loss_grad(&pred, &self.target);
        let mut gnet = p.net.zero_grad();
        let dtoken = toy_backward(&p.net, &trace, &gout, &mut gnet)
            .expect("fixture shapes are consistent")
            .expect("token was supplied");
        let mut gad = AdapterWeights::zero_grad(TOKEN_DIM);
        let dd = adapter::backward(&atrace, &p.adapter, &dtoken, &mut gad)
            .expect("fixture shapes are consistent");
        Params {
            adapter: gad,
            net: gnet,
            d: dd,
        }
    }
}

fn fixture(seed: u64) -> (Params, Fixture) {
    let mut rng = Rng::new(seed);
    let mut adapter = AdapterWeights::init(TOKEN_DIM, &mut rng);
    // Move LayerNorm away from its identity initialisation.
    for v in adapter.ln_gain.iter_mut() {
        *v = rng.uniform_range(0.5, 1.5);
    }
    for v in adapter.ln_bias.iter_mut() {
        *v = rng.uniform_range(-0.5, 0.5);
    }
    let net = ToyDenoiser::init(CHANNELS, HIDDEN, TOKEN_DIM, 1000.0, &mut rng);
    let mut d = [0.0; DESCRIPTOR_DIM];
    d.iter_mut().for_each(|v| *v = rng.uniform_range(0.0, 2.0));
    let shape = [CHANNELS, SIDE, SIDE];
    let z_t = gaussian(&shape, &mut rng).expect("valid shape");
    let target = gaussian(&shape, &mut rng).expect("valid shape");
    (Params { adapter, net, d }, Fixture { z_t, target })
}

/// Checks analytic gradients of every trainable group (plus the
/// descriptor input) against central differences with step [`FD_STEP`].
pub fn gradcheck_all(seed: u64, exec: Execution) -> GradcheckReport {
    let (params, fx) = fixture(seed);
    let mut analytic = fx.gradient(&params);
    let names = params.group_names();

    let groups = names
        .into_iter()
        .enumerate()
        .map(|(g, name)| {
            let grad = analytic.group_mut(g).to_vec();
            let errs = map_indices(
                chunks(grad.len(), CHUNK).len(),
                exec,
                |k| {
                    let (start, len) = chunks(grad.len(), CHUNK)[k];
                    let mut p = params.clone();
                    (start..start + len)
                        .map(|i| {
                            let orig = p.group_mut(g)[i];
                            p.group_mut(g)[i] = orig + FD_STEP;
                            let up = fx.loss(&p);
                            p.group_mut(g)[i] = orig - FD_STEP;
                            let down = fx.loss(&p);
                            p.group_mut(g)[i] = orig;
                            let numeric = (up - down) / (2.0 * FD_STEP);
                            (relative_error(grad[i], numeric), (grad[i] - numeric).abs())
                        })
                        .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)))
                },
            );
            let (rel, abs) = errs
                .into_iter()
                .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            GroupCheck {
                name,
                count: grad.len(),
                max_rel_err: rel,
                max_abs_err: abs,
            }
        })
        .collect::<Vec<_>>();

    let passed = groups.iter().all(|g| g.max_rel_err < GRAD_TOLERANCE);
    GradcheckReport {
        seed,
        step: FD_STEP,
        tolerance: GRAD_TOLERANCE,
        groups,
        passed,
    }
}
