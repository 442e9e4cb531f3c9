//! Central finite-difference checks of graph gradients, run in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Bound, Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const EPS: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;
/// Gradients below this magnitude are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(analytic, numeric)` of the worst entry.
    pub worst: (f64, f64),
    /// Parameter name or input index of the worst entry.
    pub worst_at: String,
}

impl GradCheck {
    pub fn passes(&self) -> bool {
        self.checked > 0 && self.max_rel_err <= TOLERANCE
    }

    fn record(&mut self, at: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        self.checked += 1;
        if err > self.max_rel_err || err.is_nan() {
            self.max_rel_err = if err.is_nan() { f64::INFINITY } else { err };
            self.worst = (analytic, numeric);
            self.worst_at = at();
        }
    }
}

fn empty() -> GradCheck {
    GradCheck { checked: 0, max_rel_err: 0.0, worst: (0.0, 0.0), worst_at: String::new() }
}

/// Rescales every weight-norm direction to unit row norm. The layer weights
/// `g · v / ‖v‖` are unchanged, so the network computes the same function at
/// a point where `v` is not small next to the difference step.
pub fn unit_directions(store: &ParamStore<f64>) -> ParamStore<f64> {
    let mut out = store.clone();
    for p in out.iter_mut().filter(|p| p.name.ends_with(".weight_v")) {
        let [rows, a, b] = p.value.shape();
        let inner = a * b;
        for r in p.value.data_mut().chunks_mut(inner).take(rows) {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    out
}

/// Positions `(param, element)` to probe: `per_param` per tensor, seeded.
fn probes(store: &ParamStore<f64>, per_param: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (id, p) in store.iter() {
        let n = p.value.numel();
        for j in sample(&mut rng, n, per_param.min(n)) {
            out.push((id.index(), j));
        }
    }
    out
}

/// Checks `∂loss/∂θ` for sampled entries of every parameter in `store`.
pub fn check_params<F>(store: &ParamStore<f64>, per_param: usize, seed: u64, loss: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &Bound) -> Result<Var>,
{
    check_params_with_step(store, per_param, seed, EPS, loss)
}

pub fn check_params_with_step<F>(
    store: &ParamStore<f64>,
    per_param: usize,
    seed: u64,
    eps: f64,
    loss: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &Bound) -> Result<Var>,
{
    let mut g = Graph::new();
    let p = g.bind(store, true);
    let l = loss(&mut g, &p)?;
    let grads = g.backward(l)?.for_params(&p, store);
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let p = g.bind(s, false);
        let l = loss(&mut g, &p)?;
        Ok(g.value(l).item())
    };
    let mut report = empty();
    let mut probe = store.clone();
    for (i, j) in probes(store, per_param, seed) {
        let id = store.iter().nth(i).expect("probe index").0;
        let orig = store.get(id).value.data()[j];
        probe.get_mut(id).value.data_mut()[j] = orig + eps;
        let up = eval(&probe)?;
        probe.get_mut(id).value.data_mut()[j] = orig - eps;
        let down = eval(&probe)?;
        probe.get_mut(id).value.data_mut()[j] = orig;
        report.record(|| format!("{}[{j}]", store.get(id).name), grads[i][j], (up - down) / (2.0 * eps));
    }
    Ok(report)
}

/// Distance from the nearest leaky-ReLU kink at the point `store`.
pub fn kink_margin<F>(store: &ParamStore<f64>, loss: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &Bound) -> Result<Var>,
{
    let mut g = Graph::new();
    let p = g.bind(store, false);
    loss(&mut g, &p)?;
    Ok(g.kink_margin().unwrap_or(f64::INFINITY))
}

/// Checks `∂loss/∂x` for every element of the input tensors.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], loss: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let l = loss(&mut g, &vars)?;
    let grads = g.backward(l)?;
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let l = loss(&mut g, &vars)?;
        Ok(g.value(l).item())
    };
    let mut report = empty();
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        for j in 0..inputs[k].numel() {
            let orig = inputs[k].data()[j];
            probe[k].data_mut()[j] = orig + EPS;
            let up = eval(&probe)?;
            probe[k].data_mut()[j] = orig - EPS;
            let down = eval(&probe)?;
            probe[k].data_mut()[j] = orig;
            report.record(|| format!("input {k}[{j}]"), analytic[j], (up - down) / (2.0 * EPS));
        }
    }
    Ok(report)
}
