#![allow(dead_code)]

use dmvi_core::random::stream;
use dmvi_core::{BoundParams, Graph64, ParamStore64, Var};
use rand::Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + H;
            let up = f(&xp);
            xp[i] = orig - H;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Value of a scalar function of the parameters, no gradient tracking.
pub fn param_value<F>(store: &ParamStore64, f: &F) -> f64
where
    F: for<'g> Fn(&'g Graph64, &BoundParams<'g, f64>) -> Var<'g, f64>,
{
    let g = Graph64::new();
    let p = store.bind_frozen(&g);
    f(&g, &p).item()
}

/// Compares reverse-mode parameter gradients against central differences
/// on `coords` randomly chosen scalar entries. Returns the worst relative
/// error.
pub fn worst_param_error<F>(store: &ParamStore64, f: F, coords: usize, seed: u64, floor: f64) -> f64
where
    F: for<'g> Fn(&'g Graph64, &BoundParams<'g, f64>) -> Var<'g, f64>,
{
    let g = Graph64::new();
    let p = store.bind(&g);
    let out = f(&g, &p);
    let grads = p.gradients(&g.backward(out));

    let entries: Vec<(String, usize)> = store
        .iter()
        .flat_map(|(name, t)| (0..t.len()).map(move |i| (name.to_string(), i)))
        .collect();
    let mut rng = stream(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..coords.min(entries.len()) {
        let (name, i) = &entries[rng.random_range(0..entries.len())];
        let mut probe = store.clone();
        let orig = probe.get(name).unwrap().data()[i.to_owned()];
        probe.get_mut(name).unwrap().data_mut()[*i] = orig + H;
        let up = param_value(&probe, &f);
        probe.get_mut(name).unwrap().data_mut()[*i] = orig - H;
        let down = param_value(&probe, &f);
        let fd = (up - down) / (2.0 * H);
        let analytic = grads.get(name).map_or(0.0, |t| t.data()[*i]);
        worst = worst.max(rel_err(analytic, fd, floor));
    }
    worst
}

/// Overwrites every parameter with `N(0, std²)` noise.
pub fn randomize(store: &mut ParamStore64, std: f64, seed: u64) {
    let mut rng = stream(seed);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        for v in store.get_mut(&name).unwrap().data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = std * z;
        }
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
