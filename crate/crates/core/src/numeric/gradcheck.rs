//! Central finite-difference checking of analytic gradients.

use super::graph::Gradients;
use super::params::{ParamId, ParamStore};

/// Largest relative error between analytic and numeric gradients over every
/// parameter entry. `eval` returns the loss and its analytic gradients.
///
/// The relative error is `|a - n| / max(|a|, |n|, 1e-5)`; the floor keeps
/// entries whose true gradient is (near) zero from dividing round-off noise
/// by round-off noise.
pub fn check_gradients<F>(store: &mut ParamStore, eval: F, step: f64) -> f64
where
    F: Fn(&ParamStore) -> (f64, Gradients),
{
    let ids: Vec<ParamId> = store.ids().collect();
    check_gradients_for(store, &ids, eval, step)
}

pub fn check_gradients_for<F>(store: &mut ParamStore, ids: &[ParamId], eval: F, step: f64) -> f64
where
    F: Fn(&ParamStore) -> (f64, Gradients),
{
    let (_, analytic) = eval(store);
    let mut worst = 0.0f64;
    for &id in ids {
        let n = store.get(id).value.len();
        for k in 0..n {
            let original = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = original + step;
            let (plus, _) = eval(store);
            store.get_mut(id).value.data_mut()[k] = original - step;
            let (minus, _) = eval(store);
            store.get_mut(id).value.data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[k]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max(rel);
        }
    }
    worst
}
