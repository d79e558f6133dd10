#![allow(dead_code)]

use cmox::features::IdSequence;
use cmox::neural::{Dims, NeuralModel, Variant};

pub fn padded(ids: &[u32], max_len: usize) -> IdSequence {
    let mut v = ids.to_vec();
    v.resize(max_len, 0);
    IdSequence {
        ids: v,
        true_length: ids.len(),
    }
}

/// Two sequences over a 7-token vocabulary, padded to length 5, 3 classes.
pub fn toy_batch() -> (Vec<IdSequence>, Vec<usize>) {
    (vec![padded(&[2, 5, 3, 6], 5), padded(&[4, 1, 2], 5)], vec![2, 0])
}

pub struct GradCheck {
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_at: String,
}

/// Compares analytic gradients with central differences. `pick` selects
/// which flat indices of each tensor to probe.
pub fn grad_check(variant: Variant, dims: Dims, seed: u64, pick: impl Fn(&str, usize) -> Vec<usize>) -> GradCheck {
    let (batch, labels) = toy_batch();
    let model = NeuralModel::init(7, 3, seed, None, variant, dims).unwrap();
    let (_, cache) = model.forward(&batch, false, 0).unwrap();
    let (grads, _) = model.backward(&batch, &labels, &cache).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, _, t)| (n.to_string(), t.to_vec()))
        .collect();

    let eps = 1e-5;
    let mut out = GradCheck {
        checked: 0,
        worst_rel: 0.0,
        worst_at: String::new(),
    };
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for idx in pick(name, g.len()) {
            let mut probe = model.clone();
            let orig = probe.tensors_mut()[ti].1[idx];
            probe.tensors_mut()[ti].1[idx] = orig + eps;
            let up = probe.loss(&batch, &labels).unwrap();
            probe.tensors_mut()[ti].1[idx] = orig - eps;
            let down = probe.loss(&batch, &labels).unwrap();
            let numeric = (up - down) / (2.0 * eps);
            let rel = relative_error(g[idx], numeric);
            out.checked += 1;
            if rel > out.worst_rel {
                out.worst_rel = rel;
                out.worst_at = format!("{name}[{idx}] analytic {:e} numeric {numeric:e}", g[idx]);
            }
        }
    }
    out
}

/// |a - n| / max(|a|, |n|, 1e-6). Central differences at eps 1e-5 resolve
/// a loss near 1 to about 2e-11, so gradients much smaller than 1e-6 cannot
/// be compared in relative terms; below the floor this is an absolute test
/// at 1e-10.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}
