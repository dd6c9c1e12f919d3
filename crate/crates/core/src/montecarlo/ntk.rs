use super::network::{forward, NetworkSample, WEIGHT_BUDGET};
use super::symmetric_gram;
use crate::conditioning::GramMatrix;
use crate::error::{Error, Result};
use crate::linalg::dot;
use rayon::prelude::*;

/// Layer inputs `Φ_{h−1}` and back-propagated signals `∂f/∂z_h` for one input.
struct Backward {
    post: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

fn backward(net: &NetworkSample, x: &[f64]) -> Result<Backward> {
    let cfg = &net.config;
    let trace = forward(net, x)?;
    let scale = 1.0 / (cfg.width as f64).sqrt();
    let depth = net.layers.len();
    let mut deltas = vec![Vec::new(); depth];
    // Gradient of f with respect to Φ_h, starting from Φ_L.
    let mut g = net.output.clone();
    for h in (0..depth).rev() {
        if cfg.normalize_layers {
            // d(u/‖u‖) = (I − p pᵀ)/‖u‖ with p = u/‖u‖.
            let p = &trace.post[h + 1];
            let r = dot(&trace.raw[h], &trace.raw[h]).sqrt();
            let pg = dot(p, &g);
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi = (*gi - pi * pg) / r;
            }
        }
        let delta: Vec<f64> = g
            .iter()
            .zip(&trace.pre[h])
            .map(|(gi, &z)| gi * cfg.activation.derivative(z) * scale)
            .collect();
        g = net.layers[h].tr_matvec(&delta);
        deltas[h] = delta;
    }
    Ok(Backward { post: trace.post, deltas })
}

/// Tangent kernel `∂f(x_i) · ∂f(x_j)` over every weight, from a hand-written
/// backward pass. With `L = 0` the network is `f(x) = v · x`.
pub fn empirical_ntk(net: &NetworkSample, xs: &[Vec<f64>]) -> Result<GramMatrix> {
    let cfg = &net.config;
    let stored = xs.len().saturating_mul(cfg.width).saturating_mul(2 * cfg.depth + 1);
    if stored > WEIGHT_BUDGET {
        return Err(Error::Resource(format!("{stored} stored activations exceed the budget {WEIGHT_BUDGET}")));
    }
    let passes = xs.par_iter().map(|x| backward(net, x)).collect::<Result<Vec<_>>>()?;
    let depth = net.layers.len();
    GramMatrix::new(symmetric_gram(&passes, |a, b| {
        let mut k = dot(&a.post[depth], &b.post[depth]);
        for h in 0..depth {
            k += dot(&a.deltas[h], &b.deltas[h]) * dot(&a.post[h], &b.post[h]);
        }
        k
    }))
}
