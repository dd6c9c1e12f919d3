use depthcond::conditioning::{propagate_kernel, GramMatrix};
use depthcond::montecarlo::{empirical_kernel, empirical_ntk, sample_network_trial};
use depthcond::{ActivationSpec, DualActivation, NetworkConfig, TrialSummary};

fn inputs() -> Vec<Vec<f64>> {
    let s = 0.6f64;
    vec![vec![1.0, 0.0, 0.0], vec![s, (1.0 - s * s).sqrt(), 0.0], vec![0.0, 0.6, -0.8]]
}

#[test]
fn one_layer_width_one_kernel_is_unbiased() {
    // Deeper layers at finite width see a random input Gram, so only one
    // layer is unbiased for the limit.
    let xs = inputs();
    let spec = ActivationSpec::builtin("relu-normalized").unwrap();
    let d = DualActivation::new(spec.clone()).unwrap();
    let cfg = NetworkConfig::new(3, 1, 1, spec, 21);
    let limit = propagate_kernel(&GramMatrix::from_vectors(&xs).unwrap(), &d, 1).unwrap();

    let draws: Vec<GramMatrix> =
        (0..10_000).map(|t| empirical_kernel(&sample_network_trial(&cfg, t).unwrap(), &xs).unwrap()).collect();
    for i in 0..3 {
        for j in i..3 {
            let s = TrialSummary::from_samples(&draws.iter().map(|k| k.entries()[(i, j)]).collect::<Vec<_>>());
            let z = s.z_score(limit.entries()[(i, j)]);
            assert!(z.abs() <= 5.0, "K[{i},{j}]: mean {} vs {} (z = {z:.2})", s.mean, limit.entries()[(i, j)]);
        }
    }
}

#[test]
fn identity_network_preserves_dot_products_on_average() {
    let xs = inputs();
    let cfg = NetworkConfig::new(3, 64, 3, ActivationSpec::builtin("identity").unwrap(), 5);
    let draws: Vec<GramMatrix> =
        (0..400).map(|t| empirical_kernel(&sample_network_trial(&cfg, t).unwrap(), &xs).unwrap()).collect();
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = xs[i].iter().zip(&xs[j]).map(|(a, b)| a * b).sum();
            let s = TrialSummary::from_samples(&draws.iter().map(|k| k.entries()[(i, j)]).collect::<Vec<_>>());
            assert!(s.z_score(dot).abs() <= 5.0, "({i},{j}): {} vs {dot}", s.mean);
        }
    }
}

#[test]
fn empirical_ntk_is_symmetric() {
    let xs = inputs();
    for name in ["relu", "tanh-normalized", "exp-normalized"] {
        let cfg = NetworkConfig::new(3, 128, 3, ActivationSpec::builtin(name).unwrap(), 9);
        let k = empirical_ntk(&sample_network_trial(&cfg, 0).unwrap(), &xs).unwrap();
        let m = k.entries();
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * m[(i, i)].abs().max(1.0), "{name}");
            }
        }
    }
}
