use maclab::info::{jacobi_eigenvalues, von_neumann_entropy, ProtocolGraph};
use maclab::nn::{log_prob_grad, softmax, Mlp};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `<upstream, net(input)>` over every parameter.
fn numeric_param_grad(net: &Mlp, input: &[f64], upstream: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for li in 0..net.layers().len() {
        let count = net.layers()[li].weights.len() + net.layers()[li].bias.len();
        for pi in 0..count {
            let eval = |delta: f64| {
                let mut m = net.clone();
                let layer = &mut m.layers_mut()[li];
                let nw = layer.weights.len();
                if pi < nw {
                    layer.weights[pi] += delta;
                } else {
                    layer.bias[pi - nw] += delta;
                }
                dot(&m.forward(input).unwrap(), upstream)
            };
            out.push((eval(H) - eval(-H)) / (2.0 * H));
        }
    }
    out
}

fn random_dims(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let depth = rng.random_range(2..=4);
    (0..depth).map(|_| rng.random_range(1..=8)).collect()
}

#[test]
fn parameter_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dims = random_dims(&mut rng);
        let net = Mlp::new(&dims, &mut rng).unwrap();
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let upstream: Vec<f64> = (0..*dims.last().unwrap())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let analytic: Vec<f64> = net.backward(&input, &upstream).unwrap().iter().collect();
        let numeric = numeric_param_grad(&net, &input, &upstream);
        assert_eq!(analytic.len(), numeric.len());
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-4, "dims {dims:?}: relative error {e}");
        worst = worst.max(e);
    }
    assert!(worst < 1e-4);
}

#[test]
fn input_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let dims = random_dims(&mut rng);
        let net = Mlp::new(&dims, &mut rng).unwrap();
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let upstream: Vec<f64> = (0..*dims.last().unwrap())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let acts = net.forward_cached(&input).unwrap();
        let mut g = maclab::nn::Gradients::zeros_like(&net);
        let analytic = net.accumulate_backward(&acts, &upstream, 1.0, &mut g).unwrap();
        let numeric: Vec<f64> = (0..input.len())
            .map(|i| {
                let f = |d: f64| {
                    let mut x = input.clone();
                    x[i] += d;
                    dot(&net.forward(&x).unwrap(), &upstream)
                };
                (f(H) - f(-H)) / (2.0 * H)
            })
            .collect();
        assert!(rel_err(&analytic, &numeric) < 1e-4);
    }
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let k = rng.random_range(2..=8);
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let target = rng.random_range(0..k);
        let loss = |z: &[f64]| -softmax(z)[target].ln();
        // d(-log p_t)/dz = -(e_t - p)
        let analytic: Vec<f64> = log_prob_grad(&softmax(&logits), target)
            .into_iter()
            .map(|g| -g)
            .collect();
        let numeric: Vec<f64> = (0..k)
            .map(|i| {
                let mut up = logits.clone();
                let mut dn = logits.clone();
                up[i] += H;
                dn[i] -= H;
                (loss(&up) - loss(&dn)) / (2.0 * H)
            })
            .collect();
        assert!(rel_err(&analytic, &numeric) < 1e-4);
    }
}

#[test]
fn softmax_outputs_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let k = rng.random_range(1..=16);
        let scale = 10f64.powi(rng.random_range(-2..=3));
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let p = softmax(&logits);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> ProtocolGraph {
    let mut g = ProtocolGraph::empty((0..n).map(|i| format!("v{i}")).collect());
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(density) {
                g.add_edge(a, b, rng.random_range(0.01..3.0));
            }
        }
    }
    g
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn jacobi_agrees_with_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for n in [2, 3, 5, 13, 22, 40, 64] {
        let g = random_graph(&mut rng, n, 0.4);
        let l = g.laplacian();
        let ours = sorted(jacobi_eigenvalues(&l, n).unwrap());
        let reference = sorted(
            DMatrix::from_row_slice(n, n, &l)
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect(),
        );
        for (a, b) in ours.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-8, "n={n}: {a} vs {b}");
        }
        let trace: f64 = (0..n).map(|i| l[i * n + i]).sum();
        assert!((ours.iter().sum::<f64>() - trace).abs() < 1e-8);
        assert!(ours.iter().all(|&v| v >= -1e-8));
    }
}

proptest! {
    #[test]
    fn graph_entropy_within_log_bound(seed in any::<u64>(), n in 2usize..30, density in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = random_graph(&mut rng, n, density);
        // at least one edge so the trace is positive
        g.add_edge(0, 1, 0.5);
        let h = von_neumann_entropy(&g).unwrap();
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= (n as f64).log2() + 1e-9);
        let l = g.laplacian();
        let eig = jacobi_eigenvalues(&l, n).unwrap();
        let trace: f64 = (0..n).map(|i| l[i * n + i]).sum();
        prop_assert!((eig.iter().sum::<f64>() - trace).abs() < 1e-8);
    }
}
