//! Backprop against a central finite-difference oracle.
//!
//! The oracle perturbs each parameter of the full scalar objective
//! `theta -> loss(y - f(x; theta))` and never touches the reverse-mode
//! path, so the two sides are independent. Networks are drawn at random but
//! re-drawn when a pre-activation or the residual sits close to a ReLU /
//! absolute / Huber kink, where finite differences are meaningless.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robos::nn::Network;
use robos::LossSpec;

const FD_STEP: f64 = 1e-6;
const KINK_GUARD: f64 = 1e-3;
const REL_TOL: f64 = 1e-5;

fn loss_of(net: &Network, x: &[f64], y: f64, spec: &LossSpec) -> f64 {
    let yhat = net.forward(x).unwrap();
    spec.value(y - yhat).unwrap()
}

/// All hidden pre-activations, recomputed layer by layer.
fn pre_activations(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut pres = Vec::new();
    let mut cur = x.to_vec();
    for layer in net.layers() {
        let mut next = Vec::with_capacity(layer.out_dim);
        for i in 0..layer.out_dim {
            let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
            let z = layer.bias[i] + row.iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>();
            pres.push(z);
            next.push(layer.activation.apply(z));
        }
        cur = next;
    }
    pres
}

fn random_case(rng: &mut ChaCha8Rng) -> (Network, Vec<f64>, f64) {
    loop {
        let n_hidden = rng.random_range(0..3usize);
        let mut dims = vec![rng.random_range(1..=8usize)];
        for _ in 0..n_hidden {
            dims.push(rng.random_range(1..=8usize));
        }
        dims.push(1);
        let net = Network::init(&dims, rng.random::<u64>()).unwrap();
        let x: Vec<f64> = (0..dims[0])
            .map(|_| rng.random::<f64>() * 4.0 - 2.0)
            .collect();
        let y = rng.random::<f64>() * 4.0 - 2.0;

        let r = y - net.forward(&x).unwrap();
        let pres_ok = pre_activations(&net, &x)
            .iter()
            .all(|z| z.abs() > KINK_GUARD);
        // Keep residuals away from the absolute kink at 0 and the Huber
        // threshold at |r| = 1.
        if pres_ok && r.abs() > KINK_GUARD && (r.abs() - 1.0).abs() > KINK_GUARD {
            return (net, x, y);
        }
    }
}

fn check_case(net: &Network, x: &[f64], y: f64, spec: &LossSpec) {
    let yhat = net.forward(x).unwrap();
    let upstream = -spec.grad(y - yhat).unwrap();
    let analytic = net.backward(x, upstream).unwrap();

    for l in 0..net.layers().len() {
        let n_weights = net.layers()[l].weights.len();
        let n_bias = net.layers()[l].bias.len();
        for slot in 0..n_weights + n_bias {
            let read =
                |net: &Network| loss_of(net, x, y, spec);
            let mut plus = net.clone();
            let mut minus = net.clone();
            if slot < n_weights {
                plus.layers_mut()[l].weights[slot] += FD_STEP;
                minus.layers_mut()[l].weights[slot] -= FD_STEP;
            } else {
                plus.layers_mut()[l].bias[slot - n_weights] += FD_STEP;
                minus.layers_mut()[l].bias[slot - n_weights] -= FD_STEP;
            }
            let fd = (read(&plus) - read(&minus)) / (2.0 * FD_STEP);
            let a = if slot < n_weights {
                analytic.layers[l].d_weights[slot]
            } else {
                analytic.layers[l].d_bias[slot - n_weights]
            };
            assert!(
                (a - fd).abs() <= REL_TOL * (1.0 + a.abs()),
                "layer {l} slot {slot} ({spec:?}): analytic {a} vs fd {fd}"
            );
        }
    }
}

fn specs() -> [LossSpec; 5] {
    [
        LossSpec::Square,
        LossSpec::Absolute,
        LossSpec::huber(1.0),
        LossSpec::LogCosh,
        LossSpec::robos(1.0, 0.5, 0.01),
    ]
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10 {
        let (net, x, y) = random_case(&mut rng);
        for spec in specs() {
            check_case(&net, &x, y, &spec);
        }
    }
}

#[test]
fn two_hidden_layer_example_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // Fixed-architecture variant of the oracle: 2 hidden layers.
    loop {
        let net = Network::init(&[4, 6, 6, 1], rng.random::<u64>()).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y = 0.7;
        let r = y - net.forward(&x).unwrap();
        if pre_activations(&net, &x).iter().all(|z| z.abs() > KINK_GUARD)
            && r.abs() > KINK_GUARD
            && (r.abs() - 1.0).abs() > KINK_GUARD
        {
            for spec in specs() {
                check_case(&net, &x, y, &spec);
            }
            break;
        }
    }
}
