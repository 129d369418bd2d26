mod common;

use common::{naive_forward, naive_jet};
use dmpinn::arch::{
    forward, forward_with_derivatives, init_network, param_count, prepare_inputs,
    ArchitectureKind, Direction, NetworkConfig, NetworkParams, ProductTerms,
};
use dmpinn::hessian::FlatParams;
use dmpinn::sampling::DomainBounds;
use dmpinn::tape::{Tape, Tensor};
use dmpinn::ProblemKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Xavier weights plus random biases, so every bias path is exercised.
fn random_params(cfg: &NetworkConfig, seed: u64) -> NetworkParams {
    let mut p = init_network(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for t in p.tensors_mut() {
        if t.shape().len() == 1 {
            let data = (0..t.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
            *t = Tensor::new(t.shape().to_vec(), data).unwrap();
        }
    }
    p
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect())
        .collect()
}

/// `(u, u_d, u_dd)` for every point from the taped forward pass, with inputs
/// normalized onto `bounds`.
fn taped_jet(
    p: &NetworkParams,
    points: &[Vec<f64>],
    bounds: &[(f64, f64)],
    dim: usize,
) -> Vec<(f64, f64, f64)> {
    let labels = ["t", "x", "y"];
    let db = DomainBounds::new(
        bounds
            .iter()
            .enumerate()
            .map(|(i, (lo, hi))| (labels[i], *lo, *hi))
            .collect(),
    )
    .unwrap();
    let raw = Tensor::from_rows(points).unwrap();
    let (x, chain) = prepare_inputs(&raw, Some(&db)).unwrap();
    let mut tape = Tape::new();
    let net = p.register(&mut tape);
    let b = forward_with_derivatives(&mut tape, &net, &x, &[Direction::second(dim)], Some(&chain))
        .unwrap();
    let u = tape.value(b.u).data().to_vec();
    let d1 = tape.value(b.first(dim).unwrap()).data().to_vec();
    let d2 = tape.value(b.second(dim).unwrap()).data().to_vec();
    (0..points.len()).map(|i| (u[i], d1[i], d2[i])).collect()
}

fn arb_config() -> impl Strategy<Value = (NetworkConfig, u64)> {
    (
        0usize..5,
        1usize..=4,
        2usize..=8,
        any::<bool>(),
        1usize..=3,
        any::<u64>(),
    )
        .prop_map(|(k, l, w, act, stride, seed)| {
            let mut cfg = NetworkConfig::new(ArchitectureKind::ALL[k], 2, l, w, 1);
            if act {
                cfg.product_terms = ProductTerms::Activations;
            }
            cfg.skip_stride = stride;
            (cfg, seed)
        })
}

#[test]
fn dm_forward_matches_straight_line_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in ArchitectureKind::ALL {
        for terms in [ProductTerms::HiddenOutputs, ProductTerms::Activations] {
            let mut cfg = NetworkConfig::new(kind, 2, 3, 4, 1);
            cfg.product_terms = terms;
            let p = random_params(&cfg, 7);
            let pts = random_points(&mut rng, 10, &[(-1.0, 1.0), (-1.0, 1.0)]);
            let out = forward(&p, &Tensor::from_rows(&pts).unwrap()).unwrap();
            for (i, pt) in pts.iter().enumerate() {
                let expect = naive_forward::<f64>(&p, pt);
                let got = out.data()[i];
                // The GEMM kernels sum in a different order than the loop
                // above; other kinds see more cancellation in the output.
                let tol = if kind == ArchitectureKind::Dm { 1e-14 } else { 1e-13 };
                assert!(
                    (got - expect).abs() <= tol * expect.abs(),
                    "{kind} {terms:?}: {got} vs {expect}"
                );
            }
        }
    }
}

#[test]
fn value_channel_is_bitwise_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in ArchitectureKind::ALL {
        let p = random_params(&NetworkConfig::new(kind, 2, 3, 6, 1), 3);
        let pts = random_points(&mut rng, 33, &[(-1.0, 1.0), (-1.0, 1.0)]);
        let x = Tensor::from_rows(&pts).unwrap();
        let plain = forward(&p, &x).unwrap();
        let mut tape = Tape::new();
        let net = p.register(&mut tape);
        let dirs = [Direction::first(0), Direction::second(1)];
        let b = forward_with_derivatives(&mut tape, &net, &x, &dirs, None).unwrap();
        assert_eq!(tape.value(b.u), &plain, "{kind}");
    }
}

#[test]
fn preset_shapes_and_counts() {
    let v = NetworkConfig::new(ArchitectureKind::Vanilla, 2, 4, 128, 1);
    assert_eq!(v.layer_shapes(), [(128, 2), (128, 128), (128, 128), (128, 128), (1, 128)]);
    assert_eq!(param_count(&v), 50049);
    let dm = NetworkConfig::new(ArchitectureKind::Dm, 2, 4, 128, 1);
    assert_eq!(param_count(&dm), 50049);
    let mm = NetworkConfig::new(ArchitectureKind::ModifiedMlp, 2, 4, 128, 1);
    assert_eq!(param_count(&mm), 50817);
    for kind in ProblemKind::ALL {
        let d = kind.preset().defaults;
        let cfg = |k| NetworkConfig::new(k, 2, d.hidden_layers, d.width, 1);
        assert_eq!(param_count(&cfg(ArchitectureKind::Dm)), param_count(&cfg(ArchitectureKind::Vanilla)));
        assert_eq!(param_count(&cfg(ArchitectureKind::Sdm)), param_count(&cfg(ArchitectureKind::Resnet)));
    }
}

#[test]
fn dm_first_derivative_agrees_with_one_sided_differences() {
    let p = random_params(&NetworkConfig::new(ArchitectureKind::Dm, 2, 4, 8, 1), 21);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts = random_points(&mut rng, 16, &[(-0.9, 0.9), (-0.9, 0.9)]);
    let h = 1e-7;
    let jets = taped_jet(&p, &pts, &[(-1.0, 1.0), (-1.0, 1.0)], 1);
    for (pt, (u, ux, uxx)) in pts.iter().zip(jets) {
        let shifted = forward(&p, &Tensor::from_rows(&[vec![pt[0], pt[1] + h]]).unwrap()).unwrap();
        let fd = (shifted.data()[0] - u) / h;
        // Truncation h|u_xx|/2 plus rounding of the difference quotient.
        let bound = h * uxx.abs() + 1e-8 * u.abs().max(1.0);
        assert!((fd - ux).abs() <= bound, "{fd} vs {ux}");
    }
}

#[test]
fn zero_network_derivatives_vanish_for_every_kind() {
    for kind in ArchitectureKind::ALL {
        let mut p = init_network(&NetworkConfig::new(kind, 2, 3, 5, 1), 0).unwrap();
        for t in p.tensors_mut() {
            *t = Tensor::zeros(t.shape().to_vec());
        }
        let pts = vec![vec![0.3, -0.2], vec![-0.7, 0.9]];
        for dim in 0..2 {
            for (u, d1, d2) in taped_jet(&p, &pts, &[(-1.0, 1.0), (-1.0, 2.0)], dim) {
                assert_eq!((u, d1, d2), (0.0, 0.0, 0.0), "{kind}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Derivative channels against hyper-dual numbers through the
    /// straight-line network (exact up to rounding) and against central
    /// differences of `forward` in raw coordinates.
    #[test]
    fn derivative_channels_match_oracles((cfg, seed) in arb_config(), dim in 0usize..2) {
        let p = random_params(&cfg, seed);
        let bounds = [(0.0, 1.0), (0.0, 2.0 * std::f64::consts::PI)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(&mut rng, 6, &bounds);
        let jets = taped_jet(&p, &pts, &bounds, dim);
        let eps = 1e-4;
        for (pt, (u, d1, d2)) in pts.iter().zip(jets) {
            let (hu, hd1, hd2) = naive_jet(&p, pt, Some(&bounds), dim);
            for (a, b) in [(u, hu), (d1, hd1), (d2, hd2)] {
                prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{:?}: {a} vs {b}", cfg.kind);
            }
            let at = |delta: f64| {
                let mut q = pt.clone();
                q[dim] += delta;
                // Normalize by hand: q may step just outside the box.
                let x: Vec<f64> = q
                    .iter()
                    .zip(&bounds)
                    .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
                    .collect();
                forward(&p, &Tensor::from_rows(&[x]).unwrap()).unwrap().data()[0]
            };
            let fd1 = (at(eps) - at(-eps)) / (2.0 * eps);
            let fd2 = (at(eps) - 2.0 * at(0.0) + at(-eps)) / (eps * eps);
            prop_assert!((d1 - fd1).abs() <= 1e-5 * d1.abs().max(1e-2), "{:?} first: {d1} vs {fd1}", cfg.kind);
            prop_assert!((d2 - fd2).abs() <= 1e-5 * d2.abs().max(1e-2) + 1e-7, "{:?} second: {d2} vs {fd2}", cfg.kind);
        }
    }

    /// Mixed mode: parameter gradient of `mean(u_xx²)` against central
    /// differences in θ.
    #[test]
    fn parameter_gradient_of_second_derivative_loss((cfg, seed) in arb_config()) {
        let p = random_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let pts = random_points(&mut rng, 8, &[(-1.0, 1.0), (-1.0, 1.0)]);
        let x = Tensor::from_rows(&pts).unwrap();
        let loss = |params: &NetworkParams, grad: bool| {
            let mut tape = Tape::new();
            let net = params.register(&mut tape);
            let b = forward_with_derivatives(&mut tape, &net, &x, &[Direction::second(1)], None).unwrap();
            let s = tape.square(b.second(1).unwrap()).unwrap();
            let l = tape.mean(s).unwrap();
            let value = tape.value(l).item().unwrap();
            let g = grad.then(|| {
                let vars = net.vars();
                let gm = tape.backward(l, &vars).unwrap();
                vars.iter().flat_map(|v| gm.get(*v).unwrap().data().to_vec()).collect::<Vec<f64>>()
            });
            (value, g)
        };
        let grad = loss(&p, true).1.unwrap();
        let theta = FlatParams::from_params(&p).values;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let eps = 1e-6;
        for _ in 0..10 {
            let i = rng.random_range(0..theta.len());
            let at = |delta: f64| {
                let mut th = theta.clone();
                th[i] += delta;
                let mut q = p.clone();
                FlatParams::unflatten_into(&th, &mut q).unwrap();
                loss(&q, false).0
            };
            let fd = (at(eps) - at(-eps)) / (2.0 * eps);
            let den = grad[i].abs().max(fd.abs()).max(1e-3 * scale).max(1e-12);
            prop_assert!((grad[i] - fd).abs() / den <= 1e-6, "{:?} coord {i}: {} vs {fd}", cfg.kind, grad[i]);
        }
    }
}
