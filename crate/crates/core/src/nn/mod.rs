//! Dense-network substrate: layers, tape-based reverse mode, Adam and a
//! portable seeded RNG.

mod adam;
mod layer;
mod matrix;
mod params;
mod rng;

pub use adam::{Adam, AdamConfig};
pub use layer::{Activation, DenseLayer};
pub use matrix::Matrix;
pub use params::{GroupId, ParameterSet, Tape};
pub use rng::{RngSnapshot, RngState};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    /// Straight-line evaluator written independently of `DenseLayer::apply`.
    fn reference_forward(layers: &[&DenseLayer], x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in layers {
            let mut next = Vec::with_capacity(l.out_size());
            for o in 0..l.out_size() {
                let mut acc = l.biases[o];
                for i in 0..l.in_size() {
                    acc += l.weights[o * l.in_size() + i] * cur[i];
                }
                next.push(match l.activation {
                    Activation::Tanh => acc.tanh(),
                    Activation::Identity => acc,
                });
            }
            cur = next;
        }
        cur
    }

    fn random_net(sizes: &[usize], seed: u64) -> (ParameterSet, Vec<GroupId>) {
        let mut rng = RngState::new(seed);
        let mut ps = ParameterSet::new();
        let mut stack = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            let act = if i + 2 == sizes.len() {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            let mut layer = DenseLayer::glorot(w[0], w[1], act, &mut rng).unwrap();
            for b in &mut layer.biases {
                *b = rng.uniform(-0.5, 0.5);
            }
            stack.push(ps.add(format!("net/{i}"), layer).unwrap());
        }
        (ps, stack)
    }

    #[test]
    fn forward_matches_reference_evaluator() {
        let (ps, stack) = random_net(&[5, 7, 3], 11);
        let x = [0.2, -0.4, 0.9, -1.0, 0.05];
        let (y, _) = ps.forward_vector(&stack, &x).unwrap();
        let layers: Vec<_> = stack.iter().map(|&id| ps.layer(id)).collect();
        let expect = reference_forward(&layers, &x);
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let (ps, stack) = random_net(&[5, 7, 3], 11);
        assert!(matches!(ps.forward_vector(&stack, &[1.0; 4]), Err(Error::Config(_))));
    }

    #[test]
    fn linear_layer_gradient_is_input_on_selected_row() {
        let mut ps = ParameterSet::new();
        let id = ps
            .add("lin", DenseLayer::zeros(3, 2, Activation::Identity).unwrap())
            .unwrap();
        let x = [1.5, -2.0, 0.25];
        let (_, tape) = ps.forward_vector(&[id], &x).unwrap();
        ps.backward_vector(&tape, &[1.0, 0.0]).unwrap();
        let g = ps.gradients();
        assert_eq!(&g[0..3], &x);
        assert_eq!(&g[3..6], &[0.0; 3]);
        assert_eq!(&g[6..8], &[1.0, 0.0]);
    }

    #[test]
    fn scalar_tanh_gradient_closed_form() {
        let (w, x) = (0.7, 1.3);
        let mut ps = ParameterSet::new();
        let id = ps
            .add("s", DenseLayer::new(1, 1, vec![w], vec![0.0], Activation::Tanh).unwrap())
            .unwrap();
        let (_, tape) = ps.forward_vector(&[id], &[x]).unwrap();
        ps.backward_vector(&tape, &[1.0]).unwrap();
        let expect = x * (1.0 - (w * x).tanh().powi(2));
        assert!((ps.gradients()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn stale_tape_is_rejected() {
        let (mut ps, stack) = random_net(&[2, 3], 1);
        let (_, tape) = ps.forward_vector(&stack, &[0.1, 0.2]).unwrap();
        ps.set(0, 0.5);
        assert!(matches!(ps.backward_vector(&tape, &[1.0; 3]), Err(Error::Usage(_))));
        let (_, tape) = ps.forward_vector(&stack, &[0.1, 0.2]).unwrap();
        assert!(matches!(ps.backward_vector(&tape, &[1.0; 2]), Err(Error::Usage(_))));
    }

    fn loss_of(ps: &ParameterSet, stack: &[GroupId], xs: &Matrix) -> f64 {
        // Scalar loss: sum of squares plus a linear term, exercising both signs.
        let (y, _) = ps.forward(stack, xs.clone()).unwrap();
        y.as_slice()
            .iter()
            .enumerate()
            .map(|(i, v)| 0.5 * v * v + 0.1 * (i as f64 + 1.0) * v)
            .sum()
    }

    #[test]
    fn three_layer_gradient_matches_central_differences() {
        let (mut ps, stack) = random_net(&[6, 16, 12, 4], 99);
        let mut rng = RngState::new(5);
        let xs = Matrix::from_vec(3, 6, (0..18).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let (y, tape) = ps.forward(&stack, xs.clone()).unwrap();
        let mut gy = y.clone();
        for (i, v) in gy.as_mut_slice().iter_mut().enumerate() {
            *v += 0.1 * (i as f64 + 1.0);
        }
        ps.backward(&tape, gy, false).unwrap();
        let analytic = ps.gradients();
        let h = 1e-5;
        for i in 0..ps.num_scalars() {
            let orig = ps.get(i);
            ps.set(i, orig + h);
            let up = loss_of(&ps, &stack, &xs);
            ps.set(i, orig - h);
            let down = loss_of(&ps, &stack, &xs);
            ps.set(i, orig);
            let fd = (up - down) / (2.0 * h);
            let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} fd {fd}", analytic[i]);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let (mut ps, _) = random_net(&[3, 2], 4);
        let before = ps.values();
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        opt.first.fill(0.5);
        opt.second.fill(0.5);
        opt.step(&mut ps, 0).unwrap();
        assert!(opt.first.iter().all(|&m| (m - 0.45).abs() < 1e-15));
        assert!(opt.second.iter().all(|&v| (v - 0.4995).abs() < 1e-15));
        let mut fresh = Adam::new(AdamConfig::default(), &ps);
        let mid = ps.values();
        fresh.step(&mut ps, 0).unwrap();
        assert_eq!(ps.values(), mid);
        assert_ne!(before, mid);
    }

    #[test]
    fn adam_constant_gradient_steps_approach_lr() {
        let mut ps = ParameterSet::new();
        ps.add("p", DenseLayer::new(1, 1, vec![0.0], vec![0.0], Activation::Identity).unwrap())
            .unwrap();
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(cfg, &ps);
        let mut prev = ps.get(0);
        let mut last_step = 0.0;
        for _ in 0..2000 {
            let (_, tape) = ps.forward_vector(&[0], &[1.0]).unwrap();
            ps.backward_vector(&tape, &[0.3]).unwrap();
            opt.step(&mut ps, 0).unwrap();
            last_step = ps.get(0) - prev;
            prev = ps.get(0);
        }
        assert!(last_step < 0.0);
        assert!((last_step.abs() - cfg.lr).abs() < 1e-6 * cfg.lr.max(1.0));
    }

    #[test]
    fn adam_decreases_quadratic_bowl() {
        // loss = 0.5 * ||W x + b - target||^2 over a fixed input.
        let (mut ps, stack) = random_net(&[3, 2], 8);
        let x = [0.5, -1.0, 2.0];
        let target = [1.0, -3.0];
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
            &ps,
        );
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let (y, tape) = ps.forward_vector(&stack, &x).unwrap();
            let g: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
            let loss: f64 = g.iter().map(|d| 0.5 * d * d).sum();
            assert!(loss < prev, "loss {loss} not below {prev}");
            prev = loss;
            ps.backward_vector(&tape, &g).unwrap();
            opt.step(&mut ps, 0).unwrap();
            assert!(ps.gradients().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn adam_reports_non_finite_gradient_with_epoch() {
        let (mut ps, stack) = random_net(&[2, 1], 3);
        let (_, tape) = ps.forward_vector(&stack, &[1.0, 1.0]).unwrap();
        ps.backward_vector(&tape, &[f64::NAN]).unwrap();
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        match opt.step(&mut ps, 17) {
            Err(Error::Training { epoch, .. }) => assert_eq!(epoch, 17),
            other => panic!("unexpected {other:?}"),
        }
    }
}
