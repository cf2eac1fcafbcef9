use super::*;
use crate::refcheck;
use crate::rng;
use crate::tensor::stack_batch;

fn randn(shape: &[usize], seed: u64) -> Tensor {
    rng::normal_tensor(&mut rng::stream(seed, &[0xA]), shape)
}

fn randn_grad(shape: &[usize], seed: u64) -> Tensor {
    let t = randn(shape, seed);
    Tensor::leaf_with_grad(t.data().to_vec(), shape).unwrap()
}

#[test]
fn conv2d_scalar_scaling() {
    let input = Tensor::full(&[1, 1, 3, 3], 1.0);
    let weight = Tensor::from_vec(vec![2.0], &[1, 1, 1, 1]).unwrap();
    let bias = Tensor::zeros(&[1]);
    let out = input.conv2d(&weight, &bias, 1, 0).unwrap();
    assert_eq!(out.shape(), &[1, 1, 3, 3]);
    assert!(out.data().iter().all(|&v| v == 2.0));
}

#[test]
fn conv2d_identity_kernel() {
    let input = randn(&[1, 1, 4, 4], 3);
    let mut w = vec![0.0; 9];
    w[4] = 1.0; // centre tap
    let weight = Tensor::from_vec(w, &[1, 1, 3, 3]).unwrap();
    let bias = Tensor::zeros(&[1]);
    let out = input.conv2d(&weight, &bias, 1, 1).unwrap();
    assert_eq!(out.data(), input.data());
}

#[test]
fn conv2d_matches_nested_loop_oracle() {
    let input = randn(&[2, 3, 5, 5], 11);
    let weight = randn(&[4, 3, 3, 3], 12);
    let bias = randn(&[4], 13);
    let out = input.conv2d(&weight, &bias, 1, 1).unwrap();
    let (expect, oh, ow) = refcheck::conv2d(
        &refcheck::to_f64(&input),
        (2, 3, 5, 5),
        &refcheck::to_f64(&weight),
        (4, 3),
        &refcheck::to_f64(&bias),
        1,
        1,
    );
    assert_eq!(out.shape(), &[2, 4, oh, ow]);
    for (a, b) in out.data().iter().zip(&expect) {
        assert!((*a as f64 - b).abs() < 1e-5, "{} vs {}", a, b);
    }
}

#[test]
fn conv2d_strided_matches_oracle() {
    let input = randn(&[1, 2, 6, 6], 21);
    let weight = randn(&[3, 2, 3, 3], 22);
    let bias = randn(&[3], 23);
    let out = input.conv2d(&weight, &bias, 2, 1).unwrap();
    let (expect, oh, ow) = refcheck::conv2d(
        &refcheck::to_f64(&input),
        (1, 2, 6, 6),
        &refcheck::to_f64(&weight),
        (3, 3),
        &refcheck::to_f64(&bias),
        2,
        1,
    );
    assert_eq!(out.shape(), &[1, 3, oh, ow]);
    for (a, b) in out.data().iter().zip(&expect) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}

#[test]
fn conv2d_rejects_channel_mismatch() {
    let input = Tensor::zeros(&[1, 2, 4, 4]);
    let weight = Tensor::zeros(&[1, 3, 3, 3]);
    let bias = Tensor::zeros(&[1]);
    let err = input.conv2d(&weight, &bias, 1, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('2') && msg.contains('3'), "got: {}", msg);
}

#[test]
fn linear_identity_and_zero_weight() {
    let input = randn(&[2, 3], 5);
    let eye = Tensor::from_vec(
        vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        &[3, 3],
    )
    .unwrap();
    let out = input.linear(&eye, &Tensor::zeros(&[3])).unwrap();
    assert_eq!(out.data(), input.data());

    let zero_w = Tensor::zeros(&[4, 3]);
    let b = Tensor::from_vec(vec![0.5, -1.0, 2.0, 0.0], &[4]).unwrap();
    let out = input.linear(&zero_w, &b).unwrap();
    for row in out.data().chunks(4) {
        assert_eq!(row, b.data());
    }
}

#[test]
fn linear_matches_dot_product_oracle() {
    let input = randn(&[2, 3], 31);
    let weight = randn(&[4, 3], 32);
    let bias = randn(&[4], 33);
    let out = input.linear(&weight, &bias).unwrap();
    let expect = refcheck::linear(
        &refcheck::to_f64(&input),
        (2, 3),
        &refcheck::to_f64(&weight),
        4,
        &refcheck::to_f64(&bias),
    );
    for (a, b) in out.data().iter().zip(&expect) {
        assert!((*a as f64 - b).abs() < 1e-6);
    }
}

#[test]
fn group_norm_constant_input_is_affine_of_zero() {
    let input = Tensor::full(&[1, 4, 3, 3], 0.7);
    let out = input
        .group_norm(2, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4]), 1e-5)
        .unwrap();
    assert!(out.data().iter().all(|&v| v.abs() < 1e-6));

    let out = input
        .group_norm(2, &Tensor::zeros(&[4]), &Tensor::full(&[4], 0.3), 1e-5)
        .unwrap();
    assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
}

#[test]
fn group_norm_statistics() {
    let input = randn(&[2, 6, 4, 4], 41);
    let out = input
        .group_norm(3, &Tensor::full(&[6], 1.0), &Tensor::zeros(&[6]), 1e-5)
        .unwrap();
    // Mean ~0, variance ~1 per (sample, group) before affine.
    let (gs, hw) = (2, 16);
    for ni in 0..2 {
        for gi in 0..3 {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for ci in 0..gs {
                let off = ((ni * 6 + gi * gs + ci) * 16)..((ni * 6 + gi * gs + ci + 1) * 16);
                for &v in &out.data()[off] {
                    sum += v as f64;
                    sq += (v as f64).powi(2);
                }
            }
            let m = (gs * hw) as f64;
            let mean = sum / m;
            let var = sq / m - mean * mean;
            assert!(mean.abs() < 1e-4, "mean {}", mean);
            assert!((var - 1.0).abs() < 1e-3, "var {}", var);
        }
    }
}

#[test]
fn group_norm_rejects_indivisible_groups() {
    let input = Tensor::zeros(&[1, 5, 2, 2]);
    assert!(input
        .group_norm(2, &Tensor::full(&[5], 1.0), &Tensor::zeros(&[5]), 1e-5)
        .is_err());
}

#[test]
fn silu_at_zero() {
    let t = Tensor::from_vec(vec![0.0, 1.0, -1.0], &[1, 3]).unwrap();
    let out = t.silu();
    assert_eq!(out.data()[0], 0.0);
    assert!((out.data()[1] - 1.0 / (1.0 + (-1.0f32).exp())).abs() < 1e-6);
}

#[test]
fn concat_split_round_trips_bit_exactly() {
    for trial in 0..20 {
        let ca = 1 + (trial % 5);
        let cb = 1 + (trial % 3);
        let a = randn(&[2, ca, 3, 4], 100 + trial as u64);
        let b = randn(&[2, cb, 3, 4], 200 + trial as u64);
        let joint = a.concat_channels(&b).unwrap();
        assert_eq!(joint.shape(), &[2, ca + cb, 3, 4]);
        let (a2, b2) = joint.split_channels(ca).unwrap();
        assert_eq!(a.data(), a2.data());
        assert_eq!(b.data(), b2.data());
    }
    // rank-3 latents round-trip through the same path
    let a = randn(&[4, 8, 8], 300);
    let b = randn(&[4, 8, 8], 301);
    let joint = a.concat_channels(&b).unwrap();
    assert_eq!(joint.shape(), &[8, 8, 8]);
    let (a2, b2) = joint.split_channels(4).unwrap();
    assert_eq!(a.data(), a2.data());
    assert_eq!(b.data(), b2.data());
}

#[test]
fn mse_of_identical_inputs_is_zero() {
    let a = randn(&[3, 5], 51);
    assert_eq!(a.mse(&a).unwrap().scalar_value().unwrap(), 0.0);
}

#[test]
fn upsample_then_avgpool_is_identity() {
    let a = randn(&[1, 2, 3, 3], 61);
    let up = a.upsample_nearest2x().unwrap();
    assert_eq!(up.shape(), &[1, 2, 6, 6]);
    let down = up.avgpool2x().unwrap();
    for (x, y) in a.data().iter().zip(down.data()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn forward_is_deterministic() {
    let input = randn(&[2, 3, 5, 5], 71);
    let weight = randn(&[4, 3, 3, 3], 72);
    let bias = randn(&[4], 73);
    let a = input.conv2d(&weight, &bias, 1, 1).unwrap();
    let b = input.conv2d(&weight, &bias, 1, 1).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn backward_scalar_quadratic() {
    // loss = mse(w, 0) with scalar w=3 -> dloss/dw = 2*3 = 6
    let w = Tensor::leaf_with_grad(vec![3.0], &[1]).unwrap();
    let loss = w.mse(&Tensor::zeros(&[1])).unwrap();
    assert_eq!(loss.scalar_value().unwrap(), 9.0);
    let grads = backward(&loss).unwrap();
    assert_eq!(grads.get(&w).unwrap(), &[6.0]);
}

#[test]
fn backward_requires_scalar_loss() {
    let w = Tensor::leaf_with_grad(vec![1.0, 2.0], &[2]).unwrap();
    assert!(backward(&w).is_err());
}

#[test]
fn detached_and_constant_tensors_get_no_grad() {
    let w = randn_grad(&[2, 2], 81);
    let frozen = w.detach();
    let constant = randn(&[2, 2], 82);
    let sum = w.add(&frozen).unwrap().add(&constant).unwrap();
    let loss = sum.mse(&Tensor::zeros(&[2, 2])).unwrap();
    let grads = backward(&loss).unwrap();
    assert!(grads.get(&w).is_some());
    assert!(grads.get(&frozen).is_none());
    assert!(grads.get(&constant).is_none());
}

#[test]
fn shared_subgraph_grads_accumulate() {
    // loss = mse(w + w, 0) = 4w^2 -> grad 8w
    let w = Tensor::leaf_with_grad(vec![1.5], &[1]).unwrap();
    let doubled = w.add(&w).unwrap();
    let loss = doubled.mse(&Tensor::zeros(&[1])).unwrap();
    let grads = backward(&loss).unwrap();
    assert!((grads.get(&w).unwrap()[0] - 12.0).abs() < 1e-6);
}

#[test]
fn stack_batch_layout() {
    let a = randn(&[2, 3, 3], 91);
    let b = randn(&[2, 3, 3], 92);
    let s = stack_batch(&[&a, &b]).unwrap();
    assert_eq!(s.shape(), &[2, 2, 3, 3]);
    assert_eq!(&s.data()[..a.numel()], a.data());
    assert_eq!(&s.data()[a.numel()..], b.data());
}

// Per-layer gradient checks against finite differences of the f64
// reference forward, 20+ random probes each, step 1e-3, rtol 1e-3.
mod gradcheck {
    use super::*;

    const H: f32 = 1e-3;
    const RTOL: f64 = 1e-3;
    const ATOL: f64 = 1e-6;

    fn probe_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
        let mut rng = rng::stream(seed, &[0xF00D]);
        (0..count).map(|_| rng::uniform_index(&mut rng, n)).collect()
    }

    fn check_param(
        analytic: &[f32],
        base: &[f32],
        f: &dyn Fn(&[f32]) -> f64,
        probes: &[usize],
        what: &str,
    ) {
        for &i in probes {
            let num = refcheck::central_diff(f, base, i, H);
            let ana = analytic[i] as f64;
            assert!(
                refcheck::grad_close(ana, num, RTOL, ATOL),
                "{}[{}]: analytic {} vs numeric {}",
                what,
                i,
                ana,
                num
            );
        }
    }

    #[test]
    fn conv2d_gradients() {
        let input = randn_grad(&[2, 3, 5, 5], 1001);
        let weight = randn_grad(&[4, 3, 3, 3], 1002);
        let bias = randn_grad(&[4], 1003);
        let target = randn(&[2, 4, 5, 5], 1004);
        let loss = input
            .conv2d(&weight, &bias, 1, 1)
            .unwrap()
            .mse(&target)
            .unwrap();
        let grads = backward(&loss).unwrap();

        let t64 = refcheck::to_f64(&target);
        let i64 = refcheck::to_f64(&input);
        let w64 = refcheck::to_f64(&weight);
        let b64 = refcheck::to_f64(&bias);

        let f_w = |w: &[f32]| {
            let w: Vec<f64> = w.iter().map(|&v| v as f64).collect();
            let (out, _, _) = refcheck::conv2d(&i64, (2, 3, 5, 5), &w, (4, 3), &b64, 1, 1);
            refcheck::mse(&out, &t64)
        };
        check_param(
            grads.get(&weight).unwrap(),
            weight.data(),
            &f_w,
            &probe_indices(weight.numel(), 24, 1),
            "conv.weight",
        );

        let f_i = |x: &[f32]| {
            let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let (out, _, _) = refcheck::conv2d(&x, (2, 3, 5, 5), &w64, (4, 3), &b64, 1, 1);
            refcheck::mse(&out, &t64)
        };
        check_param(
            grads.get(&input).unwrap(),
            input.data(),
            &f_i,
            &probe_indices(input.numel(), 24, 2),
            "conv.input",
        );

        let f_b = |b: &[f32]| {
            let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            let (out, _, _) = refcheck::conv2d(&i64, (2, 3, 5, 5), &w64, (4, 3), &b, 1, 1);
            refcheck::mse(&out, &t64)
        };
        check_param(
            grads.get(&bias).unwrap(),
            bias.data(),
            &f_b,
            &[0, 1, 2, 3],
            "conv.bias",
        );
    }

    #[test]
    fn composite_net_gradients() {
        // conv -> group_norm -> silu -> avgpool -> reshape -> linear -> mse
        let input = randn(&[2, 2, 4, 4], 2001);
        let cw = randn_grad(&[4, 2, 3, 3], 2002);
        let cb = randn_grad(&[4], 2003);
        let gamma = randn_grad(&[4], 2004);
        let beta = randn_grad(&[4], 2005);
        let lw = randn_grad(&[3, 16], 2006);
        let lb = randn_grad(&[3], 2007);
        let target = randn(&[2, 3], 2008);

        let forward = |cw_t: &Tensor, cb_t: &Tensor, g_t: &Tensor, b_t: &Tensor, lw_t: &Tensor, lb_t: &Tensor| {
            let h = input.conv2d(cw_t, cb_t, 1, 1).unwrap();
            let h = h.group_norm(2, g_t, b_t, 1e-5).unwrap();
            let h = h.silu();
            let h = h.avgpool2x().unwrap();
            let h = h.reshape(&[2, 16]).unwrap();
            h.linear(lw_t, lb_t).unwrap().mse(&target).unwrap()
        };
        let loss = forward(&cw, &cb, &gamma, &beta, &lw, &lb);
        let grads = backward(&loss).unwrap();

        let ref_forward = |cwv: &[f64], cbv: &[f64], gv: &[f64], bv: &[f64], lwv: &[f64], lbv: &[f64]| {
            let (h, _, _) = refcheck::conv2d(
                &refcheck::to_f64(&input),
                (2, 2, 4, 4),
                cwv,
                (4, 3),
                cbv,
                1,
                1,
            );
            let h = refcheck::group_norm(&h, (2, 4, 4, 4), 2, gv, bv, 1e-5);
            let h = refcheck::silu(&h);
            let h = refcheck::avgpool2x(&h, (8, 4, 4));
            refcheck::mse(&refcheck::linear(&h, (2, 16), lwv, 3, lbv), &refcheck::to_f64(&target))
        };

        let all = [
            (&cw, "conv.weight", 0usize),
            (&cb, "conv.bias", 1),
            (&gamma, "norm.gamma", 2),
            (&beta, "norm.beta", 3),
            (&lw, "linear.weight", 4),
            (&lb, "linear.bias", 5),
        ];
        let base: Vec<Vec<f64>> = all
            .iter()
            .map(|(p, _, _)| refcheck::to_f64(p))
            .collect();
        for (p, what, slot) in all.iter() {
            let f = |vals: &[f32]| {
                let mut params = base.clone();
                params[*slot] = vals.iter().map(|&v| v as f64).collect();
                ref_forward(
                    &params[0], &params[1], &params[2], &params[3], &params[4], &params[5],
                )
            };
            check_param(
                grads.get(p).unwrap(),
                p.data(),
                &f,
                &probe_indices(p.numel(), 20, 3000 + *slot as u64),
                what,
            );
        }
    }

    #[test]
    fn upsample_concat_slice_gradients() {
        let a = randn_grad(&[1, 2, 2, 2], 4001);
        let b = randn_grad(&[1, 2, 2, 2], 4002);
        let target = randn(&[1, 2, 4, 4], 4003);
        let loss = {
            let joint = a.concat_channels(&b).unwrap();
            let up = joint.upsample_nearest2x().unwrap();
            let (first, _) = up.split_channels(2).unwrap();
            first.mse(&target).unwrap()
        };
        let grads = backward(&loss).unwrap();

        let t64 = refcheck::to_f64(&target);
        let b64 = refcheck::to_f64(&b);
        let f_a = |av: &[f32]| {
            let mut joint: Vec<f64> = av.iter().map(|&v| v as f64).collect();
            joint.extend_from_slice(&b64);
            let up = refcheck::upsample2x(&joint, (4, 2, 2));
            refcheck::mse(&up[..32], &t64)
        };
        check_param(
            grads.get(&a).unwrap(),
            a.data(),
            &f_a,
            &probe_indices(a.numel(), 8, 5),
            "concat.lhs",
        );
        // second half of concat feeds only the discarded slice -> zero grad
        assert!(grads.get(&b).unwrap().iter().all(|&g| g == 0.0));
    }
}
