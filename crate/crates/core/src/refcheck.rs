//! Independent f64 reference implementations used only by tests.
//!
//! Everything here is written as plain nested loops with no shared code
//! with the engine, so finite differences taken against these functions
//! are a genuinely independent oracle for the engine's analytic gradients.

use crate::tensor::Tensor;

pub fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Direct nested-loop convolution. Returns (output, oh, ow).
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    input: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    (o, k): (usize, usize),
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0f64; n * o * oh * ow];
    for ni in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let iv = input
                                    [((ni * c + ic) * h + iy as usize) * w + ix as usize];
                                let wv = weight[((oc * c + ic) * k + ky) * k + kx];
                                acc += iv * wv;
                            }
                        }
                    }
                    out[((ni * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, oh, ow)
}

/// Explicit dot-product linear layer: `[n,f] x [g,f] + [g] -> [n,g]`.
pub fn linear(input: &[f64], (n, f): (usize, usize), weight: &[f64], g: usize, bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0f64; n * g];
    for i in 0..n {
        for j in 0..g {
            let mut acc = bias[j];
            for p in 0..f {
                acc += input[i * f + p] * weight[j * f + p];
            }
            out[i * g + j] = acc;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn group_norm(
    input: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    groups: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Vec<f64> {
    let gs = c / groups;
    let m = (gs * h * w) as f64;
    let mut out = vec![0.0f64; n * c * h * w];
    for ni in 0..n {
        for gi in 0..groups {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for ci in 0..gs {
                let off = ((ni * c + gi * gs + ci) * h) * w;
                for j in 0..h * w {
                    let v = input[off + j];
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / m;
            let var = (sq / m - mean * mean).max(0.0);
            let inv = 1.0 / (var + eps).sqrt();
            for ci in 0..gs {
                let ch = gi * gs + ci;
                let off = ((ni * c + ch) * h) * w;
                for j in 0..h * w {
                    out[off + j] = gamma[ch] * (input[off + j] - mean) * inv + beta[ch];
                }
            }
        }
    }
    out
}

pub fn silu(input: &[f64]) -> Vec<f64> {
    input
        .iter()
        .map(|&x| x / (1.0 + (-x).exp()))
        .collect()
}

pub fn upsample2x(input: &[f64], (planes, h, w): (usize, usize, usize)) -> Vec<f64> {
    let mut out = vec![0.0f64; planes * 4 * h * w];
    for p in 0..planes {
        for y in 0..h {
            for x in 0..w {
                let v = input[(p * h + y) * w + x];
                for dy in 0..2 {
                    for dx in 0..2 {
                        out[(p * 2 * h + 2 * y + dy) * 2 * w + 2 * x + dx] = v;
                    }
                }
            }
        }
    }
    out
}

pub fn avgpool2x(input: &[f64], (planes, h, w): (usize, usize, usize)) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f64; planes * oh * ow];
    for p in 0..planes {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += input[(p * h + 2 * y + dy) * w + 2 * x + dx];
                    }
                }
                out[(p * oh + y) * ow + x] = acc / 4.0;
            }
        }
    }
    out
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += (x - y) * (x - y);
    }
    acc / a.len() as f64
}

/// Central finite difference of `f` w.r.t. entry `idx` of `base`.
pub fn central_diff(f: &dyn Fn(&[f32]) -> f64, base: &[f32], idx: usize, h: f32) -> f64 {
    let mut plus = base.to_vec();
    plus[idx] += h;
    let mut minus = base.to_vec();
    minus[idx] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h as f64)
}

/// Relative error with an absolute floor for near-zero pairs.
pub fn grad_close(analytic: f64, numeric: f64, rtol: f64, atol: f64) -> bool {
    let diff = (analytic - numeric).abs();
    if diff <= atol {
        return true;
    }
    diff / analytic.abs().max(numeric.abs()) < rtol
}
