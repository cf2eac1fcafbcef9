//! Raw f32 compute kernels. All loops are written so that parallel work
//! items own disjoint output slices; results are therefore identical
//! whatever the rayon thread count.

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major.
pub fn matmul_acc(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] += a_ip * b_row[j];
            }
        }
    }
}

/// `c[m×k] += a[m×s] · b[k×s]ᵀ` (rows of `a` dotted with rows of `b`).
pub fn matmul_abt(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, s: usize) {
    debug_assert_eq!(c.len(), m * k);
    debug_assert_eq!(a.len(), m * s);
    debug_assert_eq!(b.len(), k * s);
    for i in 0..m {
        let a_row = &a[i * s..(i + 1) * s];
        let c_row = &mut c[i * k..(i + 1) * k];
        for j in 0..k {
            let b_row = &b[j * s..(j + 1) * s];
            let mut acc = 0.0f32;
            for p in 0..s {
                acc += a_row[p] * b_row[p];
            }
            c_row[j] += acc;
        }
    }
}

/// `c[k×s] += a[o×k]ᵀ · b[o×s]`.
pub fn matmul_atb(c: &mut [f32], a: &[f32], b: &[f32], o: usize, k: usize, s: usize) {
    debug_assert_eq!(c.len(), k * s);
    debug_assert_eq!(a.len(), o * k);
    debug_assert_eq!(b.len(), o * s);
    for row in 0..o {
        let a_row = &a[row * k..(row + 1) * k];
        let b_row = &b[row * s..(row + 1) * s];
        for j in 0..k {
            let a_jk = a_row[j];
            let c_row = &mut c[j * s..(j + 1) * s];
            for p in 0..s {
                c_row[p] += a_jk * b_row[p];
            }
        }
    }
}

/// Unfold one CHW sample into a `[c·k·k, oh·ow]` column matrix.
/// Row order is `(channel, ky, kx)`, matching OIKK weight layout.
pub fn im2col(
    input: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    out: &mut [f32],
) {
    debug_assert_eq!(input.len(), c * h * w);
    debug_assert_eq!(out.len(), c * k * k * oh * ow);
    let ohw = oh * ow;
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * ohw;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let out_row = &mut out[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        out_row[ox] = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Fold a `[c·k·k, oh·ow]` column-gradient matrix back onto a CHW sample,
/// accumulating overlapping contributions.
#[allow(clippy::too_many_arguments)]
pub fn col2im_acc(
    cols: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    out: &mut [f32],
) {
    debug_assert_eq!(out.len(), c * h * w);
    debug_assert_eq!(cols.len(), c * k * k * oh * ow);
    let ohw = oh * ow;
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * ohw;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let col_row = &cols[row + oy * ow..row + (oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += col_row[ox];
                        }
                    }
                }
            }
        }
    }
}
