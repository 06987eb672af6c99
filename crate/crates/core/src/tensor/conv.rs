//! im2col convolution kernels.
//!
//! Three bilinear primitives share one geometry: the forward convolution,
//! its adjoint by input (also the forward of a transposed convolution) and
//! its adjoint by kernel. The trio is closed under differentiation, which
//! keeps higher-order backward passes inside the same three kernels.
//!
//! Layout is NHWC for activations and `[kh, kw, cin, cout]` for kernels.

use super::{Element, TensorError, TensorResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub sh: usize,
    pub sw: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub padding: Padding,
}

/// Output spatial dims for one axis.
pub fn conv_output_dims(input: usize, kernel: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => input.div_ceil(stride),
        Padding::Valid => (input - kernel) / stride + 1,
    }
}

pub fn geometry(
    x_shape: &[usize],
    k_shape: &[usize],
    stride: (usize, usize),
    padding: Padding,
) -> TensorResult<ConvGeometry> {
    if x_shape.len() != 4 || k_shape.len() != 4 {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: x_shape.to_vec(),
            rhs: k_shape.to_vec(),
        });
    }
    let (n, h, w, cin) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (kh, kw, kcin, cout) = (k_shape[0], k_shape[1], k_shape[2], k_shape[3]);
    if cin != kcin {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: x_shape.to_vec(),
            rhs: k_shape.to_vec(),
        });
    }
    let (sh, sw) = stride;
    if sh == 0 || sw == 0 {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            message: format!("stride components must be >= 1, got ({sh}, {sw})"),
        });
    }
    if padding == Padding::Valid && (h < kh || w < kw) {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            message: format!("valid padding needs input ({h}, {w}) >= kernel ({kh}, {kw})"),
        });
    }
    let oh = conv_output_dims(h, kh, sh, padding);
    let ow = conv_output_dims(w, kw, sw, padding);
    let (pad_top, pad_left) = match padding {
        Padding::Valid => (0, 0),
        Padding::Same => {
            let total_h = ((oh - 1) * sh + kh).saturating_sub(h);
            let total_w = ((ow - 1) * sw + kw).saturating_sub(w);
            (total_h / 2, total_w / 2)
        }
    };
    Ok(ConvGeometry {
        n,
        h,
        w,
        cin,
        kh,
        kw,
        cout,
        sh,
        sw,
        oh,
        ow,
        pad_top,
        pad_left,
        padding,
    })
}

/// Unfold `x` into rows of receptive fields: `[n*oh*ow, kh*kw*cin]`.
fn im2col<E: Element>(x: &[E], g: &ConvGeometry) -> Vec<E> {
    let k = g.kh * g.kw * g.cin;
    let mut cols = vec![E::zero(); g.n * g.oh * g.ow * k];
    let row_stride = g.w * g.cin;
    cols.par_chunks_mut(g.oh * g.ow * k)
        .enumerate()
        .for_each(|(ni, sample_cols)| {
            let xs = &x[ni * g.h * row_stride..(ni + 1) * g.h * row_stride];
            let mut r = 0;
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let dst = &mut sample_cols[r * k..(r + 1) * k];
                    let iy0 = (oy * g.sh) as isize - g.pad_top as isize;
                    let ix0 = (ox * g.sw) as isize - g.pad_left as isize;
                    for ky in 0..g.kh {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kx in 0..g.kw {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            let src = (iy as usize * g.w + ix as usize) * g.cin;
                            let d = (ky * g.kw + kx) * g.cin;
                            dst[d..d + g.cin].copy_from_slice(&xs[src..src + g.cin]);
                        }
                    }
                    r += 1;
                }
            }
        });
    cols
}

/// Fold column gradients back onto the input grid (adjoint of `im2col`).
fn col2im<E: Element>(cols: &[E], g: &ConvGeometry) -> Vec<E> {
    let k = g.kh * g.kw * g.cin;
    let mut x = vec![E::zero(); g.n * g.h * g.w * g.cin];
    let plane = g.h * g.w * g.cin;
    x.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(ni, xs)| {
            let sample_cols = &cols[ni * g.oh * g.ow * k..(ni + 1) * g.oh * g.ow * k];
            let mut r = 0;
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let src_row = &sample_cols[r * k..(r + 1) * k];
                    let iy0 = (oy * g.sh) as isize - g.pad_top as isize;
                    let ix0 = (ox * g.sw) as isize - g.pad_left as isize;
                    for ky in 0..g.kh {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kx in 0..g.kw {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            let dst = (iy as usize * g.w + ix as usize) * g.cin;
                            let s = (ky * g.kw + kx) * g.cin;
                            for c in 0..g.cin {
                                xs[dst + c] = xs[dst + c] + src_row[s + c];
                            }
                        }
                    }
                    r += 1;
                }
            }
        });
    x
}

const PAR_FLOP_THRESHOLD: usize = 1 << 15;

/// C[m,n] = A[m,k] * B[k,n]. Parallel over rows of C; deterministic.
pub fn matmul<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![E::zero(); m * n];
    let body = |(crow, arow): (&mut [E], &[E])| {
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    };
    if m * k * n >= PAR_FLOP_THRESHOLD {
        c.par_chunks_mut(n).zip(a.par_chunks(k)).for_each(body);
    } else {
        c.chunks_mut(n).zip(a.chunks(k)).for_each(body);
    }
    c
}

/// C[k,n] = A^T * B with A[m,k], B[m,n]. Parallel over rows of C.
pub fn matmul_at<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let mut c = vec![E::zero(); k * n];
    let body = |(kk, crow): (usize, &mut [E])| {
        for r in 0..m {
            let av = a[r * k + kk];
            let brow = &b[r * n..(r + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    };
    if m * k * n >= PAR_FLOP_THRESHOLD {
        c.par_chunks_mut(n).enumerate().for_each(|(kk, crow)| body((kk, crow)));
    } else {
        c.chunks_mut(n).enumerate().for_each(|(kk, crow)| body((kk, crow)));
    }
    c
}

/// C[m,k] = A * B^T with A[m,n], B[k,n]. Parallel over rows of C.
pub fn matmul_bt<E: Element>(a: &[E], b: &[E], m: usize, n: usize, k: usize) -> Vec<E> {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![E::zero(); m * k];
    let body = |(crow, arow): (&mut [E], &[E])| {
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = E::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            *cv = acc;
        }
    };
    if m * k * n >= PAR_FLOP_THRESHOLD {
        c.par_chunks_mut(k).zip(a.par_chunks(n)).for_each(body);
    } else {
        c.chunks_mut(k).zip(a.chunks(n)).for_each(body);
    }
    c
}

/// y = conv(x, k): `[n,oh,ow,cout]`.
pub fn conv_forward<E: Element>(x: &[E], kernel: &[E], g: &ConvGeometry) -> Vec<E> {
    let cols = im2col(x, g);
    matmul(&cols, kernel, g.n * g.oh * g.ow, g.kh * g.kw * g.cin, g.cout)
}

/// Adjoint by input: given dL/dy, produce dL/dx. Also the forward pass of a
/// stride-`s` transposed convolution.
pub fn conv_adjoint_input<E: Element>(gy: &[E], kernel: &[E], g: &ConvGeometry) -> Vec<E> {
    let cols_grad = matmul_bt(
        gy,
        kernel,
        g.n * g.oh * g.ow,
        g.cout,
        g.kh * g.kw * g.cin,
    );
    col2im(&cols_grad, g)
}

/// Adjoint by kernel: given x and dL/dy, produce dL/dk.
pub fn conv_adjoint_kernel<E: Element>(x: &[E], gy: &[E], g: &ConvGeometry) -> Vec<E> {
    let cols = im2col(x, g);
    matmul_at(&cols, gy, g.n * g.oh * g.ow, g.kh * g.kw * g.cin, g.cout)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution, the oracle for the im2col path.
    fn conv_direct(x: &[f64], k: &[f64], g: &ConvGeometry) -> Vec<f64> {
        let mut y = vec![0.0; g.n * g.oh * g.ow * g.cout];
        for ni in 0..g.n {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    for co in 0..g.cout {
                        let mut acc = 0.0;
                        for ky in 0..g.kh {
                            for kx in 0..g.kw {
                                let iy = (oy * g.sh + ky) as isize - g.pad_top as isize;
                                let ix = (ox * g.sw + kx) as isize - g.pad_left as isize;
                                if iy < 0 || iy >= g.h as isize || ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                for ci in 0..g.cin {
                                    let xv = x[((ni * g.h + iy as usize) * g.w + ix as usize)
                                        * g.cin
                                        + ci];
                                    let kv = k[((ky * g.kw + kx) * g.cin + ci) * g.cout + co];
                                    acc += xv * kv;
                                }
                            }
                        }
                        y[((ni * g.oh + oy) * g.ow + ox) * g.cout + co] = acc;
                    }
                }
            }
        }
        y
    }

    fn pseudo(seq: &mut u64) -> f64 {
        *seq = seq.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seq >> 33) as f64 / (1u64 << 31) as f64) - 1.0
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let mut seq = 7u64;
        for &(h, w, cin, cout, kh, stride, pad) in &[
            (6, 6, 2, 3, 3, (1, 1), Padding::Same),
            (6, 6, 2, 3, 3, (2, 2), Padding::Same),
            (7, 5, 1, 2, 3, (2, 1), Padding::Valid),
            (8, 4, 3, 1, 5, (2, 2), Padding::Same),
        ] {
            let g = geometry(&[2, h, w, cin], &[kh, kh, cin, cout], stride, pad).unwrap();
            let x: Vec<f64> = (0..2 * h * w * cin).map(|_| pseudo(&mut seq)).collect();
            let k: Vec<f64> = (0..kh * kh * cin * cout).map(|_| pseudo(&mut seq)).collect();
            let fast = conv_forward(&x, &k, &g);
            let slow = conv_direct(&x, &k, &g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn adjoint_identities_hold() {
        // <conv(x,k), y> == <x, conv_adjoint_input(y,k)> == <k, conv_adjoint_kernel(x,y)>
        let mut seq = 99u64;
        for &(h, w, cin, cout, kh, stride) in
            &[(6, 6, 2, 3, 3, (2, 2)), (5, 7, 1, 2, 5, (1, 2)), (4, 4, 3, 3, 3, (2, 1))]
        {
            let g = geometry(&[2, h, w, cin], &[kh, kh, cin, cout], stride, Padding::Same).unwrap();
            let x: Vec<f64> = (0..2 * h * w * cin).map(|_| pseudo(&mut seq)).collect();
            let k: Vec<f64> = (0..kh * kh * cin * cout).map(|_| pseudo(&mut seq)).collect();
            let y: Vec<f64> = (0..2 * g.oh * g.ow * cout).map(|_| pseudo(&mut seq)).collect();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
            let lhs = dot(&conv_forward(&x, &k, &g), &y);
            let via_x = dot(&x, &conv_adjoint_input(&y, &k, &g));
            let via_k = dot(&k, &conv_adjoint_kernel(&x, &y, &g));
            assert!((lhs - via_x).abs() <= 1e-10, "{lhs} vs {via_x}");
            assert!((lhs - via_k).abs() <= 1e-10, "{lhs} vs {via_k}");
        }
    }

    #[test]
    fn same_padding_shape_rule() {
        // Table-style stride-2 chain: 512x32 halves five times to 16x1.
        let (mut h, mut w) = (512usize, 32usize);
        for _ in 0..5 {
            h = conv_output_dims(h, 5, 2, Padding::Same);
            w = conv_output_dims(w, 5, 2, Padding::Same);
        }
        assert_eq!((h, w), (16, 1));
    }
}
