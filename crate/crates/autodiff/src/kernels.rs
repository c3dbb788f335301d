//! Dense numeric kernels behind the graph primitives.
//!
//! Images use NHWC layout so that convolution reduces to one row-major GEMM
//! over an im2col buffer with no post-transpose, and so patch extraction
//! copies contiguous channel runs.

use std::cell::RefCell;

use matrixmultiply::dgemm;

thread_local! {
    /// Reusable lowering buffers; im2col scratch dominates allocation
    /// traffic in convolution-heavy training loops.
    static SCRATCH: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

/// Runs `f` over a zeroed scratch buffer of length `len`, recycling
/// allocations across calls on the same thread.
pub(crate) fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    let mut buf = SCRATCH
        .with(|pool| pool.borrow_mut().pop())
        .unwrap_or_default();
    buf.clear();
    buf.resize(len, 0.0);
    let result = f(&mut buf[..len]);
    SCRATCH.with(|pool| {
        let mut pool = pool.borrow_mut();
        if pool.len() < 8 {
            pool.push(buf);
        }
    });
    result
}

/// `c = alpha * a(op) * b(op) + beta * c` for row-major matrices.
/// `a` is `m x k` after the optional transpose, `b` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul(
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Spatial geometry of a valid stride-1 convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub oc: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(x_shape: &[usize], w_shape: &[usize]) -> Self {
        let (n, h, w, c) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
        let (kh, kw, _, oc) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
        ConvGeom {
            n,
            h,
            w,
            c,
            kh,
            kw,
            oc,
            oh: h - kh + 1,
            ow: w - kw + 1,
        }
    }

    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.c
    }

    pub fn out_positions(&self) -> usize {
        self.n * self.oh * self.ow
    }
}

/// Lowers `x` (NHWC) into a matrix of rows, one per output position, each row
/// the flattened kh*kw*c receptive field.
pub(crate) fn im2col(x: &[f64], g: ConvGeom, col: &mut [f64]) {
    debug_assert_eq!(col.len(), g.out_positions() * g.patch_len());
    let row_stride = g.w * g.c;
    let img_stride = g.h * row_stride;
    let mut dst = 0;
    for n in 0..g.n {
        let img = &x[n * img_stride..(n + 1) * img_stride];
        for oh in 0..g.oh {
            for ow in 0..g.ow {
                for ki in 0..g.kh {
                    let src = (oh + ki) * row_stride + ow * g.c;
                    let run = g.kw * g.c;
                    col[dst..dst + run].copy_from_slice(&img[src..src + run]);
                    dst += run;
                }
            }
        }
    }
}

/// Transpose of [`im2col`]: scatter-adds patch-row gradients back onto the
/// input gradient buffer.
pub(crate) fn col2im_add(dcol: &[f64], g: ConvGeom, dx: &mut [f64]) {
    debug_assert_eq!(dcol.len(), g.out_positions() * g.patch_len());
    let row_stride = g.w * g.c;
    let img_stride = g.h * row_stride;
    let mut src = 0;
    for n in 0..g.n {
        let img = &mut dx[n * img_stride..(n + 1) * img_stride];
        for oh in 0..g.oh {
            for ow in 0..g.ow {
                for ki in 0..g.kh {
                    let dst = (oh + ki) * row_stride + ow * g.c;
                    let run = g.kw * g.c;
                    for (d, s) in img[dst..dst + run].iter_mut().zip(&dcol[src..src + run]) {
                        *d += s;
                    }
                    src += run;
                }
            }
        }
    }
}

/// Forward convolution: `out[n, oh, ow, :] = col_row * w + b`.
pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], b: &[f64], g: ConvGeom, out: &mut [f64]) {
    for chunk in out.chunks_exact_mut(g.oc) {
        chunk.copy_from_slice(b);
    }
    with_scratch(g.out_positions() * g.patch_len(), |col| {
        im2col(x, g, col);
        matmul(
            col,
            false,
            w,
            false,
            out,
            g.out_positions(),
            g.patch_len(),
            g.oc,
            1.0,
            1.0,
        );
    });
}

/// Backward convolution. Accumulates into `dw` and `db`, and into `dx`
/// when the input needs a gradient.
pub(crate) fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    g: ConvGeom,
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let m = g.out_positions();
    let k = g.patch_len();
    with_scratch(m * k, |col| {
        im2col(x, g, col);
        // dw[k, oc] += col^T [k, m] * dout [m, oc]
        matmul(col, true, dout, false, dw, k, m, g.oc, 1.0, 1.0);
    });
    // db[oc] += column sums of dout
    for chunk in dout.chunks_exact(g.oc) {
        for (d, s) in db.iter_mut().zip(chunk) {
            *d += s;
        }
    }
    if let Some(dx) = dx {
        // dcol [m, k] = dout [m, oc] * w^T [oc, k]
        with_scratch(m * k, |dcol| {
            matmul(dout, false, w, true, dcol, m, g.oc, k, 1.0, 0.0);
            col2im_add(dcol, g, dx);
        });
    }
}

/// 2x2/stride-2 max pooling over NHWC. Ties resolve to the first element in
/// (row, col) scan order, which keeps replay deterministic.
pub(crate) fn max_pool2_forward(x: &[f64], n: usize, h: usize, w: usize, c: usize, out: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    let row = w * c;
    for ni in 0..n {
        let img = &x[ni * h * row..];
        let dst_img = &mut out[ni * oh * ow * c..];
        for i in 0..oh {
            for j in 0..ow {
                let p00 = (2 * i) * row + (2 * j) * c;
                let p01 = p00 + c;
                let p10 = p00 + row;
                let p11 = p10 + c;
                let dst = (i * ow + j) * c;
                for ch in 0..c {
                    let m = img[p00 + ch]
                        .max(img[p01 + ch])
                        .max(img[p10 + ch])
                        .max(img[p11 + ch]);
                    dst_img[dst + ch] = m;
                }
            }
        }
    }
}

/// Routes pooled gradients to the argmax position (first maximum wins).
pub(crate) fn max_pool2_backward(
    x: &[f64],
    dout: &[f64],
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    dx: &mut [f64],
) {
    let (oh, ow) = (h / 2, w / 2);
    let row = w * c;
    for ni in 0..n {
        let img = &x[ni * h * row..(ni + 1) * h * row];
        let dimg = &mut dx[ni * h * row..(ni + 1) * h * row];
        let dsrc = &dout[ni * oh * ow * c..];
        for i in 0..oh {
            for j in 0..ow {
                let offsets = [
                    (2 * i) * row + (2 * j) * c,
                    (2 * i) * row + (2 * j) * c + c,
                    (2 * i + 1) * row + (2 * j) * c,
                    (2 * i + 1) * row + (2 * j) * c + c,
                ];
                let src = (i * ow + j) * c;
                for ch in 0..c {
                    let mut best = 0;
                    let mut best_v = img[offsets[0] + ch];
                    for (idx, off) in offsets.iter().enumerate().skip(1) {
                        let v = img[off + ch];
                        if v > best_v {
                            best_v = v;
                            best = idx;
                        }
                    }
                    dimg[offsets[best] + ch] += dsrc[src + ch];
                }
            }
        }
    }
}

/// Row-wise log softmax with max subtraction.
pub(crate) fn log_softmax_forward(x: &[f64], rows: usize, k: usize, out: &mut [f64]) {
    for r in 0..rows {
        let row = &x[r * k..(r + 1) * k];
        let dst = &mut out[r * k..(r + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (d, v) in dst.iter_mut().zip(row) {
            *d = v - lse;
        }
    }
}

/// d/dx of log softmax: `dx_i = dy_i - exp(out_i) * sum_j dy_j` per row.
pub(crate) fn log_softmax_backward(out: &[f64], dy: &[f64], rows: usize, k: usize, dx: &mut [f64]) {
    for r in 0..rows {
        let o = &out[r * k..(r + 1) * k];
        let g = &dy[r * k..(r + 1) * k];
        let d = &mut dx[r * k..(r + 1) * k];
        let gsum: f64 = g.iter().sum();
        for i in 0..k {
            d[i] += g[i] - o[i].exp() * gsum;
        }
    }
}

/// Numerically stable log(1 + e^x).
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, stable at both tails.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
