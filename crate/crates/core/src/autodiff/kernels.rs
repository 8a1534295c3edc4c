//! Plain slice kernels shared by the tape and tape-free inference.
//!
//! All loops run in a fixed order so results are bitwise reproducible.

/// `out[i, j] = Σ_k x[i, k] · w[k, j] + b[j]` with `x: rows × inp`, `w: inp × out`.
pub(crate) fn affine(x: &[f64], w: &[f64], b: &[f64], rows: usize, inp: usize, out: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * out);
    for i in 0..rows {
        y.extend_from_slice(b);
        let yr = &mut y[i * out..(i + 1) * out];
        let xr = &x[i * inp..(i + 1) * inp];
        for (k, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wr = &w[k * out..(k + 1) * out];
            for (yv, &wv) in yr.iter_mut().zip(wr) {
                *yv += xv * wv;
            }
        }
    }
    y
}

/// Accumulates gradients of `affine` given upstream `g: rows × out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn affine_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    rows: usize,
    inp: usize,
    out: usize,
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
    gb: Option<&mut [f64]>,
) {
    if let Some(gx) = gx {
        for i in 0..rows {
            let gr = &g[i * out..(i + 1) * out];
            for k in 0..inp {
                let wr = &w[k * out..(k + 1) * out];
                let mut acc = 0.0;
                for (&gv, &wv) in gr.iter().zip(wr) {
                    acc += gv * wv;
                }
                gx[i * inp + k] += acc;
            }
        }
    }
    if let Some(gw) = gw {
        for i in 0..rows {
            let gr = &g[i * out..(i + 1) * out];
            let xr = &x[i * inp..(i + 1) * inp];
            for (k, &xv) in xr.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let gwr = &mut gw[k * out..(k + 1) * out];
                for (gwv, &gv) in gwr.iter_mut().zip(gr) {
                    *gwv += xv * gv;
                }
            }
        }
    }
    if let Some(gb) = gb {
        for i in 0..rows {
            for (gbv, &gv) in gb.iter_mut().zip(&g[i * out..(i + 1) * out]) {
                *gbv += gv;
            }
        }
    }
}

/// Row-wise `log softmax(x / tau)` using max subtraction.
pub(crate) fn log_softmax_rows(x: &[f64], cols: usize, tau: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(cols) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / tau));
        let sum: f64 = row.iter().map(|&v| (v / tau - max).exp()).sum();
        let log_norm = max + sum.ln();
        out.extend(row.iter().map(|&v| v / tau - log_norm));
    }
    out
}

pub(crate) fn softmax_rows(x: &[f64], cols: usize, tau: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(cols) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / tau));
        let start = out.len();
        out.extend(row.iter().map(|&v| (v / tau - max).exp()));
        let sum: f64 = out[start..].iter().sum();
        for p in &mut out[start..] {
            *p /= sum;
        }
    }
    out
}

/// Index of the largest entry; ties resolve to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}
