//! Row-major dense matrices and the affine kernels the MLP is built on.
//!
//! Every output entry is accumulated as `bias + Σ_k x_k·w_k` in ascending `k`,
//! independent of how many rows are processed together, so a batched forward
//! pass is bit-identical to the same rows evaluated one at a time.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Usage(format!(
                "matrix data of length {} does not fit {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims("matrix row", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

const LANES: usize = 8;
const ROWS: usize = 8;

/// `out[r] = bias + x[r]·W` where `W` is `in_dim × out_dim` row-major.
pub(crate) fn affine(x: &[f64], in_dim: usize, w: &[f64], bias: &[f64], out: &mut [f64]) {
    let out_dim = bias.len();
    debug_assert_eq!(w.len(), in_dim * out_dim);
    if out_dim.is_multiple_of(LANES) {
        affine_padded(x, in_dim, w, bias, out, out_dim);
        return;
    }
    // pad the output width to whole lanes; padded columns are discarded
    let width = out_dim.next_multiple_of(LANES);
    let mut wp = vec![0.0; in_dim * width];
    for k in 0..in_dim {
        wp[k * width..k * width + out_dim].copy_from_slice(&w[k * out_dim..(k + 1) * out_dim]);
    }
    let mut bp = vec![0.0; width];
    bp[..out_dim].copy_from_slice(bias);
    let rows = out.len() / out_dim;
    let mut tmp = vec![0.0; rows * width];
    affine_padded(x, in_dim, &wp, &bp, &mut tmp, width);
    for r in 0..rows {
        out[r * out_dim..(r + 1) * out_dim].copy_from_slice(&tmp[r * width..r * width + out_dim]);
    }
}

fn affine_padded(x: &[f64], in_dim: usize, w: &[f64], bias: &[f64], out: &mut [f64], width: usize) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx512f") {
        // SAFETY: the feature was detected at runtime.
        unsafe { avx512::affine_padded(x, in_dim, w, bias, out, width) };
        return;
    }
    let rows = out.len() / width;
    let mut r = 0;
    while r + ROWS <= rows {
        let xs: [&[f64]; ROWS] = std::array::from_fn(|q| &x[(r + q) * in_dim..(r + q + 1) * in_dim]);
        for j in (0..width).step_by(LANES) {
            let mut acc = [[0.0f64; LANES]; ROWS];
            for a in acc.iter_mut() {
                a.copy_from_slice(&bias[j..j + LANES]);
            }
            for k in 0..in_dim {
                let wr: &[f64; LANES] = w[k * width + j..k * width + j + LANES].try_into().unwrap();
                for q in 0..ROWS {
                    let xv = xs[q][k];
                    for l in 0..LANES {
                        acc[q][l] = xv.mul_add(wr[l], acc[q][l]);
                    }
                }
            }
            for q in 0..ROWS {
                out[(r + q) * width + j..(r + q) * width + j + LANES].copy_from_slice(&acc[q]);
            }
        }
        r += ROWS;
    }
    for r in r..rows {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        for j in (0..width).step_by(LANES) {
            let mut acc = [0.0f64; LANES];
            acc.copy_from_slice(&bias[j..j + LANES]);
            for (k, &xv) in xr.iter().enumerate() {
                let wr: &[f64; LANES] = w[k * width + j..k * width + j + LANES].try_into().unwrap();
                for l in 0..LANES {
                    acc[l] = xv.mul_add(wr[l], acc[l]);
                }
            }
            out[r * width + j..r * width + j + LANES].copy_from_slice(&acc);
        }
    }
}

/// Same arithmetic as the portable kernel (one fused multiply-add per `k`, in
/// ascending order), written with explicit 512-bit vectors.
#[cfg(target_arch = "x86_64")]
mod avx512 {
    use super::LANES;

    /// 6 rows × 4 lane groups keeps 24 accumulators and 4 weight vectors in registers.
    const TILE_ROWS: usize = 6;
    use std::arch::x86_64::*;

    /// Register tile of `R` rows by `C` lane groups. Every output still sums
    /// its products in increasing `k` starting from the bias, so any tiling
    /// gives the same bits as the scalar path.
    #[target_feature(enable = "avx512f")]
    #[inline]
    #[allow(clippy::too_many_arguments)]
    unsafe fn tile<const R: usize, const C: usize>(
        xp: *const f64,
        in_dim: usize,
        wp: *const f64,
        bp: *const f64,
        op: *mut f64,
        width: usize,
        r: usize,
        j: usize,
    ) {
        let mut acc = [[_mm512_setzero_pd(); C]; R];
        for c in 0..C {
            let b = _mm512_loadu_pd(bp.add(j + c * LANES));
            for row in acc.iter_mut() {
                row[c] = b;
            }
        }
        for k in 0..in_dim {
            let mut wv = [_mm512_setzero_pd(); C];
            for (c, v) in wv.iter_mut().enumerate() {
                *v = _mm512_loadu_pd(wp.add(k * width + j + c * LANES));
            }
            for (q, row) in acc.iter_mut().enumerate() {
                let xv = _mm512_set1_pd(*xp.add((r + q) * in_dim + k));
                for c in 0..C {
                    row[c] = _mm512_fmadd_pd(xv, wv[c], row[c]);
                }
            }
        }
        for (q, row) in acc.iter().enumerate() {
            for (c, a) in row.iter().enumerate() {
                _mm512_storeu_pd(op.add((r + q) * width + j + c * LANES), *a);
            }
        }
    }

    #[target_feature(enable = "avx512f")]
    unsafe fn row_block<const R: usize>(
        xp: *const f64,
        in_dim: usize,
        wp: *const f64,
        bp: *const f64,
        op: *mut f64,
        width: usize,
        r: usize,
    ) {
        let mut j = 0;
        while j + 4 * LANES <= width {
            tile::<R, 4>(xp, in_dim, wp, bp, op, width, r, j);
            j += 4 * LANES;
        }
        while j < width {
            tile::<R, 1>(xp, in_dim, wp, bp, op, width, r, j);
            j += LANES;
        }
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn affine_padded(
        x: &[f64],
        in_dim: usize,
        w: &[f64],
        bias: &[f64],
        out: &mut [f64],
        width: usize,
    ) {
        let rows = out.len() / width;
        assert!(x.len() >= rows * in_dim && w.len() >= in_dim * width && bias.len() >= width);
        assert!(width.is_multiple_of(LANES));
        let (xp, wp, bp, op) = (x.as_ptr(), w.as_ptr(), bias.as_ptr(), out.as_mut_ptr());
        let mut r = 0;
        while r + TILE_ROWS <= rows {
            row_block::<TILE_ROWS>(xp, in_dim, wp, bp, op, width, r);
            r += TILE_ROWS;
        }
        while r < rows {
            row_block::<1>(xp, in_dim, wp, bp, op, width, r);
            r += 1;
        }
    }
}

/// Accumulates `dW += Xᵀ·dZ` and `db += Σ_rows dZ`.
pub(crate) fn affine_param_grad(
    x: &[f64],
    in_dim: usize,
    dz: &[f64],
    out_dim: usize,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let rows = dz.len() / out_dim;
    for r in 0..rows {
        let dzr = &dz[r * out_dim..(r + 1) * out_dim];
        for (b, g) in db.iter_mut().zip(dzr) {
            *b += g;
        }
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        for (k, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let dwr = &mut dw[k * out_dim..(k + 1) * out_dim];
            for (d, g) in dwr.iter_mut().zip(dzr) {
                *d += xv * g;
            }
        }
    }
}

/// `dX = dZ·Wᵀ`.
pub(crate) fn affine_input_grad(dz: &[f64], out_dim: usize, w: &[f64], in_dim: usize, dx: &mut [f64]) {
    let rows = dz.len() / out_dim;
    for r in 0..rows {
        let dzr = &dz[r * out_dim..(r + 1) * out_dim];
        let dxr = &mut dx[r * in_dim..(r + 1) * in_dim];
        for (k, d) in dxr.iter_mut().enumerate() {
            let wr = &w[k * out_dim..(k + 1) * out_dim];
            *d = wr.iter().zip(dzr).map(|(a, b)| a * b).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_naive_and_is_batch_invariant() {
        let in_dim = 5;
        let out_dim = 19;
        let w: Vec<f64> = (0..in_dim * out_dim).map(|i| ((i * 7919) % 97) as f64 / 31.0 - 1.5).collect();
        let b: Vec<f64> = (0..out_dim).map(|i| i as f64 * 0.1).collect();
        let x: Vec<f64> = (0..3 * in_dim).map(|i| (i as f64).sin()).collect();
        let mut out = vec![0.0; 3 * out_dim];
        affine(&x, in_dim, &w, &b, &mut out);
        for r in 0..3 {
            let mut single = vec![0.0; out_dim];
            affine(&x[r * in_dim..(r + 1) * in_dim], in_dim, &w, &b, &mut single);
            assert_eq!(&out[r * out_dim..(r + 1) * out_dim], &single[..]);
            for j in 0..out_dim {
                let naive: f64 = b[j] + (0..in_dim).map(|k| x[r * in_dim + k] * w[k * out_dim + j]).sum::<f64>();
                assert!((naive - single[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_vec_checks_shape() {
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
