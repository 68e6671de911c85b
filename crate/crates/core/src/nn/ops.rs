//! Dense kernels on row-major slices.

use alloc::vec;
use alloc::vec::Vec;

pub const LN_EPS: f64 = 1e-5;

/// `a (m×k) · b (k×n)`
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (m×k) · bᵀ` where `b` is (n×k).
pub fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] = dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
    out
}

/// `acc (k×n) += aᵀ · b` where `a` is (m×k) and `b` is (m×n).
pub fn acc_at_b(acc: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let br = &b[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in acc[p * n..(p + 1) * n].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Add a bias row to every row of `x`.
pub fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// `acc += Σ_rows x`
pub fn acc_col_sum(acc: &mut [f64], x: &[f64]) {
    for row in x.chunks(acc.len()) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

pub struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layer_norm(x: &[f64], g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let d = g.len();
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / libm::sqrt(var + LN_EPS);
        rstd[r] = rs;
        for c in 0..d {
            let h = (xr[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = g[c] * h + b[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Returns dx; accumulates into dg and db.
pub fn layer_norm_backward(dy: &[f64], g: &[f64], cache: &LnCache, dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let d = g.len();
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..d {
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
            dxhat[c] = dyr[c] * g[c];
            mean_dxhat += dxhat[c];
            mean_dxhat_xhat += dxhat[c] * xh[c];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for c in 0..d {
            dx[r * d + c] = cache.rstd[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_S: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(GELU_S * (x + GELU_C * x * x * x)))
}

pub fn gelu_grad(x: f64) -> f64 {
    let th = libm::tanh(GELU_S * (x + GELU_C * x * x * x));
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_S * (1.0 + 3.0 * GELU_C * x * x)
}

/// Numerically stable log-sum-exp.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(x.iter().map(|v| libm::exp(v - m)).sum::<f64>())
}

/// In-place softmax of one row.
pub fn softmax_in_place(x: &mut [f64]) {
    let lse = log_sum_exp(x);
    for v in x.iter_mut() {
        *v = libm::exp(*v - lse);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![4.0, 5.0, 10.0, 11.0]);
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0]; // 2x3 = b transposed
        assert_eq!(matmul_bt(&a, &bt, 2, 3, 2), vec![4.0, 5.0, 10.0, 11.0]);
        let mut acc = vec![0.0; 3];
        acc_at_b(&mut acc, &a, &[1.0, 1.0], 2, 3, 1);
        assert_eq!(acc, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut x = vec![1000.0, 1001.0, -5.0, 0.0];
        softmax_in_place(&mut x);
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_zero_input_is_finite() {
        let (y, c) = layer_norm(&[0.0; 4], &[1.0; 4], &[0.5; 4]);
        assert_eq!(y, vec![0.5; 4]);
        assert!(c.rstd.iter().all(|v| v.is_finite()));
    }
}
