//! Dense row-major helpers for checking the mapping solver.

use kinfuse::Tensor;

/// Solves the `d² × d²` system `Σ_k W_ik A_kj = B_ij` for the entries of `W`
/// by Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len();
    let n = d * d;
    let mut m = vec![vec![0.0; n + 1]; n];
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            for k in 0..d {
                m[row][i * d + k] = a[k][j];
            }
            m[row][n] = b[i][j];
        }
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    (0..d).map(|i| x[i * d..(i + 1) * d].to_vec()).collect()
}

pub fn mat(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..p).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn system(s: &[Vec<f64>], d: &[Vec<f64>], alpha: f64, lambda: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (sst, ddt) = (mul(s, &transpose(s)), mul(d, &transpose(d)));
    let (dst, sdt) = (mul(d, &transpose(s)), mul(s, &transpose(d)));
    let n = s.len();
    let a = (0..n)
        .map(|i| (0..n).map(|j| alpha * sst[i][j] - ddt[i][j] + if i == j { lambda } else { 0.0 }).collect())
        .collect();
    let b = (0..n).map(|i| (0..n).map(|j| alpha * dst[i][j] - sdt[i][j]).collect()).collect();
    (a, b)
}

