//! Dense Gauss-Jordan helpers for the small systems met by the LP code.

/// Inverse of a square row-major matrix, or `None` if numerically singular.
pub(crate) fn invert(a: &[Vec<f64>], pivot_tol: f64) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= pivot_tol {
            return None;
        }
        m.swap(col, piv);
        let inv = 1.0 / m[col][col];
        for v in &mut m[col] {
            *v *= inv;
        }
        let pivot_row = m[col].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Solves `a x = b` for square `a`.
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64], pivot_tol: f64) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= pivot_tol {
            return None;
        }
        m.swap(col, piv);
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            if f != 0.0 {
                for k in col..=n {
                    m[i][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}

/// Indices of a maximal linearly independent subset of rows.
pub(crate) fn independent_rows(a: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut chosen = Vec::new();
    for (i, row) in a.iter().enumerate() {
        let mut r = row.clone();
        for (b, &p) in basis.iter().zip(&pivots) {
            let f = r[p] / b[p];
            if f != 0.0 {
                for (v, bv) in r.iter_mut().zip(b) {
                    *v -= f * bv;
                }
            }
        }
        if let Some(p) = (0..r.len()).max_by(|&x, &y| r[x].abs().total_cmp(&r[y].abs())) {
            if r[p].abs() > tol {
                basis.push(r);
                pivots.push(p);
                chosen.push(i);
            }
        }
    }
    chosen
}
