//! Small dense-tensor helpers shared by the N-body modules.

use ndarray::{ArrayD, Axis, IxDyn, Zip};

use crate::discretization::Grid1D;

pub(crate) fn cube_shape(n: usize, bodies: usize) -> IxDyn {
    IxDyn(&vec![n; bodies])
}

/// Product quadrature weight of every grid tuple.
pub(crate) fn tuple_weights(grid: &Grid1D, bodies: usize) -> ArrayD<f64> {
    let w = grid.weights();
    ArrayD::from_shape_fn(cube_shape(grid.len(), bodies), |idx| {
        (0..bodies).map(|k| w[idx[k]]).product()
    })
}

/// `out[.., x, ..] = sum_y m[x][y] * a[.., y, ..]` along `axis`.
pub(crate) fn apply_along_axis(a: &ArrayD<f64>, axis: usize, m: &[Vec<f64>]) -> ArrayD<f64> {
    let mut out = ArrayD::zeros(a.raw_dim());
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(a.lanes(Axis(axis)))
        .for_each(|mut o, i| {
            for (x, row) in m.iter().enumerate() {
                o[x] = row.iter().zip(i.iter()).map(|(r, v)| r * v).sum();
            }
        });
    out
}

/// Quadrature sum over one axis, which is removed from the result.
pub(crate) fn integrate_axis(a: &ArrayD<f64>, axis: usize, w: &[f64]) -> ArrayD<f64> {
    let mut out: Option<ArrayD<f64>> = None;
    for (x, slice) in a.axis_iter(Axis(axis)).enumerate() {
        match out.as_mut() {
            None => out = Some(slice.mapv(|v| v * w[x])),
            Some(acc) => acc.scaled_add(w[x], &slice),
        }
    }
    out.expect("axis has at least one node")
}

/// One-body marginal density along `axis` of an N-body density.
pub(crate) fn axis_marginal(a: &ArrayD<f64>, axis: usize, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.shape()[axis]];
    let bodies = a.ndim();
    for (idx, v) in a.indexed_iter() {
        let mut weight = 1.0;
        for k in 0..bodies {
            if k != axis {
                weight *= w[idx[k]];
            }
        }
        out[idx[axis]] += weight * v;
    }
    out
}

/// All permutations of `0..n` with their signs, identity first.
pub(crate) fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        let n = used.len();
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut perms = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut perms);
    perms
        .into_iter()
        .map(|p| {
            let mut inversions = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if p[i] > p[j] {
                        inversions += 1;
                    }
                }
            }
            let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
            (p, sign)
        })
        .collect()
}

/// Multi-index of a flat row-major position.
pub(crate) fn unravel(mut flat: usize, n: usize, bodies: usize) -> Vec<usize> {
    let mut idx = vec![0; bodies];
    for k in (0..bodies).rev() {
        idx[k] = flat % n;
        flat /= n;
    }
    idx
}
