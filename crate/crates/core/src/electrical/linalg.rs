//! Linear solves for weighted graph Laplacians with Dirichlet conditions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::Network;

/// Free-vertex count above which the dense factorization gives way to CG.
pub const DENSE_LIMIT: usize = 2000;
const CG_REL_TOL: f64 = 1e-12;
const REFINE_STEPS: usize = 3;

/// Solves `L v = 0` on free vertices with `v` prescribed on `fixed`.
pub fn solve_dirichlet(net: &Network, fixed: &[(usize, f64)]) -> Result<Vec<f64>> {
    let n = net.vertex_count();
    let mut value = vec![0.0; n];
    let mut is_fixed = vec![false; n];
    for &(x, val) in fixed {
        if x >= n {
            return Err(Error::Precondition(format!("vertex {x} outside the network")));
        }
        is_fixed[x] = true;
        value[x] = val;
    }
    let free: Vec<usize> = (0..n).filter(|&x| !is_fixed[x]).collect();
    if free.is_empty() {
        return Ok(value);
    }
    let mut slot = vec![usize::MAX; n];
    for (i, &x) in free.iter().enumerate() {
        slot[x] = i;
    }

    let mut rhs = vec![0.0; free.len()];
    for (i, &x) in free.iter().enumerate() {
        for &(y, e) in net.incident(x) {
            if is_fixed[y] {
                rhs[i] += net.conductance(e) * value[y];
            }
        }
    }

    let solution = if free.len() <= DENSE_LIMIT {
        dense_solve(net, &free, &slot, &rhs)?
    } else {
        cg_solve(net, &free, &slot, &rhs)?
    };
    for (i, &x) in free.iter().enumerate() {
        value[x] = solution[i];
    }
    Ok(value)
}

fn apply(net: &Network, free: &[usize], slot: &[usize], v: &[f64], out: &mut [f64]) {
    for (i, &x) in free.iter().enumerate() {
        let mut acc = 0.0;
        for &(y, e) in net.incident(x) {
            let c = net.conductance(e);
            acc += c * v[i];
            if slot[y] != usize::MAX {
                acc -= c * v[slot[y]];
            }
        }
        out[i] = acc;
    }
}

fn dense_solve(net: &Network, free: &[usize], slot: &[usize], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = free.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &x) in free.iter().enumerate() {
        for &(y, e) in net.incident(x) {
            let c = net.conductance(e);
            a[(i, i)] += c;
            if slot[y] != usize::MAX {
                a[(i, slot[y])] -= c;
            }
        }
    }
    let chol = a.cholesky().ok_or_else(|| {
        Error::Connectivity("free vertices are not connected to any fixed vertex".into())
    })?;
    let b = DVector::from_column_slice(rhs);
    let mut x = chol.solve(&b);
    let mut ax = vec![0.0; m];
    for _ in 0..REFINE_STEPS {
        apply(net, free, slot, x.as_slice(), &mut ax);
        let r = DVector::from_iterator(m, rhs.iter().zip(&ax).map(|(b, a)| b - a));
        if r.amax() == 0.0 {
            break;
        }
        x += chol.solve(&r);
    }
    Ok(x.as_slice().to_vec())
}

/// Jacobi-preconditioned conjugate gradients.
fn cg_solve(net: &Network, free: &[usize], slot: &[usize], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = free.len();
    let diag: Vec<f64> = free.iter().map(|&x| net.total_conductance(x)).collect();
    let bnorm = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
    let mut x = vec![0.0; m];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..(20 * m).max(1000) {
        apply(net, free, slot, &p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Connectivity(
                "Laplacian block is singular on the free vertices".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= CG_REL_TOL * bnorm {
            return Ok(x);
        }
        for i in 0..m {
            z[i] = r[i] / diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::InternalConsistency(
        "conjugate gradients did not reach the requested tolerance".into(),
    ))
}
