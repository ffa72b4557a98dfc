//! Matrix-free conjugate gradients for (I + dt·D − dt·Δ_h) x = b, where D is
//! a nonnegative diagonal. The operator is symmetric positive definite on
//! the uniform grid.

use crate::error::{Component, Error, Result};
use crate::grid::{laplacian_into, Grid};

pub(crate) struct ShiftedLaplacian<'a> {
    pub grid: &'a Grid,
    pub dt: f64,
    pub diag: Option<&'a [f64]>,
}

impl ShiftedLaplacian<'_> {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        laplacian_into(self.grid, x, out);
        match self.diag {
            Some(d) => {
                for ((o, &xi), &di) in out.iter_mut().zip(x).zip(d) {
                    *o = xi * (1.0 + self.dt * di) - self.dt * *o;
                }
            }
            None => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = xi - self.dt * *o;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves in place, starting from the contents of `x`.
///
/// Without a diagonal term the constant vector is an eigenvector of the
/// operator with eigenvalue one. The initial guess is then shifted so that
/// the residual has zero mean, and the Krylov iterates never reintroduce a
/// constant component: the solution conserves Σx = Σb to rounding.
pub(crate) fn conjugate_gradient(
    op: &ShiftedLaplacian<'_>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    component: Component,
) -> Result<SolveStats> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if op.diag.is_none() {
        let shift = r.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v += shift);
        r.iter_mut().for_each(|v| *v -= shift);
    }
    let mut rs = dot(&r, &r);
    let target = tol * b_norm;
    if rs.sqrt() <= target {
        return Ok(SolveStats { iterations: 0, relative_residual: rs.sqrt() / b_norm });
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        let rs_new = dot(&r, &r);
        if !rs_new.is_finite() {
            break;
        }
        if rs_new.sqrt() <= target {
            return Ok(SolveStats { iterations: it, relative_residual: rs_new.sqrt() / b_norm });
        }
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
    }
    Err(Error::SolverDiverged {
        component,
        iterations: max_iter,
        residual: rs.sqrt() / b_norm,
    })
}
