//! Conjugate gradient for symmetric positive-definite operators on flat vectors.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `M x = b` starting from the contents of `x`.
///
/// Converged when `‖b − M x‖ ≤ rel_tol · ‖b‖`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iters: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    assert_eq!(x.len(), n);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut mx = vec![0.0; n];
    apply(x, &mut mx);
    let mut r: Vec<f64> = b.iter().zip(&mx).map(|(b, m)| b - m).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = rel_tol * b_norm;
    let mut mp = vec![0.0; n];

    for it in 0..max_iters {
        if rr.sqrt() <= target {
            return Ok(CgOutcome {
                iterations: it,
                relative_residual: rr.sqrt() / b_norm,
            });
        }
        apply(&p, &mut mp);
        let pmp = dot(&p, &mp);
        if !(pmp > 0.0) {
            return Err(Error::Divergence {
                iteration: it,
                reason: format!("operator is not positive definite (pᵀMp = {pmp:e})"),
            });
        }
        let step = rr / pmp;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * mp[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= target {
        return Ok(CgOutcome {
            iterations: max_iters,
            relative_residual: rr.sqrt() / b_norm,
        });
    }
    Err(Error::CgNotConverged {
        iterations: max_iters,
        residual: rr.sqrt() / b_norm,
    })
}
