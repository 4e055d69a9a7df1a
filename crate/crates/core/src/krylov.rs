//! Conjugate gradients with an optional subspace projection.

use crate::mac::{dot, norm2};

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final residual 2-norm.
    pub residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for symmetric positive (semi-)definite `A`.
///
/// Iterates until `|r| <= max(rel_tol * |b|, abs_tol)`. When `project` is
/// given it is applied to the residual and search direction every step,
/// which keeps the iteration in the complement of a known null space.
pub fn conjugate_gradient<A, P>(
    mut apply: A,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    abs_tol: f64,
    max_iter: usize,
    mut project: P,
) -> CgOutcome
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
{
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    for i in 0..n {
        r[i] = b[i] - ax[i];
    }
    project(&mut r);
    let target = (rel_tol * norm2(b)).max(abs_tol);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return CgOutcome {
            iterations: 0,
            residual: rr.sqrt(),
            converged: true,
        };
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return CgOutcome {
                iterations: it,
                residual: rr.sqrt(),
                converged: false,
            };
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project(&mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return CgOutcome {
                iterations: it,
                residual: rr_new.sqrt(),
                converged: true,
            };
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        project(&mut p);
    }
    CgOutcome {
        iterations: max_iter,
        residual: rr.sqrt(),
        converged: false,
    }
}
