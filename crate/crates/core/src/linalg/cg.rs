use crate::linalg::CsrMatrix;
use crate::scalar::{dot, Real};

/// Result of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖`, recomputed from scratch for the returned `x`.
    pub relative_residual: T,
    pub converged: bool,
}

/// Jacobi-preconditioned conjugate gradient for SPD `a`.
///
/// Stops once the recursively updated residual drops below `tol * ‖b‖`,
/// then verifies with an explicit residual and restarts if that check
/// fails. If `max_iters` is exhausted or restarts stop helping, the best
/// iterate is returned with `converged` false.
pub fn conjugate_gradient<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    max_iters: usize,
) -> CgOutcome<T> {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        return CgOutcome { x: vec![T::zero(); n], iterations: 0, relative_residual: T::zero(), converged: true };
    }
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
        .collect();

    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut iterations = 0;
    let mut true_res = residual_norm(a, &x, b) / b_norm;
    // the recursive residual drifts from the true one in floating point;
    // restart from the best iterate while that still helps
    while true_res > tol && iterations < max_iters {
        let (next, used) = pcg_pass(a, b, &x, &inv_diag, tol * b_norm, max_iters - iterations);
        iterations += used;
        let res = residual_norm(a, &next, b) / b_norm;
        if !(res < true_res) {
            break;
        }
        let stalled = res > true_res * T::lit(0.5);
        x = next;
        true_res = res;
        if stalled {
            break;
        }
    }
    CgOutcome { x, iterations, relative_residual: true_res, converged: true_res <= tol }
}

fn residual_norm<T: Real>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> T {
    a.matvec(x).iter().zip(b).map(|(&ax, &bi)| (bi - ax) * (bi - ax)).sum::<T>().sqrt()
}

/// One Jacobi-preconditioned CG run from `x`; returns the iterate with the
/// smallest recursive residual and the iteration count.
fn pcg_pass<T: Real>(a: &CsrMatrix<T>, b: &[T], x: &[T], inv_diag: &[T], target: T, max_iters: usize) -> (Vec<T>, usize) {
    let n = b.len();
    let mut x = x.to_vec();
    let mut r = a.matvec(&x);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<T> = r.iter().zip(inv_diag).map(|(&ri, &d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];

    let mut best_x = x.clone();
    let mut best_res = dot(&r, &r).sqrt();
    let mut iterations = 0;

    while iterations < max_iters && best_res > target {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let res = dot(&r, &r).sqrt();
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res <= target {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (best_x, iterations)
}
