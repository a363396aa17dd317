//! Discrete-time LQR machinery: the algebraic Riccati fixed point, the
//! optimal feedback gain, and an independent finite-horizon value-iteration
//! oracle used to cross-check the solver.

use rand::Rng;

use crate::numcore::{spectral_radius, Matrix};
use crate::seeding::rng_from;
use crate::{Error, Result};

/// Relative stopping tolerance for the fixed-point iteration (tighter than
/// the 1e-10 the solver promises, so downstream checks have headroom).
const RICCATI_TOL: f64 = 1e-14;
const RICCATI_MAX_ITERS: usize = 200_000;

fn symmetrize(m: &Matrix) -> Matrix {
    m.add(&m.transpose()).scale(0.5)
}

fn check_shapes(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<()> {
    let n = a.rows();
    let m = b.cols();
    if a.cols() != n {
        return Err(Error::shape("riccati A", "square", format!("{}x{}", n, a.cols())));
    }
    if b.rows() != n {
        return Err(Error::shape("riccati B", format!("{n} rows"), format!("{} rows", b.rows())));
    }
    if q.rows() != n || q.cols() != n {
        return Err(Error::shape("riccati Q", format!("{n}x{n}"), format!("{}x{}", q.rows(), q.cols())));
    }
    if r.rows() != m || r.cols() != m {
        return Err(Error::shape("riccati R", format!("{m}x{m}"), format!("{}x{}", r.rows(), r.cols())));
    }
    Ok(())
}

/// `K = (R + BᵀPB)⁻¹ BᵀPA` for a given value matrix `P`.
pub fn gain_from_value(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let g = r.add(&b.matmul_ta(&p.matmul(b))); // R + BᵀPB
    let btpa = b.matmul_ta(&p.matmul(a)); // BᵀPA
    Ok(g.inverse()?.matmul(&btpa))
}

/// Solve the discrete algebraic Riccati equation
/// `P = Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`
/// by fixed-point iteration from `P₀ = Q`, and return `(P, K)` with
/// `K = (R + BᵀPB)⁻¹ BᵀPA`.
///
/// Requires `Q` PSD, `R` PD, and `(A, B)` stabilizable; a diverging or
/// non-contracting iterate is reported as [`Error::NoConvergence`].
pub fn riccati_solve(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix)> {
    check_shapes(a, b, q, r)?;
    let mut p = symmetrize(q);
    for _ in 0..RICCATI_MAX_ITERS {
        // P' = Q + AᵀPA − (BᵀPA)ᵀ G⁻¹ (BᵀPA), G = R + BᵀPB
        let pa = p.matmul(a);
        let atpa = a.matmul_ta(&pa);
        let btpa = b.matmul_ta(&pa);
        let g = r.add(&b.matmul_ta(&p.matmul(b)));
        let ginv = g.inverse().map_err(|_| {
            Error::NoConvergence("riccati: R + BᵀPB became singular".into())
        })?;
        let correction = btpa.matmul_ta(&ginv.matmul(&btpa));
        let next = symmetrize(&q.add(&atpa).sub(&correction));
        if next.ensure_finite("riccati iterate").is_err() {
            return Err(Error::NoConvergence(
                "riccati iteration diverged (unstabilizable (A, B)?)".into(),
            ));
        }
        let diff = next.sub(&p).max_abs();
        let scale = next.max_abs().max(1.0);
        p = next;
        if diff <= RICCATI_TOL * scale {
            let k = gain_from_value(a, b, r, &p)?;
            return Ok((p, k));
        }
    }
    Err(Error::NoConvergence(format!(
        "riccati iteration did not reach tolerance within {RICCATI_MAX_ITERS} steps"
    )))
}

/// Finite-horizon backward dynamic programming oracle: `steps` stages of
/// `V ← Q + KᵀRK + (A−BK)ᵀ V (A−BK)` with the stage-greedy `K`, starting
/// from terminal cost 0.
///
/// This is the policy-evaluation form of the recursion, deliberately a
/// different arithmetic path from [`riccati_solve`]'s Schur-complement form,
/// so agreement between the two is a genuine cross-check.
pub fn value_iteration_oracle(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    steps: usize,
) -> Result<Matrix> {
    check_shapes(a, b, q, r)?;
    let n = a.rows();
    let mut v = Matrix::zeros(n, n);
    for _ in 0..steps {
        let g = r.add(&b.matmul_ta(&v.matmul(b)));
        let k = g.inverse()?.matmul(&b.matmul_ta(&v.matmul(a)));
        let a_cl = a.sub(&b.matmul(&k));
        let stage_cost = q.add(&k.matmul_ta(&r.matmul(&k)));
        v = symmetrize(&stage_cost.add(&a_cl.matmul_ta(&v.matmul(&a_cl))));
        v.ensure_finite("value-iteration iterate")?;
    }
    Ok(v)
}

/// Spectral radius of the closed loop `A − B·K`.
pub fn closed_loop_radius(a: &Matrix, b: &Matrix, k: &Matrix) -> f64 {
    spectral_radius(&a.sub(&b.matmul(k)))
}

/// Draw a random LQR instance that is stabilizable with probability one:
/// dense `A` rescaled to a spectral radius in [0.3, 1.15], dense `B`,
/// `Q = I`, `R = ρI` with `ρ ∈ [0.5, 2]`.
pub fn random_instance(n: usize, m: usize, seed: u64) -> (Matrix, Matrix, Matrix, Matrix) {
    let mut rng = rng_from(seed, "riccati-instance", 0);
    let mut a = Matrix::zeros(n, n);
    for v in a.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let rho = spectral_radius(&a);
    let target: f64 = rng.gen_range(0.3..1.15);
    if rho > 1e-9 {
        a = a.scale(target / rho);
    }
    let mut b = Matrix::zeros(n, m);
    for v in b.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let q = Matrix::identity(n);
    let r = Matrix::identity(m).scale(rng.gen_range(0.5..2.0));
    (a, b, q, r)
}
