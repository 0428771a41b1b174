#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eqadapt::constraint::{build_constraint, ConstraintSpec, DEFAULT_RANK_TOL};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

pub fn uniform_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Random full-row-rank constraint with `1 ≤ m < p ≤ max_p`.
pub fn random_constraint(rng: &mut ChaCha8Rng, max_p: usize) -> ConstraintSpec {
    let p = rng.random_range(2..=max_p);
    let m = rng.random_range(1..p);
    let a = uniform_mat(rng, m, p, 1.0);
    let d = uniform_vec(rng, m, 5.0);
    build_constraint(a, d, DEFAULT_RANK_TOL).expect("random constraint is full rank")
}

/// A point on `{θ : Aθ = d}`.
pub fn random_feasible(rng: &mut ChaCha8Rng, spec: &ConstraintSpec, scale: f64) -> DVector<f64> {
    let w = uniform_vec(rng, spec.reduced_dim(), scale);
    spec.theta0() + spec.null_basis() * w
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, z: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(z.len(), |i, _| {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[i] += h;
        zm[i] -= h;
        (f(&zp) - f(&zm)) / (2.0 * h)
    })
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
