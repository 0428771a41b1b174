//! Affine equality constraints `A θ = d` and their elimination.
//!
//! Every feasible parameter vector is written as `θ = θ₀ + F z`, where `θ₀` is
//! the minimum-norm solution and the columns of `F` are an orthonormal basis of
//! the null space of `A`. Update laws evolve the reduced coordinate `z`, so the
//! constraint holds by construction.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;
pub const DEFAULT_FEAS_TOL: f64 = 1e-8;

/// An eliminated equality constraint. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    a: DMatrix<f64>,
    d: DVector<f64>,
    theta0: DVector<f64>,
    null_basis: DMatrix<f64>,
    row_basis: DMatrix<f64>,
    kappa1: f64,
    kappa2: f64,
}

/// Builds the particular solution and null-space basis for `A θ = d`.
///
/// The basis comes from the right-singular vectors of `A` whose singular values
/// fall below `rank_tol · σ_max`.
pub fn build_constraint(a: DMatrix<f64>, d: DVector<f64>, rank_tol: f64) -> Result<ConstraintSpec> {
    let (m, p) = a.shape();
    if m == 0 {
        return Err(Error::dim("constraint needs at least one row"));
    }
    if m >= p {
        return Err(Error::dim(format!(
            "constraint has {m} rows but only {p} parameters; need m < p"
        )));
    }
    if d.len() != m {
        return Err(Error::dim(format!(
            "offset has length {} but A has {m} rows",
            d.len()
        )));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::Validation(format!(
            "rank_tol must be positive, got {rank_tol}"
        )));
    }
    if a.iter().chain(d.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "constraint entries must be finite".into(),
        ));
    }

    // Pad to square so the decomposition yields the full set of right-singular vectors.
    let mut padded = DMatrix::<f64>::zeros(p, p);
    padded.view_mut((0, 0), (m, p)).copy_from(&a);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested right-singular vectors");

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma_max = svd.singular_values[order[0]];
    let cutoff = rank_tol * sigma_max;
    let rank = order
        .iter()
        .take_while(|&&i| sigma_max > 0.0 && svd.singular_values[i] >= cutoff)
        .count();
    if rank < m {
        return Err(Error::RankDeficient { rank, rows: m });
    }

    let pick = |idx: &[usize]| {
        let mut basis = DMatrix::<f64>::zeros(p, idx.len());
        for (col, &i) in idx.iter().enumerate() {
            basis.set_column(col, &v_t.row(i).transpose());
        }
        basis
    };
    let row_basis = pick(&order[..m]);
    let null_basis = pick(&order[m..]);

    let gram = &a * a.transpose();
    let theta0 = a.transpose()
        * gram
            .clone()
            .cholesky()
            .ok_or(Error::RankDeficient { rank, rows: m })?
            .solve(&d);
    let eig = SymmetricEigen::new(gram);
    let kappa1 = eig.eigenvalues.min();
    let kappa2 = eig.eigenvalues.max();

    Ok(ConstraintSpec {
        a,
        d,
        theta0,
        null_basis,
        row_basis,
        kappa1,
        kappa2,
    })
}

impl ConstraintSpec {
    /// Constraint with an explicitly supplied null-space basis.
    ///
    /// The basis must have orthonormal columns spanning `N(A)`; it is checked
    /// to `tol`.
    pub fn with_basis(
        a: DMatrix<f64>,
        d: DVector<f64>,
        basis: DMatrix<f64>,
        tol: f64,
    ) -> Result<Self> {
        let mut spec = build_constraint(a, d, DEFAULT_RANK_TOL)?;
        if basis.shape() != spec.null_basis.shape() {
            return Err(Error::dim(format!(
                "basis is {:?}, expected {:?}",
                basis.shape(),
                spec.null_basis.shape()
            )));
        }
        let annihilated = (&spec.a * &basis).amax();
        let k = basis.ncols();
        let ortho = (basis.transpose() * &basis - DMatrix::<f64>::identity(k, k)).amax();
        if annihilated > tol || ortho > tol {
            return Err(Error::Validation(format!(
                "supplied null-space basis fails checks: |AF|max = {annihilated:e}, |F'F - I|max = {ortho:e}"
            )));
        }
        spec.null_basis = basis;
        Ok(spec)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    /// Minimum-norm particular solution `Aᵀ(AAᵀ)⁻¹d`.
    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    /// Orthonormal null-space basis `F`, `p × (p − m)`.
    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.null_basis
    }

    /// Orthonormal basis of the row space of `A`, `p × m`.
    pub fn row_basis(&self) -> &DMatrix<f64> {
        &self.row_basis
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    /// Number of constraint rows `m`.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Parameter dimension `p`.
    pub fn params(&self) -> usize {
        self.a.ncols()
    }

    /// Reduced dimension `p − m`.
    pub fn reduced_dim(&self) -> usize {
        self.null_basis.ncols()
    }

    /// `FFᵀ`, the orthogonal projector onto `N(A)`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.null_basis * self.null_basis.transpose()
    }

    /// `‖A θ − d‖∞`.
    pub fn violation(&self, theta: &DVector<f64>) -> f64 {
        (&self.a * theta - &self.d).amax()
    }

    /// `θ̂ = θ₀ + F z`.
    pub fn lift(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.reduced_dim() {
            return Err(Error::dim(format!(
                "reduced coordinate has length {}, expected {}",
                z.len(),
                self.reduced_dim()
            )));
        }
        Ok(&self.theta0 + &self.null_basis * z)
    }

    /// Inverse of [`lift`](Self::lift) on the feasible set: `z = Fᵀ(θ̂ − θ₀)`.
    pub fn retract(&self, theta_hat: &DVector<f64>, feas_tol: f64) -> Result<DVector<f64>> {
        if theta_hat.len() != self.params() {
            return Err(Error::dim(format!(
                "estimate has length {}, expected {}",
                theta_hat.len(),
                self.params()
            )));
        }
        let violation = self.violation(theta_hat);
        if !(violation <= feas_tol) {
            return Err(Error::InfeasibleInitialEstimate {
                violation,
                tol: feas_tol,
            });
        }
        Ok(self.null_basis.transpose() * (theta_hat - &self.theta0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn check_invariants(spec: &ConstraintSpec) {
        let k = spec.reduced_dim();
        assert_eq!(k, spec.params() - spec.rows());
        assert!(spec.violation(spec.theta0()) <= 1e-10);
        assert!((spec.a() * spec.null_basis()).amax() <= 1e-10);
        let gram = spec.null_basis().transpose() * spec.null_basis();
        assert!((gram - DMatrix::<f64>::identity(k, k)).amax() <= 1e-10);
        assert!(spec.kappa1() > 0.0 && spec.kappa1() <= spec.kappa2());
    }

    #[test]
    fn theta_equal_constraint() {
        let spec = build_constraint(
            dmatrix![1.0, -1.0, 0.0, 0.0],
            dvector![0.0],
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        check_invariants(&spec);
        assert_abs_diff_eq!(spec.theta0().amax(), 0.0);
        // every basis vector has equal first two entries
        for col in spec.null_basis().column_iter() {
            assert_abs_diff_eq!(col[0], col[1], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(spec.kappa1(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_block_constraint() {
        let a = dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 1.0, 0.0, 0.0];
        let spec = build_constraint(a, dvector![3.0, 7.0], DEFAULT_RANK_TOL).unwrap();
        check_invariants(&spec);
        assert_abs_diff_eq!(
            *spec.theta0(),
            dvector![3.0, 7.0, 0.0, 0.0],
            epsilon = 1e-12
        );
        let proj = spec.projector();
        let expected = DMatrix::from_diagonal(&dvector![0.0, 0.0, 1.0, 1.0]);
        assert_abs_diff_eq!(proj, expected, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_min_norm() {
        let spec = build_constraint(dmatrix![1.0, 1.0], dvector![2.0], DEFAULT_RANK_TOL).unwrap();
        assert_abs_diff_eq!(*spec.theta0(), dvector![1.0, 1.0], epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_shapes_and_rank() {
        assert!(matches!(
            build_constraint(
                dmatrix![1.0, 0.0; 0.0, 1.0],
                dvector![0.0, 0.0],
                DEFAULT_RANK_TOL
            ),
            Err(Error::Dimension(_))
        ));
        let dup = dmatrix![1.0, -1.0, 0.0; 2.0, -2.0, 0.0];
        assert!(matches!(
            build_constraint(dup, dvector![0.0, 0.0], DEFAULT_RANK_TOL),
            Err(Error::RankDeficient { rank: 1, rows: 2 })
        ));
        assert!(matches!(
            build_constraint(dmatrix![0.0, 0.0, 0.0], dvector![0.0], DEFAULT_RANK_TOL),
            Err(Error::RankDeficient { rank: 0, rows: 1 })
        ));
    }

    #[test]
    fn lift_and_retract() {
        let spec = build_constraint(
            dmatrix![1.0, -1.0, 0.0, 0.0],
            dvector![0.0],
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        let z0 = DVector::zeros(3);
        assert_eq!(spec.lift(&z0).unwrap(), *spec.theta0());
        for i in 0..3 {
            let e = DVector::from_fn(3, |j, _| if i == j { 1.0 } else { 0.0 });
            let diff = spec.lift(&e).unwrap() - spec.theta0();
            assert_abs_diff_eq!(
                diff,
                spec.null_basis().column(i).into_owned(),
                epsilon = 1e-15
            );
        }
        let theta_hat = dvector![4.5, 4.5, 4.5, 15.0];
        let z = spec.retract(&theta_hat, DEFAULT_FEAS_TOL).unwrap();
        assert_abs_diff_eq!(spec.lift(&z).unwrap(), theta_hat, epsilon = 1e-9);
        assert_abs_diff_eq!(
            spec.retract(spec.theta0(), DEFAULT_FEAS_TOL)
                .unwrap()
                .amax(),
            0.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            spec.lift(&DVector::zeros(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn retract_rejects_infeasible() {
        let spec = build_constraint(
            dmatrix![1.0, -1.0, 0.0, 0.0],
            dvector![0.0],
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        let err = spec.retract(&dvector![4.6, 4.5, 4.5, 15.0], DEFAULT_FEAS_TOL);
        assert!(matches!(err, Err(Error::InfeasibleInitialEstimate { .. })));
    }

    #[test]
    fn paper_sim1_basis_round_trip() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let f = dmatrix![s, 0.0, 0.0; s, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 1.0];
        let spec =
            ConstraintSpec::with_basis(dmatrix![1.0, -1.0, 0.0, 0.0], dvector![0.0], f, 1e-12)
                .unwrap();
        // z = Fᵀ[4.5,4.5,4.5,15] = [9/√2, 4.5, 15]
        let z = dvector![9.0 * s, 4.5, 15.0];
        assert_abs_diff_eq!(
            spec.lift(&z).unwrap(),
            dvector![4.5, 4.5, 4.5, 15.0],
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(z[0], 6.3640, epsilon = 1e-4);
    }

    #[test]
    fn with_basis_rejects_non_null_vectors() {
        let f = dmatrix![1.0, 0.0, 0.0; 0.0, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 1.0];
        assert!(
            ConstraintSpec::with_basis(dmatrix![1.0, -1.0, 0.0, 0.0], dvector![0.0], f, 1e-10)
                .is_err()
        );
    }

    #[test]
    fn nonzero_offset() {
        let a = dmatrix![1.0, 2.0, -1.0; 0.0, 1.0, 1.0];
        let spec = build_constraint(a, dvector![1.0, -2.0], DEFAULT_RANK_TOL).unwrap();
        check_invariants(&spec);
        assert!(spec.theta0().norm() > 0.0);
        let theta = spec.lift(&dvector![3.0]).unwrap();
        assert!(spec.violation(&theta) <= 1e-12);
    }
}
