//! Dense symmetric positive-definite helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Residual bound for SPD solves, in the ∞-norm, relative to `max(1, ‖rhs‖∞)`.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Cholesky factor `V = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
}

impl SpdFactor {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid(format!("expected a square matrix, got {}x{}", matrix.nrows(), matrix.ncols())));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("matrix has non-finite entries"));
        }
        let chol = Cholesky::new(matrix.clone()).ok_or_else(|| Error::numeric("matrix is not positive definite"))?;
        let lower = chol.l();
        Ok(SpdFactor { matrix, chol, lower })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Solves `V x = rhs`, refining once if needed, and fails if the residual
    /// stays above [`SOLVE_TOLERANCE`].
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("right-hand side has non-finite entries"));
        }
        let scale = rhs.amax().max(1.0);
        let mut x = self.chol.solve(rhs);
        let mut residual = rhs - &self.matrix * &x;
        if residual.amax() > SOLVE_TOLERANCE * scale {
            x += self.chol.solve(&residual);
            residual = rhs - &self.matrix * &x;
        }
        let r = residual.amax();
        if !(r <= SOLVE_TOLERANCE * scale) {
            return Err(Error::numeric(format!("solver residual {r:e} exceeds tolerance")));
        }
        Ok(x)
    }

    /// `‖x‖_{V⁻¹} = sqrt(xᵀ V⁻¹ x)`.
    pub fn inverse_norm(&self, x: &DVector<f64>) -> f64 {
        let y = self.lower.solve_lower_triangular(x).expect("cholesky factor has a nonzero diagonal");
        y.norm()
    }

    /// Draws from `N(mean, scale² V⁻¹)`.
    pub fn sample_inverse<R: Rng + ?Sized>(&self, mean: &DVector<f64>, scale: f64, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = self.lower.tr_solve_lower_triangular(&z).expect("cholesky factor has a nonzero diagonal");
        mean + y * scale
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(sym.clone());
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Index of the largest entry, lowest index on ties. `None` for empty input.
pub fn argmax<I: IntoIterator<Item = f64>>(values: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
