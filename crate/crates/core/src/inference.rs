//! Wald inference from the observed information at the estimate.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::InformationMatrix;
use crate::link::{normal_quantile, normal_sf};
use crate::model::ParameterVector;
use crate::solver::FitResult;

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub level: f64,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub z_values: Vec<f64>,
    /// Two-sided normal p-values for `H0: coefficient = 0`.
    pub p_values: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

fn cholesky(info: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if info.nrows() != info.ncols() || info.nrows() == 0 {
        return Err(Error::Dimension("information matrix must be square and nonempty".into()));
    }
    if info.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    Cholesky::new(info.clone()).ok_or(Error::NotPositiveDefinite)
}

/// Inverse of a positive-definite information matrix.
pub fn covariance_from_information(info: &InformationMatrix) -> Result<DMatrix<f64>> {
    let inv = cholesky(&info.matrix)?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Covariance estimate of a converged fit.
pub fn covariance(fit: &FitResult) -> Result<DMatrix<f64>> {
    if !fit.converged {
        return Err(Error::Numerical("covariance requested for a fit that did not converge".into()));
    }
    covariance_from_information(&fit.information)
}

/// Upper-triangular `L` with `L' L = info`, i.e. the transpose of the
/// Cholesky factor. Then `L (theta_hat - theta0)` has identity covariance
/// whenever `info^-1` is the covariance of `theta_hat`.
pub fn information_root(info: &InformationMatrix) -> Result<DMatrix<f64>> {
    Ok(cholesky(&info.matrix)?.l().transpose())
}

/// `L (theta_hat - theta0)` with `L' L` equal to the observed information.
pub fn standardize(
    theta_hat: &ParameterVector,
    theta0: &ParameterVector,
    info: &InformationMatrix,
) -> Result<Vec<f64>> {
    let (a, b) = (theta_hat.to_stacked(), theta0.to_stacked());
    if a.len() != b.len() || a.len() != info.dim() {
        return Err(Error::Dimension(format!(
            "standardize: estimate {}, truth {}, information {}",
            a.len(),
            b.len(),
            info.dim()
        )));
    }
    let root = information_root(info)?;
    let diff = DVector::from_iterator(a.len(), a.iter().zip(&b).map(|(x, y)| x - y));
    Ok((root * diff).as_slice().to_vec())
}

/// Per-coefficient normal-theory intervals at `level`.
pub fn wald_intervals(estimates: &[f64], covariance: &DMatrix<f64>, level: f64) -> Result<InferenceReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let k = estimates.len();
    if covariance.nrows() != k || covariance.ncols() != k {
        return Err(Error::Dimension("covariance does not match the estimate".into()));
    }
    let std_errors: Vec<f64> = (0..k).map(|j| covariance[(j, j)].sqrt()).collect();
    if let Some(j) = std_errors.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Numerical(format!("standard error of coefficient {j} is not positive")));
    }
    let z_crit = normal_quantile(0.5 + 0.5 * level)?;
    let z_values: Vec<f64> = estimates.iter().zip(&std_errors).map(|(e, s)| e / s).collect();
    Ok(InferenceReport {
        level,
        estimates: estimates.to_vec(),
        ci_lower: estimates.iter().zip(&std_errors).map(|(e, s)| e - z_crit * s).collect(),
        ci_upper: estimates.iter().zip(&std_errors).map(|(e, s)| e + z_crit * s).collect(),
        p_values: z_values.iter().map(|z| 2.0 * normal_sf(z.abs())).collect(),
        z_values,
        std_errors,
        covariance: covariance.clone(),
    })
}

/// Covariance, standard errors and intervals for a converged fit.
pub fn infer(fit: &FitResult, level: f64) -> Result<InferenceReport> {
    let cov = covariance(fit)?;
    wald_intervals(&fit.theta_hat.to_stacked(), &cov, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn info(diag: &[f64]) -> InformationMatrix {
        InformationMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    #[test]
    fn diagonal_covariance() {
        let cov = covariance_from_information(&info(&[4.0, 25.0])).unwrap();
        assert!((cov[(0, 0)] - 0.25).abs() < 1e-15 && (cov[(1, 1)] - 0.04).abs() < 1e-15);
        assert_eq!(cov[(0, 1)], 0.0);
        let rep = wald_intervals(&[0.0, 0.0], &cov, 0.95).unwrap();
        assert!((rep.std_errors[0] - 0.5).abs() < 1e-15 && (rep.std_errors[1] - 0.2).abs() < 1e-15);
        let eye = covariance_from_information(&info(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(eye, DMatrix::identity(3, 3));
    }

    #[test]
    fn covariance_inverts_information() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let cov = covariance_from_information(&InformationMatrix::from_matrix(m.clone())).unwrap();
        assert!((&cov * &m - DMatrix::identity(3, 3)).abs().max() < 1e-8);
    }

    #[test]
    fn non_pd_is_rejected() {
        assert!(matches!(covariance_from_information(&info(&[1.0, -1.0])), Err(Error::NotPositiveDefinite)));
        let t = ParameterVector::new(vec![0.0], vec![0.0]);
        assert!(standardize(&t, &t, &info(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn standardize_examples() {
        let a = ParameterVector::new(vec![0.3, -1.0], vec![2.0]);
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let im = InformationMatrix::from_matrix(m.clone());
        assert_eq!(standardize(&a, &a, &im).unwrap(), vec![0.0; 3]);
        let b = ParameterVector::new(vec![0.0, 0.0], vec![0.0]);
        assert_eq!(standardize(&a, &b, &info(&[1.0, 1.0, 1.0])).unwrap(), a.to_stacked());

        let root = information_root(&im).unwrap();
        let back = root.transpose() * &root;
        assert!((&back - &m).norm() / m.norm() < 1e-10);
        // |L d|^2 is the Mahalanobis form d' I d.
        let z = standardize(&a, &b, &im).unwrap();
        let d = dvector![0.3, -1.0, 2.0];
        let quad = (d.transpose() * &m * &d)[(0, 0)];
        assert!((z.iter().map(|v| v * v).sum::<f64>() - quad).abs() < 1e-12);
    }

    #[test]
    fn interval_examples() {
        let cov = DMatrix::from_element(1, 1, 0.25);
        let rep = wald_intervals(&[1.0], &cov, 0.95).unwrap();
        assert!((rep.ci_lower[0] - (1.0 - 1.959964 * 0.5)).abs() < 1e-6);
        assert!((rep.ci_upper[0] - (1.0 + 1.959964 * 0.5)).abs() < 1e-6);
        assert!(rep.ci_lower[0] < rep.ci_upper[0]);
        assert!((rep.z_values[0] - 2.0).abs() < 1e-15);
        assert!((rep.p_values[0] - 0.045_500_263_896_358_42).abs() < 1e-12);

        let narrow = wald_intervals(&[1.0], &cov, 1e-12).unwrap();
        assert!((narrow.ci_upper[0] - narrow.ci_lower[0]).abs() < 1e-11);

        assert!(wald_intervals(&[1.0], &cov, 0.0).is_err());
        assert!(wald_intervals(&[1.0], &cov, 1.0).is_err());
        assert!(wald_intervals(&[1.0], &DMatrix::zeros(1, 1), 0.95).is_err());
    }
}
