use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a column counts as collinear.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefs: DVector<f64>,
    pub rss: f64,
}

pub(crate) fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidDimension(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidDimension("non-finite value in design or response".into()));
    }
    Ok(())
}

pub(crate) fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

pub(crate) fn center_columns(x: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    let mut xc = x.clone();
    for (mut col, m) in xc.column_iter_mut().zip(means) {
        col.add_scalar_mut(-m);
    }
    xc
}

/// Least squares with an unpenalized intercept, solved by Householder QR on
/// the centered design.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    check_xy(x, y)?;
    let (n, k) = x.shape();
    if n == 0 {
        return Err(Error::InvalidDimension("empty design".into()));
    }
    let ymean = y.mean();
    if k == 0 {
        let rss = y.iter().map(|v| (v - ymean) * (v - ymean)).sum();
        return Ok(OlsFit {
            intercept: ymean,
            coefs: DVector::zeros(0),
            rss,
        });
    }
    if n < k + 1 {
        return Err(Error::SingularDesign(format!(
            "{n} rows cannot identify {k} slopes plus an intercept"
        )));
    }
    let means = column_means(x);
    let xc = center_columns(x, &means);
    let yc = y.add_scalar(-ymean);
    let norms: Vec<f64> = xc.column_iter().map(|c| c.norm()).collect();

    let qr = xc.qr();
    let r = qr.r();
    for (i, norm) in norms.iter().enumerate() {
        if *norm == 0.0 || r[(i, i)].abs() <= RANK_TOL * norm {
            return Err(Error::SingularDesign(format!(
                "column {i} is constant or linearly dependent on earlier columns"
            )));
        }
    }
    let qty = qr.q().transpose() * &yc;
    let coefs = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let intercept = ymean - means.iter().zip(coefs.iter()).map(|(m, b)| m * b).sum::<f64>();
    let resid = y - (x * &coefs).add_scalar(intercept);
    Ok(OlsFit {
        intercept,
        rss: resid.norm_squared(),
        coefs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 5.0]);
        let y = DVector::from_column_slice(&[2.0, 4.0, 6.0, 10.0]);
        let f = ols_fit(&x, &y).unwrap();
        assert_abs_diff_eq!(f.coefs[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 0.0, epsilon = 1e-12);
        assert!(f.rss < 1e-20);
    }

    #[test]
    fn constant_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_element(10, 3.5);
        let f = ols_fit(&x, &y).unwrap();
        assert_abs_diff_eq!(f.intercept, 3.5, epsilon = 1e-12);
        assert!(f.coefs.iter().all(|b| b.abs() < 1e-12));
        assert!(f.rss < 1e-20);
    }

    #[test]
    fn null_model_rss_is_total_sum_of_squares() {
        let y = DVector::from_column_slice(&[1.0, 2.0, 6.0]);
        let f = ols_fit(&DMatrix::zeros(3, 0), &y).unwrap();
        assert_eq!(f.intercept, 3.0);
        assert_abs_diff_eq!(f.rss, 4.0 + 1.0 + 9.0);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let f = ols_fit(&x, &y).unwrap();
        // normal equations on [1 | X]
        let mut a = DMatrix::from_element(30, 5, 1.0);
        a.view_mut((0, 1), (30, 4)).copy_from(&x);
        let beta = (a.transpose() * &a).lu().solve(&(a.transpose() * &y)).unwrap();
        assert_abs_diff_eq!(f.intercept, beta[0], epsilon = 1e-8);
        for j in 0..4 {
            assert_abs_diff_eq!(f.coefs[j], beta[j + 1], epsilon = 1e-8);
        }
        assert!(f.rss >= 0.0);
    }

    #[test]
    fn collinear_columns_are_singular() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 2.0, 5.0]);
        assert!(matches!(ols_fit(&x, &y), Err(Error::SingularDesign(_))));
        let constant = DMatrix::from_element(4, 1, 2.0);
        assert!(matches!(ols_fit(&constant, &y), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0]);
        assert!(matches!(ols_fit(&x, &y), Err(Error::SingularDesign(_))));
    }
}
