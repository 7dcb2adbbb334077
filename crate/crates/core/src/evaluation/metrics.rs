use crate::error::{Error, Result};

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dim("r2 predictions", y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(Error::Data("r2 needs at least two samples".into()));
    }
    let mean = crate::tensor::mean(y_true);
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::Data("r2 is undefined for a constant target".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dim("rmse predictions", y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::Data("rmse of an empty sequence".into()));
    }
    let mse = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / y_true.len() as f64;
    Ok(mse.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn r2_examples() {
        let y = [1.0, 4.0, 2.0, 9.0];
        assert_eq!(r2_score(&y, &y).unwrap(), 1.0);
        let m = crate::tensor::mean(&y);
        assert!(r2_score(&y, &[m; 4]).unwrap().abs() < 1e-15);
        // a value like 0.666 is representable: SS_res/SS_tot = 0.334
        let y = [0.0, 1.0];
        let d = (0.334_f64 * 0.5 / 2.0).sqrt();
        let r = r2_score(&y, &[d, 1.0 - d]).unwrap();
        assert!((r - 0.666).abs() < 1e-12);
        assert!(r2_score(&[3.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r - 12.5_f64.sqrt()).abs() < 1e-15);
        assert!((r - 3.53553).abs() < 1e-5);
        assert!(rmse(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn metric_bounds(pairs in proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..40), a in -5.0..5.0f64) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(r) = r2_score(&y, &p) {
                prop_assert!(r <= 1.0);
            }
            let e = rmse(&y, &p).unwrap();
            prop_assert!(e >= 0.0);
            let ys: Vec<f64> = y.iter().map(|v| a * v).collect();
            let ps: Vec<f64> = p.iter().map(|v| a * v).collect();
            prop_assert!((rmse(&ys, &ps).unwrap() - a.abs() * e).abs() < 1e-9 * (1.0 + e));
        }
    }
}
