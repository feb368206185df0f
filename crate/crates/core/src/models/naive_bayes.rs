use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes; index 0 of each array is class 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

impl NaiveBayesParams {
    fn log_joint(&self, class: usize, row: &[f64]) -> f64 {
        let ll: f64 = row
            .iter()
            .zip(self.means[class].iter().zip(&self.variances[class]))
            .map(|(x, (m, v))| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v))
            .sum();
        self.priors[class].ln() + ll
    }

    /// Posterior of class 1 via log-sum-exp.
    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| {
                let l0 = self.log_joint(0, r);
                let l1 = self.log_joint(1, r);
                let m = l0.max(l1);
                let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
                e1 / (e0 + e1)
            })
            .collect()
    }
}

pub(crate) fn fit(x: &Matrix, y: &[u8], w: &[f64]) -> NaiveBayesParams {
    let d = x.cols();
    let mut mass = [0.0; 2];
    let mut means = [vec![0.0; d], vec![0.0; d]];
    for (r, (&yi, &wi)) in x.iter_rows().zip(y.iter().zip(w)) {
        let c = usize::from(yi);
        mass[c] += wi;
        for (m, v) in means[c].iter_mut().zip(r) {
            *m += wi * v;
        }
    }
    for c in 0..2 {
        for m in &mut means[c] {
            *m /= mass[c];
        }
    }
    let mut variances = [vec![0.0; d], vec![0.0; d]];
    for (r, (&yi, &wi)) in x.iter_rows().zip(y.iter().zip(w)) {
        let c = usize::from(yi);
        for ((s, v), m) in variances[c].iter_mut().zip(r).zip(&means[c]) {
            *s += wi * (v - m).powi(2);
        }
    }
    for c in 0..2 {
        for s in &mut variances[c] {
            *s = (*s / mass[c]).max(VARIANCE_FLOOR);
        }
    }
    let total = mass[0] + mass[1];
    NaiveBayesParams {
        priors: [mass[0] / total, mass[1] / total],
        means,
        variances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_classes_give_half_at_midpoint() {
        let x = Matrix::from_rows(&[[-2.0], [-1.0], [-3.0], [2.0], [1.0], [3.0]]).unwrap();
        let p = fit(&x, &[0, 0, 0, 1, 1, 1], &[1.0; 6]);
        let mid = Matrix::from_rows(&[[0.0]]).unwrap();
        assert!((p.predict_proba(&mid)[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn uniform_weight_scale_is_invisible() {
        let x = Matrix::from_rows(&[[0.5, 1.0], [1.5, -1.0], [2.0, 0.0], [-1.0, 2.0]]).unwrap();
        let y = [0, 1, 1, 0];
        assert_eq!(fit(&x, &y, &[2.0; 4]), fit(&x, &y, &[1.0; 4]));
    }

    #[test]
    fn constant_feature_hits_variance_floor() {
        let x = Matrix::from_rows(&[[1.0, 0.1], [1.0, 0.4], [1.0, 0.9], [1.0, 0.7]]).unwrap();
        let p = fit(&x, &[0, 0, 1, 1], &[1.0; 4]);
        assert_eq!(p.variances[0][0], VARIANCE_FLOOR);
        assert!(p.predict_proba(&x).iter().all(|v| v.is_finite()));
    }
}
