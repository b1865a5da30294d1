//! Dense f64 matrices, activations, the stable BCE loss and a central
//! finite-difference gradient checker.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("row 0 has {cols} columns"),
                    format!("row {i} has {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape("add_assign", self.shape_str(), other.shape_str()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// `y = self · x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.rows];
        self.matvec_acc(x, &mut y)?;
        Ok(y)
    }

    /// `y += self · x`.
    pub fn matvec_acc(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.cols || y.len() != self.rows {
            return Err(Error::shape(
                "matvec",
                self.shape_str(),
                format!("x[{}] -> y[{}]", x.len(), y.len()),
            ));
        }
        for (r, out) in y.iter_mut().enumerate() {
            *out += dot(self.row(r), x);
        }
        Ok(())
    }

    /// `y += selfᵀ · x`.
    pub fn matvec_t_acc(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.rows || y.len() != self.cols {
            return Err(Error::shape(
                "matvec_t",
                self.shape_str(),
                format!("x[{}] -> y[{}]", x.len(), y.len()),
            ));
        }
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for (out, &w) in y.iter_mut().zip(self.row(r)) {
                *out += w * xr;
            }
        }
        Ok(())
    }

    /// `self += u · vᵀ`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) -> Result<()> {
        if u.len() != self.rows || v.len() != self.cols {
            return Err(Error::shape(
                "add_outer",
                self.shape_str(),
                format!("{}x{}", u.len(), v.len()),
            ));
        }
        for (r, &ur) in u.iter().enumerate() {
            if ur == 0.0 {
                continue;
            }
            for (out, &vc) in self.row_mut(r).iter_mut().zip(v) {
                *out += ur * vc;
            }
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape("matmul", a.shape_str(), b.shape_str()));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            for (o, &bkj) in out.row_mut(i).iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Logistic function. Evaluated so that `exp` only ever sees a non-positive
/// argument, which keeps it overflow-free for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

/// Binary cross-entropy on a logit, in the form
/// `max(x, 0) - x·y + ln(1 + e^{-|x|})`.
pub fn bce_with_logits(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// BCE on a probability, with log terms clamped at -100 so that saturated
/// probabilities yield a large finite loss instead of infinity.
pub fn bce_prob(prob: f64, target: f64) -> f64 {
    let log_p = prob.ln().max(-100.0);
    let log_q = (1.0 - prob).ln().max(-100.0);
    -(target * log_p + (1.0 - target) * log_q)
}

/// Mean of [`bce_with_logits`] over pairs.
pub fn mean_bce_with_logits(logits: &[f64], targets: &[f64]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::shape(
            "mean_bce_with_logits",
            format!("{} logits", logits.len()),
            format!("{} targets", targets.len()),
        ));
    }
    if logits.is_empty() {
        return Err(Error::EmptyLossWindow("batch".into()));
    }
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| bce_with_logits(x, y))
        .sum();
    Ok(total / logits.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter index where the maximum occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compare an analytic gradient against central differences
/// `(L(θ+ε) − L(θ−ε)) / 2ε` on every entry. The error per entry is
/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F>(
    loss: F,
    params: &[f64],
    analytic: &[f64],
    epsilon: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::shape(
            "finite_diff_check",
            format!("{} params", params.len()),
            format!("{} gradient entries", analytic.len()),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
    };
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + epsilon;
        let plus = loss(&theta);
        theta[i] = orig - epsilon;
        let minus = loss(&theta);
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at perturbed parameter {i}: L(+)={plus}, L(-)={minus}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if i == 0 || rel > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: rel,
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matmul_identity_and_zero() {
        let m = Matrix::from_rows(&[vec![1.5, -2.0], vec![0.25, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &m).unwrap(), m);
        assert_eq!(matmul(&Matrix::zeros(2, 2), &m).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn matmul_hand_computed() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), (2, 1));
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("2x3") && msg.matches("2x3").count() == 2, "{msg}");
    }

    #[test]
    fn matrix_new_rejects_bad_length() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        for x in [1e6, -1e6, 745.0, -745.0] {
            let s = sigmoid(x);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn bce_values() {
        assert!((bce_with_logits(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let sat = bce_with_logits(1000.0, 1.0);
        assert!(sat.is_finite() && sat.abs() < 1e-300);
        // ln(1 + e^2) evaluated to high precision.
        assert!((bce_with_logits(-2.0, 1.0) - 2.126_928_011_042_972_5).abs() < 1e-12);
        assert!(bce_with_logits(-1000.0, 1.0).is_finite());
    }

    #[test]
    fn bce_prob_is_clamped() {
        assert_eq!(bce_prob(0.0, 1.0), 100.0);
        assert_eq!(bce_prob(1.0, 1.0), 0.0);
        assert!((bce_prob(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn mean_bce_rejects_empty() {
        assert!(matches!(mean_bce_with_logits(&[], &[]), Err(Error::EmptyLossWindow(_))));
    }

    #[test]
    fn grad_check_quadratic_and_constant() {
        let r = finite_diff_check(|t| t[0] * t[0], &[3.0], &[6.0], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert!((r.numeric - 6.0).abs() < 1e-8);
        let r = finite_diff_check(|_| 4.2, &[1.0, 2.0], &[0.0, 0.0], 1e-5).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.numeric, 0.0);
    }

    #[test]
    fn grad_check_flags_wrong_gradient() {
        let r = finite_diff_check(|t| t[0] * t[0] + t[1], &[3.0, 0.0], &[6.0, 2.0], 1e-5).unwrap();
        assert_eq!(r.worst_index, 1);
        assert!((r.max_rel_error - 0.5).abs() < 1e-8);
    }

    #[test]
    fn grad_check_errors_on_non_finite() {
        let err = finite_diff_check(|t| (t[0] - 1e-5).ln(), &[0.0], &[0.0], 1e-5);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0f64..3.0, rows * cols)
            .prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn sigmoid_antisymmetric_and_bounded(x in -36.0f64..36.0) {
            // Beyond ~36.7, 1 - σ(x) is below half an ulp of 1.0 and rounds to 1.
            let s = sigmoid(x);
            prop_assert!(s > 0.0 && s < 1.0);
            prop_assert!((sigmoid(-x) - (1.0 - s)).abs() < 1e-15);
        }

        #[test]
        fn tanh_odd(x in -50.0f64..50.0) {
            prop_assert_eq!(tanh(0.0), 0.0);
            prop_assert_eq!(tanh(-x), -tanh(x));
        }

        #[test]
        fn bce_label_flip_symmetry(x in -1e4f64..1e4) {
            let a = bce_with_logits(x, 1.0);
            let b = bce_with_logits(-x, 0.0);
            prop_assert!(a >= 0.0 && a.is_finite());
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn matmul_associative(
            a in small_matrix(3, 4),
            b in small_matrix(4, 2),
            c in small_matrix(2, 5),
        ) {
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (l, r) in left.data().iter().zip(right.data()) {
                prop_assert!((l - r).abs() <= 1e-9 * scale);
            }
        }
    }
}
