//! Differentiable models trained by the federated loop.

use super::data::UserData;

/// A parametric loss with an exact gradient.
pub trait Model: Sync {
    /// Number of parameters `D`.
    fn dim(&self) -> usize;

    /// Mean loss over `data`, including any regularizer.
    fn loss(&self, w: &[f64], data: &UserData) -> f64;

    /// Exact gradient of [`Model::loss`].
    fn gradient(&self, w: &[f64], data: &UserData) -> Vec<f64>;

    /// Predicted class of one feature row, if the model classifies.
    fn predict(&self, _w: &[f64], _row: &[f64]) -> Option<usize> {
        None
    }
}

/// Multinomial logistic regression with an L2 penalty on the weights (not the
/// biases). Parameters are stored class by class as `[w_c (b entries), bias_c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub classes: usize,
    pub features: usize,
    pub l2: f64,
}

impl LogisticRegression {
    pub fn new(classes: usize, features: usize, l2: f64) -> Self {
        LogisticRegression { classes, features, l2 }
    }

    fn stride(&self) -> usize {
        self.features + 1
    }

    /// Class scores for one row.
    pub fn logits(&self, w: &[f64], row: &[f64]) -> Vec<f64> {
        let st = self.stride();
        (0..self.classes)
            .map(|c| {
                let p = &w[c * st..(c + 1) * st];
                p[..self.features].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + p[self.features]
            })
            .collect()
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let st = self.stride();
        let mut s = 0.0;
        for c in 0..self.classes {
            s += w[c * st..c * st + self.features].iter().map(|v| v * v).sum::<f64>();
        }
        0.5 * self.l2 * s
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Model for LogisticRegression {
    fn dim(&self) -> usize {
        self.classes * self.stride()
    }

    fn loss(&self, w: &[f64], data: &UserData) -> f64 {
        let n = data.len();
        let mut total = 0.0;
        for (row, &y) in data.rows().zip(&data.labels) {
            let z = self.logits(w, row);
            total += log_sum_exp(&z) - z[y];
        }
        total / n as f64 + self.penalty(w)
    }

    fn gradient(&self, w: &[f64], data: &UserData) -> Vec<f64> {
        let st = self.stride();
        let n = data.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for (row, &y) in data.rows().zip(&data.labels) {
            let z = self.logits(w, row);
            let lse = log_sum_exp(&z);
            for c in 0..self.classes {
                let coef = ((z[c] - lse).exp() - if c == y { 1.0 } else { 0.0 }) / n;
                let gc = &mut g[c * st..(c + 1) * st];
                for (gi, xi) in gc[..self.features].iter_mut().zip(row) {
                    *gi += coef * xi;
                }
                gc[self.features] += coef;
            }
        }
        for c in 0..self.classes {
            for j in 0..self.features {
                g[c * st + j] += self.l2 * w[c * st + j];
            }
        }
        g
    }

    fn predict(&self, w: &[f64], row: &[f64]) -> Option<usize> {
        let z = self.logits(w, row);
        if z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        (0..z.len()).max_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a)))
    }
}

/// Fraction of rows whose prediction matches the label; rows the model cannot
/// classify count as wrong.
pub fn accuracy<M: Model + ?Sized>(model: &M, w: &[f64], data: &UserData) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let hits = data
        .rows()
        .zip(&data.labels)
        .filter(|(row, &y)| model.predict(w, row) == Some(y))
        .count();
    hits as f64 / data.len() as f64
}

/// `(1/S) Σ_u S_u F_u(w)`.
pub fn global_loss<M: Model + ?Sized>(model: &M, w: &[f64], users: &[UserData]) -> f64 {
    let total: usize = users.iter().map(|u| u.len()).sum();
    users
        .iter()
        .filter(|u| !u.is_empty())
        .map(|u| u.len() as f64 * model.loss(w, u))
        .sum::<f64>()
        / total as f64
}

/// `(1/S) Σ_u S_u ∇F_u(w)`.
pub fn global_gradient<M: Model + ?Sized>(model: &M, w: &[f64], users: &[UserData]) -> Vec<f64> {
    let total: usize = users.iter().map(|u| u.len()).sum();
    let mut g = vec![0.0; model.dim()];
    for u in users.iter().filter(|u| !u.is_empty()) {
        let s = u.len() as f64 / total as f64;
        for (a, b) in g.iter_mut().zip(model.gradient(w, u)) {
            *a += s * b;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> UserData {
        UserData::new(vec![1.0, 0.5, -0.3, 2.0, 0.0, 0.0], vec![0, 2, 1], 2).unwrap()
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let m = LogisticRegression::new(3, 2, 0.0);
        let w = vec![0.0; m.dim()];
        assert!((m.loss(&w, &toy()) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_sample_beats_uniform() {
        let m = LogisticRegression::new(3, 1, 0.0);
        let d = UserData::new(vec![1.0], vec![1], 1).unwrap();
        let mut w = vec![0.0; m.dim()];
        w[m.stride()] = 2.0;
        assert!(m.loss(&w, &d) < 3f64.ln());
        assert_eq!(m.predict(&w, &[1.0]), Some(1));
    }

    #[test]
    fn zero_features_touch_only_biases() {
        let m = LogisticRegression::new(3, 2, 1e-3);
        let d = UserData::new(vec![0.0; 4], vec![0, 1], 2).unwrap();
        let mut w = vec![0.0; m.dim()];
        for c in 0..3 {
            w[c * 3 + 2] = c as f64 * 0.3;
        }
        let g = m.gradient(&w, &d);
        for c in 0..3 {
            assert_eq!(g[c * 3], 0.0);
            assert_eq!(g[c * 3 + 1], 0.0);
        }
        assert!(g.iter().any(|v| *v != 0.0));
    }
}
