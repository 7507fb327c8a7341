use super::{Parameters, Tensor};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero compare on absolute error instead of dividing by zero.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    fn record(&mut self, name: &str, i: usize, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        self.checked += 1;
        self.max_abs_error = self.max_abs_error.max(abs);
        if rel > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(rel);
            self.worst = Some((name.to_string(), i));
        }
    }

    fn empty() -> Self {
        Self {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst: None,
            checked: 0,
        }
    }
}

/// Central differences `(f(x+h) - f(x-h)) / 2h` over every coordinate of a single tensor.
pub fn grad_check_fn(
    mut f: impl FnMut(&Tensor) -> f64,
    at: &Tensor,
    analytic: &Tensor,
    h: f64,
) -> GradCheckReport {
    let mut rep = GradCheckReport::empty();
    let mut x = at.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = f(&x);
        x.data_mut()[i] = orig - h;
        let down = f(&x);
        x.data_mut()[i] = orig;
        rep.record("x", i, analytic.data()[i], (up - down) / (2.0 * h));
    }
    rep
}

/// Central-difference check of every coordinate of every tensor in `params`.
pub fn grad_check<P: Parameters>(
    mut f: impl FnMut(&P) -> f64,
    params: &P,
    analytic: &P,
    h: f64,
) -> GradCheckReport {
    let mut rep = GradCheckReport::empty();
    let mut p = params.clone();
    let grads: Vec<(String, Vec<f64>)> = analytic
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    for (k, (name, g)) in grads.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let orig = p.named()[k].1.data()[i];
            p.named_mut()[k].1.data_mut()[i] = orig + h;
            let up = f(&p);
            p.named_mut()[k].1.data_mut()[i] = orig - h;
            let down = f(&p);
            p.named_mut()[k].1.data_mut()[i] = orig;
            rep.record(name, i, a, (up - down) / (2.0 * h));
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::from_vec(&[4], vec![0.5, -1.25, 3.0, 0.0]).unwrap();
        let g = x.map(|v| 2.0 * v);
        let rep = grad_check_fn(|t| t.data().iter().map(|v| v * v).sum(), &x, &g, 1e-5);
        assert!(rep.max_abs_error < 1e-8, "{rep:?}");
        assert_eq!(rep.checked, 4);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let g = Tensor::from_vec(&[2], vec![2.0, 5.0]).unwrap();
        let rep = grad_check_fn(|t| t.data().iter().map(|v| v * v).sum(), &x, &g, 1e-5);
        assert!(!rep.passes(1e-3));
        assert_eq!(rep.worst, Some(("x".to_string(), 1)));
    }
}
