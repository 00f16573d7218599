//! Adam with bias correction, one state per parameter group.

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Parameters per row; rows can be selected or appended when the
    /// Gaussian count changes.
    pub width: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(len: usize, width: usize) -> Self {
        assert!(width > 0 && len.is_multiple_of(width), "state length must be a multiple of the row width");
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            width,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One update of `params` along `grads` with learning rate `lr`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.update_with(params, grads, |_| lr);
    }

    /// Like [`Adam::update`] with one learning rate per column of a row.
    pub fn update_columns(&mut self, params: &mut [f64], grads: &[f64], lrs: &[f64]) {
        assert_eq!(lrs.len(), self.width);
        let w = self.width;
        self.update_with(params, grads, |i| lrs[i % w]);
    }

    fn update_with(&mut self, params: &mut [f64], grads: &[f64], lr: impl Fn(usize) -> f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr(i) * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    /// Keeps the moments of the given rows, in order.
    pub fn select_rows(&mut self, rows: &[usize]) {
        let w = self.width;
        let pick = |v: &[f64]| rows.iter().flat_map(|&r| v[r * w..(r + 1) * w].iter().copied()).collect();
        self.m = pick(&self.m);
        self.v = pick(&self.v);
    }

    /// Appends `count` rows with zero moments.
    pub fn push_rows(&mut self, count: usize) {
        let extra = count * self.width;
        self.m.extend(std::iter::repeat_n(0.0, extra));
        self.v.extend(std::iter::repeat_n(0.0, extra));
    }

    /// Clears the moments of one row (used after an opacity reset).
    pub fn reset_row(&mut self, row: usize) {
        let w = self.width;
        self.m[row * w..(row + 1) * w].iter_mut().for_each(|x| *x = 0.0);
        self.v[row * w..(row + 1) * w].iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Exponential interpolation from `start` to `end` over `steps`, used for the
/// position learning rate.
pub fn exp_decay(start: f64, end: f64, step: usize, steps: usize) -> f64 {
    if steps == 0 {
        return end;
    }
    let t = (step as f64 / steps as f64).clamp(0.0, 1.0);
    (start.ln() * (1.0 - t) + end.ln() * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut a = Adam::new(3, 1);
        let mut p = [1.0, -2.0, 3.5];
        for _ in 0..5 {
            a.update(&mut p, &[0.0; 3], 0.1);
        }
        assert_eq!(p, [1.0, -2.0, 3.5]);
    }

    #[test]
    fn row_bookkeeping() {
        let mut a = Adam::new(6, 2);
        a.m = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        a.select_rows(&[2, 0]);
        assert_eq!(a.m, vec![5.0, 6.0, 1.0, 2.0]);
        a.push_rows(1);
        assert_eq!(a.len(), 6);
        assert_eq!(&a.m[4..], &[0.0, 0.0]);
    }

    #[test]
    fn decay_endpoints() {
        assert!((exp_decay(1e-2, 1e-4, 0, 100) - 1e-2).abs() < 1e-15);
        assert!((exp_decay(1e-2, 1e-4, 100, 100) - 1e-4).abs() < 1e-15);
        assert!((exp_decay(1e-2, 1e-4, 50, 100) - 1e-3).abs() < 1e-15);
    }
}
