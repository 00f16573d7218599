//! Central finite-difference comparison.

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-3;
pub const MIN_GRAD: f64 = 1e-6;

/// Running tally of gradient comparisons.
#[derive(Clone, Debug, Default)]
pub struct GradTally {
    pub checked: usize,
    /// Entries whose finite difference straddles a kink or jump.
    pub skipped: usize,
    /// Entries below the magnitude floor.
    pub tiny: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

impl GradTally {
    /// Compares `analytic` with the central difference of `loss(δ)`, the loss
    /// with the parameter shifted by δ.
    ///
    /// A second difference at half the step flags non-smooth points: for a
    /// smooth loss the two estimates agree to O(h²), across a kink or jump
    /// they do not.
    pub fn compare(&mut self, label: &str, analytic: f64, loss: impl Fn(f64) -> f64) {
        let h = STEP;
        let c1 = (loss(h) - loss(-h)) / (2.0 * h);
        let c2 = (loss(h / 2.0) - loss(-h / 2.0)) / h;
        let scale = analytic.abs().max(c1.abs());
        if scale <= MIN_GRAD {
            self.tiny += 1;
            return;
        }
        if (c1 - c2).abs() > 1e-4 * c1.abs().max(c2.abs()) + 1e-9 {
            self.skipped += 1;
            return;
        }
        self.checked += 1;
        let rel = (analytic - c1).abs() / scale;
        self.worst_rel = self.worst_rel.max(rel);
        if rel >= REL_TOL && self.failures.len() < 20 {
            self.failures.push(format!("{label}: analytic {analytic:.9e} vs numeric {c1:.9e} (rel {rel:.2e})"));
        } else if rel >= REL_TOL {
            self.failures.push(String::new());
        }
    }

    pub fn merge(&mut self, other: GradTally) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.tiny += other.tiny;
        self.worst_rel = self.worst_rel.max(other.worst_rel);
        self.failures.extend(other.failures);
    }

    pub fn summary(&self) -> String {
        let shown: Vec<&String> = self.failures.iter().filter(|f| !f.is_empty()).take(3).collect();
        format!(
            "{} checked, {} failed, worst rel {:.2e}, {} skipped at kinks, {} below 1e-6{}",
            self.checked,
            self.failures.len(),
            self.worst_rel,
            self.skipped,
            self.tiny,
            if shown.is_empty() {
                String::new()
            } else {
                format!("; {}", shown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; "))
            }
        )
    }
}
