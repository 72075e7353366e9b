//! Gaussian releases whose number and timing are chosen adaptively, under a
//! declared bound on the total sensitivity.
//!
//! Each release is charged a share of the budget proportional to its own
//! sensitivity, `ρ_k = ρ · Δ_k / Δ_joint`, and noised with
//! `σ_k² = Δ_k² / (2ρ_k)`. Zero-sensitivity releases (constant functions)
//! are free. A release that would push the running sensitivity past the
//! declared joint bound is refused.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DpError, PrivacyBudget, gaussian_sigma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseScale {
    pub sensitivity: f64,
    /// zCDP cost charged for this release.
    pub rho: f64,
    /// Per-coordinate noise standard deviation.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveGaussianSchedule {
    budget: PrivacyBudget,
    joint_sensitivity: f64,
    used_sensitivity: f64,
    spent: f64,
    releases: usize,
}

impl AdaptiveGaussianSchedule {
    pub fn new(budget: PrivacyBudget, joint_sensitivity: f64) -> Result<Self, DpError> {
        if !(joint_sensitivity.is_finite() && joint_sensitivity >= 0.0) {
            return Err(DpError::InvalidSensitivity(joint_sensitivity));
        }
        Ok(Self {
            budget,
            joint_sensitivity,
            used_sensitivity: 0.0,
            spent: 0.0,
            releases: 0,
        })
    }

    /// Room for `max_releases` releases of sensitivity `per_release` each.
    pub fn uniform(budget: PrivacyBudget, max_releases: usize, per_release: f64) -> Result<Self, DpError> {
        Self::new(budget, max_releases as f64 * per_release)
    }

    pub fn budget(&self) -> PrivacyBudget {
        self.budget
    }

    pub fn joint_sensitivity(&self) -> f64 {
        self.joint_sensitivity
    }

    pub fn used_sensitivity(&self) -> f64 {
        self.used_sensitivity
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    /// Number of nonzero-sensitivity releases so far.
    pub fn releases(&self) -> usize {
        self.releases
    }

    /// Scale for the next release. On error nothing is consumed.
    pub fn next_release(&mut self, sensitivity: f64) -> Result<ReleaseScale, DpError> {
        if !(sensitivity.is_finite() && sensitivity >= 0.0) {
            return Err(DpError::InvalidSensitivity(sensitivity));
        }
        if sensitivity == 0.0 {
            return Ok(ReleaseScale {
                sensitivity,
                rho: 0.0,
                sigma: 0.0,
            });
        }
        let used = self.used_sensitivity + sensitivity;
        if used > self.joint_sensitivity {
            return Err(DpError::JointSensitivityExceeded {
                declared: self.joint_sensitivity,
                requested: used,
            });
        }
        if self.budget.is_zero() {
            return Err(DpError::NonpositiveBudget);
        }
        let target = (self.budget.rho() * (used / self.joint_sensitivity)).min(self.budget.rho());
        let mut rho = target - self.spent;
        while rho > 0.0 && self.spent + rho > target {
            rho = rho.next_down();
        }
        if !(rho > 0.0) {
            return Err(DpError::NonpositiveBudget);
        }
        self.used_sensitivity = used;
        self.spent += rho;
        self.releases += 1;
        Ok(ReleaseScale {
            sensitivity,
            rho,
            sigma: gaussian_sigma(sensitivity, rho),
        })
    }
}

/// Plans noise scales for a whole sequence of releases at once.
pub fn adaptive_release_schedule(
    sensitivities: &[f64],
    budget: PrivacyBudget,
    joint_sensitivity: f64,
) -> Result<Vec<ReleaseScale>, DpError> {
    let mut s = AdaptiveGaussianSchedule::new(budget, joint_sensitivity)?;
    sensitivities.iter().map(|&d| s.next_release(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_sensitivity_costs_nothing() {
        let plan = adaptive_release_schedule(&[0.0; 5], PrivacyBudget::new(1.0).unwrap(), 0.0).unwrap();
        assert!(plan.iter().all(|r| r.rho == 0.0 && r.sigma == 0.0));
    }

    #[test]
    fn uniform_allocation() {
        // H = 2: three releases of Δ = 3H = 6 under ρ = 1
        let mut s = AdaptiveGaussianSchedule::uniform(PrivacyBudget::new(1.0).unwrap(), 3, 6.0).unwrap();
        let mut total = 0.0;
        for _ in 0..3 {
            let r = s.next_release(6.0).unwrap();
            assert!((r.rho - 1.0 / 3.0).abs() < 1e-15);
            assert!((r.sigma * r.sigma - 54.0).abs() < 1e-9);
            total += r.rho;
        }
        assert!(total <= 1.0 && s.spent() <= 1.0);
        assert!(matches!(
            s.next_release(6.0),
            Err(DpError::JointSensitivityExceeded { .. })
        ));
        // constant-function releases remain free after the cap
        assert_eq!(s.next_release(0.0).unwrap().rho, 0.0);
    }

    #[test]
    fn never_overspends() {
        for n in 1..200 {
            for rho in [1.0, 0.1, 0.3, 7.7] {
                let mut s = AdaptiveGaussianSchedule::uniform(PrivacyBudget::new(rho).unwrap(), n, 5.0).unwrap();
                for _ in 0..n {
                    s.next_release(5.0).unwrap();
                }
                assert!(s.spent() <= rho);
                assert!(s.next_release(5.0).is_err());
            }
        }
    }

    #[test]
    fn sensitivity_weighted_shares() {
        let plan = adaptive_release_schedule(&[1.0, 3.0], PrivacyBudget::new(2.0).unwrap(), 4.0).unwrap();
        assert!((plan[0].rho - 0.5).abs() < 1e-15);
        assert!((plan[1].rho - 1.5).abs() < 1e-15);
        // σ² = Δ·Δ_joint/(2ρ) for every release
        for p in &plan {
            assert!((p.sigma * p.sigma - p.sensitivity * 4.0 / 4.0).abs() < 1e-12);
        }
        let err = adaptive_release_schedule(&vec![1.0; 5], PrivacyBudget::new(2.0).unwrap(), 4.0);
        assert!(err.is_err());
    }
}
