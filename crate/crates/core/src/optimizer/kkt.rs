use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{cap_bits, effective_snr_lti, relay_power_of, ChannelParams, ModeAllocation};
use crate::error::Result;

/// Band fraction above which a mode counts as active.
pub const ACTIVE_TAU: f64 = 1e-6;

const FD_STEP: f64 = 1e-6;

/// Lagrange multipliers and KKT residuals of a mode allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KKTReport {
    /// Source-power multiplier, in bits per unit of power fraction.
    pub alpha: f64,
    /// Relay-power multiplier, in bits per unit of relay power.
    pub beta: f64,
    /// Band multiplier.
    pub nu: f64,
    pub max_stationarity_residual: f64,
    pub complementary_slackness_residual: f64,
}

impl KKTReport {
    pub fn max_residual(&self) -> f64 {
        self.max_stationarity_residual
            .max(self.complementary_slackness_residual)
    }
}

fn central(f: impl Fn(f64) -> f64, x: f64, scale: f64) -> f64 {
    let h = FD_STEP * x.abs().max(scale);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn forward(f: impl Fn(f64) -> f64, x: f64, scale: f64) -> f64 {
    let h = FD_STEP * x.abs().max(scale);
    (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
}

/// One linearized stationarity condition `g − coef·(α, β, ν) = 0`, or
/// `≤ 0` for a variable resting on its lower bound.
struct Row {
    coef: [f64; 3],
    g: f64,
    bound: bool,
}

impl Row {
    fn violation(&self, x: &[f64; 3]) -> f64 {
        let r = self.g - self.coef[0] * x[0] - self.coef[1] * x[1] - self.coef[2] * x[2];
        if self.bound {
            r.max(0.0)
        } else {
            r.abs()
        }
    }
}

/// Least-squares multipliers; columns with no support are pinned to zero.
fn least_squares(rows: &[Row], fixed_beta: Option<f64>) -> [f64; 3] {
    let free: Vec<usize> = (0..3)
        .filter(|&k| !(k == 1 && fixed_beta.is_some()))
        .filter(|&k| rows.iter().any(|r| !r.bound && r.coef[k] != 0.0))
        .collect();
    let beta = fixed_beta.unwrap_or(0.0);
    let m = free.len();
    let mut gram = vec![vec![0.0; m + 1]; m];
    for r in rows.iter().filter(|r| !r.bound) {
        let rhs = r.g - r.coef[1] * if fixed_beta.is_some() { beta } else { 0.0 };
        for (p, &i) in free.iter().enumerate() {
            for (q, &k) in free.iter().enumerate() {
                gram[p][q] += r.coef[i] * r.coef[k];
            }
            gram[p][m] += r.coef[i] * rhs;
        }
    }
    // Gaussian elimination with partial pivoting on the small normal system.
    let trace: f64 = (0..m).map(|p| gram[p][p]).sum();
    let mut pinned = vec![false; m];
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &k| gram[i][col].abs().total_cmp(&gram[k][col].abs()))
            .unwrap();
        if gram[piv][col].abs() <= 1e-14 * trace.max(f64::MIN_POSITIVE) {
            pinned[col] = true;
            continue;
        }
        gram.swap(col, piv);
        for row in 0..m {
            if row != col {
                let factor = gram[row][col] / gram[col][col];
                for k in col..=m {
                    gram[row][k] -= factor * gram[col][k];
                }
            }
        }
    }
    let mut x = [0.0, beta, 0.0];
    for (p, &k) in free.iter().enumerate() {
        if !pinned[p] {
            x[k] = gram[p][m] / gram[p][p];
        }
    }
    x
}

/// Recovers `(α, β, ν)` from the stationarity equations of the active modes
/// and reports how far the allocation is from satisfying the KKT system.
///
/// Derivatives are central finite differences with a relative step of 1e-6.
pub fn kkt_residual(params: &ChannelParams, alloc: &ModeAllocation) -> Result<KKTReport> {
    alloc.validate(params, usize::MAX)?;
    let sigma2 = params.sigma2;
    let a2p = params.a.norm_sqr() * params.power;
    let lam_scale = params.gain_scale();

    let mut rows = Vec::new();
    for j in 0..alloc.tau.len() {
        let (tau, theta) = (alloc.tau[j], alloc.theta[j]);
        if tau <= ACTIVE_TAU {
            continue;
        }
        let lam = if j == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            alloc.lambda[j - 1]
        };
        let l2 = lam.norm_sqr();
        let f = |t: f64, th: f64, l: Complex64| t * cap_bits(th * effective_snr_lti(params, l) / t);

        // d/dθ: f_θ = α + β|λ|²|a|²P, or ≤ on an unpowered band
        let bound = theta <= ACTIVE_TAU * tau;
        rows.push(Row {
            coef: [1.0, l2 * a2p, 0.0],
            g: if bound {
                forward(|th| f(tau, th, lam), 0.0, 1e-6)
            } else {
                central(|th| f(tau, th, lam), theta, 1e-6)
            },
            bound,
        });
        // d/dτ: f_τ = ν + β|λ|²σ²
        rows.push(Row {
            coef: [0.0, l2 * sigma2, 1.0],
            g: central(|t| f(t, theta, lam), tau, 1e-6),
            bound: false,
        });
        if j > 0 {
            // d/dλ: f_λ = β ∂/∂λ |λ|²(σ²τ + |a|²Pθ)
            let weight = sigma2 * tau + a2p * theta;
            rows.push(Row {
                coef: [0.0, 2.0 * lam.re * weight, 0.0],
                g: central(|x| f(tau, theta, Complex64::new(x, lam.im)), lam.re, lam_scale),
                bound: false,
            });
            rows.push(Row {
                coef: [0.0, 2.0 * lam.im * weight, 0.0],
                g: central(|y| f(tau, theta, Complex64::new(lam.re, y)), lam.im, lam_scale),
                bound: false,
            });
        }
    }

    let mut mult = least_squares(&rows, None);
    if mult[1] < 0.0 {
        mult = least_squares(&rows, Some(0.0));
    }
    let [alpha, beta, nu] = mult;
    let stationarity = rows
        .iter()
        .map(|r| r.violation(&mult))
        .fold(0.0, f64::max);
    let slack = params.relay_budget() - relay_power_of(params, alloc);
    let slackness = (beta * slack).abs() + (-slack).max(0.0);
    Ok(KKTReport {
        alpha,
        beta,
        nu,
        max_stationarity_residual: stationarity,
        complementary_slackness_residual: slackness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    #[test]
    fn flat_channel_waterfilling() {
        let p = ChannelParams::real(1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let r = kkt_residual(&p, &ModeAllocation::mode_zero()).unwrap();
        assert!(r.max_residual() <= 1e-8, "{r:?}");
        // Marginal rate of the flat channel: s / (2 ln2 (1+s)) at s = 1.
        assert_relative_eq!(r.alpha, 1.0 / (4.0 * LN_2), epsilon = 1e-8);
        assert_eq!(r.beta, 0.0);
    }

    #[test]
    fn single_mode_at_unconstrained_peak() {
        let p = ChannelParams::real(1.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        let r = kkt_residual(&p, &ModeAllocation::single_mode(0.5.into())).unwrap();
        assert!(r.max_residual() <= 1e-7, "{r:?}");
        assert!(r.beta.abs() <= 1e-7);
    }

    #[test]
    fn off_peak_gain_leaves_residual() {
        // The gain 0.3 is below the peak at 0.5 and uses less than the budget,
        // so no nonnegative relay price explains it.
        let p = ChannelParams::real(1.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        let r = kkt_residual(&p, &ModeAllocation::single_mode(0.3.into())).unwrap();
        assert!(r.max_residual() > 1e-3, "{r:?}");
    }
}
