//! Flat-fading Gaussian relay channel: parameters, mode allocations and the
//! closed-form rate and SNR expressions the optimizers are built from.
//!
//! The source-destination gain is normalized to 1; `a` is the source-relay
//! gain and `b` the relay-destination gain. All rates are in bits per channel
//! use unless a [`RateUnit`] says otherwise.

use std::cmp::Ordering;
use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the two simplex constraints of a [`ModeAllocation`].
pub const SUM_TOL: f64 = 1e-9;

/// Absolute relay-power tolerance, scaled up for budgets larger than one.
pub const POWER_TOL: f64 = 1e-9;

/// Largest number of relay modes for real channels.
pub const MAX_REAL_MODES: usize = 7;

/// Largest number of relay modes for complex channels.
pub const MAX_COMPLEX_MODES: usize = 49;

/// Largest number of relay modes of frequency-division linear relaying.
pub const MAX_FD_MODES: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateUnit {
    #[default]
    Bits,
    Nats,
}

impl RateUnit {
    /// Converts a rate given in bits into this unit.
    pub fn from_bits(self, bits: f64) -> f64 {
        match self {
            RateUnit::Bits => bits,
            RateUnit::Nats => bits * LN_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RateUnit::Bits => "bits",
            RateUnit::Nats => "nats",
        }
    }
}

/// `½·log₂(1+x)` without domain checks.
#[inline]
pub(crate) fn cap_bits(x: f64) -> f64 {
    0.5 * x.ln_1p() / LN_2
}

/// Gaussian capacity `½·log₂(1+x)` of a channel with SNR `x`, in bits.
pub fn cap(x: f64) -> Result<f64> {
    cap_in(x, RateUnit::Bits)
}

pub fn cap_in(x: f64, unit: RateUnit) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("SNR must be nonnegative, got {x}")));
    }
    Ok(unit.from_bits(cap_bits(x)))
}

/// The five scalars that define a channel instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Source-relay gain.
    pub a: Complex64,
    /// Relay-destination gain.
    pub b: Complex64,
    /// Noise variance at relay and destination.
    pub sigma2: f64,
    /// Source power budget.
    #[serde(rename = "P")]
    pub power: f64,
    /// Relay power ratio; the relay budget is `gamma * power`.
    pub gamma: f64,
}

impl ChannelParams {
    pub fn new(a: Complex64, b: Complex64, sigma2: f64, power: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            a,
            b,
            sigma2,
            power,
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn real(a: f64, b: f64, sigma2: f64, power: f64, gamma: f64) -> Result<Self> {
        Self::new(a.into(), b.into(), sigma2, power, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, value: f64) -> Result<()> {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                })
            }
        }
        fn finite(name: &'static str, value: f64) -> Result<()> {
            if value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                })
            }
        }
        positive("sigma2", self.sigma2)?;
        positive("P", self.power)?;
        positive("gamma", self.gamma)?;
        finite("a.re", self.a.re)?;
        finite("a.im", self.a.im)?;
        finite("b.re", self.b.re)?;
        finite("b.im", self.b.im)
    }

    pub fn is_real(&self) -> bool {
        self.a.im == 0.0 && self.b.im == 0.0
    }

    /// Direct-path SNR `P/σ²`.
    pub fn snr(&self) -> f64 {
        self.power / self.sigma2
    }

    /// Relay power budget `γP`.
    pub fn relay_budget(&self) -> f64 {
        self.gamma * self.power
    }

    /// Natural scale of relay gains, `√(γP/σ²)`.
    pub fn gain_scale(&self) -> f64 {
        (self.relay_budget() / self.sigma2).sqrt()
    }

    pub(crate) fn power_tol(&self) -> f64 {
        POWER_TOL * self.relay_budget().max(1.0)
    }

    pub fn with_power(self, power: f64) -> Result<Self> {
        Self::new(self.a, self.b, self.sigma2, power, self.gamma)
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        Self::new(self.a, self.b, self.sigma2, self.power, gamma)
    }

    /// Scales source power and noise variance by the same factor.
    pub fn scaled(self, factor: f64) -> Result<Self> {
        Self::new(
            self.a,
            self.b,
            self.sigma2 * factor,
            self.power * factor,
            self.gamma,
        )
    }
}

/// Per-unit gain `|1+abλ|²/(1+|b|²|λ|²)` of a relay mode with gain `λ`.
#[inline]
pub fn lti_mode_gain(params: &ChannelParams, lam: Complex64) -> f64 {
    let num = (Complex64::new(1.0, 0.0) + params.a * params.b * lam).norm_sqr();
    num / (1.0 + params.b.norm_sqr() * lam.norm_sqr())
}

/// Effective SNR of a subband on which the relay acts as an instantaneous
/// amplify-and-forward relay with gain `lam`.
pub fn effective_snr_lti(params: &ChannelParams, lam: Complex64) -> f64 {
    params.snr() * lti_mode_gain(params, lam)
}

#[inline]
pub(crate) fn fd_mode_gain(params: &ChannelParams, eta: f64) -> f64 {
    let b2 = params.b.norm_sqr();
    1.0 + params.a.norm_sqr() * b2 * eta / (1.0 + b2 * eta)
}

/// Effective SNR of a frequency-division linear relaying subband with relay
/// power-gain `eta`.
pub fn effective_snr_fd(params: &ChannelParams, eta: f64) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("eta must be nonnegative, got {eta}")));
    }
    Ok(params.snr() * fd_mode_gain(params, eta))
}

/// Unit phasor aligning a relay gain with `conj(ab)`.
pub(crate) fn aligned_phase(params: &ChannelParams) -> Complex64 {
    let ab = params.a * params.b;
    if ab.norm() > 0.0 {
        ab.conj() / ab.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Gain that spends the whole relay budget on a single full-band mode.
pub fn full_power_iaf_gain(params: &ChannelParams) -> Complex64 {
    let magnitude =
        (params.relay_budget() / (params.a.norm_sqr() * params.power + params.sigma2)).sqrt();
    aligned_phase(params) * magnitude
}

/// Best single-mode relay gain.
///
/// Along the aligned ray the mode gain `(1+|ab|r)²/(1+|b|²r²)` peaks at
/// `r = |a|/|b|`, so the optimum is the smaller of that and the full-power
/// magnitude.
pub fn iaf_gain(params: &ChannelParams) -> Complex64 {
    let full = full_power_iaf_gain(params);
    let b = params.b.norm();
    if b == 0.0 {
        return full;
    }
    let peak = params.a.norm() / b;
    if peak < full.norm() {
        aligned_phase(params) * peak
    } else {
        full
    }
}

/// Rate of instantaneous amplify-and-forward with the best feasible gain.
pub fn iaf_rate(params: &ChannelParams) -> f64 {
    cap_bits(effective_snr_lti(params, iaf_gain(params)))
}

/// Rate of instantaneous amplify-and-forward that spends the full relay
/// budget.
pub fn iaf_rate_full_power(params: &ChannelParams) -> f64 {
    cap_bits(effective_snr_lti(params, full_power_iaf_gain(params)))
}

pub fn iaf_allocation(params: &ChannelParams) -> ModeAllocation {
    ModeAllocation::single_mode(iaf_gain(params))
}

/// Point-to-point rate without the relay.
pub fn direct_rate(params: &ChannelParams) -> f64 {
    cap_bits(params.snr())
}

/// Band fractions, power fractions and relay gains of a finite-mode relaying
/// strategy. Mode 0 is the relay-silent band and carries no gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeAllocation {
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<Complex64>,
}

impl ModeAllocation {
    /// Whole band and all power on the relay-silent mode.
    pub fn mode_zero() -> Self {
        Self {
            tau: vec![1.0],
            theta: vec![1.0],
            lambda: Vec::new(),
        }
    }

    /// Whole band and all power on one relay mode with gain `lam`.
    pub fn single_mode(lam: Complex64) -> Self {
        Self {
            tau: vec![0.0, 1.0],
            theta: vec![0.0, 1.0],
            lambda: vec![lam],
        }
    }

    pub fn num_relay_modes(&self) -> usize {
        self.lambda.len()
    }

    /// Relay modes whose band fraction exceeds `tol`.
    pub fn active_relay_modes(&self, tol: f64) -> usize {
        self.tau.iter().skip(1).filter(|&&t| t > tol).count()
    }

    pub fn is_real(&self) -> bool {
        self.lambda.iter().all(|l| l.im == 0.0)
    }

    /// Checks lengths, signs and the two simplex constraints.
    pub fn validate_shape(&self) -> Result<()> {
        if self.tau.len() != self.lambda.len() + 1 || self.theta.len() != self.tau.len() {
            return Err(Error::MalformedAllocation(format!(
                "expected {} band and power fractions for {} relay modes, got {} and {}",
                self.lambda.len() + 1,
                self.lambda.len(),
                self.tau.len(),
                self.theta.len()
            )));
        }
        if self.lambda.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
            return Err(Error::MalformedAllocation("non-finite relay gain".into()));
        }
        for (j, (&t, &th)) in self.tau.iter().zip(&self.theta).enumerate() {
            if !(t >= 0.0) || !(th >= 0.0) || !t.is_finite() || !th.is_finite() {
                return Err(Error::MalformedAllocation(format!(
                    "mode {j}: fractions must be finite and nonnegative (tau={t}, theta={th})"
                )));
            }
            if t == 0.0 && th > 0.0 {
                return Err(Error::MalformedAllocation(format!(
                    "mode {j}: power {th} on an empty band"
                )));
            }
        }
        let tau_sum: f64 = self.tau.iter().sum();
        let theta_sum: f64 = self.theta.iter().sum();
        if (tau_sum - 1.0).abs() > SUM_TOL {
            return Err(Error::MalformedAllocation(format!(
                "band fractions sum to {tau_sum}"
            )));
        }
        if (theta_sum - 1.0).abs() > SUM_TOL {
            return Err(Error::MalformedAllocation(format!(
                "power fractions sum to {theta_sum}"
            )));
        }
        Ok(())
    }

    /// Full feasibility check against a channel: shape, mode count and relay
    /// power.
    pub fn validate(&self, params: &ChannelParams, max_relay_modes: usize) -> Result<()> {
        self.validate_shape()?;
        let active = self.active_relay_modes(0.0);
        if active > max_relay_modes {
            return Err(Error::MalformedAllocation(format!(
                "{active} active relay modes, at most {max_relay_modes} allowed"
            )));
        }
        let excess = relay_power_of(params, self) - params.relay_budget();
        if excess > params.power_tol() {
            return Err(Error::ConstraintViolation {
                constraint: "relay power",
                violation: excess,
            });
        }
        Ok(())
    }

    /// Drops modes with band fraction at most `tol`, merges relay modes with
    /// identical gains and sorts gains descending by real part, then
    /// magnitude. Power on dropped modes moves to the strongest remaining
    /// mode so both simplexes stay normalized.
    pub fn pruned(&self, tol: f64) -> Self {
        let mut modes: Vec<(Complex64, f64, f64)> = Vec::new();
        let mut stray_tau = 0.0;
        let mut stray_theta = 0.0;
        for (j, lam) in self.lambda.iter().enumerate() {
            let (t, th) = (self.tau[j + 1], self.theta[j + 1]);
            if t <= tol {
                stray_tau += t;
                stray_theta += th;
                continue;
            }
            match modes.iter_mut().find(|(l, _, _)| l == lam) {
                Some(m) => {
                    m.1 += t;
                    m.2 += th;
                }
                None => modes.push((*lam, t, th)),
            }
        }
        modes.sort_by(|x, y| gain_order(&y.0, &x.0));
        let mut tau = vec![self.tau[0]];
        let mut theta = vec![self.theta[0]];
        let mut lambda = Vec::with_capacity(modes.len());
        for (l, t, th) in modes {
            lambda.push(l);
            tau.push(t);
            theta.push(th);
        }
        if stray_tau > 0.0 || stray_theta > 0.0 {
            // The dropped mass is at most `tol` per mode; hand it to the
            // widest remaining band.
            let widest = (0..tau.len())
                .max_by(|&i, &k| tau[i].total_cmp(&tau[k]))
                .unwrap_or(0);
            tau[widest] += stray_tau;
            theta[widest] += stray_theta;
        }
        Self { tau, theta, lambda }
    }
}

/// Ordering used to break symmetry between exchangeable modes: real part,
/// then magnitude, then imaginary part.
pub(crate) fn gain_order(x: &Complex64, y: &Complex64) -> Ordering {
    x.re
        .total_cmp(&y.re)
        .then(x.norm().total_cmp(&y.norm()))
        .then(x.im.total_cmp(&y.im))
}

/// Relay transmit power `Σ τ_j |λ_j|² (|a|²θ_jP/τ_j + σ²)` of an allocation.
pub fn relay_power_of(params: &ChannelParams, alloc: &ModeAllocation) -> f64 {
    let a2p = params.a.norm_sqr() * params.power;
    alloc
        .lambda
        .iter()
        .enumerate()
        .map(|(j, lam)| {
            let (t, th) = (alloc.tau[j + 1], alloc.theta[j + 1]);
            if t > 0.0 {
                lam.norm_sqr() * (a2p * th + params.sigma2 * t)
            } else {
                0.0
            }
        })
        .sum()
}

/// `τ·C(θ·s/τ)`, extended by continuity to 0 on an empty band.
#[inline]
pub(crate) fn mode_term(tau: f64, theta: f64, snr: f64) -> f64 {
    if tau > 0.0 {
        tau * cap_bits(theta * snr / tau)
    } else {
        0.0
    }
}

/// Rate of a feasible allocation, in bits.
pub fn allocation_rate(params: &ChannelParams, alloc: &ModeAllocation) -> Result<f64> {
    alloc.validate(params, usize::MAX)?;
    let mut rate = mode_term(alloc.tau[0], alloc.theta[0], params.snr());
    for (j, lam) in alloc.lambda.iter().enumerate() {
        rate += mode_term(
            alloc.tau[j + 1],
            alloc.theta[j + 1],
            effective_snr_lti(params, *lam),
        );
    }
    Ok(rate)
}

pub fn allocation_rate_in(
    params: &ChannelParams,
    alloc: &ModeAllocation,
    unit: RateUnit,
) -> Result<f64> {
    allocation_rate(params, alloc).map(|r| unit.from_bits(r))
}

/// The comparison quantities of one channel instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub c_lti: f64,
    pub c_fd: f64,
    pub r_iaf: f64,
    pub r_direct: f64,
    pub cutset: f64,
    pub allocation: ModeAllocation,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig2a(power: f64) -> ChannelParams {
        ChannelParams::real(1.0, 2.0, 1.0, power, 1.0).unwrap()
    }

    #[test]
    fn cap_values() {
        assert_eq!(cap(0.0).unwrap(), 0.0);
        assert_relative_eq!(cap(1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(cap(3.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            cap_in(3.0, RateUnit::Nats).unwrap(),
            0.5 * 4f64.ln(),
            epsilon = 1e-15
        );
        assert!(matches!(cap(-1e-3), Err(Error::Domain(_))));
        assert!(cap(f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ChannelParams::real(1.0, 2.0, 0.0, 1.0, 1.0).is_err());
        assert!(ChannelParams::real(1.0, 2.0, 1.0, -1.0, 1.0).is_err());
        assert!(ChannelParams::real(1.0, 2.0, 1.0, 1.0, 0.0).is_err());
        assert!(ChannelParams::real(f64::INFINITY, 2.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn lti_snr_examples() {
        let p = fig2a(1.0);
        assert_relative_eq!(effective_snr_lti(&p, 0.0.into()), 1.0);
        assert_eq!(effective_snr_lti(&p, (-0.5).into()), 0.0);
        // (1 + 2/√2)² / (1 + 4·½) = (3 + 2√2)/3
        let expected = (3.0 + 2.0 * 2f64.sqrt()) / 3.0;
        assert_relative_eq!(
            effective_snr_lti(&p, 0.5f64.sqrt().into()),
            expected,
            epsilon = 1e-14
        );
        assert_relative_eq!(expected, 1.942809, epsilon = 1e-6);
    }

    #[test]
    fn fd_snr_examples() {
        let p = fig2a(1.0);
        assert_eq!(effective_snr_fd(&p, 0.0).unwrap(), 1.0);
        assert_relative_eq!(effective_snr_fd(&p, 0.5).unwrap(), 5.0 / 3.0, epsilon = 1e-15);
        assert!(effective_snr_fd(&p, -0.1).is_err());
    }

    #[test]
    fn iaf_gains() {
        let p = fig2a(1.0);
        assert_relative_eq!(full_power_iaf_gain(&p).re, 0.5f64.sqrt(), epsilon = 1e-15);
        // The mode gain peaks at |a|/|b| = 0.5, below the full-power gain.
        assert_relative_eq!(iaf_gain(&p).re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(iaf_rate(&p), cap(2.0).unwrap(), epsilon = 1e-15);
        // ½·log₂(1 + (3+2√2)/3) evaluated directly.
        assert_relative_eq!(iaf_rate_full_power(&p), 0.778597, epsilon = 1e-6);

        // a=2, b=1: peak at 2, far above the full-power gain.
        let q = ChannelParams::real(2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(iaf_gain(&q), full_power_iaf_gain(&q));
    }

    #[test]
    fn iaf_degenerate_links() {
        let p = ChannelParams::real(1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(iaf_rate(&p), direct_rate(&p), epsilon = 1e-15);
        let p = ChannelParams::real(1.5, 2.0, 1.0, 1.0, 1e-20).unwrap();
        assert_relative_eq!(iaf_rate(&p), direct_rate(&p), epsilon = 1e-9);
        let p = ChannelParams::real(0.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(iaf_gain(&p).norm(), 0.0);
        assert_eq!(iaf_rate(&p), direct_rate(&p));
    }

    #[test]
    fn iaf_phase_is_aligned() {
        let a = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let p = ChannelParams::new(a, 1.0.into(), 1.0, 1.0, 1.0).unwrap();
        let g = iaf_gain(&p);
        assert_relative_eq!(g.arg(), -std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn direct_rate_values() {
        assert_relative_eq!(direct_rate(&fig2a(1.0)), 0.5);
        assert_relative_eq!(direct_rate(&fig2a(3.0)), 1.0);
        assert!(direct_rate(&fig2a(1e-300)) < 1e-299);
    }

    #[test]
    fn allocation_rate_special_cases() {
        let p = fig2a(1.0);
        assert_eq!(
            allocation_rate(&p, &ModeAllocation::mode_zero()).unwrap(),
            direct_rate(&p)
        );
        assert_relative_eq!(
            allocation_rate(&p, &iaf_allocation(&p)).unwrap(),
            iaf_rate(&p),
            epsilon = 1e-15
        );
        let padded = ModeAllocation {
            tau: vec![0.4, 0.6, 0.0, 0.0],
            theta: vec![0.3, 0.7, 0.0, 0.0],
            lambda: vec![0.3.into(), 1.7.into(), (-4.0).into()],
        };
        let bare = ModeAllocation {
            tau: vec![0.4, 0.6],
            theta: vec![0.3, 0.7],
            lambda: vec![0.3.into()],
        };
        assert_eq!(
            allocation_rate(&p, &padded).unwrap(),
            allocation_rate(&p, &bare).unwrap()
        );
    }

    #[test]
    fn allocation_rate_rejects_infeasible() {
        let p = fig2a(1.0);
        let over = ModeAllocation::single_mode(2.0.into());
        match allocation_rate(&p, &over) {
            Err(Error::ConstraintViolation { violation, .. }) => {
                // 4·(1+1) − 1
                assert_relative_eq!(violation, 7.0, epsilon = 1e-12)
            }
            other => panic!("expected a constraint violation, got {other:?}"),
        }
        let empty_band_power = ModeAllocation {
            tau: vec![1.0, 0.0],
            theta: vec![0.5, 0.5],
            lambda: vec![0.1.into()],
        };
        assert!(matches!(
            allocation_rate(&p, &empty_band_power),
            Err(Error::MalformedAllocation(_))
        ));
        let bad_sum = ModeAllocation {
            tau: vec![0.5, 0.4],
            theta: vec![0.5, 0.5],
            lambda: vec![0.1.into()],
        };
        assert!(allocation_rate(&p, &bad_sum).is_err());
    }

    #[test]
    fn relay_power_examples() {
        let p = fig2a(1.0);
        let zero = ModeAllocation {
            tau: vec![0.2, 0.8],
            theta: vec![0.1, 0.9],
            lambda: vec![0.0.into()],
        };
        assert_eq!(relay_power_of(&p, &zero), 0.0);
        let full = ModeAllocation::single_mode(full_power_iaf_gain(&p));
        assert_relative_eq!(relay_power_of(&p, &full), p.relay_budget(), epsilon = 1e-15);
        let half = ModeAllocation {
            tau: vec![0.5, 0.5],
            theta: vec![0.5, 0.5],
            lambda: vec![1.0.into()],
        };
        assert_relative_eq!(relay_power_of(&p, &half), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pruning_merges_and_sorts() {
        let alloc = ModeAllocation {
            tau: vec![0.2, 0.1, 0.0, 0.3, 0.4],
            theta: vec![0.1, 0.2, 0.0, 0.3, 0.4],
            lambda: vec![0.1.into(), 5.0.into(), 0.7.into(), 0.1.into()],
        };
        let pruned = alloc.pruned(0.0);
        assert_eq!(pruned.lambda, vec![Complex64::from(0.7), 0.1.into()]);
        assert_relative_eq!(pruned.tau[2], 0.5);
        assert_relative_eq!(pruned.theta[2], 0.6);
        pruned.validate_shape().unwrap();
    }
}
