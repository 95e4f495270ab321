//! Finite-mode capacity optimizers.
//!
//! Each optimizer pairs the concave inner solve over band and power
//! fractions with an exchange search over relay gains, repeated from
//! `n_starts` seeds. The best start wins; ties are broken on the sorted
//! gains so results depend only on the options.

mod cutset;
pub(crate) mod inner;
mod kkt;
pub(crate) mod search;

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cutset::{classical_cutset_bound, cutset_bound};
pub use kkt::{kkt_residual, KKTReport, ACTIVE_TAU};

use crate::channel::{
    allocation_rate, direct_rate, fd_mode_gain, iaf_allocation, iaf_rate, mode_term, relay_power_of,
    ChannelParams, ModeAllocation, RateReport, MAX_COMPLEX_MODES, MAX_FD_MODES, MAX_REAL_MODES,
};
use crate::error::{Error, Result};
use inner::Column;
use search::{ComplexGains, FdGains, GainFamily, RealGains, SearchSettings, StartOutcome};

/// Band fraction below which a returned mode is dropped.
const PRUNE_TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub n_starts: usize,
    pub seed: u64,
    /// Bisection tolerance of the inner solve, relative to the price scale.
    pub inner_tol: f64,
    /// Target gap between the rate and its dual bound, in bits.
    pub outer_tol: f64,
    /// Half-width of the gain search box; `None` means `10·√(γP/σ²)`.
    pub lambda_cap: Option<f64>,
    pub max_rounds: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            n_starts: 64,
            seed: 0,
            inner_tol: 1e-10,
            outer_tol: 1e-7,
            lambda_cap: None,
            max_rounds: 100,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::InvalidParameter {
                name: "n_starts",
                value: 0.0,
                reason: "at least one start is required",
            });
        }
        for (name, value) in [("inner_tol", self.inner_tol), ("outer_tol", self.outer_tol)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive",
                });
            }
        }
        if let Some(cap) = self.lambda_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "lambda_cap",
                    value: cap,
                    reason: "must be positive",
                });
            }
        }
        Ok(())
    }

    pub fn lambda_cap_for(&self, params: &ChannelParams) -> f64 {
        self.lambda_cap.unwrap_or(10.0 * params.gain_scale())
    }

    fn bisection_tol(&self) -> f64 {
        (self.inner_tol * 1e-4).max(4.0 * f64::EPSILON)
    }
}

/// How the search ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    /// Upper bound on the rate over all gains in the box, from the final
    /// prices.
    pub dual_bound: f64,
    pub duality_gap: f64,
    pub relay_power: f64,
    pub rounds: usize,
    pub starts: usize,
    /// Start that produced the returned solution.
    pub best_start: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiSolution {
    pub allocation: ModeAllocation,
    pub rate: f64,
    pub kkt: KKTReport,
    pub diagnostics: SearchDiagnostics,
}

/// Band fractions, power fractions and relay power gains of a
/// frequency-division linear relaying strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdAllocation {
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl FdAllocation {
    pub fn relay_power(&self, params: &ChannelParams) -> f64 {
        let a2p = params.a.norm_sqr() * params.power;
        self.eta
            .iter()
            .enumerate()
            .map(|(j, &e)| e * (a2p * self.theta[j + 1] + params.sigma2 * self.tau[j + 1]))
            .sum()
    }

    pub fn rate(&self, params: &ChannelParams) -> f64 {
        let mut rate = mode_term(self.tau[0], self.theta[0], params.snr());
        for (j, &e) in self.eta.iter().enumerate() {
            rate += mode_term(self.tau[j + 1], self.theta[j + 1], params.snr() * fd_mode_gain(params, e));
        }
        rate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdSolution {
    pub allocation: FdAllocation,
    pub rate: f64,
    pub diagnostics: SearchDiagnostics,
}

/// Optimal band and power fractions for fixed gains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub rate: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Dual value at `(alpha, beta)`; exceeds `rate` by the duality gap.
    pub dual_bound: f64,
}

/// Maximizes the mode objective over band and power fractions for fixed
/// relay gains.
pub fn inner_concave_solve(params: &ChannelParams, lambdas: &[Complex64]) -> Result<InnerSolution> {
    params.validate()?;
    if lambdas.len() > MAX_COMPLEX_MODES {
        return Err(Error::InvalidParameter {
            name: "lambdas",
            value: lambdas.len() as f64,
            reason: "too many relay modes",
        });
    }
    if lambdas.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(Error::Domain("relay gains must be finite".into()));
    }
    let mut cols = vec![Column::silent(params.snr())];
    cols.extend(lambdas.iter().map(|&l| search::lti_column(params, l)));
    let out = inner::solve(&cols, params.relay_budget(), SolverOptions::default().bisection_tol());
    Ok(InnerSolution {
        tau: out.tau,
        theta: out.theta,
        rate: out.rate,
        alpha: out.alpha,
        beta: out.beta,
        dual_bound: out.dual,
    })
}

/// Optimal bin power for gain `lam` at source price `alpha` and relay price
/// `beta`:
/// `μ = max{0, 1/(2 ln2 (α + β|a|²|λ|²)) − σ²(1+|b|²|λ|²)/|1+abλ|²}`.
pub fn waterfill_mu(lam: Complex64, alpha: f64, beta: f64, params: &ChannelParams) -> Result<f64> {
    if !(alpha >= 0.0) || !(beta >= 0.0) || (alpha == 0.0 && beta == 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "prices must be nonnegative and not both zero",
        });
    }
    let gain = crate::channel::lti_mode_gain(params, lam) / params.sigma2;
    let price = alpha + beta * params.a.norm_sqr() * lam.norm_sqr();
    if price <= 0.0 {
        return Err(Error::Degenerate(format!(
            "zero effective price at gain {lam}: the bin power is unbounded"
        )));
    }
    if gain <= 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 / (2.0 * LN_2 * price) - 1.0 / gain).max(0.0))
}

fn settings(params: &ChannelParams, opts: &SolverOptions, slots: usize) -> SearchSettings {
    SearchSettings {
        slots,
        budget: params.relay_budget(),
        inner_tol: opts.bisection_tol(),
        outer_tol: opts.outer_tol,
        max_rounds: opts.max_rounds,
    }
}

/// Runs every start and returns the winner with its index.
fn multistart<F: GainFamily>(
    family: &F,
    opts: &SolverOptions,
    settings: &SearchSettings,
) -> (usize, StartOutcome<F::Gain>) {
    let anchors = family.anchors();
    let seeds: Vec<Vec<F::Gain>> = (0..opts.n_starts)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            match k {
                0 => anchors.clone(),
                1 => anchors[..2.min(anchors.len())].to_vec(),
                _ => (0..settings.slots).map(|_| family.random(&mut rng)).collect(),
            }
        })
        .collect();
    let outcomes: Vec<StartOutcome<F::Gain>> = seeds
        .into_par_iter()
        .map(|gains| search::run_start(family, gains, settings))
        .collect();

    let sorted_keys = |o: &StartOutcome<F::Gain>| {
        let mut keys: Vec<[f64; 2]> = o
            .gains
            .iter()
            .enumerate()
            .filter(|(j, _)| o.inner.tau[j + 1] > PRUNE_TAU)
            .map(|(_, &g)| family.key(g))
            .collect();
        keys.sort_by(|x, y| x[0].total_cmp(&y[0]).then(x[1].total_cmp(&y[1])));
        keys
    };
    let mut best = 0;
    for k in 1..outcomes.len() {
        let (cand, inc) = (&outcomes[k], &outcomes[best]);
        let better = cand.inner.rate > inc.inner.rate + 1e-12
            || ((cand.inner.rate - inc.inner.rate).abs() <= 1e-12
                && lexicographic_less(&sorted_keys(cand), &sorted_keys(inc)));
        if better {
            best = k;
        }
    }
    let winner = outcomes.into_iter().nth(best).expect("at least one start");
    (best, winner)
}

fn lexicographic_less(x: &[[f64; 2]], y: &[[f64; 2]]) -> bool {
    for (p, q) in x.iter().zip(y) {
        match p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    x.len() < y.len()
}

fn lti_solution(
    params: &ChannelParams,
    gains: Vec<Complex64>,
    best: usize,
    outcome: &StartOutcome<impl Copy>,
    starts: usize,
) -> Result<LtiSolution> {
    let raw = ModeAllocation {
        tau: outcome.inner.tau.clone(),
        theta: outcome.inner.theta.clone(),
        lambda: gains,
    };
    let mut allocation = fit_relay_budget(params, raw.pruned(PRUNE_TAU));
    let mut rate = allocation_rate(params, &allocation)?;
    let iaf = iaf_allocation(params);
    let anchor = allocation_rate(params, &iaf)?;
    if anchor >= rate {
        allocation = iaf;
        rate = anchor;
    }
    let kkt = kkt_residual(params, &allocation)?;
    let bound = outcome.bound.max(rate);
    Ok(LtiSolution {
        rate,
        kkt,
        diagnostics: SearchDiagnostics {
            dual_bound: bound,
            duality_gap: bound - rate,
            relay_power: relay_power_of(params, &allocation),
            rounds: outcome.rounds,
            starts,
            best_start: best,
        },
        allocation,
    })
}

/// Pulls relay use back onto the budget after pruning moved stray mass.
fn fit_relay_budget(params: &ChannelParams, mut alloc: ModeAllocation) -> ModeAllocation {
    let used = relay_power_of(params, &alloc);
    let budget = params.relay_budget();
    if used > budget {
        let shrink = (budget / used).sqrt();
        for l in &mut alloc.lambda {
            *l *= shrink;
        }
    }
    alloc
}

/// Capacity under linear time-invariant relaying with real gains.
pub fn optimize_lti_real(params: &ChannelParams, opts: &SolverOptions) -> Result<LtiSolution> {
    params.validate()?;
    opts.validate()?;
    if !params.is_real() {
        return Err(Error::Domain(
            "real-gain optimization needs real channel gains; use optimize_lti_complex".into(),
        ));
    }
    let family = RealGains {
        params: *params,
        cap: opts.lambda_cap_for(params),
        grid: 4001,
    };
    let settings = settings(params, opts, MAX_REAL_MODES);
    let (best, outcome) = multistart(&family, opts, &settings);
    let gains = outcome.gains.iter().map(|&g| Complex64::new(g, 0.0)).collect();
    lti_solution(params, gains, best, &outcome, opts.n_starts)
}

/// Capacity under linear time-invariant relaying with complex gains.
pub fn optimize_lti_complex(params: &ChannelParams, opts: &SolverOptions) -> Result<LtiSolution> {
    params.validate()?;
    opts.validate()?;
    let family = ComplexGains {
        params: *params,
        cap: opts.lambda_cap_for(params),
        radii: 801,
        phases: 72,
    };
    let settings = settings(params, opts, MAX_REAL_MODES.min(MAX_COMPLEX_MODES));
    let (best, outcome) = multistart(&family, opts, &settings);
    let gains = outcome.gains.clone();
    lti_solution(params, gains, best, &outcome, opts.n_starts)
}

/// Capacity of frequency-division linear relaying.
pub fn optimize_fd(params: &ChannelParams, opts: &SolverOptions) -> Result<FdSolution> {
    params.validate()?;
    opts.validate()?;
    if !params.is_real() {
        return Err(Error::Domain("frequency-division relaying needs real gains".into()));
    }
    let cap = opts.lambda_cap_for(params);
    let family = FdGains {
        params: *params,
        cap: cap * cap,
        grid: 4001,
    };
    let settings = settings(params, opts, MAX_FD_MODES);
    let (best, outcome) = multistart(&family, opts, &settings);

    let mut tau = vec![outcome.inner.tau[0]];
    let mut theta = vec![outcome.inner.theta[0]];
    let mut eta = Vec::new();
    for (j, &e) in outcome.gains.iter().enumerate() {
        if outcome.inner.tau[j + 1] > PRUNE_TAU {
            tau.push(outcome.inner.tau[j + 1]);
            theta.push(outcome.inner.theta[j + 1]);
            eta.push(e);
        }
    }
    let mut allocation = FdAllocation { tau, theta, eta };
    let (ts, hs): (f64, f64) = (allocation.tau.iter().sum(), allocation.theta.iter().sum());
    allocation.tau.iter_mut().for_each(|t| *t /= ts);
    allocation.theta.iter_mut().for_each(|t| *t /= hs);
    let used = allocation.relay_power(params);
    if used > params.relay_budget() {
        let shrink = params.relay_budget() / used;
        allocation.eta.iter_mut().for_each(|e| *e *= shrink);
    }
    let rate = allocation.rate(params);
    let bound = outcome.bound.max(rate);
    Ok(FdSolution {
        diagnostics: SearchDiagnostics {
            dual_bound: bound,
            duality_gap: bound - rate,
            relay_power: allocation.relay_power(params),
            rounds: outcome.rounds,
            starts: opts.n_starts,
            best_start: best,
        },
        allocation,
        rate,
    })
}

/// All comparison rates of one channel instance. Complex channels use the
/// complex-gain optimizer and report no frequency-division rate (`NaN`).
pub fn rate_report(params: &ChannelParams, opts: &SolverOptions) -> Result<(RateReport, LtiSolution)> {
    let lti = if params.is_real() {
        optimize_lti_real(params, opts)?
    } else {
        optimize_lti_complex(params, opts)?
    };
    let c_fd = if params.is_real() {
        optimize_fd(params, opts)?.rate
    } else {
        f64::NAN
    };
    let report = RateReport {
        c_lti: lti.rate,
        c_fd,
        r_iaf: iaf_rate(params),
        r_direct: direct_rate(params),
        cutset: cutset_bound(params),
        allocation: lti.allocation.clone(),
    };
    Ok((report, lti))
}
