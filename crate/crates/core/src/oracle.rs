//! Direct optimization of the finite-n per-bin problem
//!
//! ```text
//! max (1/n) Σ C(μ_i G(λ_i))   s.t.  Σ μ_i ≤ nP,  Σ (|a|²μ_i + σ²) λ_i² ≤ nγP
//! ```
//!
//! with `G(λ) = |1+abλ|² / (σ²(1+|b|²λ²))`, by alternating exact two-price
//! water-filling over the powers with a priced per-bin search over the
//! gains. It shares no code path with the mode optimizer beyond the channel
//! formulas, so agreement between the two is a meaningful check.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{cap_bits, iaf_gain, lti_mode_gain, ChannelParams, ModeAllocation};
use crate::error::{Error, Result};
use crate::optimizer::search::golden_max;
use crate::optimizer::SolverOptions;

const MAX_ITERATIONS: usize = 2000;
const BISECTIONS: usize = 200;
const LAMBDA_GRID: usize = 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSolution {
    pub params: ChannelParams,
    pub n: usize,
    pub mu: Vec<f64>,
    pub lam: Vec<f64>,
    /// Objective `(1/n) Σ C(μ_i G(λ_i))` in bits.
    pub rate: f64,
    pub source_used: f64,
    pub relay_used: f64,
    /// Source and relay prices of the last power update.
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
}

impl BinSolution {
    /// Budget slack times price, for both budgets.
    pub fn complementary_slackness(&self) -> (f64, f64) {
        let n = self.n as f64;
        let p = &self.params;
        (
            self.alpha * (n * p.power - self.source_used) / n,
            self.beta * (n * p.relay_budget() - self.relay_used) / n,
        )
    }
}

/// Gain clusters of a bin solution. Entry 0 is the relay-silent cluster of
/// zero-gain bins and is always present, possibly empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Relay-power-weighted RMS gain of each cluster, signed by the mean.
    pub centers: Vec<f64>,
    pub counts: Vec<usize>,
    /// Share of the source budget spent in each cluster.
    pub theta: Vec<f64>,
    /// `counts[j] / n`.
    pub tau: Vec<f64>,
    /// Largest gain spread inside any cluster.
    pub max_spread: f64,
}

impl ClusterSummary {
    pub fn nonzero_clusters(&self) -> usize {
        self.counts.iter().skip(1).filter(|&&c| c > 0).count()
    }
}

/// Bin gain per unit power, `|1+abλ|²/(σ²(1+|b|²λ²))`.
fn bin_gain(params: &ChannelParams, lam: f64) -> f64 {
    lti_mode_gain(params, lam.into()) / params.sigma2
}

#[inline]
fn waterfill(gain: f64, price: f64) -> f64 {
    if gain <= 0.0 {
        return 0.0;
    }
    if price <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 / (2.0 * LN_2 * price) - 1.0 / gain).max(0.0)
}

struct Powers {
    mu: Vec<f64>,
    alpha: f64,
    beta: f64,
}

/// Two-price water-filling over the bin powers for fixed gains.
fn power_step(params: &ChannelParams, lam: &[f64]) -> Option<Powers> {
    let n = lam.len() as f64;
    let a2 = params.a.norm_sqr();
    let gains: Vec<f64> = lam.iter().map(|&l| bin_gain(params, l)).collect();
    let costs: Vec<f64> = lam.iter().map(|&l| a2 * l * l).collect();
    let source = n * params.power;
    let relay = n * params.relay_budget() - params.sigma2 * lam.iter().map(|l| l * l).sum::<f64>();
    if relay < 0.0 {
        return None;
    }
    let powers = |alpha: f64, beta: f64| -> Vec<f64> {
        gains
            .iter()
            .zip(&costs)
            .map(|(&g, &e)| waterfill(g, alpha + beta * e))
            .collect()
    };
    let g_max = gains.iter().cloned().fold(0.0, f64::max);
    if g_max <= 0.0 {
        return Some(Powers {
            mu: vec![0.0; lam.len()],
            alpha: 0.0,
            beta: 0.0,
        });
    }
    // Source price meeting the source budget at relay price `beta`, or zero
    // when the relay price alone caps the powers below it.
    let alpha_for = |beta: f64| -> f64 {
        if beta > 0.0 && powers(0.0, beta).iter().sum::<f64>() <= source {
            return 0.0;
        }
        let mut hi = g_max / (2.0 * LN_2);
        let mut lo = hi;
        while powers(lo, beta).iter().sum::<f64>() < source {
            hi = lo;
            lo *= 0.5;
        }
        for _ in 0..BISECTIONS {
            if hi / lo - 1.0 <= 1e-15 {
                break;
            }
            let mid = (lo * hi).sqrt();
            if powers(mid, beta).iter().sum::<f64>() >= source {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let relay_of = |mu: &[f64]| mu.iter().zip(&costs).map(|(m, e)| m * e).sum::<f64>();

    let alpha = alpha_for(0.0);
    let mu = powers(alpha, 0.0);
    if relay_of(&mu) <= relay {
        return Some(Powers {
            mu: scale_to(mu, source),
            alpha,
            beta: 0.0,
        });
    }
    let mut b_hi = alpha.max(f64::MIN_POSITIVE);
    while relay_of(&powers(alpha_for(b_hi), b_hi)) > relay && b_hi < 1e300 {
        b_hi *= 2.0;
    }
    let mut b_lo = b_hi * 0.5;
    while relay_of(&powers(alpha_for(b_lo), b_lo)) <= relay && b_lo > 1e-300 {
        b_hi = b_lo;
        b_lo *= 0.5;
    }
    for _ in 0..BISECTIONS {
        if b_hi / b_lo - 1.0 <= 1e-14 {
            break;
        }
        let mid = (b_lo * b_hi).sqrt();
        if relay_of(&powers(alpha_for(mid), mid)) > relay {
            b_lo = mid;
        } else {
            b_hi = mid;
        }
    }
    let alpha = alpha_for(b_hi);
    let mut mu = powers(alpha, b_hi);
    if alpha > 0.0 {
        mu = scale_to(mu, source);
    }
    // Bisection leaves the relay use a hair off; trim onto the budget.
    let used = relay_of(&mu);
    if used > relay {
        let f = relay / used;
        mu.iter_mut().zip(&costs).for_each(|(m, &e)| {
            if e > 0.0 {
                *m *= f;
            }
        });
    }
    Some(Powers {
        mu,
        alpha,
        beta: b_hi,
    })
}

fn scale_to(mut mu: Vec<f64>, total: f64) -> Vec<f64> {
    let sum: f64 = mu.iter().sum();
    if sum > 0.0 {
        mu.iter_mut().for_each(|m| *m *= total / sum);
    }
    mu
}

/// Best gain of one bin at relay price `beta`: a coarse scan over the box
/// plus the zero and single-mode gains, then golden-section refinement
/// around the two best samples.
fn best_gain(params: &ChannelParams, mu: f64, beta: f64, cap: f64, iaf: f64) -> f64 {
    let weight = params.a.norm_sqr() * mu + params.sigma2;
    let profit = |l: f64| cap_bits(mu * bin_gain(params, l)) - beta * weight * l * l;
    if mu <= 0.0 {
        return 0.0;
    }
    let mut xs: Vec<f64> = (0..LAMBDA_GRID)
        .map(|i| -cap + 2.0 * cap * i as f64 / (LAMBDA_GRID - 1) as f64)
        .collect();
    xs.extend([0.0, iaf]);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let fs: Vec<f64> = xs.iter().map(|&x| profit(x)).collect();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    // Ties go to the smaller gain, which costs less relay power.
    order.sort_by(|&i, &k| fs[k].total_cmp(&fs[i]).then(xs[i].abs().total_cmp(&xs[k].abs())));
    let mut best = (xs[order[0]], fs[order[0]]);
    for &i in order.iter().take(2) {
        let lo = xs[i.saturating_sub(1)];
        let hi = xs[(i + 1).min(xs.len() - 1)];
        let cand = golden_max(profit, lo, hi, 1e-12 * cap);
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best.0
}

/// Gains for fixed powers: price the relay budget by bisection, then settle
/// bins whose choice flips at the threshold price greedily.
fn gain_step(params: &ChannelParams, mu: &[f64], cap: f64) -> Vec<f64> {
    let budget = mu.len() as f64 * params.relay_budget();
    let a2 = params.a.norm_sqr();
    let iaf = iaf_gain(params).re;
    let mut cache: HashMap<(u64, u64), f64> = HashMap::new();
    let mut choose = |beta: f64| -> Vec<f64> {
        mu.iter()
            .map(|&m| {
                *cache
                    .entry((m.to_bits(), beta.to_bits()))
                    .or_insert_with(|| best_gain(params, m, beta, cap, iaf))
            })
            .collect()
    };
    let relay = |lam: &[f64]| {
        lam.iter()
            .zip(mu)
            .map(|(l, m)| (a2 * m + params.sigma2) * l * l)
            .sum::<f64>()
    };
    let free = choose(0.0);
    if relay(&free) <= budget {
        return free;
    }
    let mut b_hi = 1.0 / budget.max(f64::MIN_POSITIVE);
    let mut hi = choose(b_hi);
    while relay(&hi) > budget && b_hi < 1e300 {
        b_hi *= 4.0;
        hi = choose(b_hi);
    }
    let mut b_lo = b_hi * 0.25;
    let mut lo = choose(b_lo);
    while relay(&lo) <= budget && b_lo > 1e-300 {
        b_hi = b_lo;
        hi = lo;
        b_lo *= 0.25;
        lo = choose(b_lo);
    }
    for _ in 0..60 {
        if b_hi / b_lo - 1.0 <= 1e-10 {
            break;
        }
        let mid = (b_lo * b_hi).sqrt();
        let lam = choose(mid);
        if relay(&lam) > budget {
            b_lo = mid;
            lo = lam;
        } else {
            b_hi = mid;
            hi = lam;
        }
    }
    // Start from the affordable choice and upgrade the bins with the best
    // rate gain per unit of relay power while the budget allows.
    let bin_rate = |i: usize, l: f64| cap_bits(mu[i] * bin_gain(params, l));
    let bin_relay = |i: usize, l: f64| (a2 * mu[i] + params.sigma2) * l * l;
    let mut lam = hi.clone();
    let mut spare = budget - relay(&lam);
    let mut upgrades: Vec<(f64, usize)> = (0..lam.len())
        .filter(|&i| lo[i] != hi[i])
        .filter_map(|i| {
            let dr = bin_rate(i, lo[i]) - bin_rate(i, hi[i]);
            let dp = bin_relay(i, lo[i]) - bin_relay(i, hi[i]);
            (dr > 0.0 && dp > 0.0).then_some((dr / dp, i))
        })
        .collect();
    upgrades.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    for (_, i) in upgrades {
        let dp = bin_relay(i, lo[i]) - bin_relay(i, hi[i]);
        if dp <= spare {
            lam[i] = lo[i];
            spare -= dp;
        }
    }
    lam
}

fn objective(params: &ChannelParams, mu: &[f64], lam: &[f64]) -> f64 {
    mu.iter()
        .zip(lam)
        .map(|(&m, &l)| cap_bits(m * bin_gain(params, l)))
        .sum::<f64>()
        / mu.len() as f64
}

fn solution(params: &ChannelParams, mu: Vec<f64>, lam: Vec<f64>, alpha: f64, beta: f64, iterations: usize) -> BinSolution {
    let a2 = params.a.norm_sqr();
    BinSolution {
        params: *params,
        n: mu.len(),
        rate: objective(params, &mu, &lam),
        source_used: mu.iter().sum(),
        relay_used: mu
            .iter()
            .zip(&lam)
            .map(|(m, l)| (a2 * m + params.sigma2) * l * l)
            .sum(),
        mu,
        lam,
        alpha,
        beta,
        iterations,
    }
}

/// Starting gains for start `k`.
fn initial_gains(params: &ChannelParams, n: usize, k: usize, cap: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let iaf = iaf_gain(params).re;
    let scale = params.gain_scale();
    let mut lam: Vec<f64> = match k {
        0 => vec![iaf; n],
        1 => vec![0.0; n],
        2 => (0..n).map(|i| if i < n / 2 { 0.0 } else { iaf }).collect(),
        3 => (0..n).map(|i| if i % 2 == 0 { scale } else { -scale }).collect(),
        _ => {
            // A few random gain levels shared by random subsets of bins.
            let levels: Vec<f64> = (0..rng.gen_range(1..=3))
                .map(|_| rng.gen_range(-cap..=cap))
                .chain(std::iter::once(0.0))
                .collect();
            (0..n).map(|_| levels[rng.gen_range(0..levels.len())]).collect()
        }
    };
    // Make the pattern affordable at flat power.
    let per_bin = params.a.norm_sqr() * params.power + params.sigma2;
    let used: f64 = lam.iter().map(|l| per_bin * l * l).sum();
    let budget = n as f64 * params.relay_budget();
    if used > budget {
        let f = (budget / used).sqrt();
        lam.iter_mut().for_each(|l| *l *= f);
    }
    lam
}

fn run_start(params: &ChannelParams, mut lam: Vec<f64>, cap: f64, tol: f64) -> (BinSolution, bool, f64) {
    let mut powers = power_step(params, &lam).expect("initial gains are affordable");
    let mut rate = objective(params, &powers.mu, &lam);
    let mut change = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let next_lam = gain_step(params, &powers.mu, cap);
        let Some(next) = power_step(params, &next_lam) else {
            return (solution(params, powers.mu, lam, powers.alpha, powers.beta, it), true, 0.0);
        };
        let next_rate = objective(params, &next.mu, &next_lam);
        change = next_rate - rate;
        if change <= 0.0 {
            return (solution(params, powers.mu, lam, powers.alpha, powers.beta, it), true, 0.0);
        }
        lam = next_lam;
        powers = next;
        rate = next_rate;
        if change < tol {
            return (solution(params, powers.mu, lam, powers.alpha, powers.beta, it), true, change);
        }
    }
    (
        solution(params, powers.mu, lam, powers.alpha, powers.beta, MAX_ITERATIONS),
        false,
        change,
    )
}

/// Maximizes the `n`-bin objective over bin powers and real bin gains.
pub fn oracle_optimize(params: &ChannelParams, n: usize, opts: &SolverOptions) -> Result<BinSolution> {
    params.validate()?;
    opts.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            reason: "at least two bins are required",
        });
    }
    if !params.is_real() {
        return Err(Error::Domain("the bin oracle needs real channel gains".into()));
    }
    let cap = opts.lambda_cap_for(params);
    let mut best: Option<(BinSolution, bool, f64)> = None;
    for k in 0..opts.n_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(k as u64);
        let lam = initial_gains(params, n, k, cap, &mut rng);
        let run = run_start(params, lam, cap, opts.inner_tol);
        let better = match &best {
            None => true,
            // Equal rates go to the start that spends less relay power.
            Some(b) => {
                run.0.rate > b.0.rate + 1e-15
                    || (run.0.rate >= b.0.rate - 1e-15 && run.0.relay_used < b.0.relay_used)
            }
        };
        if better {
            best = Some(run);
        }
    }
    let (sol, converged, change) = best.expect("at least one start");
    if !converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            objective_change: change,
            last: Box::new(sol),
        });
    }
    Ok(sol)
}

/// Single-linkage clustering of the bin gains with linkage distance
/// `tol·√(γP/σ²)`. Bins within that distance of zero are relay-silent.
pub fn cluster_lambdas(sol: &BinSolution, tol: f64) -> ClusterSummary {
    let p = &sol.params;
    let eps = tol * p.gain_scale();
    let a2 = p.a.norm_sqr();
    let total_power = sol.n as f64 * p.power;

    let mut order: Vec<usize> = (0..sol.n).collect();
    order.sort_by(|&i, &k| sol.lam[i].total_cmp(&sol.lam[k]).then(i.cmp(&k)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut silent: Vec<usize> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &i in &order {
        let l = sol.lam[i];
        if l.abs() <= eps {
            silent.push(i);
            continue;
        }
        if l - last > eps || groups.is_empty() {
            groups.push(Vec::new());
        }
        groups.last_mut().unwrap().push(i);
        last = l;
    }
    let mut centers = vec![0.0];
    let mut counts = vec![silent.len()];
    let mut theta = vec![silent.iter().map(|&i| sol.mu[i]).sum::<f64>() / total_power];
    let mut max_spread: f64 = silent.iter().map(|&i| sol.lam[i].abs()).fold(0.0, f64::max);
    for g in &groups {
        let weights: Vec<f64> = g.iter().map(|&i| a2 * sol.mu[i] + p.sigma2).collect();
        let wsum: f64 = weights.iter().sum();
        let energy: f64 = g.iter().zip(&weights).map(|(&i, w)| w * sol.lam[i] * sol.lam[i]).sum();
        let mean: f64 = g.iter().map(|&i| sol.lam[i]).sum::<f64>() / g.len() as f64;
        centers.push(mean.signum() * (energy / wsum).sqrt());
        counts.push(g.len());
        theta.push(g.iter().map(|&i| sol.mu[i]).sum::<f64>() / total_power);
        let lo = g.iter().map(|&i| sol.lam[i]).fold(f64::INFINITY, f64::min);
        let hi = g.iter().map(|&i| sol.lam[i]).fold(f64::NEG_INFINITY, f64::max);
        max_spread = max_spread.max(hi - lo);
    }
    let tau = counts.iter().map(|&c| c as f64 / sol.n as f64).collect();
    ClusterSummary {
        centers,
        counts,
        theta,
        tau,
        max_spread,
    }
}

/// Turns a cluster summary into a mode allocation. Source power left unused
/// by the bins goes to the cluster with the smallest gain; a relay excess
/// from that move or from rounding is removed by shrinking the gains.
pub fn lift_to_allocation(summary: &ClusterSummary, params: &ChannelParams) -> Result<ModeAllocation> {
    let mut tau = summary.tau.clone();
    let mut theta = summary.theta.clone();
    let mut lambda: Vec<num_complex::Complex64> =
        summary.centers[1..].iter().map(|&c| c.into()).collect();
    // Drop empty clusters other than the silent one.
    let keep: Vec<usize> = (1..tau.len()).filter(|&j| summary.counts[j] > 0).collect();
    tau = std::iter::once(tau[0]).chain(keep.iter().map(|&j| tau[j])).collect();
    theta = std::iter::once(theta[0]).chain(keep.iter().map(|&j| theta[j])).collect();
    lambda = keep.iter().map(|&j| lambda[j - 1]).collect();

    let deficit = 1.0 - theta.iter().sum::<f64>();
    if deficit > 0.0 {
        let target = (0..tau.len())
            .filter(|&j| tau[j] > 0.0)
            .min_by(|&i, &k| {
                let gi = if i == 0 { 0.0 } else { lambda[i - 1].norm() };
                let gk = if k == 0 { 0.0 } else { lambda[k - 1].norm() };
                gi.total_cmp(&gk)
            })
            .unwrap_or(0);
        theta[target] += deficit;
    }
    let mut alloc = ModeAllocation { tau, theta, lambda };
    let used = crate::channel::relay_power_of(params, &alloc);
    let budget = params.relay_budget();
    if used > budget {
        let excess = used - budget;
        if excess > 1e-6 * budget.max(1.0) {
            return Err(Error::ConstraintViolation {
                constraint: "relay power",
                violation: excess,
            });
        }
        let f = (budget / used).sqrt();
        alloc.lambda.iter_mut().for_each(|l| *l *= f);
    }
    alloc.validate_shape()?;
    Ok(alloc)
}
